"""Regenerate the bundled input files under demos/data/ (deterministic)."""

import json
import os

import numpy as np

from qsuff import rand
from qsuff.fileio import matrix_to_json
from qsuff.linalg import dagger

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "data")


def write(name, doc):
    os.makedirs(DATA, exist_ok=True)
    path = os.path.join(DATA, name)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print("wrote", path)


def bipartite_product():
    # D_theta^L (x) D^R with the left-factor algebra: a sufficient subalgebra
    gen = rand.rng(2024)
    d_left, d_right = 2, 2
    right = rand.random_density(d_right, gen)
    states = [{"label": f"theta{k}",
               "matrix": matrix_to_json(np.kron(rand.random_density(d_left, gen),
                                                right))}
              for k in range(3)]
    gens = [matrix_to_json(np.kron(rand.random_hermitian(d_left, gen),
                                   np.eye(d_right))) for _ in range(2)]
    emb = [matrix_to_json(np.kron(np.eye(d_left), e))
           for e in (np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]]))]
    write("bipartite_product.json", {
        "format_version": "1", "dim": d_left * d_right,
        "tensor_dims": [d_left, d_right],
        "states": states,
        "subalgebra_generators": gens,
        "channel": {"in_dim": d_left, "out_dim": d_left * d_right, "kraus": emb},
    })


def generic_qubits():
    # two generic faithful qubit states with the diagonal subalgebra: insufficient
    gen = rand.rng(7)
    states = [{"label": f"theta{k}",
               "matrix": matrix_to_json(rand.random_density(2, gen))}
              for k in range(2)]
    write("generic_qubits.json", {
        "format_version": "1", "dim": 2,
        "states": states,
        "subalgebra_generators": [matrix_to_json(np.diag([1.0, 2.0]))],
    })


def two_block_family():
    # hidden block structure (2,2) + (1,3) behind a random unitary
    gen = rand.rng(31415)
    blocks = [(2, 2), (1, 3)]
    dim = sum(d * m for d, m in blocks)
    u = rand.random_unitary(dim, gen)
    rights = [rand.random_density(m, gen) for _, m in blocks]
    states = []
    for k in range(3):
        w = gen.dirichlet(np.ones(len(blocks)) * 2.0)
        full = np.zeros((dim, dim), dtype=complex)
        off = 0
        for n, (d, m) in enumerate(blocks):
            full[off:off + d * m, off:off + d * m] = \
                w[n] * np.kron(rand.random_density(d, gen), rights[n])
            off += d * m
        states.append({"label": f"theta{k}",
                       "matrix": matrix_to_json(u @ full @ dagger(u))})
    write("two_block_family.json", {
        "format_version": "1", "dim": dim, "states": states,
    })


def classical_diagonal():
    gen = rand.rng(99)
    states = [{"label": f"theta{k}",
               "matrix": matrix_to_json(np.diag(gen.dirichlet(np.ones(4) * 3.0)))}
              for k in range(3)]
    write("classical_diagonal.json", {
        "format_version": "1", "dim": 4, "states": states,
    })


def ssa_equality():
    from qsuff.ssa import build_ssa_equality_state
    gen = rand.rng(555)
    dims = (2, 4, 2)
    st = build_ssa_equality_state(
        [(0.6, rand.random_density(2, gen), rand.random_density(4, gen)),
         (0.4, rand.random_density(2, gen), rand.random_density(4, gen))],
        dims, b_unitary=rand.random_unitary(4, gen))
    write("ssa_equality.json", {
        "format_version": "1", "dim": int(np.prod(dims)),
        "tensor_dims": list(dims),
        "states": [{"label": "omega", "matrix": matrix_to_json(st.density.matrix)}],
    })


def ssa_generic():
    gen = rand.rng(556)
    write("ssa_generic.json", {
        "format_version": "1", "dim": 8, "tensor_dims": [2, 2, 2],
        "states": [{"label": "omega",
                    "matrix": matrix_to_json(rand.random_density(8, gen))}],
    })


def qubit_tilt():
    write("qubit_tilt.json", {
        "format_version": "1", "dim": 2,
        "states": [{"label": "base", "matrix": matrix_to_json(np.eye(2) / 2)}],
        "expfam": {"H": matrix_to_json(np.zeros((2, 2))),
                   "generators": [matrix_to_json(np.diag([1.0, -1.0]))]},
    })


if __name__ == "__main__":
    bipartite_product()
    generic_qubits()
    two_block_family()
    classical_diagonal()
    ssa_equality()
    ssa_generic()
    qubit_tilt()
