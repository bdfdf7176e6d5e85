"""Shared instance builders for the test suite.

Families with a known block structure are the main workhorse: states of the
form sum_n w_n D_n(theta) (x) D_n^R hidden behind a random unitary, for which
every structural result has a closed-form answer.
"""

from __future__ import annotations

import numpy as np

from qsuff import rand
from qsuff.algebra import MatrixStarAlgebra
from qsuff.channels import Channel
from qsuff.linalg import dagger
from qsuff.states import DensityMatrix, Experiment, build_dominating_state


def block_family(blocks, n_states, gen, conjugate=True, weight_conc=2.0):
    """Experiment with hidden structure sum_n w_n(theta) D_n(theta) (x) D_n^R.

    Returns (experiment, unitary, right_factors); the right factors do not
    depend on the state label.
    """
    dim = sum(d * m for d, m in blocks)
    u = rand.random_unitary(dim, gen) if conjugate else np.eye(dim, dtype=complex)
    rights = [rand.random_density(m, gen) for _, m in blocks]
    states = {}
    for k in range(n_states):
        w = gen.dirichlet(np.ones(len(blocks)) * weight_conc)
        full = np.zeros((dim, dim), dtype=complex)
        off = 0
        for n, (d, m) in enumerate(blocks):
            piece = w[n] * np.kron(rand.random_density(d, gen), rights[n])
            full[off:off + d * m, off:off + d * m] = piece
            off += d * m
        states[f"t{k}"] = DensityMatrix(u @ full @ dagger(u))
    return build_dominating_state(states), u, rights


def product_family(d_left, d_right, n_states, gen):
    """Family D_theta^L (x) D^R with a fixed right factor."""
    right = rand.random_density(d_right, gen)
    states = {f"t{k}": DensityMatrix(np.kron(rand.random_density(d_left, gen), right))
              for k in range(n_states)}
    return build_dominating_state(states), right


def left_factor_algebra(d_left, d_right) -> MatrixStarAlgebra:
    """B(H_L) (x) 1 inside B(H_L (x) H_R), from its exact matrix-unit span."""
    eye = np.eye(d_right, dtype=complex)
    span = []
    for i in range(d_left):
        for j in range(d_left):
            e = np.zeros((d_left, d_left), dtype=complex)
            e[i, j] = 1.0
            span.append(np.kron(e, eye))
    return MatrixStarAlgebra.from_span(span, d_left * d_right)


def diagonal_algebra(dim) -> MatrixStarAlgebra:
    span = [np.diag([1.0 if k == i else 0.0 for k in range(dim)]).astype(complex)
            for i in range(dim)]
    return MatrixStarAlgebra.from_span(span, dim)


def partition_algebra(partition, dim) -> MatrixStarAlgebra:
    """Diagonal projections of a partition of {0..dim-1}: the classical
    subalgebra of functions measurable with respect to the partition."""
    span = []
    for cell in partition:
        p = np.zeros((dim, dim), dtype=complex)
        for i in cell:
            p[i, i] = 1.0
        span.append(p)
    return MatrixStarAlgebra.from_span(span, dim)


def kraus_components_with_unit_sum(d_out, d_in, n_kraus, gen):
    """Components L_i (d_out x d_in) with sum_i L_i L_i^dag = 1."""
    iso = rand.random_isometry(n_kraus * d_in, d_out, gen)
    m = dagger(iso)
    return [m[:, i * d_in:(i + 1) * d_in] for i in range(n_kraus)]


def structured_block_channel(blocks_out, blocks_in, n_kraus, gen,
                             identity_unitaries=False):
    """Unital channel with Kraus V_i = (+)_n U_n (x) L_{i,n}.

    blocks_out / blocks_in must share the left dimensions.  Returns the
    channel and the pieces it was built from.
    """
    dim_out = sum(d * m for d, m in blocks_out)
    dim_in = sum(d * m for d, m in blocks_in)
    unitaries = []
    for (dlo, _), (dli, _) in zip(blocks_out, blocks_in):
        assert dlo == dli
        u = np.eye(dlo, dtype=complex) if identity_unitaries \
            else rand.random_unitary(dlo, gen)
        unitaries.append(u)
    comps = [kraus_components_with_unit_sum(mo, mi, n_kraus, gen)
             for (_, mo), (_, mi) in zip(blocks_out, blocks_in)]
    kraus = []
    for i in range(n_kraus):
        v = np.zeros((dim_out, dim_in), dtype=complex)
        oo = oi = 0
        for n, ((dlo, mo), (dli, mi)) in enumerate(zip(blocks_out, blocks_in)):
            v[oo:oo + dlo * mo, oi:oi + dli * mi] = np.kron(unitaries[n],
                                                            comps[n][i])
            oo += dlo * mo
            oi += dli * mi
        kraus.append(v)
    return Channel(kraus, unital=True), unitaries, comps


def classical_family(dim, n_states, gen, partition=None):
    """Diagonal states; when a partition is given the likelihood ratios are
    constant on its cells, making the partition algebra sufficient."""
    base = gen.dirichlet(np.ones(dim) * 3.0)
    states = {}
    for k in range(n_states):
        if partition is None:
            p = gen.dirichlet(np.ones(dim) * 3.0)
        else:
            p = np.array(base)
            for cell in partition:
                p[list(cell)] *= gen.uniform(0.3, 3.0)
            p /= p.sum()
        states[f"t{k}"] = DensityMatrix.diagonal(p)
    return build_dominating_state(states)


def classical_sufficiency_oracle(exp: Experiment, partition) -> bool:
    """Brute-force likelihood-ratio test over the finite sample space:
    the partition is sufficient iff p_theta(x)/p_omega(x) is constant on
    every cell (within the support of omega)."""
    omega = np.diag(exp.dominating.matrix).real
    for state in exp.states.values():
        p = np.diag(state.matrix).real
        for cell in partition:
            ratios = [p[i] / omega[i] for i in cell if omega[i] > 1e-12]
            if ratios and (max(ratios) - min(ratios)) > 1e-9:
                return False
    return True
