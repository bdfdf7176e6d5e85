"""Completely positive maps in Kraus form, their duals and standard certificates.

A :class:`Channel` applies as x -> sum_i V_i x V_i^dag.  The ``unital`` and
``trace_preserving`` flags describe that application direction; the trace
dual (conjugate-transposed Kraus list, flags swapped) is available as
:meth:`Channel.dual`.  Superoperator matrices use the row-major (C order)
vectorization, for which the map x -> A x B has matrix kron(A, B.T).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .linalg import dagger, frobenius

FLAG_TOL = 1e-10


def vec(x: np.ndarray) -> np.ndarray:
    return np.asarray(x).reshape(-1)


def unvec(v: np.ndarray, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    v = np.asarray(v).reshape(-1)
    if rows is None:
        rows = int(round(np.sqrt(v.size)))
    if cols is None:
        cols = v.size // rows
    return v.reshape(rows, cols)


def left_right_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Superoperator matrix of x -> a x b."""
    return np.kron(a, b.T)


class Channel:
    """A completely positive map given by a nonempty Kraus family."""

    def __init__(self, kraus: Sequence[np.ndarray], unital: bool | None = None,
                 trace_preserving: bool | None = None, atol: float = FLAG_TOL):
        mats = [np.asarray(k, dtype=complex) for k in kraus]
        if not mats:
            raise ValueError("empty Kraus list")
        out_dim, in_dim = mats[0].shape
        if any(m.shape != (out_dim, in_dim) for m in mats):
            raise ValueError("Kraus operators must share one shape")
        self.kraus = np.stack(mats)
        self.in_dim = in_dim
        self.out_dim = out_dim

        sum_vdv = np.einsum("kji,kjl->il", self.kraus.conj(), self.kraus)
        sum_vvd = np.einsum("kij,klj->il", self.kraus, self.kraus.conj())
        tp_ok = frobenius(sum_vdv - np.eye(in_dim)) <= atol * in_dim
        un_ok = frobenius(sum_vvd - np.eye(out_dim)) <= atol * out_dim
        if trace_preserving and not tp_ok:
            raise ValueError("Kraus family is not trace preserving: "
                             f"||sum V*V - I|| = {frobenius(sum_vdv - np.eye(in_dim)):.3e}")
        if unital and not un_ok:
            raise ValueError("Kraus family is not unital: "
                             f"||sum VV* - I|| = {frobenius(sum_vvd - np.eye(out_dim)):.3e}")
        self.trace_preserving = tp_ok if trace_preserving is None else trace_preserving
        self.unital = un_ok if unital is None else unital

    def __repr__(self) -> str:
        flags = []
        if self.unital:
            flags.append("unital")
        if self.trace_preserving:
            flags.append("trace_preserving")
        tag = ", ".join(flags) if flags else "generic"
        return f"Channel({self.in_dim}->{self.out_dim}, {len(self.kraus)} Kraus, {tag})"

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        if x.shape != (self.in_dim, self.in_dim):
            raise ValueError(f"argument of shape {x.shape} does not match in_dim {self.in_dim}")
        return np.einsum("kij,jl,kml->im", self.kraus, x, self.kraus.conj())

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.apply(x)

    def dual(self) -> "Channel":
        """Trace dual: Tr(dual(rho) x) = Tr(rho apply(x)); flags swap."""
        return Channel([dagger(k) for k in self.kraus],
                       unital=self.trace_preserving, trace_preserving=self.unital)

    def superoperator(self) -> np.ndarray:
        return sum(np.kron(k, k.conj()) for k in self.kraus)

    def then(self, outer: "Channel") -> "Channel":
        """Composition outer(self(x)) with the product Kraus family."""
        if outer.in_dim != self.out_dim:
            raise ValueError("channel dimensions do not compose")
        kraus = [w @ v for w in outer.kraus for v in self.kraus]
        return Channel(kraus,
                       unital=self.unital and outer.unital,
                       trace_preserving=self.trace_preserving and outer.trace_preserving)


def choi_matrix(ch: Channel) -> np.ndarray:
    """Choi matrix sum_ij e_ij (x) ch(e_ij); PSD iff the map is CP."""
    return choi_of_map(ch.apply, ch.in_dim, ch.out_dim)


def choi_of_map(f: Callable[[np.ndarray], np.ndarray], in_dim: int,
                out_dim: int | None = None) -> np.ndarray:
    """Choi matrix of an arbitrary linear map given by its action."""
    if out_dim is None:
        out_dim = f(np.eye(in_dim, dtype=complex)).shape[0]
    choi = np.zeros((in_dim * out_dim, in_dim * out_dim), dtype=complex)
    for i in range(in_dim):
        for j in range(in_dim):
            e = np.zeros((in_dim, in_dim), dtype=complex)
            e[i, j] = 1.0
            choi[i * out_dim:(i + 1) * out_dim, j * out_dim:(j + 1) * out_dim] = f(e)
    return choi


def schwarz_defect(ch: Channel, a: np.ndarray) -> np.ndarray:
    """ch(a* a) - ch(a)* ch(a); positive semidefinite for every unital CP map."""
    if not ch.unital:
        raise ValueError("Schwarz defect requires a unital channel")
    a = np.asarray(a, dtype=complex)
    img = ch.apply(a)
    return ch.apply(dagger(a) @ a) - dagger(img) @ img


# ---------------------------------------------------------------------------
# Stock channels
# ---------------------------------------------------------------------------

def identity_channel(dim: int) -> Channel:
    return Channel([np.eye(dim, dtype=complex)], unital=True, trace_preserving=True)


def unitary_channel(u: np.ndarray) -> Channel:
    u = np.asarray(u, dtype=complex)
    if frobenius(dagger(u) @ u - np.eye(u.shape[0])) > 1e-9:
        raise ValueError("matrix is not unitary")
    return Channel([u], unital=True, trace_preserving=True)


def depolarizing_channel(dim: int) -> Channel:
    """x -> Tr(x)/dim * I, with the matrix-unit Kraus family."""
    kraus = []
    for i in range(dim):
        for j in range(dim):
            k = np.zeros((dim, dim), dtype=complex)
            k[i, j] = 1.0 / np.sqrt(dim)
            kraus.append(k)
    return Channel(kraus, unital=True, trace_preserving=True)


def pinching_channel(projections: Sequence[np.ndarray]) -> Channel:
    """x -> sum_i p_i x p_i for a complete family of orthogonal projections."""
    projections = [np.asarray(p, dtype=complex) for p in projections]
    dim = projections[0].shape[0]
    total = sum(projections)
    if frobenius(total - np.eye(dim)) > 1e-9:
        raise ValueError("projections must sum to the identity")
    return Channel(projections, unital=True, trace_preserving=True)


def embedding_channel(dim_left: int, dim_right: int) -> Channel:
    """Unital embedding a -> a (x) I_right of B(H_L) into B(H_L (x) H_R)."""
    kraus = []
    for j in range(dim_right):
        ket = np.zeros((dim_right, 1), dtype=complex)
        ket[j, 0] = 1.0
        kraus.append(np.kron(np.eye(dim_left, dtype=complex), ket))
    return Channel(kraus, unital=True)


def partial_trace_channel(dims: Sequence[int], keep) -> Channel:
    """Trace-preserving map rho -> partial_trace(rho, dims, keep)."""
    dims = [int(d) for d in dims]
    keep = sorted(set(int(k) for k in keep))
    traced = [i for i in range(len(dims)) if i not in keep]
    in_dim = int(np.prod(dims))
    out_dim = int(np.prod([dims[k] for k in keep])) if keep else 1
    traced_dim = int(np.prod([dims[t] for t in traced])) if traced else 1

    kraus = []
    for flat in range(traced_dim):
        idx = np.unravel_index(flat, [dims[t] for t in traced]) if traced else ()
        k = np.zeros((out_dim, in_dim), dtype=complex)
        tensor = k.reshape([dims[i] for i in keep] + dims)
        sel: list = [slice(None)] * len(keep)
        src = [None] * len(dims)
        for pos, t in enumerate(traced):
            src[t] = idx[pos]
        # out index must match the kept part of the in index
        it = np.nditer(np.zeros([dims[i] for i in keep]), flags=["multi_index"])
        for _ in it:
            mi = it.multi_index
            full = list(src)
            for pos, kk in enumerate(keep):
                full[kk] = mi[pos]
            tensor[tuple(list(mi) + full)] = 1.0
        kraus.append(k)
    return Channel(kraus, trace_preserving=True)
