"""States, statistical experiments, and recovery (dual) maps.

An :class:`Experiment` is a labeled family of density matrices together with
a dominating state; the dual of a coarse-graining with respect to that state
is the canonical recovery channel, built here in its concrete
finite-dimensional form.
"""

from __future__ import annotations

from typing import Iterable, Mapping

import numpy as np

from .algebra import MatrixStarAlgebra, conditional_expectation
from .channels import Channel
from .linalg import (SUPPORT_CUTOFF, dagger, frobenius, mat_fun, psd_power,
                     require_psd, spectral, support_mask, support_projection)

TRACE_TOL = 1e-10
PSD_TOL = 1e-12


class DensityMatrix:
    """Positive semidefinite trace-one matrix."""

    def __init__(self, matrix: np.ndarray, atol_trace: float = TRACE_TOL,
                 atol_psd: float = PSD_TOL):
        m = require_psd(np.asarray(matrix, dtype=complex), tol=atol_psd, name="density")
        tr = np.trace(m).real
        if abs(tr - 1.0) > atol_trace:
            raise ValueError(f"density has trace {tr!r}, expected 1")
        self.matrix = (m + dagger(m)) / 2.0
        self.dim = m.shape[0]

    @classmethod
    def pure(cls, vector: np.ndarray) -> "DensityMatrix":
        v = np.asarray(vector, dtype=complex).reshape(-1)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def diagonal(cls, probs) -> "DensityMatrix":
        p = np.asarray(probs, dtype=float)
        return cls(np.diag(p).astype(complex) / p.sum())

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim})"

    def eigenvalues(self) -> np.ndarray:
        return spectral(self.matrix).eigenvalues

    def is_faithful(self, cutoff: float = SUPPORT_CUTOFF) -> bool:
        w = self.eigenvalues()
        return bool(np.all(support_mask(w, cutoff)))

    def support(self, cutoff: float = SUPPORT_CUTOFF) -> np.ndarray:
        return support_projection(self.matrix, cutoff)

    def rank(self, cutoff: float = SUPPORT_CUTOFF) -> int:
        return int(np.sum(support_mask(self.eigenvalues(), cutoff)))

    def power(self, p: float) -> np.ndarray:
        return psd_power(self.matrix, p)

    def expectation(self, a: np.ndarray) -> complex:
        return complex(np.trace(self.matrix @ a))


def support_dominates(omega: DensityMatrix, phi: DensityMatrix, tol: float = 1e-9) -> bool:
    """supp(phi) <= supp(omega) as projections."""
    p_omega = omega.support()
    p_phi = phi.support()
    return frobenius((np.eye(omega.dim) - p_omega) @ p_phi) <= tol


class Experiment:
    """A labeled family of states with a dominating state.

    Labels are kept in insertion order; weights, when given, must reproduce
    the dominating state as the corresponding convex combination.
    """

    def __init__(self, states: Mapping[str, DensityMatrix],
                 dominating: DensityMatrix,
                 weights: Mapping[str, float] | None = None,
                 check: bool = True):
        if not states:
            raise ValueError("experiment needs at least one state")
        self.states = dict(states)
        self.dominating = dominating
        self.weights = dict(weights) if weights is not None else None
        dims = {s.dim for s in self.states.values()} | {dominating.dim}
        if len(dims) != 1:
            raise ValueError(f"mixed dimensions in experiment: {dims}")
        self.dim = dominating.dim
        if check:
            for label, st in self.states.items():
                if not support_dominates(dominating, st):
                    raise ValueError(f"state {label!r} is not dominated "
                                     "(support exceeds the dominating state)")
            if self.weights is not None:
                mix = sum(self.weights[l] * self.states[l].matrix for l in self.states)
                if frobenius(mix - dominating.matrix) > 1e-8:
                    raise ValueError("weights do not reproduce the dominating state")

    @property
    def labels(self) -> list[str]:
        return list(self.states)

    def items(self):
        return self.states.items()

    def densities(self) -> list[np.ndarray]:
        return [s.matrix for s in self.states.values()]


def build_dominating_state(states: Mapping[str, DensityMatrix] | Iterable,
                           weights=None, compress: bool = False) -> Experiment:
    """Average the family into a dominating state (uniform weights by default)."""
    if not isinstance(states, Mapping):
        states = {f"state_{i}": s for i, s in enumerate(states)}
    labels = list(states)
    if not labels:
        raise ValueError("empty family")
    if weights is None:
        weights = {l: 1.0 / len(labels) for l in labels}
    elif not isinstance(weights, Mapping):
        weights = dict(zip(labels, weights))
    w = np.asarray([weights[l] for l in labels], dtype=float)
    if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-10:
        raise ValueError("weights must be positive and sum to one")
    omega = DensityMatrix(sum(weights[l] * states[l].matrix for l in labels))
    exp = Experiment(states, omega, weights)
    if compress and not omega.is_faithful():
        exp, _ = compress_experiment(exp)
    return exp


def compress_experiment(exp: Experiment) -> tuple[Experiment, np.ndarray]:
    """Restrict every state to the support of the dominating state.

    Returns the compressed experiment and the isometry whose columns span the
    support, so that compressed = W* . original . W.
    """
    w, u = spectral(exp.dominating.matrix)
    mask = support_mask(w)
    iso = u[:, mask]
    states = {l: DensityMatrix(dagger(iso) @ s.matrix @ iso, atol_trace=1e-8, atol_psd=1e-10)
              for l, s in exp.items()}
    omega = DensityMatrix(dagger(iso) @ exp.dominating.matrix @ iso,
                          atol_trace=1e-8, atol_psd=1e-10)
    return Experiment(states, omega, exp.weights, check=False), iso


# ---------------------------------------------------------------------------
# Recovery maps
# ---------------------------------------------------------------------------

def petz_conditional_expectation(a: MatrixStarAlgebra, omega: DensityMatrix | np.ndarray,
                                 x: np.ndarray) -> np.ndarray:
    """State-dual conditional expectation onto a subalgebra.

    E_omega(x) = E(D)^{-1/2} E(D^{1/2} x D^{1/2}) E(D)^{-1/2} with E the
    trace-preserving conditional expectation and D the density of omega.
    Requires omega faithful (compress the experiment first otherwise).
    """
    d = omega.matrix if isinstance(omega, DensityMatrix) else np.asarray(omega)
    w = np.linalg.eigvalsh(d)
    if w[0] <= SUPPORT_CUTOFF * w[-1]:
        raise ValueError("state-dual conditional expectation needs a faithful state; "
                         "compress to the support first")
    sqrt_d = psd_power(d, 0.5)
    ed = conditional_expectation(a, d)
    ed_inv_sqrt = mat_fun(ed, lambda v: v ** -0.5, support_only=True)
    inner = conditional_expectation(a, sqrt_d @ x @ sqrt_d)
    return ed_inv_sqrt @ inner @ ed_inv_sqrt


def petz_dual(ch: Channel, omega: DensityMatrix) -> Channel:
    """Recovery dual of a coarse-graining with respect to a state.

    For a unital channel s: B(K) -> B(H) and a faithful state omega on B(H)
    with omega o s faithful, the dual maps B(H) -> B(K),

        x -> D_{omega o s}^{-1/2} s^T(D_omega^{1/2} x D_omega^{1/2}) D_{omega o s}^{-1/2},

    realized by the Kraus family W_i = D_{omega o s}^{-1/2} V_i^dag D_omega^{1/2}.
    It is unital and CP, and omega o s o dual = omega by construction.
    """
    if not ch.unital:
        raise ValueError("the recovery dual is defined for unital coarse-grainings")
    if omega.dim != ch.out_dim:
        raise ValueError("state dimension does not match the channel output")
    if not omega.is_faithful():
        raise ValueError("dominating state must be faithful; compress first")
    pulled = ch.dual().apply(omega.matrix)
    w = np.linalg.eigvalsh(pulled)
    if w[0] <= SUPPORT_CUTOFF * w[-1]:
        raise ValueError("omega o channel is not faithful; compress first")
    sqrt_omega = omega.power(0.5)
    back = psd_power(pulled, -0.5)
    kraus = [back @ dagger(v) @ sqrt_omega for v in ch.kraus]
    return Channel(kraus, unital=True)
