"""Distinguishability measures, cocycles and the relative-modular audit.

The audit realizes the superoperator objects behind monotonicity of the
transition probability as explicit matrices on Hilbert-Schmidt space and
verifies the contraction and resolvent inequalities that drive it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .channels import Channel, left_right_matrix, vec
from .linalg import (SUPPORT_CUTOFF, dagger, frobenius, herm_part,
                     imaginary_power, pinv_on_support, psd_power, spectral,
                     support_mask, support_projection)
from .states import DensityMatrix

DEFAULT_T_GRID = tuple(0.37 * k for k in range(-8, 9) if k != 0)
AUDIT_T_GRID = tuple(0.37 * k for k in range(1, 9))
AUDIT_MAX_DIM = 16


def _density(d) -> np.ndarray:
    return d.matrix if isinstance(d, DensityMatrix) else np.asarray(d, dtype=complex)


def transition_probability(d1, d2) -> float:
    """Tr(d1^{1/2} d2^{1/2}); symmetric, in [0, 1], equal to 1 iff d1 = d2."""
    m1, m2 = _density(d1), _density(d2)
    if m1.shape != m2.shape:
        raise ValueError("dimension mismatch")
    value = np.trace(psd_power(m1, 0.5) @ psd_power(m2, 0.5)).real
    return float(min(max(value, 0.0), 1.0))


def von_neumann_entropy(d) -> float:
    w = spectral(_density(d)).eigenvalues
    w = w[w > 0.0]
    return float(-np.sum(w * np.log(w)))


def relative_entropy(d1, d2, cutoff: float = SUPPORT_CUTOFF) -> float:
    """Tr d1 (log d1 - log d2) evaluated on supports; +inf when the support
    of d1 is not contained in that of d2."""
    m1, m2 = _density(d1), _density(d2)
    if m1.shape != m2.shape:
        raise ValueError("dimension mismatch")
    w1, u1 = spectral(m1)
    w2, u2 = spectral(m2)
    mask1 = support_mask(w1, cutoff)
    mask2 = support_mask(w2, cutoff)
    p2 = u2[:, mask2] @ dagger(u2[:, mask2])
    p1 = u1[:, mask1] @ dagger(u1[:, mask1])
    if frobenius((np.eye(m1.shape[0]) - p2) @ p1) > 1e-7:
        return float("inf")
    overlaps = np.abs(dagger(u1[:, mask1]) @ u2[:, mask2]) ** 2
    plogp = float(np.sum(w1[mask1] * np.log(w1[mask1])))
    cross = float(np.einsum("i,ij,j->", w1[mask1], overlaps, np.log(w2[mask2])))
    return plogp - cross


class CocycleSample(NamedTuple):
    """One sample u_t = d_phi^{it} d_omega^{-it} of the relative cocycle."""

    t: float
    u: np.ndarray


def connes_cocycle(d_phi, d_omega, t: float, cutoff: float = SUPPORT_CUTOFF) -> CocycleSample:
    """Cocycle of a dominated state with respect to the dominating one.

    u_0 is the support projection of d_phi, u_t u_t^* equals it for all t,
    and the chain rule u_{s+t} = u_s sigma_s(u_t) holds for the modular flow
    of d_omega.
    """
    m_phi, m_omega = _density(d_phi), _density(d_omega)
    p_phi = support_projection(m_phi, cutoff)
    p_omega = support_projection(m_omega, cutoff)
    if frobenius((np.eye(m_phi.shape[0]) - p_omega) @ p_phi) > 1e-9:
        raise ValueError("cocycle requires supp(phi) <= supp(omega)")
    u = imaginary_power(m_phi, t, cutoff) @ imaginary_power(m_omega, -t, cutoff)
    return CocycleSample(float(t), u)


def modular_flow(d_omega, x: np.ndarray, t: float) -> np.ndarray:
    """sigma_t(x) = d^{it} x d^{-it} for a faithful density d."""
    m = _density(d_omega)
    w = np.linalg.eigvalsh(m)
    if w[0] <= SUPPORT_CUTOFF * w[-1]:
        raise ValueError("modular flow needs a faithful state; compress first")
    ut = imaginary_power(m, t)
    return ut @ x @ dagger(ut)


# ---------------------------------------------------------------------------
# Relative-modular audit
# ---------------------------------------------------------------------------

@dataclass
class ModularAudit:
    """Explicit relative-modular superoperators and their inequality residuals."""

    delta: np.ndarray
    delta0: np.ndarray
    v: np.ndarray
    max_violation: float
    details: dict[str, float]


def relative_modular_audit(t_channel: Channel, d1, d2,
                           t_grid=AUDIT_T_GRID) -> ModularAudit:
    """Assemble Delta, Delta_0 and the contraction V for a state pair under a
    trace-preserving map, and measure every inequality they must satisfy.

    Delta acts on the input HS space as a -> d2 a d1^{-1} (generalized
    inverse), Delta_0 likewise for the transformed pair, and
    V(y) = T^*(y T(d1)^{-1/2}) d1^{1/2} extends the defining relation
    V(x T(d1)^{1/2}) = T^*(x) d1^{1/2} by zero on the orthogonal complement.
    Checked: ||V|| <= 1, V T(d1)^{1/2} = d1^{1/2}, V* Delta V <= Delta_0, and
    the resolvent comparison at every positive t in the grid.
    """
    if not t_channel.trace_preserving:
        raise ValueError("the audit requires a trace-preserving map")
    m1, m2 = _density(d1), _density(d2)
    d_in, d_out = t_channel.in_dim, t_channel.out_dim
    if max(d_in, d_out) > AUDIT_MAX_DIM:
        raise ValueError(f"audit limited to dimension {AUDIT_MAX_DIM}")
    t1 = t_channel.apply(m1)
    t2 = t_channel.apply(m2)

    delta = np.kron(m2, pinv_on_support(m1).T)
    delta0 = np.kron(t2, pinv_on_support(t1).T)

    heis = t_channel.dual()
    t_heis_mat = heis.superoperator()
    sqrt1 = psd_power(m1, 0.5)
    sqrt_t1 = psd_power(t1, 0.5)
    inv_sqrt_t1 = psd_power(t1, -0.5)
    eye_in = np.eye(d_in, dtype=complex)
    eye_out = np.eye(d_out, dtype=complex)
    v = (left_right_matrix(eye_in, sqrt1) @ t_heis_mat
         @ left_right_matrix(eye_out, inv_sqrt_t1))

    details: dict[str, float] = {}
    details["contraction"] = max(0.0, float(np.linalg.norm(v, 2)) - 1.0)
    details["anchor"] = frobenius(v @ vec(sqrt_t1) - vec(sqrt1))
    gap = herm_part(delta0 - dagger(v) @ delta @ v)
    details["operator_order"] = max(0.0, -float(np.linalg.eigvalsh(gap)[0]))

    worst_res = 0.0
    x1 = vec(sqrt1)
    x0 = vec(sqrt_t1)
    for t in t_grid:
        if t <= 0:
            raise ValueError("resolvent grid must be positive")
        lhs = np.vdot(x1, np.linalg.solve(delta + t * np.eye(d_in ** 2), x1)).real
        rhs = np.vdot(x0, np.linalg.solve(delta0 + t * np.eye(d_out ** 2), x0)).real
        worst_res = max(worst_res, rhs - lhs)
    details["resolvent"] = max(0.0, worst_res)

    return ModularAudit(delta=delta, delta0=delta0, v=v,
                        max_violation=max(details.values()), details=details)


def monotonicity_gap(t_channel: Channel, d1, d2, which: str = "transition") -> float:
    """Slack of the data-processing inequality for the chosen divergence.

    ``transition``: P(T d1, T d2) - P(d1, d2); ``relative_entropy``:
    S(d1, d2) - S(T d1, T d2).  Nonnegative (up to roundoff) for every
    trace-preserving channel.
    """
    if not t_channel.trace_preserving:
        raise ValueError("monotonicity is stated for trace-preserving maps")
    m1, m2 = _density(d1), _density(d2)
    o1, o2 = t_channel.apply(m1), t_channel.apply(m2)
    if which == "transition":
        return transition_probability(o1, o2) - transition_probability(m1, m2)
    if which == "relative_entropy":
        before = relative_entropy(m1, m2)
        after = relative_entropy(o1, o2)
        if np.isinf(before) and np.isinf(after):
            return float("nan")
        return before - after
    raise ValueError(f"unknown divergence {which!r}")


def equality_intertwiner_residual(t_channel: Channel, d1, d2,
                                  t_grid=DEFAULT_T_GRID) -> float:
    """Residual of T^T(T(d2)^{it} T(d1)^{-it}) p1 = d2^{it} d1^{-it} p1.

    This identity characterizes equality in the monotonicity of the
    transition probability.
    """
    m1, m2 = _density(d1), _density(d2)
    p1 = support_projection(m1)
    t1 = t_channel.apply(m1)
    t2 = t_channel.apply(m2)
    heis = t_channel.dual()
    worst = 0.0
    for t in t_grid:
        lifted = heis.apply(imaginary_power(t2, t) @ imaginary_power(t1, -t)) @ p1
        local = imaginary_power(m2, t) @ imaginary_power(m1, -t) @ p1
        worst = max(worst, frobenius(lifted - local))
    return worst
