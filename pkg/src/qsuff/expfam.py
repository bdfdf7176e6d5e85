"""Quantum exponential families: tilted states, log-partition function,
moment matching, and their sufficiency criteria.

A family is parameterized as D_xi = exp(H + sum_i xi_i a_i) / Z(xi) around a
base state with density exp(H) (up to normalization).  The log-partition
function is normalized to vanish at xi = 0, its gradient is minus the tilted
expectations, and moment matching inverts the mean map by a damped Newton
iteration whose failure outside the small-parameter region is a first-class
error, not a crash.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import MatrixStarAlgebra, multiplicative_domain
from .channels import Channel, vec
from .divergences import modular_flow, relative_entropy
from .linalg import dagger, frechet_exp, frobenius, mat_fun, require_hermitian, spectral
from .rand import DEFAULT_SEED, rng
from .states import DensityMatrix, Experiment, build_dominating_state, \
    petz_conditional_expectation
from .sufficiency import (SUFFICIENCY_THRESHOLD, SufficiencyVerdict, _aggregate,
                          _grid, channel_sufficiency, subalgebra_sufficiency)


class RegionExitError(RuntimeError):
    """Newton iteration left the region where the mean map is invertible."""

    def __init__(self, message: str, last_iterate: np.ndarray, residual: float):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


def _normalized_exp(h: np.ndarray) -> tuple[np.ndarray, float]:
    """exp(h)/Tr exp(h) together with log Tr exp(h), shift-stabilized."""
    w, u = spectral(h)
    shift = float(w[0])
    ew = np.exp(w - shift)
    z = float(np.sum(ew))
    rho = (u * (ew / z)) @ dagger(u)
    return (rho + dagger(rho)) / 2.0, float(np.log(z) + shift)


@dataclass
class ExponentialFamily:
    """Base log-density H, generating observables, and the tilt map."""

    h: np.ndarray
    generators: list[np.ndarray]
    centered: bool = field(init=False)

    def __post_init__(self):
        self.h = require_hermitian(np.asarray(self.h, dtype=complex), name="H")
        self.generators = [require_hermitian(np.asarray(g, dtype=complex), name="generator")
                           for g in self.generators]
        d = self.h.shape[0]
        if any(g.shape != (d, d) for g in self.generators):
            raise ValueError("generator dimensions do not match H")
        if self.generators:
            gram = np.array([[np.trace(dagger(a) @ b) for b in self.generators]
                             for a in self.generators])
            if np.linalg.eigvalsh((gram + dagger(gram)) / 2)[0] <= 1e-10:
                raise ValueError("generators are linearly dependent")
        base = self.base_state().matrix
        self.centered = all(abs(np.trace(base @ g)) <= 1e-9 for g in self.generators)

    @property
    def dim(self) -> int:
        return self.h.shape[0]

    @property
    def n_params(self) -> int:
        return len(self.generators)

    def base_state(self) -> DensityMatrix:
        rho, _ = _normalized_exp(self.h)
        return DensityMatrix(rho)

    def centered_copy(self) -> "ExponentialFamily":
        base = self.base_state().matrix
        eye = np.eye(self.dim)
        gens = [g - np.trace(base @ g).real * eye for g in self.generators]
        return ExponentialFamily(self.h, gens)

    def exponent(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} coefficients, got {xi.shape}")
        return self.h + sum(x * g for x, g in zip(xi, self.generators))

    def sample_experiment(self, points) -> Experiment:
        fam = {f"xi_{i}": density_at(self, p) for i, p in enumerate(points)}
        return build_dominating_state(fam)


def density_at(fam: ExponentialFamily, xi) -> DensityMatrix:
    """Normalized tilted state exp(H + sum xi_i a_i)/Z."""
    rho, _ = _normalized_exp(fam.exponent(xi))
    return DensityMatrix(rho)


def perturbed_state(omega: DensityMatrix, a: np.ndarray) -> DensityMatrix:
    """exp(log D + a) normalized: the minimizer of psi -> S(psi, omega) - psi(a)."""
    if not omega.is_faithful():
        raise ValueError("perturbation requires a faithful base state")
    a = require_hermitian(np.asarray(a, dtype=complex), name="perturbation")
    log_d = mat_fun(omega.matrix, np.log)
    rho, _ = _normalized_exp(log_d + a)
    return DensityMatrix(rho)


def perturbation_objective(psi: DensityMatrix, omega: DensityMatrix,
                           a: np.ndarray) -> float:
    return relative_entropy(psi, omega) - float(np.trace(psi.matrix @ a).real)


@dataclass
class LogPartition:
    value: float
    gradient: np.ndarray
    at_point: np.ndarray


def log_partition(fam: ExponentialFamily, xi) -> LogPartition:
    """c(xi) = -log Tr exp(H + sum xi a) + log Tr exp(H), with gradient
    computed through the derivative of the exponential, so that
    grad_j = -Tr(D_xi a_j) holds as an identity to be checked rather than
    assumed."""
    xi = np.asarray(xi, dtype=float)
    exponent = fam.exponent(xi)
    _, log_z = _normalized_exp(exponent)
    _, log_z0 = _normalized_exp(fam.h)
    w, u = spectral(exponent)
    shift = float(w[0])
    z = float(np.sum(np.exp(w - shift)))
    grad = np.zeros(fam.n_params)
    shifted = exponent - shift * np.eye(fam.dim)
    for j, a in enumerate(fam.generators):
        grad[j] = -float(np.trace(frechet_exp(shifted, a)).real) / z
    return LogPartition(value=-(log_z - log_z0), gradient=grad, at_point=xi)


def mean_values(fam: ExponentialFamily, xi) -> np.ndarray:
    rho = density_at(fam, xi).matrix
    return np.array([np.trace(rho @ a).real for a in fam.generators])


def _mean_jacobian(fam: ExponentialFamily, xi) -> np.ndarray:
    """Derivative of the mean map, a covariance-type Gram matrix."""
    exponent = fam.exponent(xi)
    w, u = spectral(exponent)
    shift = float(w[0])
    z = float(np.sum(np.exp(w - shift)))
    shifted = exponent - shift * np.eye(fam.dim)
    rho = density_at(fam, xi).matrix
    means = np.array([np.trace(rho @ a).real for a in fam.generators])
    jac = np.zeros((fam.n_params, fam.n_params))
    for k, a_k in enumerate(fam.generators):
        deriv = frechet_exp(shifted, a_k) / z
        for j, a_j in enumerate(fam.generators):
            jac[j, k] = np.trace(deriv @ a_j).real - means[j] * means[k]
    return (jac + jac.T) / 2.0


def moment_match(fam: ExponentialFamily, target, tol: float = 1e-10,
                 max_iter: int = 100, max_halvings: int = 30) -> np.ndarray:
    """Solve Tr(D_xi a_j) = target_j for xi by damped Newton from xi = 0.

    The mean map is only invertible for small targets; divergence, a singular
    Jacobian or failure of the backtracking line search raise RegionExitError
    carrying the last iterate and its residual.
    """
    if not fam.centered:
        raise ValueError("moment matching expects a centered family "
                         "(use centered_copy())")
    target = np.asarray(target, dtype=float)
    xi = np.zeros(fam.n_params)
    f = mean_values(fam, xi) - target
    for _ in range(max_iter):
        if np.max(np.abs(f)) <= tol:
            return xi
        jac = _mean_jacobian(fam, xi)
        w, u = np.linalg.eigh(jac)
        if w[-1] <= 0 or np.sum(w > 1e-12 * w[-1]) < len(w):
            raise RegionExitError("mean-map Jacobian is singular; the target is "
                                  "outside the matchable region", xi,
                                  float(np.max(np.abs(f))))
        step = -u @ ((dagger(u) @ f) / w)
        alpha = 1.0
        base_norm = np.linalg.norm(f)
        for _ in range(max_halvings):
            cand = xi + alpha * step.real
            try:
                f_cand = mean_values(fam, cand) - target
            except (ValueError, FloatingPointError):
                alpha /= 2.0
                continue
            if np.linalg.norm(f_cand) < base_norm:
                xi, f = cand, f_cand
                break
            alpha /= 2.0
        else:
            raise RegionExitError("line search failed to reduce the residual",
                                  xi, float(np.max(np.abs(f))))
    raise RegionExitError(f"no convergence after {max_iter} Newton steps", xi,
                          float(np.max(np.abs(f))))


# ---------------------------------------------------------------------------
# Sufficiency for exponential families
# ---------------------------------------------------------------------------

SAMPLE_RADIUS = 0.1
N_SAMPLES = 5


def _sample_points(fam: ExponentialFamily, seed) -> list[np.ndarray]:
    gen = rng(seed)
    pts = []
    for _ in range(N_SAMPLES):
        v = gen.standard_normal(fam.n_params)
        v *= SAMPLE_RADIUS * gen.uniform(0.2, 1.0) / max(np.linalg.norm(v), 1e-12)
        pts.append(v)
    return pts


def expfam_subalgebra_sufficiency(fam: ExponentialFamily, a: MatrixStarAlgebra,
                                  t_grid=None, seed=DEFAULT_SEED,
                                  threshold: float = SUFFICIENCY_THRESHOLD) -> SufficiencyVerdict:
    """Sufficiency of a subalgebra for the whole exponential family.

    Checks that the modular flow of the base state keeps every generator
    inside the subalgebra (on the grid) and that the state-dual conditional
    expectation fixes the generators, then cross-validates against the
    generic test on a sample of tilted states.  The three criteria must
    agree; disagreement is flagged as borderline.
    """
    t_grid = _grid(t_grid)
    omega = fam.base_state()
    res: dict[str, float] = {"modular_orbit": 0.0, "expectation_fixes": 0.0}
    for g in fam.generators:
        for t in t_grid:
            res["modular_orbit"] = max(
                res["modular_orbit"],
                a.projection_residual(modular_flow(omega.matrix, g, t)))
        fixed = petz_conditional_expectation(a, omega, g)
        res["expectation_fixes"] = max(res["expectation_fixes"], frobenius(fixed - g))

    exp = fam.sample_experiment(_sample_points(fam, seed))
    generic = subalgebra_sufficiency(exp, a, t_grid, seed=seed)
    res["sampled_family"] = generic.per_condition[generic.authoritative]
    return _aggregate(res, "expectation_fixes", threshold, 10 * threshold)


def expfam_channel_sufficiency(fam: ExponentialFamily, ch: Channel, t_grid=None,
                               seed=DEFAULT_SEED,
                               threshold: float = SUFFICIENCY_THRESHOLD) -> SufficiencyVerdict:
    """Sufficiency of a coarse-graining for an exponential family.

    Looks for preimages of the generators inside the multiplicative domain
    (a linear solve) and verifies that the pulled-back family is again the
    exponential family of the preimages around the pulled-back base state,
    on a sample of parameter values.  Cross-checked against the generic
    channel criterion.
    """
    if ch.out_dim != fam.dim:
        raise ValueError("channel output does not match the family dimension")
    t_grid = _grid(t_grid)
    dom = multiplicative_domain(ch)
    images = np.stack([ch.apply(b) for b in dom.basis])
    image_mat = images.reshape(dom.dim, -1).T

    res: dict[str, float] = {"preimage": 0.0, "pullback_family": 0.0}
    preimages = []
    for b in fam.generators:
        coeff, residues, *_ = np.linalg.lstsq(image_mat, vec(b), rcond=None)
        candidate = np.einsum("k,kij->ij", coeff, dom.basis)
        res["preimage"] = max(res["preimage"], frobenius(ch.apply(candidate) - b))
        preimages.append((candidate + dagger(candidate)) / 2.0)

    omega = fam.base_state()
    pulled_base = ch.dual().apply(omega.matrix)
    w = np.linalg.eigvalsh(pulled_base)
    if w[0] <= 1e-12:
        raise ValueError("pulled-back base state is not faithful; compress first")
    log_pulled = mat_fun(pulled_base, np.log)
    for point in _sample_points(fam, seed):
        tilt = sum(x * g for x, g in zip(point, preimages))
        expected, _ = _normalized_exp(log_pulled + tilt)
        actual = ch.dual().apply(density_at(fam, point).matrix)
        res["pullback_family"] = max(res["pullback_family"],
                                     frobenius(expected - actual))

    exp = fam.sample_experiment(_sample_points(fam, seed))
    generic = channel_sufficiency(exp, ch, t_grid, seed=seed)
    res["generic_channel"] = generic.per_condition[generic.authoritative]
    return _aggregate(res, "pullback_family", threshold, 10 * threshold)


def commutative_family_check(fam: ExponentialFamily, seed=DEFAULT_SEED,
                             threshold: float = 1e-9) -> SufficiencyVerdict:
    """Classical closed form for families generated inside a commutative algebra.

    When the generators commute with the base density, the tilted states are
    given by phi(x) = omega(exp(sum theta a) x) / omega(exp(sum theta a)); the
    residual of that identity over sampled parameters is reported, together
    with the commutativity of the generator set itself.
    """
    res: dict[str, float] = {"generators_commute": 0.0, "closed_form": 0.0}
    for i, a in enumerate(fam.generators):
        for b in fam.generators[i + 1:]:
            res["generators_commute"] = max(res["generators_commute"],
                                            frobenius(a @ b - b @ a))
    omega = fam.base_state().matrix
    for point in _sample_points(fam, seed):
        tilt = sum(x * g for x, g in zip(point, fam.generators))
        weight = mat_fun(tilt, np.exp)
        unnormalized = omega @ weight
        classical = (unnormalized + dagger(unnormalized)) / 2.0
        classical /= np.trace(classical).real
        res["closed_form"] = max(res["closed_form"],
                                 frobenius(classical - density_at(fam, point).matrix))
    return _aggregate(res, "closed_form", threshold, 10 * threshold)
