"""Sufficiency analysis for families of quantum states.

Whether a subalgebra or a coarse-graining retains all information about a
family of states is decided here through several equivalent criteria that are
evaluated independently and cross-checked: preservation under the recovery
(dual) map is authoritative, with transition-probability equality, relative
entropy equality and cocycle membership as consistency witnesses.  On top of
the verdicts sit the structural results: the minimal sufficient subalgebra,
the induced block decomposition of the states, the commuting factorization,
and the block form of the Kraus operators of a sufficient channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import (DEFAULT_T_GRID, BlockStructure, MatrixStarAlgebra,
                      commutant, conditional_expectation, generate_algebra,
                      modular_invariance_check, multiplicative_domain,
                      orthonormalize, restricted_density)
from .channels import Channel, choi_matrix
from .divergences import (connes_cocycle, modular_flow, relative_entropy,
                          transition_probability)
from .linalg import (dagger, frobenius, imaginary_power, mat_fun,
                     partial_trace, pinv_on_support, psd_power)
from .rand import DEFAULT_SEED
from .states import DensityMatrix, Experiment, compress_experiment

SUFFICIENCY_THRESHOLD = 1e-7
BORDERLINE_BAND = 1e-6


class InsufficiencyError(RuntimeError):
    """Raised when an operation that requires sufficiency receives a family
    for which the channel or subalgebra is demonstrably insufficient."""

    def __init__(self, message: str, verdict: "SufficiencyVerdict"):
        super().__init__(message)
        self.verdict = verdict


class DecompositionError(RuntimeError):
    """Numerical failure: residuals carried along for diagnosis."""

    def __init__(self, message: str, residual: float | None = None, log=None):
        super().__init__(message)
        self.residual = residual
        self.log = log or []


@dataclass
class SufficiencyVerdict:
    """Outcome of the equivalent sufficiency criteria.

    ``sufficient`` follows the authoritative recovery-invariance residual;
    ``borderline`` is set when any residual falls between the threshold and
    ten times it, or when the criteria disagree outright.  Disagreements are
    reported, never silently resolved.
    """

    sufficient: bool
    borderline: bool
    consistent: bool
    per_condition: dict[str, float]
    authoritative: str
    threshold: float = SUFFICIENCY_THRESHOLD
    band: float = BORDERLINE_BAND
    notes: list[str] = field(default_factory=list)

    def __repr__(self) -> str:
        tag = "sufficient" if self.sufficient else "insufficient"
        if self.borderline:
            tag += " (borderline)"
        conds = ", ".join(f"{k}={v:.2e}" for k, v in self.per_condition.items())
        return f"SufficiencyVerdict({tag}; {conds})"


def _aggregate(per_condition: dict[str, float], authoritative: str,
               threshold: float, band: float, notes=None) -> SufficiencyVerdict:
    finite = {k: v for k, v in per_condition.items() if np.isfinite(v)}
    below = {k for k, v in finite.items() if v <= threshold}
    above = {k for k, v in finite.items() if v >= band}
    in_band = set(finite) - below - above
    consistent = not in_band and (len(below) == len(finite) or len(above) == len(finite))
    borderline = bool(in_band) or not consistent
    return SufficiencyVerdict(
        sufficient=per_condition[authoritative] <= threshold,
        borderline=borderline,
        consistent=consistent,
        per_condition=per_condition,
        authoritative=authoritative,
        threshold=threshold,
        band=band,
        notes=list(notes or []),
    )


def _grid(t_grid) -> tuple[float, ...]:
    return tuple(t_grid) if t_grid is not None else DEFAULT_T_GRID


# ---------------------------------------------------------------------------
# Subalgebra sufficiency
# ---------------------------------------------------------------------------

def recovered_from_restriction(a: MatrixStarAlgebra, omega: np.ndarray,
                               restricted: np.ndarray) -> np.ndarray:
    """Recovery map applied to a restricted density:
    D^{1/2} E(D)^{-1/2} rho E(D)^{-1/2} D^{1/2} with D the dominating density."""
    e_omega = conditional_expectation(a, omega)
    half = psd_power(omega, 0.5) @ mat_fun(e_omega, lambda v: v ** -0.5, support_only=True)
    return half @ restricted @ dagger(half)


def subalgebra_sufficiency(exp: Experiment, a: MatrixStarAlgebra, t_grid=None,
                           threshold: float = SUFFICIENCY_THRESHOLD,
                           band: float = BORDERLINE_BAND,
                           seed=DEFAULT_SEED) -> SufficiencyVerdict:
    """Decide whether a subalgebra is sufficient for the family.

    Evaluates, per state: recovery invariance (authoritative), equality of
    transition probabilities and of relative entropies between the full and
    the restricted experiment, equality of the relative cocycles with the
    restricted ones, and membership of the cocycles in the subalgebra.

    The dominating state must be faithful; when it is not, the experiment and
    the algebra are compressed onto its support, which requires the support
    projection to commute with the algebra.
    """
    t_grid = _grid(t_grid)
    notes = []
    if not exp.dominating.is_faithful():
        p = exp.dominating.support()
        comm = max(frobenius(p @ b - b @ p) for b in a.basis)
        if comm > 1e-9:
            raise ValueError(
                "dominating state is not faithful and its support does not "
                "commute with the subalgebra; compress the experiment first")
        exp, iso = compress_experiment(exp)
        a = MatrixStarAlgebra.from_span(
            [dagger(iso) @ b @ iso for b in a.basis], exp.dim)
        notes.append("experiment and algebra compressed to the support of the "
                     "dominating state")

    omega = exp.dominating.matrix
    rest_omega = restricted_density(a, omega, seed=seed)

    single_trivial = all(frobenius(s.matrix - omega) <= 1e-12 for s in exp.states.values())
    if single_trivial:
        notes.append("degenerate experiment: every state equals the dominating "
                     "state, trivially sufficient")

    res: dict[str, float] = {k: 0.0 for k in
                             ("petz_invariance", "transition_probability",
                              "relative_entropy", "cocycle_restriction",
                              "cocycle_membership")}
    for label, state in exp.items():
        d = state.matrix
        d0 = restricted_density(a, d, seed=seed)

        rec = recovered_from_restriction(a, omega, d0)
        res["petz_invariance"] = max(res["petz_invariance"], frobenius(rec - d))

        res["transition_probability"] = max(
            res["transition_probability"],
            abs(transition_probability(d, omega) - transition_probability(d0, rest_omega)))

        s_full = relative_entropy(d, omega)
        s_rest = relative_entropy(d0, rest_omega)
        res["relative_entropy"] = max(res["relative_entropy"], abs(s_full - s_rest))

        for t in t_grid:
            u_full = connes_cocycle(d, omega, t).u
            u_rest = connes_cocycle(d0, rest_omega, t).u
            res["cocycle_restriction"] = max(res["cocycle_restriction"],
                                             frobenius(u_full - u_rest))
            res["cocycle_membership"] = max(res["cocycle_membership"],
                                            a.projection_residual(u_full))

    return _aggregate(res, "petz_invariance", threshold, band, notes)


# ---------------------------------------------------------------------------
# Channel sufficiency
# ---------------------------------------------------------------------------

def _compress_channel_setup(exp: Experiment, ch: Channel):
    """Cut the experiment and a unital coarse-graining down to the supports of
    the dominating state and of its pullback, after which both are faithful."""
    notes = []
    omega = exp.dominating
    pulled_omega = ch.dual().apply(omega.matrix)
    if not omega.is_faithful():
        exp, iso_out = compress_experiment(exp)
        notes.append("compressed the experiment to supp(omega)")
    else:
        iso_out = np.eye(exp.dim, dtype=complex)
    w, u = np.linalg.eigh(pulled_omega)
    mask = w > 1e-10 * max(w[-1], 1e-300)
    if not np.all(mask):
        iso_in = u[:, mask]
        notes.append("compressed the channel domain to supp(omega o channel)")
    else:
        iso_in = np.eye(ch.in_dim, dtype=complex)
    kraus = [dagger(iso_out) @ v @ iso_in for v in ch.kraus]
    unit_defect = frobenius(sum(k @ dagger(k) for k in kraus) - np.eye(iso_out.shape[1]))
    if unit_defect > 1e-8:
        raise DecompositionError(
            f"compressed coarse-graining is not unital (defect {unit_defect:.3e})",
            residual=unit_defect)
    ch2 = Channel(kraus, unital=True)
    return exp, ch2, notes


def channel_sufficiency(exp: Experiment, ch: Channel, t_grid=None,
                        threshold: float = SUFFICIENCY_THRESHOLD,
                        band: float = BORDERLINE_BAND,
                        seed=DEFAULT_SEED,
                        check_image_algebra: bool = True) -> SufficiencyVerdict:
    """Decide whether a unital coarse-graining is sufficient for the family.

    Conditions evaluated per state: invariance under the composition with the
    recovery dual (authoritative), preservation of transition probabilities
    and of relative entropies under the pullback, intertwining of the pulled
    back cocycles, and (optionally) sufficiency of the image of the
    multiplicative domain as a subalgebra.
    """
    if not ch.unital:
        raise ValueError("coarse-grainings act unitally in the observable direction")
    if ch.out_dim != exp.dim:
        raise ValueError("channel output dimension does not match the experiment")
    t_grid = _grid(t_grid)
    exp, ch, notes = _compress_channel_setup(exp, ch)

    schro = ch.dual()
    omega = exp.dominating.matrix
    pulled_omega = schro.apply(omega)
    sqrt_omega = psd_power(omega, 0.5)
    back = psd_power(pulled_omega, -0.5)

    res: dict[str, float] = {k: 0.0 for k in
                             ("petz_invariance", "transition_probability",
                              "relative_entropy", "cocycle_intertwining")}
    for label, state in exp.items():
        d = state.matrix
        pulled = schro.apply(d)

        recovered = sqrt_omega @ ch.apply(back @ pulled @ back) @ sqrt_omega
        res["petz_invariance"] = max(res["petz_invariance"], frobenius(recovered - d))

        res["transition_probability"] = max(
            res["transition_probability"],
            abs(transition_probability(d, omega) -
                transition_probability(pulled, pulled_omega)))

        res["relative_entropy"] = max(
            res["relative_entropy"],
            abs(relative_entropy(d, omega) - relative_entropy(pulled, pulled_omega)))

        for t in t_grid:
            u_down = connes_cocycle(pulled, pulled_omega, t).u
            u_up = connes_cocycle(d, omega, t).u
            res["cocycle_intertwining"] = max(res["cocycle_intertwining"],
                                              frobenius(ch.apply(u_down) - u_up))

    if check_image_algebra:
        dom = multiplicative_domain(ch)
        image = MatrixStarAlgebra.from_span([ch.apply(b) for b in dom.basis], exp.dim)
        sub = subalgebra_sufficiency(exp, image, t_grid, threshold, band, seed=seed)
        res["image_subalgebra"] = sub.per_condition[sub.authoritative]
        notes.extend(f"image check: {n}" for n in sub.notes)

    return _aggregate(res, "petz_invariance", threshold, band, notes)


# ---------------------------------------------------------------------------
# Minimal sufficient subalgebra
# ---------------------------------------------------------------------------

def _cocycle_span(exp: Experiment, t_grid, seed) -> MatrixStarAlgebra:
    omega = exp.dominating.matrix
    gens = []
    for state in exp.states.values():
        for t in t_grid:
            gens.append(connes_cocycle(state.matrix, omega, t).u)
    alg = generate_algebra(gens, exp.dim)
    # close under the modular flow sampled on the same grid
    while True:
        flowed = [modular_flow(omega, b, t) for b in alg.basis for t in t_grid]
        grown = generate_algebra(list(alg.basis) + flowed, exp.dim)
        if grown.dim == alg.dim:
            return grown
        alg = grown


def _refined(t_grid) -> tuple[float, ...]:
    half = [t / 2.0 for t in t_grid]
    return tuple(sorted(set(half) | set(t_grid)))


def minimal_sufficient_algebra(exp: Experiment, t_grid=None,
                               max_refinements: int = 3,
                               seed=DEFAULT_SEED) -> MatrixStarAlgebra:
    """Subalgebra generated by all relative cocycles of the family.

    Cocycles are sampled on an irregular grid, the span is closed under the
    modular flow, and the grid is repeatedly doubled in density until the
    span stops growing.  The certified span must pass the subalgebra
    sufficiency test and be modular invariant, otherwise the failure is
    reported rather than silently accepted.
    """
    if not exp.dominating.is_faithful():
        exp, _ = compress_experiment(exp)
    t_grid = _grid(t_grid)
    alg = _cocycle_span(exp, t_grid, seed)
    log = [f"grid x1: dim {alg.dim}"]
    stable = False
    for _ in range(max_refinements):
        t_grid = _refined(t_grid)
        grown = _cocycle_span(exp, t_grid, seed)
        log.append(f"grid x2: dim {grown.dim}")
        if grown.dim == alg.dim and grown.same_span(alg):
            stable = True
            break
        alg = grown
    if not stable:
        raise DecompositionError(
            "cocycle span kept growing under grid refinement", log=log)

    verdict = subalgebra_sufficiency(exp, alg, t_grid, seed=seed)
    if not verdict.sufficient:
        raise DecompositionError(
            f"generated cocycle algebra failed the sufficiency check: {verdict}",
            residual=verdict.per_condition[verdict.authoritative], log=log)
    invariant, dev = modular_invariance_check(alg, exp.dominating.matrix, t_grid)
    if not invariant:
        raise DecompositionError(
            f"generated cocycle algebra is not modular invariant (dev {dev:.3e})",
            residual=dev, log=log)
    return alg


# ---------------------------------------------------------------------------
# S-decomposition
# ---------------------------------------------------------------------------

@dataclass
class SDecomposition:
    """Block form of a dominated family: D_theta = sum_n s_n(theta) D_n(theta) (x) D_n^R.

    ``block_structure`` aligns the minimal sufficient algebra with
    (+)_n M_{d_n} (x) 1_{m_n}; the relative commutant acts as 1_{d_n} (x) M_{m_n}
    on the same blocks.  Only the weights and the left factors depend on the
    state label; the central element z has value z_n on block n.
    """

    block_structure: BlockStructure
    weights: dict[str, np.ndarray]
    left_factors: dict[str, list[np.ndarray]]
    right_factors: list[np.ndarray]
    central: np.ndarray
    labels: list[str]
    reconstruction_error: float

    @property
    def blocks(self) -> list[tuple[int, int]]:
        return self.block_structure.blocks

    def reconstruct(self, label: str) -> np.ndarray:
        pieces = [self.weights[label][n] * np.kron(self.left_factors[label][n],
                                                   self.right_factors[n])
                  for n in range(len(self.blocks))]
        return self.block_structure.assemble(pieces)


def s_decomposition(exp: Experiment, t_grid=None, seed=DEFAULT_SEED,
                    tol: float = 1e-8) -> SDecomposition:
    """Compute the block decomposition induced by the minimal sufficient algebra.

    The weights are s_n(theta) = Tr(D_theta p_n); the left factors are the
    normalized partial traces of the blocks over the multiplicity space and
    the right factors (independent of theta) over the factor space.
    """
    if not exp.dominating.is_faithful():
        exp, _ = compress_experiment(exp)
    t_grid = _grid(t_grid)
    m_s = minimal_sufficient_algebra(exp, t_grid, seed=seed)
    bs = m_s.block_structure(seed=seed)
    nblocks = len(bs.blocks)

    omega_rot = bs.rotate(exp.dominating.matrix)
    right_factors = []
    central = np.zeros(nblocks)
    for n, (d, m) in enumerate(bs.blocks):
        sl = bs.block_slice(n)
        blk = omega_rot[sl, sl]
        w = float(np.trace(blk).real)
        if w <= 1e-14:
            raise DecompositionError(
                f"dominating state has no weight on block {n}", residual=w)
        right = partial_trace(blk, [d, m], [1]) / w
        right_factors.append(right)
        central[n] = d * m / w

    weights: dict[str, np.ndarray] = {}
    left_factors: dict[str, list[np.ndarray]] = {}
    worst = 0.0
    theta_dependence = 0.0
    for label, state in exp.items():
        rot = bs.rotate(state.matrix)
        w_vec = np.zeros(nblocks)
        lefts = []
        for n, (d, m) in enumerate(bs.blocks):
            sl = bs.block_slice(n)
            blk = rot[sl, sl]
            w = float(np.trace(blk).real)
            w_proj = float(np.trace(state.matrix @ bs.block_projections[n]).real)
            if abs(w - w_proj) > 1e-9:
                raise DecompositionError(
                    f"block weight mismatch on {label!r}: {w} vs {w_proj}")
            w_vec[n] = max(w, 0.0)
            if w > 1e-12:
                left = partial_trace(blk, [d, m], [0]) / w
                right = partial_trace(blk, [d, m], [1]) / w
                theta_dependence = max(theta_dependence,
                                       frobenius(right - right_factors[n]))
            else:
                left = np.eye(d, dtype=complex) / d
            lefts.append(left)
        weights[label] = w_vec
        left_factors[label] = lefts

    dec = SDecomposition(block_structure=bs, weights=weights,
                         left_factors=left_factors, right_factors=right_factors,
                         central=central, labels=exp.labels,
                         reconstruction_error=0.0)
    for label, state in exp.items():
        worst = max(worst, frobenius(dec.reconstruct(label) - state.matrix))
    dec.reconstruction_error = worst
    if worst > tol:
        raise DecompositionError(
            f"reconstruction error {worst:.3e} exceeds {tol:.1e}; the cocycle "
            "algebra may not have stabilized", residual=worst)
    if theta_dependence > tol:
        raise DecompositionError(
            f"right factors vary with theta by {theta_dependence:.3e}",
            residual=theta_dependence)
    return dec


# ---------------------------------------------------------------------------
# Factorization through a modular-invariant subalgebra
# ---------------------------------------------------------------------------

@dataclass
class FactorizationResult:
    """Commuting factorization D_theta = D_{theta,0} * D_{omega,1} * z.

    ``theta_factors`` are the densities of the restrictions to the subalgebra,
    ``commutant_factor`` the density of the dominating state on the relative
    commutant, and ``central_factor`` the positive central element fixed by
    the dominating state.  ``residuals`` measures the product identity per
    state; the identity holds exactly when the subalgebra is sufficient.
    """

    theta_factors: dict[str, np.ndarray]
    commutant_factor: np.ndarray
    central_factor: np.ndarray
    residuals: dict[str, float]
    verdict: SufficiencyVerdict
    biconditional_ok: bool
    resid_threshold: float


def factorization_check(exp: Experiment, a: MatrixStarAlgebra, t_grid=None,
                        seed=DEFAULT_SEED, tol: float = 1e-8) -> FactorizationResult:
    """Exercise both directions of the factorization criterion.

    Requires the subalgebra to be invariant under the modular flow of the
    dominating state (hypothesis of the criterion).  Builds the three factors
    from the dominating state, measures the product identity on every state,
    and compares with the sufficiency verdict.
    """
    if not exp.dominating.is_faithful():
        raise ValueError("factorization requires a faithful dominating state; "
                         "compress the experiment first")
    t_grid = _grid(t_grid)
    invariant, dev = modular_invariance_check(a, exp.dominating.matrix, t_grid)
    if not invariant:
        raise ValueError(
            f"subalgebra is not invariant under the modular flow of the "
            f"dominating state (deviation {dev:.3e}); the factorization "
            "criterion assumes modular invariance")

    omega = exp.dominating.matrix
    rel_comm = commutant(a)
    d_omega0 = restricted_density(a, omega, seed=seed)
    d_omega1 = restricted_density(rel_comm, omega, seed=seed)
    z = pinv_on_support(d_omega0 @ d_omega1) @ omega
    z = (z + dagger(z)) / 2.0

    base_residual = frobenius(d_omega0 @ d_omega1 @ z - omega)
    if base_residual > tol:
        raise DecompositionError(
            f"dominating-state factorization failed ({base_residual:.3e}); "
            "this should not happen for a modular-invariant subalgebra",
            residual=base_residual)

    theta_factors: dict[str, np.ndarray] = {}
    residuals: dict[str, float] = {}
    for label, state in exp.items():
        d0 = restricted_density(a, state.matrix, seed=seed)
        theta_factors[label] = d0
        residuals[label] = frobenius(d0 @ d_omega1 @ z - state.matrix)

    verdict = subalgebra_sufficiency(exp, a, t_grid, seed=seed)
    identity_holds = max(residuals.values()) <= tol
    return FactorizationResult(
        theta_factors=theta_factors,
        commutant_factor=d_omega1,
        central_factor=z,
        residuals=residuals,
        verdict=verdict,
        biconditional_ok=(identity_holds == verdict.sufficient),
        resid_threshold=tol,
    )


@dataclass
class LFactorReport:
    """Result of factoring a family of left factors through the minimal algebra."""

    algebra: MatrixStarAlgebra
    verdict: SufficiencyVerdict
    modular_invariant: bool
    r0: np.ndarray
    factor_residuals: dict[str, float]
    commutation_residual: float
    membership_residual: float


def decompose_L_factors(exp: Experiment, l_family: dict[str, np.ndarray],
                        r: np.ndarray, t_grid=None, seed=DEFAULT_SEED,
                        tol: float = 1e-8) -> LFactorReport:
    """Given D_theta = L_theta R with R of full support commuting with every
    L_theta, verify the algebra generated by the L_theta is sufficient and
    modular invariant, and split off the state-independent remainder R0 with
    L_theta = D_{S,theta} R0."""
    t_grid = _grid(t_grid)
    r = np.asarray(r, dtype=complex)
    w = np.linalg.eigvalsh((r + dagger(r)) / 2)
    if w[0] <= 1e-12:
        raise ValueError("R must be positive with full support")
    for label, state in exp.items():
        l_theta = np.asarray(l_family[label], dtype=complex)
        if frobenius(l_theta @ r - r @ l_theta) > 1e-9:
            raise ValueError(f"R does not commute with L[{label!r}]")
        if frobenius(l_theta @ r - state.matrix) > 1e-8:
            raise ValueError(f"L[{label!r}] R does not reproduce the state")

    m_l = generate_algebra([l_family[l] for l in exp.labels], exp.dim)
    verdict = subalgebra_sufficiency(exp, m_l, t_grid, seed=seed)
    invariant, _ = modular_invariance_check(m_l, exp.dominating.matrix, t_grid)

    dec = s_decomposition(exp, t_grid, seed=seed)
    d_s_omega = restricted_density(minimal_sufficient_algebra(exp, t_grid, seed=seed),
                                   exp.dominating.matrix, seed=seed)
    weights = exp.weights or {l: 1.0 / len(exp.labels) for l in exp.labels}
    l_omega = sum(weights[l] * np.asarray(l_family[l], dtype=complex)
                  for l in exp.labels)
    r0 = pinv_on_support(d_s_omega) @ l_omega

    m_s = minimal_sufficient_algebra(exp, t_grid, seed=seed)
    factor_residuals = {}
    comm_res = 0.0
    for label in exp.labels:
        d_s_theta = restricted_density(m_s, exp.states[label].matrix, seed=seed)
        factor_residuals[label] = frobenius(d_s_theta @ r0 - l_family[label])
        comm_res = max(comm_res, frobenius(d_s_theta @ r0 - r0 @ d_s_theta))
    membership = m_l.projection_residual(r0)
    return LFactorReport(algebra=m_l, verdict=verdict, modular_invariant=invariant,
                         r0=r0, factor_residuals=factor_residuals,
                         commutation_residual=comm_res,
                         membership_residual=membership)


# ---------------------------------------------------------------------------
# Kraus structure of sufficient channels
# ---------------------------------------------------------------------------

@dataclass
class ChannelStructure:
    """Block form V_i = sum_n U_n (x) L_{i,n} of the Kraus family of a
    sufficient coarse-graining, together with validation residuals."""

    in_structure: BlockStructure
    out_structure: BlockStructure
    unitaries: list[np.ndarray]
    components: list[list[np.ndarray]]   # components[i][n] = L_{i,n}
    projection_match: float
    normalization_residual: float
    reassembly_choi_distance: float
    identity_blocks: bool = False
    right_commutation: float | None = None

    def reassembled_kraus(self) -> list[np.ndarray]:
        out = []
        n_kraus = len(self.components)
        for i in range(n_kraus):
            v = np.zeros((self.out_structure.unitary.shape[0],
                          self.in_structure.unitary.shape[0]), dtype=complex)
            for n, u_n in enumerate(self.unitaries):
                slo = self.out_structure.block_slice(n)
                sli = self.in_structure.block_slice(n)
                block = np.kron(u_n, self.components[i][n])
                v += (self.out_structure.unitary[:, slo] @ block
                      @ dagger(self.in_structure.unitary[:, sli]))
            out.append(v)
        return out


def _extract_block_form(tilde_kraus: list[np.ndarray], d_left: int,
                        dr_out: int, dr_in: int):
    """Split rotated Kraus blocks V = U (x) L; returns U and the list of L."""
    realigned = []
    for v in tilde_kraus:
        t = v.reshape(d_left, dr_out, d_left, dr_in)
        realigned.append(t.transpose(0, 2, 1, 3).reshape(d_left * d_left, dr_out * dr_in))
    stacked = np.concatenate(realigned, axis=1)
    u_svd, s, _ = np.linalg.svd(stacked, full_matrices=False)
    u_vec = u_svd[:, 0]
    # fix the global phase deterministically
    k = int(np.argmax(np.abs(u_vec)))
    u_vec = u_vec * np.exp(-1j * np.angle(u_vec[k]))
    u_n = u_vec.reshape(d_left, d_left) * np.sqrt(d_left)
    rank1 = float(np.linalg.norm(s[1:])) if len(s) > 1 else 0.0

    components = []
    resid = rank1
    for v in tilde_kraus:
        w = (np.kron(dagger(u_n), np.eye(dr_out)) @ v).reshape(d_left, dr_out,
                                                               d_left, dr_in)
        l_in = np.einsum("arbs,ab->rs", w, np.eye(d_left)) / d_left
        components.append(l_in)
        resid = max(resid, frobenius(v - np.kron(u_n, l_in)))
    return u_n, components, resid


def channel_structure(exp: Experiment, ch: Channel, t_grid=None,
                      seed=DEFAULT_SEED, tol: float = 1e-8) -> ChannelStructure:
    """Exhibit the Kraus operators of a sufficient coarse-graining in the
    block form V_i = sum_n U_n (x) L_{i,n}.

    The domain inherits the block decomposition of the family through the
    pulled-back cocycle algebra; blocks are matched by transporting the
    central projections through the channel, a common unitary is isolated per
    block, and the reassembled channel is compared to the original at Choi
    level.  Raises InsufficiencyError when the channel is insufficient, and
    DecompositionError on numerical failure.
    """
    t_grid = _grid(t_grid)
    verdict = channel_sufficiency(exp, ch, t_grid, seed=seed)
    if not verdict.sufficient:
        raise InsufficiencyError(
            "channel is insufficient for the family; no block structure exists "
            f"({verdict})", verdict)

    exp, ch, _ = _compress_channel_setup(exp, ch)
    dec_out = s_decomposition(exp, t_grid, seed=seed)
    schro = ch.dual()
    pulled_states = {l: DensityMatrix(schro.apply(s.matrix), atol_trace=1e-8,
                                      atol_psd=1e-9)
                     for l, s in exp.items()}
    pulled_exp = Experiment(pulled_states,
                            DensityMatrix(schro.apply(exp.dominating.matrix),
                                          atol_trace=1e-8, atol_psd=1e-9),
                            exp.weights, check=False)
    dec_in = s_decomposition(pulled_exp, t_grid, seed=seed)

    bs_out, bs_in = dec_out.block_structure, dec_in.block_structure
    if len(bs_out.blocks) != len(bs_in.blocks):
        raise DecompositionError(
            f"block counts differ: {bs_out.blocks} vs {bs_in.blocks}")

    # pair blocks through the channel: ch(q_n) must be one of the p_m
    order = []
    match_res = 0.0
    for q in bs_in.block_projections:
        img = ch.apply(q)
        dists = [frobenius(img - p) for p in bs_out.block_projections]
        m = int(np.argmin(dists))
        if m in order:
            raise DecompositionError("block matching is not a bijection")
        order.append(m)
        match_res = max(match_res, dists[m])
    if match_res > 1e-6:
        raise DecompositionError(
            f"projections do not transport onto each other ({match_res:.3e})",
            residual=match_res)

    # reorder the output structure to the matched order
    perm_out = BlockStructure(
        unitary=np.concatenate([bs_out.unitary[:, bs_out.block_slice(m)]
                                for m in order], axis=1),
        blocks=[bs_out.blocks[m] for m in order],
        block_projections=[bs_out.block_projections[m] for m in order])

    unitaries, components_by_block = [], []
    worst = match_res
    for n, (dl_in, dr_in) in enumerate(bs_in.blocks):
        dl_out, dr_out = perm_out.blocks[n]
        if dl_in != dl_out:
            raise DecompositionError(
                f"left dimensions differ on block {n}: {dl_in} vs {dl_out}")
        slo, sli = perm_out.block_slice(n), bs_in.block_slice(n)
        tilde = [dagger(perm_out.unitary[:, slo]) @ v @ bs_in.unitary[:, sli]
                 for v in ch.kraus]
        u_n, comps, resid = _extract_block_form(tilde, dl_in, dr_out, dr_in)
        if frobenius(dagger(u_n) @ u_n - np.eye(dl_in)) > 1e-6:
            raise DecompositionError(f"extracted block unitary is not unitary "
                                     f"on block {n}")
        worst = max(worst, resid)
        unitaries.append(u_n)
        components_by_block.append(comps)

    components = [[components_by_block[n][i] for n in range(len(bs_in.blocks))]
                  for i in range(len(ch.kraus))]
    norm_res = 0.0
    for n, (dl, dr_out) in enumerate(zip([b[0] for b in bs_in.blocks],
                                         [b[1] for b in perm_out.blocks])):
        total = sum(components[i][n] @ dagger(components[i][n])
                    for i in range(len(ch.kraus)))
        norm_res = max(norm_res, frobenius(total - np.eye(dr_out)))

    structure = ChannelStructure(
        in_structure=bs_in, out_structure=perm_out, unitaries=unitaries,
        components=components, projection_match=match_res,
        normalization_residual=norm_res, reassembly_choi_distance=0.0)
    rebuilt = Channel(structure.reassembled_kraus())
    structure.reassembly_choi_distance = frobenius(
        choi_matrix(rebuilt) - choi_matrix(ch))
    if structure.reassembly_choi_distance > tol or worst > 1e-6:
        raise DecompositionError(
            "block form does not reassemble the channel "
            f"(choi distance {structure.reassembly_choi_distance:.3e}, "
            f"block residual {worst:.3e})",
            residual=structure.reassembly_choi_distance)
    return structure


def state_preserving_structure(exp: Experiment, ch: Channel, t_grid=None,
                               seed=DEFAULT_SEED, tol: float = 1e-8) -> ChannelStructure:
    """Block form of a coarse-graining that fixes every state of the family.

    The Kraus operators act as the identity on each left factor,
    V_i = sum_n 1 (x) L_{i,n}, and every component commutes with the matching
    right factor, which is the fixed-point criterion for the right factors:
    a density is fixed by the adjoint action exactly when it commutes with
    all Kraus components.
    """
    if ch.in_dim != ch.out_dim or ch.in_dim != exp.dim:
        raise ValueError("state-preserving analysis needs an endomorphic channel")
    heis_dual = ch.dual()
    for label, state in exp.items():
        dev = frobenius(heis_dual.apply(state.matrix) - state.matrix)
        if dev > 1e-9:
            raise ValueError(
                f"channel does not preserve state {label!r} (deviation {dev:.3e})")
    t_grid = _grid(t_grid)
    dec = s_decomposition(exp, t_grid, seed=seed)
    bs = dec.block_structure

    unitaries, components_by_block = [], []
    worst = 0.0
    for n, (dl, dr) in enumerate(bs.blocks):
        sl = bs.block_slice(n)
        tilde = [dagger(bs.unitary[:, sl]) @ v @ bs.unitary[:, sl] for v in ch.kraus]
        comps = []
        for v in tilde:
            w = v.reshape(dl, dr, dl, dr)
            l_comp = np.einsum("arbs,ab->rs", w, np.eye(dl)) / dl
            comps.append(l_comp)
            worst = max(worst, frobenius(v - np.kron(np.eye(dl), l_comp)))
        unitaries.append(np.eye(dl, dtype=complex))
        components_by_block.append(comps)

    components = [[components_by_block[n][i] for n in range(len(bs.blocks))]
                  for i in range(len(ch.kraus))]
    comm = 0.0
    norm_res = 0.0
    for n, (dl, dr) in enumerate(bs.blocks):
        right = dec.right_factors[n]
        total = np.zeros((dr, dr), dtype=complex)
        for i in range(len(ch.kraus)):
            l_comp = components[i][n]
            comm = max(comm, frobenius(l_comp @ right - right @ l_comp))
            total += l_comp @ dagger(l_comp)
        norm_res = max(norm_res, frobenius(total - np.eye(dr)))

    structure = ChannelStructure(
        in_structure=bs, out_structure=bs, unitaries=unitaries,
        components=components, projection_match=0.0,
        normalization_residual=norm_res, reassembly_choi_distance=0.0,
        identity_blocks=(worst <= tol), right_commutation=comm)
    rebuilt = Channel(structure.reassembled_kraus())
    structure.reassembly_choi_distance = frobenius(
        choi_matrix(rebuilt) - choi_matrix(ch))
    if worst > tol or comm > tol:
        raise DecompositionError(
            f"Kraus family is not of the identity-block form "
            f"(block residual {worst:.3e}, commutation {comm:.3e})",
            residual=max(worst, comm))
    return structure
