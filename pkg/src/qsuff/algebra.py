"""Finite-dimensional matrix *-algebras.

An algebra is stored as an orthonormal Hilbert-Schmidt basis of its linear
span; membership questions reduce to projection residuals.  The block
decomposition exhibits a unitary change of basis under which the algebra
becomes a direct sum of full matrix factors with multiplicities,
A ~ (+)_n  M_{d_n} (x) 1_{m_n}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channels import Channel, left_right_matrix, vec
from .linalg import dagger, frobenius, imaginary_power, mat_fun, partial_trace
from .rand import DEFAULT_SEED, ginibre, rng

RANK_TOL = 1e-9          # relative singular-value cutoff for span ranks
STRUCTURE_TOL = 1e-8     # block-alignment validation
DEFAULT_T_GRID = tuple(0.37 * k for k in range(-8, 9) if k != 0)


def orthonormalize(mats: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal HS basis (as a stack) of the span of the given matrices."""
    mats = np.asarray(mats, dtype=complex)
    if mats.size == 0:
        return mats.reshape(0, *mats.shape[1:])
    k, d, _ = mats.shape
    rows = mats.reshape(k, d * d)
    norms = np.linalg.norm(rows, axis=1)
    keep = norms > 1e-14
    if not np.any(keep):
        return np.zeros((0, d, d), dtype=complex)
    rows = rows[keep] / norms[keep, None]
    _, s, vh = np.linalg.svd(rows, full_matrices=False)
    rank = int(np.sum(s > tol * s[0]))
    return vh[:rank].reshape(rank, d, d)


def null_space(mat: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Columns spanning the (numerical) null space of a stacked condition matrix."""
    _, s, vh = np.linalg.svd(mat, full_matrices=True)
    if s.size == 0:
        return np.eye(mat.shape[1], dtype=complex)
    cut = tol * max(s[0], 1.0)
    rank = int(np.sum(s > cut))
    return dagger(vh)[:, rank:]


@dataclass
class BlockStructure:
    """Unitary and factor data aligning an algebra with its canonical block form.

    In the rotated basis U* a U, block n occupies a contiguous index range of
    size d_n * m_n on which the algebra acts as M_{d_n} (x) 1_{m_n}; p_n is the
    corresponding central projection in the original basis.
    """

    unitary: np.ndarray
    blocks: list[tuple[int, int]]
    block_projections: list[np.ndarray]

    @property
    def offsets(self) -> list[int]:
        out, pos = [], 0
        for d, m in self.blocks:
            out.append(pos)
            pos += d * m
        return out

    def block_slice(self, n: int) -> slice:
        off = self.offsets[n]
        d, m = self.blocks[n]
        return slice(off, off + d * m)

    def rotate(self, x: np.ndarray) -> np.ndarray:
        return dagger(self.unitary) @ x @ self.unitary

    def unrotate(self, x: np.ndarray) -> np.ndarray:
        return self.unitary @ x @ dagger(self.unitary)

    def block_of(self, x: np.ndarray, n: int) -> np.ndarray:
        sl = self.block_slice(n)
        return self.rotate(x)[sl, sl]

    def assemble(self, blocks: list[np.ndarray]) -> np.ndarray:
        """Matrix with the given per-block components, back in the original basis."""
        dim = self.unitary.shape[0]
        out = np.zeros((dim, dim), dtype=complex)
        for n, b in enumerate(blocks):
            sl = self.block_slice(n)
            out[sl, sl] = b
        return self.unrotate(out)


class MatrixStarAlgebra:
    """Unital *-closed subalgebra of the d x d complex matrices."""

    def __init__(self, basis: np.ndarray, ambient_dim: int, validate: bool = True,
                 tol: float = 1e-9):
        self.basis = np.asarray(basis, dtype=complex)
        self.ambient_dim = int(ambient_dim)
        self._structure: BlockStructure | None = None
        if validate:
            errs = self.closure_defects()
            worst = max(errs.values())
            if worst > tol:
                raise ValueError(f"span is not a unital *-algebra: {errs}")
        self.contains_identity = True

    @classmethod
    def from_span(cls, mats, ambient_dim: int, include_identity: bool = True,
                  validate: bool = True, tol: float = 1e-9) -> "MatrixStarAlgebra":
        mats = list(mats)
        if include_identity:
            mats = [np.eye(ambient_dim, dtype=complex)] + mats
        return cls(orthonormalize(np.asarray(mats)), ambient_dim, validate=validate, tol=tol)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    # -- span geometry ------------------------------------------------------

    def coefficients(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("kij,ij->k", self.basis.conj(), x)

    def project(self, x: np.ndarray) -> np.ndarray:
        """HS-orthogonal projection onto the span; for a unital *-algebra this
        is the trace-preserving conditional expectation."""
        return np.einsum("k,kij->ij", self.coefficients(x), self.basis)

    def projection_residual(self, x: np.ndarray) -> float:
        return frobenius(x - self.project(x))

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return self.projection_residual(x) <= tol * max(frobenius(x), 1.0)

    def random_hermitian_element(self, gen: np.random.Generator) -> np.ndarray:
        # the span is *-closed, so the Hermitian part stays inside it
        x = self.random_element(gen)
        return (x + dagger(x)) / 2.0

    def random_element(self, gen: np.random.Generator) -> np.ndarray:
        coeffs = gen.standard_normal(self.dim) + 1j * gen.standard_normal(self.dim)
        return np.einsum("k,kij->ij", coeffs, self.basis)

    def closure_defects(self) -> dict[str, float]:
        """Residuals of the *-algebra axioms on the stored span."""
        d = self.ambient_dim
        errs = {"identity": self.projection_residual(np.eye(d, dtype=complex))}
        errs["adjoint"] = max(self.projection_residual(dagger(b)) for b in self.basis)
        prods = np.einsum("aij,bjk->abik", self.basis, self.basis).reshape(-1, d, d)
        errs["product"] = max(self.projection_residual(p) for p in prods)
        return errs

    def same_span(self, other: "MatrixStarAlgebra", tol: float = 1e-9) -> bool:
        if self.dim != other.dim:
            return False
        a = max(other.projection_residual(b) for b in self.basis)
        b = max(self.projection_residual(b) for b in other.basis)
        return max(a, b) <= tol

    def contains_algebra(self, other: "MatrixStarAlgebra", tol: float = 1e-8) -> bool:
        return max(self.projection_residual(b) for b in other.basis) <= tol

    # -- structure ----------------------------------------------------------

    def block_structure(self, seed=DEFAULT_SEED, tol: float = STRUCTURE_TOL) -> BlockStructure:
        if self._structure is None:
            self._structure = structure_decomposition(self, seed=seed, tol=tol)
        return self._structure


# ---------------------------------------------------------------------------
# Generation, commutants, centers
# ---------------------------------------------------------------------------

def generate_algebra(generators, ambient_dim: int, tol: float = RANK_TOL) -> MatrixStarAlgebra:
    """Smallest unital *-closed algebra containing the generators.

    Seeds the span with the identity, the generators and their adjoints, then
    alternates pairwise products with re-orthonormalization until the span
    dimension stabilizes.
    """
    d = int(ambient_dim)
    seed = [np.eye(d, dtype=complex)]
    for g in generators:
        g = np.asarray(g, dtype=complex)
        if g.shape != (d, d):
            raise ValueError(f"generator of shape {g.shape} does not match ambient dim {d}")
        seed.append(g)
        seed.append(dagger(g))
    basis = orthonormalize(np.asarray(seed), tol)
    while True:
        prods = np.einsum("aij,bjk->abik", basis, basis).reshape(-1, d, d)
        grown = orthonormalize(np.concatenate([basis, prods]), tol)
        if grown.shape[0] == basis.shape[0]:
            return MatrixStarAlgebra(grown, d)
        basis = grown


def relative_commutant(a: MatrixStarAlgebra, within: MatrixStarAlgebra,
                       tol: float = RANK_TOL) -> MatrixStarAlgebra:
    """Elements of ``within`` commuting with every element of ``a``."""
    d = a.ambient_dim
    cols = []
    for w in within.basis:
        cols.append(np.concatenate([vec(w @ b - b @ w) for b in a.basis]))
    system = np.asarray(cols).T
    coeffs = null_space(system, tol)
    mats = np.einsum("kc,kij->cij", coeffs, within.basis)
    return MatrixStarAlgebra.from_span(list(mats), d)


def full_algebra(dim: int) -> MatrixStarAlgebra:
    units = np.zeros((dim * dim, dim, dim), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            units[i * dim + j, i, j] = 1.0
    return MatrixStarAlgebra(units, dim, validate=False)


def commutant(a: MatrixStarAlgebra, tol: float = RANK_TOL) -> MatrixStarAlgebra:
    return relative_commutant(a, full_algebra(a.ambient_dim), tol)


def center(a: MatrixStarAlgebra, tol: float = RANK_TOL) -> MatrixStarAlgebra:
    return relative_commutant(a, a, tol)


def intersect(a: MatrixStarAlgebra, b: MatrixStarAlgebra,
              tol: float = 1e-9) -> MatrixStarAlgebra:
    """Intersection of two unital *-algebra spans (eigenvalue-2 space of P_a + P_b)."""
    d = a.ambient_dim
    pa = np.einsum("kij,klm->ijlm", a.basis, a.basis.conj()).reshape(d * d, d * d)
    pb = np.einsum("kij,klm->ijlm", b.basis, b.basis.conj()).reshape(d * d, d * d)
    w, u = np.linalg.eigh(pa + pb)
    cols = u[:, w > 2.0 - tol]
    mats = [cols[:, k].reshape(d, d) for k in range(cols.shape[1])]
    return MatrixStarAlgebra.from_span(mats, d)


# ---------------------------------------------------------------------------
# Conditional expectation and state restriction
# ---------------------------------------------------------------------------

def conditional_expectation(a: MatrixStarAlgebra, x: np.ndarray) -> np.ndarray:
    """Trace-preserving conditional expectation onto the algebra (HS projection)."""
    return a.project(x)


def restricted_density(a: MatrixStarAlgebra, density: np.ndarray,
                       seed=DEFAULT_SEED) -> np.ndarray:
    """Density of the restricted state with respect to the trace on the algebra.

    Returned embedded in the ambient space: in the block basis it reads
    (+)_n (x_n (x) 1_{m_n}), where x_n is the multiplicity-averaged block of
    the input.  Coincides with the HS projection onto the algebra.
    """
    bs = a.block_structure(seed=seed)
    rotated = bs.rotate(density)
    out = []
    for n, (d, m) in enumerate(bs.blocks):
        sl = bs.block_slice(n)
        x = partial_trace(rotated[sl, sl], [d, m], [0]) / m
        out.append(np.kron(x, np.eye(m, dtype=complex)))
    return bs.assemble(out)


# ---------------------------------------------------------------------------
# Structure decomposition
# ---------------------------------------------------------------------------

def _cluster(eigenvalues: np.ndarray, gap_tol: float) -> list[np.ndarray]:
    """Group sorted eigenvalues into clusters separated by gaps above gap_tol."""
    order = np.argsort(eigenvalues)[::-1]
    w = eigenvalues[order]
    groups, current = [], [order[0]]
    for prev, cur in zip(range(len(w) - 1), range(1, len(w))):
        if w[prev] - w[cur] > gap_tol:
            groups.append(np.asarray(current))
            current = []
        current.append(order[cur])
    groups.append(np.asarray(current))
    return groups


class StructureError(RuntimeError):
    pass


def _factor_units(alg: MatrixStarAlgebra, gen: np.random.Generator,
                  attempts: int = 5) -> np.ndarray:
    """Orthonormal basis realizing a factor M_d (x) 1_m in canonical form.

    Diagonalizes a generic Hermitian element (whose d eigenvalues each carry
    multiplicity m), links the eigenspaces with partial isometries cut from a
    generic algebra element, and returns the resulting product basis as the
    columns of a unitary.
    """
    big = alg.basis.shape[1]
    k = alg.dim
    d = int(round(np.sqrt(k)))
    if d * d != k:
        raise StructureError(f"span dimension {k} is not a perfect square")
    if big % d != 0:
        raise StructureError(f"factor dim {d} does not divide block dim {big}")
    m = big // d
    if d == 1:
        return np.eye(big, dtype=complex)

    last = None
    for _ in range(attempts):
        y = alg.random_hermitian_element(gen)
        w, u = np.linalg.eigh(y)
        spread = max(w[-1] - w[0], 1.0)
        groups = _cluster(w, 1e-6 * spread)
        if len(groups) != d or any(len(g) != m for g in groups):
            last = f"eigenvalue clusters {[len(g) for g in groups]} != {d} x {m}"
            continue
        projections = [u[:, g] @ dagger(u[:, g]) for g in groups]
        g_el = alg.random_element(gen)
        cols = np.zeros((big, big), dtype=complex)
        ok = True
        f_basis = u[:, groups[0]]
        for kk, pk in enumerate(projections):
            if kk == 0:
                e_k1 = projections[0]
            else:
                wmat = pk @ g_el @ projections[0]
                gram = dagger(wmat) @ wmat
                sv = np.linalg.eigvalsh((gram + dagger(gram)) / 2)
                if sv[-1] <= 0 or np.sum(sv > 1e-10 * sv[-1]) != m:
                    ok = False
                    last = "linking element is rank deficient"
                    break
                e_k1 = wmat @ mat_fun(gram, lambda x: x ** -0.5, support_only=True)
            for j in range(m):
                cols[:, kk * m + j] = e_k1 @ f_basis[:, j]
        if not ok:
            continue
        if frobenius(dagger(cols) @ cols - np.eye(big)) > 1e-8:
            last = "assembled basis is not unitary"
            continue
        return cols
    raise StructureError(f"could not align factor after {attempts} attempts: {last}")


def structure_decomposition(a: MatrixStarAlgebra, seed=DEFAULT_SEED,
                            tol: float = STRUCTURE_TOL,
                            attempts: int = 5) -> BlockStructure:
    """Block decomposition A ~ (+)_n M_{d_n} (x) 1_{m_n} with aligning unitary.

    Minimal central projections come from the spectral clusters of a generic
    Hermitian element of the center; inside each central block the factor is
    aligned through a matrix-unit construction.  Degenerate random draws are
    retried with fresh randomness.
    """
    gen = rng(seed)
    d = a.ambient_dim
    z_alg = center(a)
    n_blocks = z_alg.dim

    groups = None
    u = None
    for _ in range(attempts):
        z = z_alg.random_hermitian_element(gen)
        w, u = np.linalg.eigh(z)
        spread = max(w[-1] - w[0], 1.0)
        cand = _cluster(w, 1e-6 * spread)
        if len(cand) == n_blocks:
            groups = cand
            break
    if groups is None:
        raise StructureError(
            f"center spectrum stayed degenerate after {attempts} random draws")

    # deterministic block order: descending size, then first index
    groups.sort(key=lambda g: (-len(g), int(np.min(g))))

    blocks: list[tuple[int, int]] = []
    projections: list[np.ndarray] = []
    unitary_cols: list[np.ndarray] = []
    for g in groups:
        w_iso = u[:, np.sort(g)]
        p = w_iso @ dagger(w_iso)
        projections.append(p)
        compressed = orthonormalize(
            np.einsum("ri,krl,lc->kic", w_iso.conj(), a.basis, w_iso))
        sub = MatrixStarAlgebra(compressed, w_iso.shape[1], validate=False)
        if center(sub).dim != 1:
            raise StructureError("central block is not a factor; clustering failed")
        local = _factor_units(sub, gen, attempts=attempts)
        dn = int(round(np.sqrt(sub.dim)))
        blocks.append((dn, w_iso.shape[1] // dn))
        unitary_cols.append(w_iso @ local)

    unitary = np.concatenate(unitary_cols, axis=1)
    bs = BlockStructure(unitary=unitary, blocks=blocks, block_projections=projections)

    worst = _alignment_residual(a, bs)
    if worst > tol:
        raise StructureError(f"block alignment residual {worst:.3e} exceeds {tol:.1e}")
    return bs


def _alignment_residual(a: MatrixStarAlgebra, bs: BlockStructure) -> float:
    """Largest deviation of a rotated basis element from the block-tensor pattern."""
    worst = 0.0
    for b in a.basis:
        rot = bs.rotate(b)
        rebuilt = np.zeros_like(rot)
        for n, (d, m) in enumerate(bs.blocks):
            sl = bs.block_slice(n)
            x = partial_trace(rot[sl, sl], [d, m], [0]) / m
            rebuilt[sl, sl] = np.kron(x, np.eye(m))
        worst = max(worst, frobenius(rot - rebuilt))
    return worst


# ---------------------------------------------------------------------------
# Channel-derived algebras
# ---------------------------------------------------------------------------

def multiplicative_domain(ch: Channel, tol: float = RANK_TOL) -> MatrixStarAlgebra:
    """Largest subalgebra on which a unital CP map is multiplicative.

    Solved as the joint null space of the linear conditions
    ch(a b_j) = ch(a) ch(b_j) and ch(b_j a) = ch(b_j) ch(a) over an operator
    basis b_j of the domain.
    """
    if not ch.unital:
        raise ValueError("multiplicative domain is defined for unital channels")
    d = ch.in_dim
    s = ch.superoperator()
    eye_in = np.eye(d, dtype=complex)
    conditions = []
    for b in full_algebra(d).basis:
        sb = ch.apply(b)
        conditions.append(s @ left_right_matrix(eye_in, b) -
                          left_right_matrix(np.eye(ch.out_dim, dtype=complex), sb) @ s)
        conditions.append(s @ left_right_matrix(b, eye_in) -
                          left_right_matrix(sb, np.eye(ch.out_dim, dtype=complex)) @ s)
    coeffs = null_space(np.concatenate(conditions, axis=0), tol)
    mats = [coeffs[:, k].reshape(d, d) for k in range(coeffs.shape[1])]
    return MatrixStarAlgebra.from_span(mats, d)


def fixed_point_algebra(ch: Channel, compose_with: Channel | None = None,
                        tol: float = RANK_TOL) -> MatrixStarAlgebra:
    """Fixed points {a : Phi(a) = a} of a unital CP map Phi (optionally
    Phi = compose_with o ch), intersected with the multiplicative domain
    whenever the raw eigenspace fails to close under products."""
    phi = ch if compose_with is None else ch.then(compose_with)
    if phi.in_dim != phi.out_dim:
        raise ValueError("fixed points need matching input and output dimensions")
    if not phi.unital:
        raise ValueError("fixed-point algebra is defined for unital maps")
    d = phi.in_dim
    s = phi.superoperator()
    coeffs = null_space(s - np.eye(d * d), tol)
    mats = [coeffs[:, k].reshape(d, d) for k in range(coeffs.shape[1])]
    try:
        return MatrixStarAlgebra.from_span(mats, d)
    except ValueError:
        dom = multiplicative_domain(phi)
        fixed_span = MatrixStarAlgebra(orthonormalize(
            np.asarray([np.eye(d, dtype=complex)] + mats)), d, validate=False)
        return intersect(fixed_span, dom)


def modular_invariance_check(a: MatrixStarAlgebra, omega: np.ndarray,
                             t_grid=DEFAULT_T_GRID, tol: float = 1e-8) -> tuple[bool, float]:
    """Whether omega^{it} A omega^{-it} stays inside A on the given grid."""
    w = np.linalg.eigvalsh(omega)
    if w[0] <= 1e-12:
        raise ValueError("modular invariance check needs a faithful state")
    worst = 0.0
    for t in t_grid:
        ut = imaginary_power(omega, t)
        for b in a.basis:
            worst = max(worst, a.projection_residual(ut @ b @ dagger(ut)))
    return worst <= tol, worst
