"""Strong subadditivity of von Neumann entropy on tripartite systems.

The entropy gap S(AB) + S(BC) - S(ABC) - S(B) is nonnegative; it vanishes
exactly when the middle system splits as H_B = (+)_n H_B^L (x) H_B^R with the
state a mixture of products across the split.  The detector recovers that
split from the algebra of B-operators whose modular evolution under the BC
marginal factorizes through the B marginal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import (DEFAULT_T_GRID, BlockStructure, MatrixStarAlgebra,
                      null_space, structure_decomposition)
from .channels import left_right_matrix
from .divergences import relative_entropy, von_neumann_entropy
from .linalg import (dagger, frobenius, imaginary_power, partial_trace,
                     spectral, support_mask)
from .rand import DEFAULT_SEED
from .states import DensityMatrix

GAP_TOL = 1e-7
RECONSTRUCTION_TOL = 1e-7


@dataclass
class TripartiteState:
    """State on H_A (x) H_B (x) H_C with cached marginals."""

    density: DensityMatrix
    dims: tuple[int, int, int]

    def __post_init__(self):
        da, db, dc = self.dims
        if da * db * dc != self.density.dim:
            raise ValueError(f"dims {self.dims} do not match dimension {self.density.dim}")

    def marginal(self, keep: str) -> np.ndarray:
        index = {"A": 0, "B": 1, "C": 2}
        return partial_trace(self.density.matrix, list(self.dims),
                             [index[c] for c in keep])


@dataclass
class SSAGap:
    entropy_gap: float
    relative_entropy_gap: float
    formulation_mismatch: float

    @property
    def value(self) -> float:
        return self.entropy_gap


def ssa_gap(st: TripartiteState) -> SSAGap:
    """Both formulations of the strong-subadditivity slack.

    The entropy form S(AB) + S(BC) - S(ABC) - S(B) and the relative-entropy
    form S(w_ABC || w_A (x) w_BC) - S(w_AB || w_A (x) w_B) coincide whenever
    all terms are finite; the mismatch between the two is returned for
    auditing.
    """
    s_abc = von_neumann_entropy(st.density.matrix)
    s_b = von_neumann_entropy(st.marginal("B"))
    s_ab = von_neumann_entropy(st.marginal("AB"))
    s_bc = von_neumann_entropy(st.marginal("BC"))
    entropy_gap = s_ab + s_bc - s_abc - s_b

    w_a = st.marginal("A")
    big = relative_entropy(st.density.matrix, np.kron(w_a, st.marginal("BC")))
    small = relative_entropy(st.marginal("AB"), np.kron(w_a, st.marginal("B")))
    if np.isinf(big) or np.isinf(small):
        rel_gap = float("inf")
        mismatch = float("nan")
    else:
        rel_gap = big - small
        mismatch = abs(entropy_gap - rel_gap)
    return SSAGap(entropy_gap=entropy_gap, relative_entropy_gap=rel_gap,
                  formulation_mismatch=mismatch)


@dataclass
class SSAStructure:
    """Split of H_B certifying equality in strong subadditivity.

    In the rotated B basis, block n is H_B^L(n) (x) H_B^R(n); the state is
    sum_n w_n D_n^L (x) D_n^R with D_n^L on H_A (x) H_B^L(n) and D_n^R on
    H_B^R(n) (x) H_C.
    """

    b_structure: BlockStructure
    weights: np.ndarray
    left_states: list[np.ndarray]
    right_states: list[np.ndarray]
    dims: tuple[int, int, int]
    reconstruction_error: float

    @property
    def b_blocks(self) -> list[tuple[int, int]]:
        return self.b_structure.blocks

    def reconstruct(self) -> np.ndarray:
        """Assemble the state back in the original A (x) B (x) C basis."""
        da, db, dc = self.dims
        out = np.zeros((da * db * dc, da * db * dc), dtype=complex)
        u_b = np.kron(np.kron(np.eye(da), self.b_structure.unitary), np.eye(dc))
        offsets = self.b_structure.offsets
        for n, (dl, dr) in enumerate(self.b_blocks):
            if self.weights[n] <= 0.0:
                continue
            # embed D^L (x) D^R, factors ordered (A, BL, BR, C), into the block
            term = self.weights[n] * np.kron(self.left_states[n], self.right_states[n])
            tensor = term.reshape(da, dl, dr, dc, da, dl, dr, dc)
            off = offsets[n]
            for b_row in range(dl * dr):
                for b_col in range(dl * dr):
                    br_l, br_r = divmod(b_row, dr)
                    bc_l, bc_r = divmod(b_col, dr)
                    block = tensor[:, br_l, br_r, :, :, bc_l, bc_r, :]
                    rows = np.arange(da)[:, None] * db * dc + (off + b_row) * dc + np.arange(dc)[None, :]
                    cols = np.arange(da)[:, None] * db * dc + (off + b_col) * dc + np.arange(dc)[None, :]
                    out[rows.reshape(-1, 1), cols.reshape(1, -1)] += block.reshape(
                        da * dc, da * dc)
        return u_b @ out @ dagger(u_b)


class NotAnEqualityCase(RuntimeError):
    def __init__(self, message: str, gap: float):
        super().__init__(message)
        self.gap = gap


def _b_factorizing_algebra(st: TripartiteState, t_grid) -> MatrixStarAlgebra:
    """Operators b on H_B with sigma_t^{BC}(b (x) 1_C) = sigma_t^{B}(b) (x) 1_C."""
    da, db, dc = st.dims
    w_bc = st.marginal("BC")
    w_b = st.marginal("B")
    conditions = []
    eye_c = np.eye(dc, dtype=complex)
    embed = np.zeros((db * dc * db * dc, db * db), dtype=complex)
    for i in range(db):
        for j in range(db):
            e = np.zeros((db, db), dtype=complex)
            e[i, j] = 1.0
            embed[:, i * db + j] = np.kron(e, eye_c).reshape(-1)
    for t in t_grid:
        u_bc = imaginary_power(w_bc, t)
        u_b = imaginary_power(w_b, t)
        lhs = left_right_matrix(u_bc, dagger(u_bc)) @ embed
        rhs = embed @ left_right_matrix(u_b, dagger(u_b))
        conditions.append(lhs - rhs)
    coeffs = null_space(np.concatenate(conditions, axis=0))
    mats = [coeffs[:, k].reshape(db, db) for k in range(coeffs.shape[1])]
    return MatrixStarAlgebra.from_span(mats, db)


def _pure_state_structure(st: TripartiteState, tol: float) -> SSAStructure:
    """Equality structure for a pure global state.

    Here strong subadditivity reduces to subadditivity for the AC marginal,
    so equality means w_AC = w_A (x) w_C; the split of H_B is read off from
    the product purification.
    """
    da, db, dc = st.dims
    w_ac = st.marginal("AC")
    w_a = st.marginal("A")
    w_c = st.marginal("C")
    if frobenius(w_ac - np.kron(w_a, w_c)) > 1e-7:
        raise NotAnEqualityCase(
            "pure state with correlated AC marginal; subadditivity is strict",
            ssa_gap(st).value)
    vals, vecs = spectral(st.density.matrix)
    psi = vecs[:, 0].reshape(da, db, dc)

    wa_vals, wa_vecs = spectral(w_a)
    wc_vals, wc_vecs = spectral(w_c)
    mask_a = support_mask(wa_vals)
    mask_c = support_mask(wc_vals)
    ra, rc = int(np.sum(mask_a)), int(np.sum(mask_c))
    if ra * rc > db:
        raise NotAnEqualityCase("B system too small to carry the purification",
                                ssa_gap(st).value)
    # b_ij = <alpha_i| (x) 1_B (x) <gamma_j| psi / sqrt(lambda_i mu_j)
    b_cols = np.zeros((db, ra * rc), dtype=complex)
    for i in range(ra):
        for j in range(rc):
            amp = np.einsum("a,abc,c->b", wa_vecs[:, i].conj(), psi, wc_vecs[:, j].conj())
            b_cols[:, i * rc + j] = amp / np.sqrt(wa_vals[i] * wc_vals[j])
    # complete to a unitary on H_B
    q, _ = np.linalg.qr(np.concatenate(
        [b_cols, np.eye(db, dtype=complex)], axis=1))
    u_b = q[:, :db]
    u_b[:, :ra * rc] = b_cols

    psi_l = (wa_vecs[:, :ra] * np.sqrt(wa_vals[:ra])).reshape(-1)
    left = np.outer(psi_l, psi_l.conj())
    psi_r = (np.sqrt(wc_vals[:rc])[:, None] * wc_vecs[:, :rc].T).reshape(-1)
    right = np.outer(psi_r, psi_r.conj())

    blocks = [(ra, rc)]
    weights = [1.0]
    if ra * rc < db:
        blocks.append((1, db - ra * rc))
        weights.append(0.0)
    structure = BlockStructure(unitary=u_b, blocks=blocks, block_projections=[
        u_b[:, :ra * rc] @ dagger(u_b[:, :ra * rc])] + (
        [u_b[:, ra * rc:] @ dagger(u_b[:, ra * rc:])] if ra * rc < db else []))
    left_states = [left] + ([np.eye(da, dtype=complex) / da] if ra * rc < db else [])
    right_states = [right] + ([np.eye((db - ra * rc) * dc, dtype=complex)
                               / ((db - ra * rc) * dc)] if ra * rc < db else [])
    result = SSAStructure(b_structure=structure, weights=np.asarray(weights),
                          left_states=left_states, right_states=right_states,
                          dims=st.dims, reconstruction_error=0.0)
    result.reconstruction_error = frobenius(result.reconstruct() - st.density.matrix)
    if result.reconstruction_error > tol:
        raise NotAnEqualityCase(
            f"purification split failed to reconstruct ({result.reconstruction_error:.3e})",
            ssa_gap(st).value)
    return result


def ssa_equality_structure(st: TripartiteState, t_grid=None, seed=DEFAULT_SEED,
                           gap_tol: float = GAP_TOL,
                           tol: float = RECONSTRUCTION_TOL) -> SSAStructure:
    """Recover the product split of H_B behind an equality instance.

    Requires the global state to be faithful (a pure global state is handled
    by a dedicated subadditivity path; other rank-deficient states must be
    compressed by the caller).  Raises NotAnEqualityCase when the gap is
    above tolerance.
    """
    t_grid = tuple(t_grid) if t_grid is not None else DEFAULT_T_GRID
    gap = ssa_gap(st)
    if not st.density.is_faithful():
        if st.density.rank() == 1:
            return _pure_state_structure(st, tol)
        raise ValueError("equality detector needs a faithful state (or a pure "
                         "one); compress the experiment first")
    if gap.value > gap_tol:
        raise NotAnEqualityCase(
            f"strong subadditivity is strict (gap {gap.value:.3e})", gap.value)

    da, db, dc = st.dims
    n_b = _b_factorizing_algebra(st, t_grid)
    bs = structure_decomposition(n_b, seed=seed)

    rotated = np.kron(np.kron(np.eye(da), dagger(bs.unitary)), np.eye(dc)) \
        @ st.density.matrix \
        @ np.kron(np.kron(np.eye(da), bs.unitary), np.eye(dc))

    w_b = st.marginal("B")
    weights = []
    left_states = []
    right_states = []
    offsets = bs.offsets
    for n, (dl, dr) in enumerate(bs.blocks):
        p_b = np.zeros((db, db), dtype=complex)
        sl = bs.block_slice(n)
        p_b[sl, sl] = np.eye(dl * dr)
        w_n = float(np.trace(dagger(bs.unitary) @ w_b @ bs.unitary @ p_b).real)
        weights.append(max(w_n, 0.0))
        if w_n <= 1e-12:
            left_states.append(np.eye(da * dl, dtype=complex) / (da * dl))
            right_states.append(np.eye(dr * dc, dtype=complex) / (dr * dc))
            continue
        # extract the block of the rotated global state on A (x) (L,R) (x) C
        off = offsets[n]
        idx = (np.arange(da)[:, None, None] * db * dc
               + (off + np.arange(dl * dr))[None, :, None] * dc
               + np.arange(dc)[None, None, :]).reshape(-1)
        blk = rotated[np.ix_(idx, idx)] / w_n
        left = partial_trace(blk, [da, dl, dr, dc], [0, 1])
        right = partial_trace(blk, [da, dl, dr, dc], [2, 3])
        left_states.append(left)
        right_states.append(right)

    result = SSAStructure(b_structure=bs, weights=np.asarray(weights),
                          left_states=left_states, right_states=right_states,
                          dims=st.dims, reconstruction_error=0.0)
    result.reconstruction_error = frobenius(result.reconstruct() - st.density.matrix)
    if result.reconstruction_error > tol:
        raise NotAnEqualityCase(
            f"recovered split does not reconstruct the state "
            f"({result.reconstruction_error:.3e}); equality structure absent",
            gap.value)
    return result


def build_ssa_equality_state(components, dims: tuple[int, int, int],
                             b_unitary: np.ndarray | None = None) -> TripartiteState:
    """Assemble sum_n w_n D_n^L (x) D_n^R across a split of H_B.

    ``components`` is a list of (weight, left, right) with left on
    H_A (x) H_B^L(n) and right on H_B^R(n) (x) H_C; the block dimensions are
    inferred and must tile d_B.  An optional unitary mixes the split into a
    generic B basis.
    """
    da, db, dc = dims
    blocks = []
    weights = []
    lefts, rights = [], []
    for w, left, right in components:
        left = np.asarray(left, dtype=complex)
        right = np.asarray(right, dtype=complex)
        dl = left.shape[0] // da
        dr = right.shape[0] // dc
        if left.shape[0] != da * dl or right.shape[0] != dr * dc:
            raise ValueError("component dimensions do not factor through A and C")
        blocks.append((dl, dr))
        weights.append(float(w))
        lefts.append(left)
        rights.append(right)
    if sum(dl * dr for dl, dr in blocks) != db:
        raise ValueError(f"blocks {blocks} do not tile d_B = {db}")
    if abs(sum(weights) - 1.0) > 1e-10 or any(w < 0 for w in weights):
        raise ValueError("weights must be nonnegative and sum to one")
    unitary = np.eye(db, dtype=complex) if b_unitary is None else np.asarray(b_unitary)

    offsets = []
    pos = 0
    projections = []
    for dl, dr in blocks:
        offsets.append(pos)
        p = np.zeros((db, db), dtype=complex)
        p[pos:pos + dl * dr, pos:pos + dl * dr] = np.eye(dl * dr)
        projections.append(unitary @ p @ dagger(unitary))
        pos += dl * dr

    structure = SSAStructure(
        b_structure=BlockStructure(unitary=unitary, blocks=blocks,
                                   block_projections=projections),
        weights=np.asarray(weights), left_states=lefts, right_states=rights,
        dims=dims, reconstruction_error=0.0)
    return TripartiteState(DensityMatrix(structure.reconstruct()), dims)
