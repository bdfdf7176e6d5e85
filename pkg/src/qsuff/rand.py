"""Seeded random matrices, states and channels.

Every routine takes an explicit generator (or seed) so that decompositions
and test suites are reproducible; nothing touches numpy's global state.
"""

from __future__ import annotations

import numpy as np

from .channels import Channel
from .linalg import dagger

DEFAULT_SEED = 0x5EED


def rng(seed=DEFAULT_SEED) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def ginibre(rows: int, cols: int, gen: np.random.Generator) -> np.ndarray:
    return gen.standard_normal((rows, cols)) + 1j * gen.standard_normal((rows, cols))


def random_hermitian(dim: int, gen: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    g = ginibre(dim, dim, gen)
    return scale * (g + dagger(g)) / 2.0


def random_unitary(dim: int, gen: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(ginibre(dim, dim, gen))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(dim: int, gen: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Density matrix from a normalized Wishart sample; full rank by default."""
    rank = dim if rank is None else rank
    g = ginibre(dim, rank, gen)
    rho = g @ dagger(g)
    return rho / np.trace(rho).real


def random_isometry(rows: int, cols: int, gen: np.random.Generator) -> np.ndarray:
    if cols > rows:
        raise ValueError("an isometry needs rows >= cols")
    q, _ = np.linalg.qr(ginibre(rows, cols, gen))
    return q[:, :cols]


def random_cptp_channel(in_dim: int, out_dim: int, gen: np.random.Generator,
                        n_kraus: int | None = None) -> Channel:
    """Trace-preserving channel sampled through a random Stinespring isometry."""
    env = n_kraus if n_kraus is not None else max(2, in_dim)
    v = random_isometry(out_dim * env, in_dim, gen)
    kraus = [v[e * out_dim:(e + 1) * out_dim, :] for e in range(env)]
    return Channel(kraus, trace_preserving=True)


def random_unital_channel(dim: int, gen: np.random.Generator,
                          n_kraus: int | None = None) -> Channel:
    """Unital CP map obtained as the trace dual of a random CPTP channel."""
    return random_cptp_channel(dim, dim, gen, n_kraus=n_kraus).dual()
