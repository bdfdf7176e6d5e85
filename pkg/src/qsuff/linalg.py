"""Dense Hermitian matrix calculus used by everything else.

All operators are plain complex numpy arrays.  Rank and support decisions
use a relative eigenvalue cutoff so that nearly-singular densities behave
like their exact-arithmetic idealizations.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np
import scipy.integrate
import scipy.linalg

# Default tolerances; every function takes them as keyword overrides.
SUPPORT_CUTOFF = 1e-10   # relative to the largest eigenvalue
HERMITIAN_TOL = 1e-10    # relative to the Frobenius norm
SPECTRAL_TOL = 1e-9


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(a.T)


def frobenius(a: np.ndarray) -> float:
    return float(np.linalg.norm(a))


def herm_part(a: np.ndarray) -> np.ndarray:
    return (a + dagger(a)) / 2.0


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    scale = max(frobenius(a), 1.0)
    return frobenius(a - dagger(a)) <= tol * scale


def require_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    if not is_hermitian(a, tol):
        dev = frobenius(a - dagger(a))
        raise ValueError(f"{name} is not Hermitian (deviation {dev:.3e})")
    return a


class SpectralData(NamedTuple):
    """Eigenvalues in descending order and the matching unitary of eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ dagger(self.eigenvectors)


def spectral(a: np.ndarray, tol: float = HERMITIAN_TOL) -> SpectralData:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending."""
    a = require_hermitian(a, tol)
    w, u = np.linalg.eigh(herm_part(a))
    return SpectralData(w[::-1].copy(), u[:, ::-1].copy())


def support_mask(eigenvalues: np.ndarray, cutoff: float = SUPPORT_CUTOFF) -> np.ndarray:
    top = float(np.max(eigenvalues, initial=0.0))
    if top <= 0.0:
        return np.zeros_like(eigenvalues, dtype=bool)
    return eigenvalues > cutoff * top


def mat_fun(a: np.ndarray, f: Callable[[np.ndarray], np.ndarray],
            support_only: bool = False, cutoff: float = SUPPORT_CUTOFF) -> np.ndarray:
    """Apply a scalar function to a Hermitian matrix through its spectrum.

    With ``support_only`` the eigenvalues below ``cutoff`` times the largest
    one are mapped to zero instead of being passed to ``f``.
    """
    w, u = spectral(a)
    with np.errstate(all="ignore"):
        if support_only:
            mask = support_mask(w, cutoff)
            vals = np.zeros(len(w), dtype=complex)
            if np.any(mask):
                vals[mask] = f(w[mask])
        else:
            vals = np.asarray(f(w), dtype=complex)
    if not np.all(np.isfinite(vals)):
        raise ValueError("scalar function undefined on part of the spectrum")
    return (u * vals) @ dagger(u)


def require_psd(d: np.ndarray, tol: float = 1e-10, name: str = "matrix") -> np.ndarray:
    d = require_hermitian(d, name=name)
    w = np.linalg.eigvalsh(herm_part(d))
    scale = max(float(w[-1]), 1.0)
    if w[0] < -tol * scale:
        raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {w[0]:.3e})")
    return d


def support_projection(d: np.ndarray, cutoff: float = SUPPORT_CUTOFF) -> np.ndarray:
    """Orthogonal projection onto the range of a PSD matrix."""
    d = require_psd(d)
    w, u = spectral(d)
    mask = support_mask(w, cutoff)
    us = u[:, mask]
    return us @ dagger(us)


def pinv_on_support(d: np.ndarray, cutoff: float = SUPPORT_CUTOFF) -> np.ndarray:
    """Inverse on the support of a PSD matrix, zero on its kernel."""
    require_psd(d)
    return mat_fun(d, lambda x: 1.0 / x, support_only=True, cutoff=cutoff)


def psd_power(d: np.ndarray, p: float, cutoff: float = SUPPORT_CUTOFF) -> np.ndarray:
    """d**p on the support (negative powers use the generalized inverse)."""
    require_psd(d)
    return mat_fun(d, lambda x: x ** p, support_only=True, cutoff=cutoff)


def imaginary_power(d: np.ndarray, t: float, cutoff: float = SUPPORT_CUTOFF) -> np.ndarray:
    """d**(it) computed on the support; kernel eigenvalues map to zero.

    For t = 0 this returns the support projection, and for faithful d the
    result is unitary with group law d**(it) d**(is) = d**(i(t+s)).
    """
    require_psd(d)
    return mat_fun(d, lambda x: np.exp(1j * t * np.log(x)), support_only=True, cutoff=cutoff)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(a, b)


def partial_trace(a: np.ndarray, dims: list[int], keep) -> np.ndarray:
    """Trace out the tensor factors not listed in ``keep``.

    ``dims`` are the factor dimensions (their product must match the matrix
    size); ``keep`` is an iterable of factor indices that survive, in their
    original order.
    """
    dims = [int(d) for d in dims]
    n = len(dims)
    total = int(np.prod(dims))
    a = np.asarray(a, dtype=complex)
    if a.shape != (total, total):
        raise ValueError(f"matrix of shape {a.shape} does not match factor dims {dims}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= n for k in keep):
        raise ValueError(f"keep indices {keep} out of range for {n} factors")
    t = a.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    if 2 * n > len(letters):
        raise ValueError("too many tensor factors")
    row = list(letters[:n])
    col = [letters[n + i] if i in keep else letters[i] for i in range(n)]
    out = [row[i] for i in keep] + [col[i] for i in keep]
    result = np.einsum("".join(row + col) + "->" + "".join(out), t)
    kept_dim = int(np.prod([dims[k] for k in keep])) if keep else 1
    return result.reshape(kept_dim, kept_dim)


def frechet_exp(h: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Directional derivative of the matrix exponential at h along e.

    Read off from the off-diagonal block of exp([[h, e], [0, h]]); a single
    expm call, exact up to the accuracy of expm itself.
    """
    h = np.asarray(h, dtype=complex)
    e = np.asarray(e, dtype=complex)
    d = h.shape[0]
    block = np.zeros((2 * d, 2 * d), dtype=complex)
    block[:d, :d] = h
    block[d:, d:] = h
    block[:d, d:] = e
    return scipy.linalg.expm(block)[:d, d:]


def resolvent_quadrature_check(d: np.ndarray, which: str, cutoff: float = SUPPORT_CUTOFF,
                               quad_tol: float = 1e-12) -> float:
    """Deviation between a resolvent-integral evaluation of sqrt/log and the
    spectral one.

    The square root uses x**0.5 = (1/pi) * int_0^inf t**-0.5 - t**0.5/(x+t) dt,
    algebraically t**-0.5 * x/(x+t); substituting t = s**2 removes the endpoint
    singularity before the interval is compactified with s = (1-u)/u.  The
    logarithm uses log x = int_0^inf 1/(1+t) - 1/(x+t) dt with the same
    compactification.  The integrand is evaluated through linear solves only,
    so the comparison against the eigendecomposition route is independent.
    """
    d = require_psd(d)
    n = d.shape[0]
    eye = np.eye(n)
    if which == "sqrt":
        reference = psd_power(d, 0.5, cutoff)

        def integrand(u: float) -> np.ndarray:
            s = (1.0 - u) / u
            return (2.0 / np.pi) * np.linalg.solve(d + s * s * eye, d) / (u * u)

    elif which == "log":
        w = np.linalg.eigvalsh(herm_part(d))
        if w[0] <= 0.0 or w[0] <= cutoff * w[-1]:
            raise ValueError("log quadrature requires a strictly positive matrix")
        reference = mat_fun(d, np.log)

        def integrand(u: float) -> np.ndarray:
            t = (1.0 - u) / u
            return (eye / (1.0 + t) - np.linalg.inv(d + t * eye)) / (u * u)

    else:
        raise ValueError(f"unknown function {which!r}, expected 'sqrt' or 'log'")

    result = scipy.integrate.quad_vec(integrand, 0.0, 1.0, epsabs=quad_tol,
                                      epsrel=quad_tol, limit=400)
    value, error_estimate = result[0], result[1]
    if not np.isfinite(error_estimate) or error_estimate > 1e-6:
        raise RuntimeError(
            f"quadrature did not converge (error estimate {error_estimate:.3e})")
    return frobenius(value - reference)
