"""Truncated two-mode Fock states and displacement-operator kernels.

Every count probability in this package is built from the Fock-basis
displacement matrix elements ``<i|D(delta)|m>`` and a coefficient matrix
``C[m, n]`` of a two-mode state on the truncated space ``m, n <= d``.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.special import eval_genlaguerre, gammaln

from .exceptions import DomainError, TailMassTooLarge

__all__ = [
    "TwoModeState",
    "TwoModeDensityMatrix",
    "TmsvParams",
    "as_setting",
    "displacement_element",
    "displacement_matrix",
    "displacement_matrix_oracle",
    "suggest_cutoff",
    "two_mode_state",
    "fock_product",
    "tmsv_state",
    "tmsv_tail_mass",
    "tmsv_cutoff",
    "eps_family_state",
    "correlated_state",
]

# log(n!) for n < 512; larger arguments fall back to gammaln
_LOG_FACT = gammaln(np.arange(512) + 1.0)


def _log_fact(n):
    n = int(n)
    return _LOG_FACT[n] if n < _LOG_FACT.size else float(gammaln(n + 1.0))


def as_setting(delta) -> complex:
    """Validate a displacement amplitude and return it as ``complex``."""
    if isinstance(delta, (str, bytes)) or delta is None:
        raise DomainError(f"setting must be a number, got {delta!r}")
    try:
        z = complex(delta)
    except (TypeError, ValueError):
        raise DomainError(f"setting must be a number, got {delta!r}") from None
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise DomainError(f"setting must be finite, got {delta!r}")
    return z


@dataclass(frozen=True)
class TmsvParams:
    """Two-mode squeezed vacuum parameters: gain ``g`` and phase ``phi``."""

    g: float
    phi: float = 0.0

    def __post_init__(self):
        if not (self.g >= 0 and math.isfinite(self.g)):
            raise DomainError(f"gain must be a finite nonnegative number, got {self.g}")
        object.__setattr__(self, "phi", float(self.phi) % (2 * math.pi))


@dataclass(frozen=True, eq=False)
class TwoModeState:
    """Pure state ``sum_mn C[m, n] |m>|n>`` on the truncated space ``m, n <= d``.

    The coefficients are normalised on construction. ``tail_mass`` records
    the probability that was outside the truncated space before
    renormalisation (zero for states that are exactly finite).
    """

    coeffs: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 1:
            raise DomainError(f"coefficients must be a square matrix, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise DomainError("coefficients must be finite")
        norm = np.sqrt(np.sum(np.abs(c) ** 2))
        if norm == 0:
            raise DomainError("coefficients must not all vanish")
        c = c / norm
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "tail_mass", float(self.tail_mass))

    @property
    def cutoff(self) -> int:
        return self.coeffs.shape[0] - 1

    def density_matrix(self) -> "TwoModeDensityMatrix":
        c = self.coeffs
        return TwoModeDensityMatrix(np.einsum("mn,pq->mnpq", c, c.conj()))

    def mean_photons(self):
        """Mean photon numbers ``(<n_a>, <n_b>)``."""
        p = np.abs(self.coeffs) ** 2
        k = np.arange(self.cutoff + 1)
        return float(k @ p.sum(axis=1)), float(k @ p.sum(axis=0))

    def pure_components(self):
        return np.ones(1), self.coeffs[None]


@dataclass(frozen=True, eq=False)
class TwoModeDensityMatrix:
    """Density operator ``rho[m, n, m', n']`` on the truncated two-mode space.

    ``trace_deficit`` is the probability known to be missing from the
    truncated operator (for instance after a channel whose output was
    truncated). The pure-state ensemble used by the counting routines is
    computed once at construction.
    """

    rho: np.ndarray
    trace_deficit: float = 0.0
    _weights: np.ndarray = field(init=False, repr=False)
    _vectors: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        r = np.array(self.rho, dtype=complex)
        if r.ndim != 4 or len(set(r.shape)) != 1:
            raise DomainError(f"rho must have shape (d+1,)*4, got {r.shape}")
        dim = r.shape[0]
        flat = r.reshape(dim * dim, dim * dim)
        if not np.allclose(flat, flat.conj().T, atol=1e-12, rtol=0):
            raise DomainError("rho is not Hermitian")
        flat = 0.5 * (flat + flat.conj().T)
        w, v = np.linalg.eigh(flat)
        if w.min() < -1e-10:
            raise DomainError(f"rho is not positive semidefinite (min eigenvalue {w.min():.3e})")
        keep = w > 1e-15
        vecs = v[:, keep].T.reshape(-1, dim, dim)
        r = flat.reshape(r.shape)
        for a in (r, vecs, w):
            a.setflags(write=False)
        object.__setattr__(self, "rho", r)
        object.__setattr__(self, "trace_deficit", float(self.trace_deficit))
        object.__setattr__(self, "_weights", w[keep])
        object.__setattr__(self, "_vectors", vecs)

    @property
    def cutoff(self) -> int:
        return self.rho.shape[0] - 1

    @property
    def trace(self) -> float:
        dim = self.rho.shape[0]
        return float(np.trace(self.rho.reshape(dim * dim, dim * dim)).real)

    def pure_components(self):
        """Return ``(weights, C_k)`` with ``rho = sum_k w_k |C_k><C_k|``."""
        return self._weights, self._vectors


def displacement_element(i: int, m: int, delta) -> complex:
    """Matrix element ``<i|D(delta)|m>`` from its finite-sum expression.

    Uses ``sqrt(m! i!) exp(-|delta|^2/2) sum_p (-|delta|^2)^p delta^(i-m) /
    (p! (m-p)! (p-m+i)!)`` with ``p`` running from ``max(0, m-i)`` to ``m``.
    The power ``delta^(i-m) |delta|^(2p)`` is written as
    ``delta^(p+i-m) conj(delta)^p`` so no negative powers appear.

    The alternating sum loses precision for large ``m`` and ``|delta|``
    (beyond roughly ``m > 30`` at ``|delta| ~ 3``); use
    :func:`displacement_matrix` for batched, high-index work.
    """
    i, m = int(i), int(m)
    if i < 0 or m < 0:
        raise DomainError("photon numbers must be nonnegative")
    delta = as_setting(delta)
    x = abs(delta) ** 2
    if x == 0.0:
        return complex(i == m)
    log_abs = math.log(abs(delta))
    phase = delta / abs(delta)
    head = 0.5 * (_log_fact(m) + _log_fact(i)) - 0.5 * x
    total = 0j
    for p in range(max(0, m - i), m + 1):
        k = p + i - m
        log_mag = head - _log_fact(p) - _log_fact(m - p) - _log_fact(k) + (k + p) * log_abs
        sign = -1.0 if p % 2 else 1.0
        total += sign * math.exp(log_mag) * phase ** (k - p)
    return complex(total)


def displacement_matrix(cutoff: int, delta, cols: int | None = None) -> np.ndarray:
    """Matrix ``D[i, m] = <i|D(delta)|m>`` for ``i <= cutoff``, ``m <= cols``.

    The finite sum over ``p`` equals a generalised Laguerre polynomial, which
    is evaluated with its three-term recurrence (scipy) while the prefactors
    are kept in log form. This is numerically stable for indices in the
    hundreds. ``cols`` defaults to ``cutoff`` (square matrix).
    """
    cutoff = int(cutoff)
    cols = cutoff if cols is None else int(cols)
    if cutoff < 0 or cols < 0:
        raise DomainError("cutoff must be nonnegative")
    delta = as_setting(delta)
    x = abs(delta) ** 2
    if x == 0.0:
        return np.eye(cutoff + 1, cols + 1, dtype=complex)
    lo, k, half_lf, upper = _index_grids(cutoff, cols)
    log_mag = half_lf + k * math.log(abs(delta)) - 0.5 * x
    # i >= m carries delta^k, i < m carries (-conj delta)^k
    unit = delta / abs(delta)
    base = np.where(upper, -unit.conjugate(), unit)
    return np.exp(log_mag) * base**k * eval_genlaguerre(lo, k, x)


@lru_cache(maxsize=256)
def _index_grids(cutoff: int, cols: int):
    """Delta-independent pieces of :func:`displacement_matrix` for one shape."""
    i = np.arange(cutoff + 1)[:, None]
    m = np.arange(cols + 1)[None, :]
    lo = np.minimum(i, m)
    k = np.abs(i - m)
    lf = gammaln(np.arange(max(cutoff, cols) + 1) + 1.0)
    half_lf = 0.5 * (lf[lo] - lf[np.maximum(i, m)])
    out = (lo, k, half_lf, i < m)
    for a in out:
        a.flags.writeable = False
    return out


def displacement_matrix_oracle(cutoff: int, delta, work_cutoff: int | None = None) -> np.ndarray:
    """``exp(delta a^dag - conj(delta) a)`` by dense matrix exponentiation.

    The exponential is taken on a larger space of size ``work_cutoff + 1``
    (default ``cutoff``) and the leading ``(cutoff+1)`` block is returned.
    Intended for verification only.
    """
    cutoff = int(cutoff)
    work = cutoff if work_cutoff is None else max(int(work_cutoff), cutoff)
    delta = as_setting(delta)
    a = np.diag(np.sqrt(np.arange(1, work + 1.0)), k=1).astype(complex)
    gen = delta * a.conj().T - np.conj(delta) * a
    return expm(gen)[: cutoff + 1, : cutoff + 1]


def suggest_cutoff(state_cutoff: int, delta=0.0) -> int:
    """Output cutoff large enough that a displaced state's tail is below ~1e-10."""
    n = math.ceil(abs(complex(delta)) ** 2)
    return int(state_cutoff + n + math.ceil(10 * math.sqrt(n + 1)) + 20)


def two_mode_state(coeffs, tail_mass: float = 0.0) -> TwoModeState:
    """Build a normalised :class:`TwoModeState`; a square zero-padding is applied."""
    c = np.atleast_2d(np.asarray(coeffs, dtype=complex))
    dim = max(c.shape)
    padded = np.zeros((dim, dim), dtype=complex)
    padded[: c.shape[0], : c.shape[1]] = c
    return TwoModeState(padded, tail_mass)


def fock_product(m: int, n: int) -> TwoModeState:
    """The product Fock state ``|m>|n>``."""
    c = np.zeros((max(m, n) + 1,) * 2, dtype=complex)
    c[m, n] = 1.0
    return TwoModeState(c)


def correlated_state(diag) -> TwoModeState:
    """Perfectly photon-number correlated state ``sum_n c_n |n>|n>``."""
    return TwoModeState(np.diag(np.asarray(diag, dtype=complex)))


def tmsv_tail_mass(g: float, cutoff: int) -> float:
    """Probability of the two-mode squeezed vacuum above ``cutoff`` photons per mode."""
    return math.tanh(g) ** (2 * (cutoff + 1))


def tmsv_state(params: TmsvParams, cutoff: int, tol: float = 1e-10) -> TwoModeState:
    """Two-mode squeezed vacuum truncated at ``cutoff``.

    ``C[n, n] = (-exp(i phi) tanh g)^n / cosh g``; the state is renormalised
    and the discarded tail ``tanh(g)^(2(cutoff+1))`` is kept in
    ``tail_mass``.

    Raises
    ------
    TailMassTooLarge
        If the discarded tail exceeds ``tol``.
    """
    cutoff = int(cutoff)
    if cutoff < 0:
        raise DomainError("cutoff must be nonnegative")
    tail = tmsv_tail_mass(params.g, cutoff)
    if tail > tol:
        raise TailMassTooLarge(tail, tol, f"TMSV g={params.g} at cutoff {cutoff}")
    ratio = -np.exp(1j * params.phi) * math.tanh(params.g)
    diag = ratio ** np.arange(cutoff + 1) / math.cosh(params.g)
    return TwoModeState(np.diag(diag), tail_mass=tail)


def tmsv_cutoff(g: float, tol: float = 1e-10) -> int:
    """Smallest cutoff whose TMSV tail mass is at most ``tol``."""
    t = math.tanh(g)
    if t == 0.0:
        return 0
    return max(0, math.ceil(math.log(tol) / (2 * math.log(t))) - 1)


def eps_family_state(eps: float) -> TwoModeState:
    """``sqrt(1-eps)|00> + sqrt(eps)|11>`` for ``0 <= eps <= 1``."""
    eps = float(eps)
    if not 0.0 <= eps <= 1.0:
        raise DomainError(f"eps must lie in [0, 1], got {eps}")
    return TwoModeState(np.diag([math.sqrt(1.0 - eps), math.sqrt(eps)]))
