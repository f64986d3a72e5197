"""Closed-form results in the weak-drive (Heitler) regime.

Rates are in units of ``gamma_sigma`` unless passed explicitly.  ``f_prime``
arguments of the correlation formulas are the mixing ratio seen by the
detector (``HomodyneConfig.mixing``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import comb

from .model import SystemParams, HomodyneConfig


class DivergenceError(ValueError):
    """Evaluated at the mixing ratio where every homodyne g^(N) diverges."""


@dataclass(frozen=True)
class Decomposition:
    """``g2 = base + i0 + i1 + i2`` under the split ``s = <s> + d``."""

    i0: float
    i1: float
    i2: float
    g2: float
    base: float = 1.0

    @property
    def total(self) -> float:
        return self.base + self.i0 + self.i1 + self.i2


@dataclass(frozen=True)
class CompensationPair:
    f_minus: float
    f_plus: float


def tls_steady_state(omega_sigma: float, gamma_sigma: float = 1.0) -> tuple[complex, float]:
    """Mean field and population of the driven two-level emitter."""
    den = gamma_sigma ** 2 + 8 * omega_sigma ** 2
    alpha = -2j * omega_sigma * gamma_sigma / den
    n = 4 * omega_sigma ** 2 / den
    return alpha, n


def gN_filtered(N: int, gamma_sigma: float, Gamma: float) -> float:
    """Zero-delay g^(N) of resonance fluorescence seen through a filter of width Gamma."""
    if N < 2:
        raise ValueError("N must be at least 2")
    out = 1.0
    for k in range(1, N):
        out *= gamma_sigma ** 2 / (gamma_sigma + k * Gamma) ** 2
    return out


def _bracket(N: int, gamma_sigma: float, Gamma: float, f_prime: float) -> float:
    """Signed numerator sum of the homodyne g^(N); its square sets the zeros."""
    x = Gamma / gamma_sigma
    total = 0.0
    for k in range(N + 1):
        prod = 1.0
        for lam in range(1, N - k + 1):
            prod *= 1 + (N - lam) * x
        total += comb(N, k, exact=True) * 2 ** k * (-f_prime) ** (N - k) * prod
    return total


def gN_homodyne(N: int, gamma_sigma: float, Gamma: float, f_prime: float) -> float:
    """Zero-delay g^(N) of filtered fluorescence mixed with the attenuated laser."""
    if N < 2:
        raise ValueError("N must be at least 2")
    if f_prime == 2:
        raise DivergenceError("homodyne g^(N) diverges at mixing ratio 2")
    b = _bracket(N, gamma_sigma, Gamma, f_prime) / (2 - f_prime) ** N
    return gN_filtered(N, gamma_sigma, Gamma) * b * b


def g2_homodyne(gamma_sigma: float, Gamma: float, f_prime: float) -> float:
    if f_prime == 2:
        raise DivergenceError("homodyne g^(2) diverges at mixing ratio 2")
    s = gamma_sigma + Gamma
    num = 4 * gamma_sigma - (4 - f_prime) * f_prime * s
    return (num / ((2 - f_prime) ** 2 * s)) ** 2


def compensation_condition(gamma_sigma: float, Gamma: float) -> CompensationPair:
    """The two mixing ratios that cancel the homodyne g^(2)."""
    if Gamma < 0:
        raise ValueError("Gamma must be non-negative")
    root = math.sqrt(Gamma / (Gamma + gamma_sigma))
    return CompensationPair(2 * (1 - root), 2 * (1 + root))


def _zeros(N: int, gamma_sigma: float, Gamma: float) -> list[float]:
    x = Gamma / gamma_sigma
    coeffs = np.zeros(N + 1)
    for k in range(N + 1):
        prod = 1.0
        for lam in range(1, N - k + 1):
            prod *= 1 + (N - lam) * x
        coeffs[N - k] += comb(N, k, exact=True) * 2 ** k * (-1) ** (N - k) * prod
    roots = np.roots(coeffs[::-1])  # highest power first
    return sorted(r.real for r in roots if abs(r.imag) < 1e-9)


def lower_zero(N: int, gamma_sigma: float, Gamma: float) -> float:
    """Largest mixing ratio below 2 that cancels g^(N) (``F'_{N,-}``)."""
    if N == 2:
        return compensation_condition(gamma_sigma, Gamma).f_minus
    below = [r for r in _zeros(N, gamma_sigma, Gamma) if r < 2]
    if not below:
        raise ValueError(f"g^({N}) has no zero below the divergence for Gamma={Gamma}")
    return float(below[-1])


def upper_zero(N: int, gamma_sigma: float, Gamma: float) -> float:
    """Smallest mixing ratio above 2 that cancels g^(N) (``F'_{N,+}``)."""
    if N == 2:
        return compensation_condition(gamma_sigma, Gamma).f_plus
    above = [r for r in _zeros(N, gamma_sigma, Gamma) if r > 2]
    if not above:
        raise ValueError(f"g^({N}) has no zero above the divergence for Gamma={Gamma}")
    return float(above[0])


def joint_zero_filter(N: int, N_prime: int, gamma_sigma: float = 1.0, branch: str = "both",
                      lo: float = 1e-4, hi: float = 10.0, points: int = 2000) -> list[float]:
    """Filter widths where a zero of g^(N) is also a zero of g^(N').

    ``branch`` selects which zero of g^(N) the mixing ratio is tuned to:
    ``"minus"`` (below 2), ``"plus"`` (above 2) or ``"both"``.  Roots are
    bracketed on a log grid of ``Gamma`` in ``[lo, hi] * gamma_sigma`` and
    refined to 1e-12 relative.  Returns an empty list when ``N' <= N + 1``.
    """
    if N_prime <= N + 1:
        return []
    pickers = {"minus": [lower_zero], "plus": [upper_zero],
               "both": [lower_zero, upper_zero]}[branch]
    grid = np.geomspace(lo * gamma_sigma, hi * gamma_sigma, points)
    roots = []
    for pick in pickers:
        def f(G, pick=pick):
            return _bracket(N_prime, gamma_sigma, G, pick(N, gamma_sigma, G))

        vals = np.array([f(G) for G in grid])
        for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
            if fa == 0:
                roots.append(float(a))
            elif fa * fb < 0:
                roots.append(brentq(f, a, b, xtol=1e-300, rtol=4e-12, maxiter=500))
    if not roots:
        raise ValueError(f"no joint zero of g^({N}) and g^({N_prime}) in the search bracket")
    return sorted(roots)


# ---------------------------------------------------------------------------
# mean-field decomposition
# ---------------------------------------------------------------------------

def sigma_field_moments(omega_sigma: float, gamma_sigma: float = 1.0) -> dict:
    """Normally ordered moments ``{(i, j): <sigma^dag^i sigma^j>}`` up to i, j = 2."""
    alpha, n = tls_steady_state(omega_sigma, gamma_sigma)
    mom = {(i, j): 0j for i in range(3) for j in range(3)}
    mom[0, 0] = 1.0 + 0j
    mom[0, 1] = alpha
    mom[1, 0] = np.conj(alpha)
    mom[1, 1] = n + 0j
    return mom


def shifted_moment(moments: dict, alpha: complex, p: int, q: int) -> complex:
    """``<d^dag^p d^q>`` for ``d = s - alpha`` from the moments of ``s``."""
    total = 0j
    ac = np.conj(alpha)
    for i in range(p + 1):
        for j in range(q + 1):
            total += (comb(p, i, exact=True) * comb(q, j, exact=True)
                      * (-ac) ** (p - i) * (-alpha) ** (q - j) * moments[i, j])
    return total


def _complete(moments: dict) -> dict:
    out = dict(moments)
    for (i, j), v in moments.items():
        out.setdefault((j, i), np.conj(v))
    return out


def decompose_g2(moments: dict, alpha: complex | None = None) -> Decomposition:
    """Split g^(2) of a field into fluctuation, anomalous and quadrature parts.

    ``moments`` maps ``(i, j)`` to ``<s^dag^i s^j>`` for ``i, j <= 2``.
    """
    mom = _complete(moments)
    if alpha is None:
        alpha = mom[0, 1]
    n = mom[1, 1].real
    if not n > 0:
        raise ValueError("field population is zero")
    a2 = abs(alpha) ** 2
    dd = shifted_moment(mom, alpha, 1, 1).real
    d2 = shifted_moment(mom, alpha, 0, 2)
    dd2 = shifted_moment(mom, alpha, 1, 2)
    d2d2 = shifted_moment(mom, alpha, 2, 2).real
    n2 = n * n
    i0 = (d2d2 - dd * dd) / n2
    i1 = 4 * (np.conj(alpha) * dd2).real / n2
    i2 = 2 * (a2 * dd + (np.conj(alpha) ** 2 * d2).real) / n2
    return Decomposition(float(i0), float(i1), float(i2), float(mom[2, 2].real / n2))


def decompose_sigma_closed_form(omega_sigma: float, gamma_sigma: float = 1.0) -> Decomposition:
    """The same split for the bare emitter, written directly in alpha and <n>."""
    alpha, n = tls_steady_state(omega_sigma, gamma_sigma)
    a2 = abs(alpha) ** 2
    n2 = n * n
    i0 = a2 * (6 * n - 4 * a2) / n2 - 1
    i1 = 8 * a2 * (a2 - n) / n2
    i2 = 2 * a2 * (n - 2 * a2) / n2
    return Decomposition(i0, i1, i2, 0.0)


# ---------------------------------------------------------------------------
# spectra and rates
# ---------------------------------------------------------------------------

def incoherent_weight(omega_sigma: float, gamma_sigma: float = 1.0) -> float:
    return 8 * omega_sigma ** 2 / gamma_sigma ** 2


def spectrum_heitler(omega, omega_sigma: float, gamma_sigma: float = 1.0):
    """Rayleigh delta weight and the incoherent Lorentzian density.

    The delta at zero frequency is returned as a weight and never sampled.
    """
    K2 = incoherent_weight(omega_sigma, gamma_sigma)
    if K2 > 1:
        raise ValueError(f"outside the weak-drive regime: K2={K2:.3g} > 1")
    hw = gamma_sigma / 2
    density = K2 * hw / np.pi / (hw ** 2 + np.asarray(omega, float) ** 2)
    return 1 - K2, density


def intensity_ratio(mixing: float, t: float) -> float:
    """Emission rate of the mixed signal relative to plain resonance fluorescence."""
    return t * t * (1 - mixing / 2) ** 2


def emission_rates(params: SystemParams, h: HomodyneConfig) -> tuple[float, float, float]:
    """``(I_rf, I_int, I_int / I_rf)`` to leading order in the drive."""
    W, gs = params.omega_sigma, params.gamma_sigma
    i_rf = 4 * W ** 2 / gs
    n_s = intensity_ratio(h.mixing, h.t) * 4 * W ** 2 / gs ** 2
    i_int = gs * n_s
    return i_rf, i_int, i_int / i_rf if i_rf else intensity_ratio(h.mixing, h.t)


def compensated_ratio(gamma_sigma: float, Gamma: float, t: float = 1.0) -> float:
    return t * t * Gamma / (Gamma + gamma_sigma)
