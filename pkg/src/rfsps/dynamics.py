"""Delay-time correlations and emission spectra.

Two-time averages follow from the quantum regression theorem: for ``tau >= 0``
``<L X(tau) R>`` obeys the same linear equations in ``tau`` as ``<X>`` in time,
started from ``<L X R>``.  The regression matrices are small and dense, so
they are propagated with their exact exponential.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .analytic import tls_steady_state
from .model import HomodyneConfig, MomentIndex, SystemParams, TruncationConfig, validate
from .moments import hierarchy_matrix, regression_coefficients, solve_sensor

PLATEAU_THRESHOLD = 0.05
_COND_MAX = 1e6


@dataclass
class CorrelationSeries:
    """A correlator sampled on a delay grid starting at zero."""

    tau_grid: np.ndarray
    values: np.ndarray
    label: str
    normalization: float = 1.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tau_grid = np.asarray(self.tau_grid, float)
        self.values = np.asarray(self.values, complex)
        if self.tau_grid.shape != self.values.shape:
            raise ValueError("tau_grid and values differ in length")
        if self.tau_grid.size == 0:
            raise ValueError("empty grid")
        if self.tau_grid[0] != 0:
            raise ValueError("tau grid must start at 0")
        if np.any(np.diff(self.tau_grid) <= 0):
            raise ValueError("tau grid must be strictly increasing")

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    def check_g2(self, tol: float = 1e-8):
        """Raise if the series is not a valid normalised intensity correlation."""
        scale = max(1.0, float(np.max(np.abs(self.values))))
        if np.max(np.abs(self.values.imag)) > tol * scale:
            raise ValueError(f"{self.label}: imaginary part above {tol}")
        if np.min(self.values.real) < -tol * scale:
            raise ValueError(f"{self.label}: negative values below {-tol}")
        return self

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# correlator: {self.label}\n")
            fh.write(f"# params: {json.dumps(self.params, sort_keys=True)}\n")
            fh.write(f"# normalization: {self.normalization!r}\n")
            w = csv.writer(fh)
            w.writerow(["tau", "re", "im"])
            for t, v in zip(self.tau_grid, self.values):
                w.writerow([repr(float(t)), repr(float(v.real)), repr(float(v.imag))])


@dataclass
class SpectrumCurve:
    omega_grid: np.ndarray
    density: np.ndarray
    delta_weight: float = 0.0
    delta_location: float = 0.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.omega_grid = np.asarray(self.omega_grid, float)
        self.density = np.asarray(self.density, float)
        if np.min(self.density, initial=0.0) < -1e-12 * max(1.0, np.max(self.density, initial=0)):
            raise ValueError("negative spectral density")
        self.density = np.clip(self.density, 0.0, None)
        if not -1e-12 <= self.delta_weight <= 1 + 1e-12:
            raise ValueError(f"delta weight {self.delta_weight} outside [0, 1]")

    def total_weight(self) -> float:
        return float(np.trapezoid(self.density, self.omega_grid)) + self.delta_weight

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# params: {json.dumps(self.params, sort_keys=True)}\n")
            fh.write(f"# delta_weight: {self.delta_weight!r} at omega={self.delta_location!r}\n")
            w = csv.writer(fh)
            w.writerow(["omega", "density"])
            for o, s in zip(self.omega_grid, self.density):
                w.writerow([repr(float(o)), repr(float(s))])


# ---------------------------------------------------------------------------
# propagation
# ---------------------------------------------------------------------------

def propagate(M: np.ndarray, v0: np.ndarray, taus) -> np.ndarray:
    """``expm(M tau) @ v0`` for each tau; rows of the result follow ``taus``.

    Uses the eigendecomposition when the eigenbasis is well conditioned and
    falls back to a dense matrix exponential per delay otherwise (defective
    or nearly defective ``M``).
    """
    taus = np.asarray(taus, float)
    lam, V = np.linalg.eig(M)
    if np.linalg.cond(V) < _COND_MAX:
        c = np.linalg.solve(V, v0)
        with np.errstate(under="ignore"):  # fully decayed modes
            return (np.exp(np.outer(taus, lam)) * c) @ V.T
    return np.array([scipy.linalg.expm(M * t) @ v0 for t in taus])


# ---------------------------------------------------------------------------
# bare emitter
# ---------------------------------------------------------------------------

_SIGMA = np.array([[0, 1], [0, 0]], complex)  # basis (ground, excited)
_LABELS = {"1": np.eye(2, dtype=complex), "sigma": _SIGMA, "sigma_dag": _SIGMA.conj().T}
_W_ORDER = [MomentIndex(0, 1, 0, 0), MomentIndex(1, 0, 0, 0), MomentIndex(1, 1, 0, 0)]
_W_NAMES = {"sigma": 0, "sigma_dag": 1, "n": 2}


def g2_tau_sigma_closed_form(omega_sigma: float, gamma_sigma: float, tau):
    """Delayed g^(2) of resonance fluorescence with perfect time resolution."""
    tau = np.asarray(tau, float)
    if np.any(tau < 0):
        raise ValueError("tau must be non-negative")
    R = np.sqrt(complex((gamma_sigma / 4) ** 2 - (2 * omega_sigma) ** 2))
    Rt = R * tau
    # sinh(R t) / R, continued analytically through R = 0
    shr = np.where(abs(R) > 0, np.sinh(Rt) / (R if R != 0 else 1), tau)
    out = 1 - (0.75 * gamma_sigma * shr + np.cosh(Rt)) * np.exp(-0.75 * gamma_sigma * tau)
    return out.real


def tls_density_matrix(omega_sigma: float, gamma_sigma: float = 1.0) -> np.ndarray:
    alpha, n = tls_steady_state(omega_sigma, gamma_sigma)
    return np.array([[1 - n, np.conj(alpha)], [alpha, n]], complex)


def bloch_matrix(params: SystemParams) -> tuple[np.ndarray, np.ndarray]:
    """``(M, b)`` with ``dw/dt = M w + b`` for ``w = (<s>, <s^dag>, <s^dag s>)``."""
    pos = {idx: i for i, idx in enumerate(_W_ORDER)}
    M = np.zeros((3, 3), complex)
    b = np.zeros(3, complex)
    for i, idx in enumerate(_W_ORDER):
        for tgt, coef in regression_coefficients(idx, params):
            if tgt in pos:
                M[i, pos[tgt]] += coef
            else:
                b[i] += coef
    return M, b


def two_time_correlator(L: str, R: str, params: SystemParams, tau_grid,
                        observable: str = "n") -> CorrelationSeries:
    """``<L X(tau) R>`` for the bare emitter with ``X`` one of sigma, sigma_dag, n.

    ``L`` and ``R`` are labels from ``{"1", "sigma", "sigma_dag"}``.  The
    three components ``w[L, R]`` are propagated together; ``observable``
    selects which is returned.  The value is not normalised.
    """
    if L not in _LABELS or R not in _LABELS:
        raise ValueError(f"unsupported operator label: {L!r}, {R!r}")
    if observable not in _W_NAMES:
        raise ValueError(f"unknown observable {observable!r}")
    W, gs = params.omega_sigma, params.gamma_sigma
    rho = tls_density_matrix(W, gs)
    Lm, Rm = _LABELS[L], _LABELS[R]
    ops = [_SIGMA, _SIGMA.conj().T, _SIGMA.conj().T @ _SIGMA]
    w0 = np.array([np.trace(rho @ Lm @ X @ Rm) for X in ops])
    lr = np.trace(rho @ Lm @ Rm)
    M, b = bloch_matrix(params)
    w_ss = -np.linalg.solve(M, b)
    w = propagate(M, w0 - w_ss * lr, tau_grid) + w_ss * lr
    label = f"w[{L},{R}].{observable}"
    return CorrelationSeries(tau_grid, w[:, _W_NAMES[observable]], label,
                             params={"omega_sigma": W, "gamma_sigma": gs})


def g2_tau_sigma(params: SystemParams, tau_grid) -> CorrelationSeries:
    """Delayed g^(2) of the bare emitter from the regression equations."""
    s = two_time_correlator("sigma_dag", "sigma", params, tau_grid)
    n = tls_steady_state(params.omega_sigma, params.gamma_sigma)[1]
    if n == 0:
        raise ValueError("emitter population is zero")
    s.values = s.values / n ** 2
    s.normalization = n ** 2
    s.label = "g2_sigma"
    return s


# ---------------------------------------------------------------------------
# detector field
# ---------------------------------------------------------------------------

def g2_tau_filtered(params: SystemParams, h: HomodyneConfig | None = None,
                    t: TruncationConfig | None = None, tau_grid=None) -> CorrelationSeries:
    """Delayed g^(2) of the detector field, ``<a^dag (a^dag a)(tau) a> / <a^dag a>^2``.

    The sensor hierarchy with ``mu, nu <= 1`` is closed and is propagated
    from the initial values ``<a^dag O a> = C[m, n, mu + 1, nu + 1]``.
    """
    if tau_grid is None:
        raise ValueError("tau_grid is required")
    validate(params, h, t).raise_if_invalid()
    table = solve_sensor(params, photon_max=2, h=h)
    p = params.with_homodyne(h) if h is not None else params
    idxs, M = hierarchy_matrix(p, 1)
    v0 = np.array([table[m, n, mu + 1, nu + 1] for m, n, mu, nu in idxs])
    na = table[0, 0, 1, 1].real
    if not na > 0:
        raise ValueError("detector population is zero")

    # bring every component to order one before exponentiating
    ls = min(1.0, 2 * params.omega_sigma / params.gamma_sigma) or 1.0
    la = math.sqrt(na)
    s = np.array([ls ** (m + n) * la ** (mu + nu) for m, n, mu, nu in idxs]) * na
    Ms = M * (s[None, :] / s[:, None])
    u = propagate(Ms, v0 / s, tau_grid) * s
    k = idxs.index(MomentIndex(0, 0, 1, 1))
    label = "g2_filtered" if h is None or h.mixing == 0 else "g2_homodyne"
    info = p.as_dict()
    if h is not None:
        info["mixing"] = h.mixing
    out = CorrelationSeries(tau_grid, u[:, k] / na ** 2, label, na ** 2, info)
    return out.check_g2()


def plateau_width(series: CorrelationSeries, threshold: float = PLATEAU_THRESHOLD) -> float:
    """Largest delay up to which the series stays at or below ``threshold``.

    The crossing is linearly interpolated between grid points.
    """
    x, y = series.tau_grid, series.values.real
    above = np.nonzero(y > threshold)[0]
    if above.size == 0:
        return float(x[-1])
    i = above[0]
    if i == 0:
        return 0.0
    x0, x1, y0, y1 = x[i - 1], x[i], y[i - 1], y[i]
    return float(x0 + (threshold - y0) * (x1 - x0) / (y1 - y0))


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

def _spectral_poles(params: SystemParams):
    """Amplitudes and rates with ``<s^dag(0) s(tau)> - |alpha|^2 = sum c exp(lam tau)``."""
    M, b = bloch_matrix(params)
    rho = tls_density_matrix(params.omega_sigma, params.gamma_sigma)
    sd = _SIGMA.conj().T
    ops = [_SIGMA, sd, sd @ _SIGMA]
    w0 = np.array([np.trace(rho @ sd @ X) for X in ops])
    w_ss = -np.linalg.solve(M, b)
    lr = np.trace(rho @ sd)
    lam, V = np.linalg.eig(M)
    c = np.linalg.solve(V, w0 - w_ss * lr)
    amps = V[0] * c  # sigma component
    coherent = (w_ss[0] * lr).real
    return lam, amps, coherent


def _nyquist_check(omega, centers, widths):
    for c, w in zip(centers, widths):
        inside = omega[(omega >= c - w) & (omega <= c + w)]
        if inside.size < 2 and (omega.min() < c + w and omega.max() > c - w):
            raise ValueError(f"grid too coarse: fewer than two points across a line of width {w:.3g}")
        if inside.size >= 2 and np.max(np.diff(inside)) > w / 2:
            raise ValueError(f"grid too coarse for a line of full width {w:.3g}")


def spectrum_numeric(params: SystemParams, resolution: float | None, omega_grid) -> SpectrumCurve:
    """Normalised emission spectrum, optionally seen through a filter of width ``resolution``.

    The half-sided Fourier transform of the regression solution is taken
    analytically, giving a sum of complex Lorentzians.  Without a filter the
    coherent part is returned as a delta weight.
    """
    omega = np.asarray(omega_grid, float)
    if omega.size == 0:
        raise ValueError("empty grid")
    if np.any(np.diff(omega) <= 0):
        raise ValueError("omega grid must be strictly increasing")
    G = 0.0 if resolution is None else float(resolution)
    if G < 0:
        raise ValueError("resolution must be non-negative")
    n = tls_steady_state(params.omega_sigma, params.gamma_sigma)[1]
    info = {"omega_sigma": params.omega_sigma, "gamma_sigma": params.gamma_sigma, "resolution": G}
    if n == 0:
        return SpectrumCurve(omega, np.zeros_like(omega), 0.0, 0.0, info)
    lam, amps, coherent = _spectral_poles(params)
    rates = G / 2 - lam
    widths = list(2 * rates.real)
    centers = list(rates.imag)
    if G > 0:
        widths.append(G)
        centers.append(0.0)
    _nyquist_check(omega, centers, widths)

    dens = np.zeros_like(omega)
    for a, r in zip(amps, rates):
        dens += (a / (r - 1j * omega)).real
    delta = coherent / n
    if G > 0:
        dens += coherent * (G / 2) / ((G / 2) ** 2 + omega ** 2)
        delta = 0.0
    dens /= math.pi * n
    return SpectrumCurve(omega, dens, float(delta), 0.0, info)


def fwhm(curve: SpectrumCurve) -> float:
    """Full width at half maximum of the continuous part, by interpolated crossings."""
    x, y = curve.omega_grid, curve.density
    k = int(np.argmax(y))
    half = y[k] / 2
    left = np.nonzero(y[:k] < half)[0]
    right = np.nonzero(y[k:] < half)[0]
    if left.size == 0 or right.size == 0:
        raise ValueError("the curve does not fall below half maximum on both sides")
    i = left[-1]
    xl = x[i] + (half - y[i]) * (x[i + 1] - x[i]) / (y[i + 1] - y[i])
    j = k + right[0]
    xr = x[j - 1] + (half - y[j - 1]) * (x[j] - x[j - 1]) / (y[j] - y[j - 1])
    return float(xr - xl)
