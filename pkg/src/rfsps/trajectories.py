"""Quantum-jump unravelling of the emitter + detector master equation.

Only jumps of the detector output channel are recorded as clicks.  Between
jumps the unnormalised state evolves under ``H_eff = H - i/2 sum c^dag c``;
the evolution is applied with exact propagators ``expm(-i H_eff dt)`` for a
ladder of step sizes ``dt = T / 2^k``, and each jump time is located by
bisection on the survival probability ``|psi|^2``.
"""
from __future__ import annotations

import csv
import json
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy import stats

from .analytic import tls_steady_state
from .model import HomodyneConfig, SystemParams, TruncationConfig, validate
from .moments import (TruncationError, _cascaded_drive, gN_from_moments, joint_operators,
                      liouvillian, liouvillian_moments, liouvillian_steady_state)

_LADDER = 40  # finest step is base_step / 2**39
_MIN_CLICKS_CDF = 10_000


@dataclass
class ClickTrain:
    times: np.ndarray
    duration: float
    params: dict = field(default_factory=dict)
    seed: int | list | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        if self.times.size:
            if np.any(np.diff(self.times) <= 0):
                raise ValueError("click times must be strictly increasing")
            if self.times[0] < 0 or self.times[-1] > self.duration:
                raise ValueError("click times outside [0, duration]")

    def __len__(self):
        return self.times.size

    @property
    def rate(self) -> float:
        return self.times.size / self.duration

    @property
    def rate_stderr(self) -> float:
        return math.sqrt(max(self.times.size, 1)) / self.duration

    def to_csv(self, path):
        np.savetxt(path, self.times, fmt="%.17g", header="time", comments="")

    @classmethod
    def from_csv(cls, path, duration: float, **kw) -> "ClickTrain":
        return cls(np.loadtxt(path, skiprows=1, ndmin=1), duration, **kw)


@dataclass
class WaitingTimeCDF:
    x_grid: np.ndarray
    cdf: np.ndarray
    n_pairs: int
    rate_I: float

    def __post_init__(self):
        if np.any(np.diff(self.cdf) < 0):
            raise ValueError("cdf must be non-decreasing")

    @property
    def stderr(self) -> np.ndarray:
        """Binomial standard error of each CDF point."""
        p = self.cdf
        return np.sqrt(np.maximum(p * (1 - p), 1.0 / self.n_pairs) / self.n_pairs)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "cdf"])
            for x, c in zip(self.x_grid, self.cdf):
                w.writerow([repr(float(x)), repr(float(c))])


# ---------------------------------------------------------------------------
# jump simulation
# ---------------------------------------------------------------------------

def _model(params: SystemParams, h: HomodyneConfig | None, n_max: int, coupling: str):
    if coupling == "cascaded":
        p = _cascaded_drive(params, h) if h is not None else params
    else:
        p = params.with_homodyne(h) if h is not None else params
    H, cops, click = joint_operators(p, n_max, coupling)
    return p, H, cops, click


def expected_rate(params: SystemParams, h: HomodyneConfig | None = None,
                  t: TruncationConfig | None = None, coupling: str = "cascaded"):
    """Steady-state click rate and g^(2)(0) of the click channel from the moment solver."""
    t = t or TruncationConfig()
    table = liouvillian_moments(params, 4, h, t, coupling)
    kappa = params.Gamma / 2 if coupling == "cascaded" else params.Gamma
    na = table[0, 0, 1, 1].real
    return kappa * na, (gN_from_moments(table, 2) if na > 0 else float("nan"))


def exact_waiting_cdf(params: SystemParams, h: HomodyneConfig | None = None,
                      t: TruncationConfig | None = None, x_grid=None, coupling: str = "cascaded"):
    """Waiting-time CDF between consecutive clicks from the master equation.

    ``1 - Tr[exp((L - J) tau) J rho] / Tr[J rho]`` with ``J`` the click
    superoperator and ``tau = x / I``.  Returns ``(x_grid, cdf, I)``.
    """
    t = t or TruncationConfig()
    p, H, cops, click = _model(params, h, t.n_max, coupling)
    L = liouvillian(H, cops)
    c = cops[click]
    J = np.kron(c.conj(), c)
    rho = liouvillian_steady_state(params, h, t, coupling).matrix.reshape(-1, order="F")
    v = J @ rho
    d = H.shape[0]
    trace = np.eye(d).reshape(-1, order="F")
    I = float((trace @ v).real)
    if not I > 0:
        raise ValueError("zero click rate")
    x = np.geomspace(1e-3, 1e2, 200) if x_grid is None else np.asarray(x_grid, float)
    lam, V = np.linalg.eig(L - J)
    coef = (trace @ V) * np.linalg.solve(V, v / I)
    with np.errstate(under="ignore"):
        survival = (np.exp(np.outer(x / I, lam)) @ coef).real
    return x, 1 - survival, I


class _Unravelling:
    def __init__(self, H, cops, click, base_step):
        self.cops = cops
        self.click = click
        Heff = H - 0.5j * sum(c.conj().T @ c for c in cops)
        self.steps = base_step / 2.0 ** np.arange(_LADDER)
        self.U = [scipy.linalg.expm(-1j * Heff * dt) for dt in self.steps]
        self.n_max = H.shape[0] // 2 - 1

    def next_jump(self, psi, r):
        """Evolve the normalised ``psi`` until ``|psi|^2 = r``; returns (dt, psi)."""
        U0, T = self.U[0], self.steps[0]
        elapsed = 0.0
        while True:
            nxt = U0 @ psi
            if np.vdot(nxt, nxt).real < r:
                break
            psi = nxt
            elapsed += T
            if elapsed > 1e12:
                raise RuntimeError("no jump within 1e12 time units")
        for U, dt in zip(self.U[1:], self.steps[1:]):
            nxt = U @ psi
            if np.vdot(nxt, nxt).real >= r:
                psi = nxt
                elapsed += dt
        return elapsed, psi

    def jump(self, psi, rng):
        amps = [c @ psi for c in self.cops]
        w = np.array([np.vdot(v, v).real for v in amps])
        k = int(rng.choice(len(w), p=w / w.sum()))
        out = amps[k]
        return k, out / np.linalg.norm(out)


def simulate_clicks(params: SystemParams, h: HomodyneConfig | None = None,
                    t: TruncationConfig | None = None, duration: float = 1e5, seed: int = 0,
                    coupling: str = "cascaded", warmup: float | None = None,
                    base_step: float | None = None) -> ClickTrain:
    """One quantum-jump trajectory; returns the detector-channel clicks.

    The trajectory starts in the joint ground state and runs for ``warmup``
    (default ``20 / min(gamma, Gamma)``) before recording.  ``base_step`` is
    the largest propagator step; by default about half the mean time between
    emitter jumps.  The random stream is
    ``numpy.random.default_rng(SeedSequence(seed))``.
    """
    t = t or TruncationConfig()
    validate(params, h, t).raise_if_invalid()
    if duration <= 0:
        raise ValueError("duration must be positive")
    info = params.as_dict() | {"mixing": h.mixing if h else 0.0, "coupling": coupling,
                               "n_max": t.n_max}
    if params.omega_sigma == 0 and (h is None or h.mixing == 0):
        return ClickTrain(np.empty(0), duration, info, seed)
    p, H, cops, click = _model(params, h, t.n_max, coupling)
    gmin = min(p.gamma_sigma, p.Gamma)
    if warmup is None:
        warmup = 20 / gmin
    if base_step is None:
        # a few big steps per expected jump; the ladder resolves the rest
        n_s = tls_steady_state(p.omega_sigma, p.gamma_sigma)[1]
        base_step = min(max(2.0 / gmin, 0.5 / (p.gamma_sigma * n_s)), 1e4)
    sim = _Unravelling(H, cops, click, base_step)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    d = H.shape[0]
    psi = np.zeros(d, complex)
    psi[0] = 1.0
    top = np.zeros(d, bool)
    nm = t.n_max
    top[[nm - 1, nm, 2 * nm, 2 * nm + 1]] = True  # two highest Fock levels, both emitter states

    clock = -warmup
    times = []
    while True:
        dt, psi = sim.next_jump(psi, rng.random())
        clock += dt
        if clock > duration:
            break
        k, psi = sim.jump(psi, rng)
        if np.sum(abs(psi[top]) ** 2) > t.tol ** 0.5:
            raise TruncationError(f"trajectory reached the Fock cutoff n_max={t.n_max}")
        if k == click and clock >= 0:
            times.append(clock)
    return ClickTrain(np.array(times), duration, info, seed)


def simulate_batch(params, h, t, duration, seeds, coupling="cascaded") -> ClickTrain:
    """Independent trajectories for each seed, concatenated in seed order."""
    trains = [simulate_clicks(params, h, t, duration, s, coupling) for s in seeds]
    return merge_trains(trains)


def merge_trains(trains) -> ClickTrain:
    """Join trains end to end.  Gaps are only ever taken within one train."""
    offset, parts, seeds = 0.0, [], []
    for tr in trains:
        parts.append(tr.times + offset)
        offset += tr.duration
        seeds.append(tr.seed)
    out = ClickTrain(np.concatenate(parts) if parts else np.empty(0), offset,
                     trains[0].params if trains else {}, seeds)
    out.params = dict(out.params, segments=[tr.duration for tr in trains])
    return out


def poisson_train(rate: float, duration: float, seed: int = 0) -> ClickTrain:
    """Coherent-light reference: a homogeneous Poisson process."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n = rng.poisson(rate * duration)
    times = np.sort(rng.uniform(0, duration, n))
    return ClickTrain(times, duration, {"source": "poisson", "rate": rate}, seed)


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

def _gaps(train: ClickTrain) -> np.ndarray:
    segs = train.params.get("segments") if isinstance(train.params, dict) else None
    if not segs:
        return np.diff(train.times)
    edges = np.cumsum([0.0] + list(segs))
    seg = np.searchsorted(edges, train.times, side="right")
    g = np.diff(train.times)
    return g[seg[1:] == seg[:-1]]


def waiting_time_cdf(train: ClickTrain, x_grid=None) -> WaitingTimeCDF:
    """Empirical CDF of consecutive-click gaps against ``I * gap``."""
    if len(train) < 2:
        raise ValueError("need at least 2 clicks")
    if len(train) < _MIN_CLICKS_CDF:
        warnings.warn(f"only {len(train)} clicks; the CDF will be noisy", stacklevel=2)
    I = train.rate
    x = np.sort(I * _gaps(train))
    if x_grid is None:
        x_grid = np.geomspace(1e-3, 1e2, 200)
    x_grid = np.asarray(x_grid, float)
    cdf = np.searchsorted(x, x_grid, side="right") / x.size
    return WaitingTimeCDF(x_grid, cdf, int(x.size), I)


def coherent_cdf(x):
    return 1 - np.exp(-np.asarray(x, float))


def ks_exponential(train: ClickTrain):
    """Kolmogorov-Smirnov test of the normalised gaps against ``1 - exp(-x)``."""
    x = train.rate * _gaps(train)
    return stats.kstest(x, "expon")


def g2_zero_from_clicks(train: ClickTrain, window: float) -> tuple[float, float]:
    """Coincidence estimate of g^(2)(0): pairs closer than ``window`` over ``N I window``.

    Every ordered pair ``t_j - t_i in (0, window]`` counts.  The standard
    error is the Poisson error of the pair count.
    """
    if len(train) == 0:
        raise ValueError("empty train")
    ts = train.times
    if window * train.rate > 0.1:
        warnings.warn("coincidence window is not small against 1/I", stacklevel=2)
    k = int(np.sum(np.searchsorted(ts, ts + window, side="right") - np.arange(ts.size) - 1))
    expected = ts.size * train.rate * window
    return k / expected, math.sqrt(max(k, 1)) / expected


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

def write_manifest(path, params: SystemParams, h: HomodyneConfig | None, seeds, durations,
                   outputs=(), **extra):
    data = {
        "params": params.as_dict(),
        "homodyne": None if h is None else {"f_prime": h.f_prime, "t": h.t, "r": h.r},
        "seeds": list(seeds),
        "durations": list(durations),
        "outputs": [str(o) for o in outputs],
        "written": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    data.update(extra)
    Path(path).write_text(json.dumps(data, indent=1))
    return data
