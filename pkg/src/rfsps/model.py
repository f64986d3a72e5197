"""Physical parameters and shared value types.

All rates are measured in units of the emitter decay rate ``gamma_sigma``.
Inputs with ``gamma_sigma != 1`` are accepted and rescaled by the solvers
through :meth:`SystemParams.rescaled`.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

HEITLER_THRESHOLD = 1e-2
DIVERGENCE_WINDOW = 1e-6


@dataclass(frozen=True)
class SystemParams:
    """Rates and drives of the emitter + detector system.

    Attributes
    ----------
    omega_sigma : laser drive amplitude of the two-level emitter.
    gamma_sigma : emitter decay rate (the unit of every other rate).
    Gamma : detector linewidth.
    g : emitter-detector coupling.
    omega_a : coherent drive of the detector (zero without homodyning).
    """

    omega_sigma: float = 1e-3
    gamma_sigma: float = 1.0
    Gamma: float = 0.2
    g: float = 1e-3
    omega_a: float = 0.0
    heitler_threshold: float = field(default=HEITLER_THRESHOLD, compare=False)

    @property
    def heitler(self) -> bool:
        return self.omega_sigma <= self.heitler_threshold * self.gamma_sigma

    def rescaled(self) -> "SystemParams":
        """Same physics with ``gamma_sigma = 1``."""
        s = self.gamma_sigma
        if s == 1.0:
            return self
        return replace(self, omega_sigma=self.omega_sigma / s, gamma_sigma=1.0,
                       Gamma=self.Gamma / s, g=self.g / s, omega_a=self.omega_a / s)

    def scaled(self, factor: float) -> "SystemParams":
        """Multiply every rate by ``factor`` (dimensionless outputs are invariant)."""
        return replace(self, omega_sigma=self.omega_sigma * factor,
                       gamma_sigma=self.gamma_sigma * factor, Gamma=self.Gamma * factor,
                       g=self.g * factor, omega_a=self.omega_a * factor)

    def with_homodyne(self, h: "HomodyneConfig") -> "SystemParams":
        """Set the detector drive that realises the mixing ratio of ``h``."""
        return replace(self, omega_a=detector_drive(self, h))

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("heitler_threshold")
        return d


@dataclass(frozen=True)
class HomodyneConfig:
    """Laser attenuation and beam splitter of the interference scheme.

    ``f_prime`` is the fraction of the drive laser sent to the second beam
    splitter, ``t``/``r`` its transmission/reflection amplitudes.  The mixing
    ratio seen by the detector is ``mixing = f_prime * r / t``; every
    correlation function depends on the laser only through it.  For the
    default balanced splitter ``mixing == f_prime``.
    """

    f_prime: float = 0.0
    t: float = 1 / math.sqrt(2)
    r: float = 1 / math.sqrt(2)

    @property
    def mixing(self) -> float:
        return self.f_prime * self.r / self.t

    # the letter used in the intensity formulas
    F = mixing

    def beta(self, omega_sigma: float, gamma_sigma: float = 1.0) -> complex:
        """Amplitude of the attenuated, phase-shifted laser."""
        return 1j * omega_sigma * self.f_prime / gamma_sigma

    @classmethod
    def from_mixing(cls, mixing: float, t: float = 1 / math.sqrt(2)) -> "HomodyneConfig":
        r = math.sqrt(max(0.0, 1.0 - t * t))
        if r == 0.0:
            if mixing != 0.0:
                raise ValueError("a nonzero mixing ratio needs r > 0")
            return cls(0.0, t, r)
        return cls(mixing * t / r, t, r)


@dataclass(frozen=True)
class TruncationConfig:
    n_max: int = 8
    tol: float = 1e-9
    g_eval: float = 1e-3
    omega_eval: float = 1e-3


class MomentIndex(NamedTuple):
    """Exponents of the normally ordered moment <sigma^dag^m sigma^n a^dag^mu a^nu>."""

    m: int
    n: int
    mu: int
    nu: int

    @classmethod
    def checked(cls, m, n, mu, nu) -> "MomentIndex":
        if m not in (0, 1) or n not in (0, 1):
            raise ValueError(f"emitter exponents must be 0 or 1, got m={m}, n={n}")
        if mu < 0 or nu < 0 or int(mu) != mu or int(nu) != nu:
            raise ValueError(f"detector exponents must be non-negative integers, got {mu}, {nu}")
        return cls(int(m), int(n), int(mu), int(nu))

    @property
    def order(self) -> int:
        return self.m + self.n + self.mu + self.nu

    def conj(self) -> "MomentIndex":
        return MomentIndex(self.n, self.m, self.nu, self.mu)


def detector_drive(params: SystemParams, h: HomodyneConfig) -> float:
    """Detector drive amplitude giving the mixing ratio of ``h``."""
    return params.g * params.omega_sigma * h.mixing / params.gamma_sigma


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    hazards: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_invalid(self):
        if self.violations:
            raise ValueError("; ".join(self.violations))

    def __str__(self):
        if self.ok and not self.hazards:
            return "ok"
        return "; ".join(self.violations + [f"hazard: {h}" for h in self.hazards])


def validate(params: SystemParams, h: HomodyneConfig | None = None,
             t: TruncationConfig | None = None, order: int | None = None) -> ValidationReport:
    """Check every invariant; never raises."""
    rep = ValidationReport()
    v = rep.violations
    if not params.gamma_sigma > 0:
        v.append("gamma_sigma must be positive")
    if not params.Gamma > 0:
        v.append("Gamma must be positive")
    if not params.omega_sigma >= 0:
        v.append("omega_sigma must be non-negative")
    if not params.g >= 0:
        v.append("g must be non-negative")
    if not math.isfinite(params.omega_a):
        v.append("omega_a must be finite")
    if h is not None:
        if not h.f_prime >= 0:
            v.append("f_prime must be non-negative")
        if not 0 < h.t <= 1:
            v.append("t must lie in (0, 1]")
        if not 0 <= h.r < 1:
            v.append("r must lie in [0, 1)")
        if abs(h.r ** 2 + h.t ** 2 - 1) > 1e-12:
            v.append("r^2 + t^2 must equal 1")
        if h.t > 0 and abs(h.mixing - 2.0) < DIVERGENCE_WINDOW:
            rep.hazards.append("homodyne divergence point (mixing ratio 2)")
    if t is not None:
        if t.n_max < 1:
            v.append("n_max must be a positive integer")
        if not t.tol > 0:
            v.append("tol must be positive")
        if not t.g_eval > 0:
            v.append("g_eval must be positive")
        if not t.omega_eval > 0:
            v.append("omega_eval must be positive")
        if order is not None and t.n_max < 2 * order:
            v.append(f"n_max={t.n_max} too small for correlation order {order}")
    return rep


CONFIG_KEYS = {
    "omega_sigma": float, "gamma_sigma": float, "Gamma": float, "g": float,
    "omega_a": float, "f_prime": float, "t": float, "n_max": int, "tol": float,
}


def read_config(path: str | Path) -> dict:
    """Read a flat ``key = value`` file; unknown keys are an error."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), strict=False)
    cp.optionxform = str
    try:
        # keys before any [section] header land in [params]; sections are flattened
        cp.read_string("[params]\n" + Path(path).read_text())
    except configparser.Error as exc:
        raise ValueError(f"cannot parse config {path}: {exc}") from None
    out = {}
    for section in cp.sections():
        for key, raw in cp[section].items():
            if key not in CONFIG_KEYS:
                raise ValueError(f"unknown config key {key!r}")
            out[key] = CONFIG_KEYS[key](raw)
    return out


def build_configs(values: dict) -> tuple[SystemParams, HomodyneConfig, TruncationConfig]:
    """Assemble the three configs from a flat mapping (config file + CLI overrides)."""
    p = SystemParams(**{k: values[k] for k in
                        ("omega_sigma", "gamma_sigma", "Gamma", "g", "omega_a") if k in values})
    h = HomodyneConfig()
    if "t" in values:
        tt = values["t"]
        h = HomodyneConfig(h.f_prime, tt, math.sqrt(max(0.0, 1 - tt * tt)))
    if "f_prime" in values:
        h = replace(h, f_prime=values["f_prime"])
    tc = TruncationConfig(**{k: values[k] for k in ("n_max", "tol") if k in values})
    return p, h, tc
