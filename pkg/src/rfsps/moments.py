"""Steady-state moments of the driven emitter coupled to a detector mode.

Three solvers are provided:

* :func:`solve_recursive` -- block-by-block solution of the moment hierarchy
  to leading order in the drive and the coupling (the "sensor" limit).
* :func:`solve_sensor` -- the same hierarchy solved at all orders in the
  drive but without back-action of the detector onto the emitter.  This is
  what the delay-time dynamics propagate.
* :func:`liouvillian_steady_state` -- brute-force null vector of the full
  master equation on a truncated Fock space, used as an independent oracle.

Moments are ``C[m, n, mu, nu] = <sigma^dag^m sigma^n a^dag^mu a^nu>``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .model import MomentIndex, SystemParams, HomodyneConfig, TruncationConfig, validate


class TruncationError(RuntimeError):
    """The Fock cutoff is too small for the requested state."""


class SteadyStateError(RuntimeError):
    """Degenerate or singular steady-state problem."""


# ---------------------------------------------------------------------------
# regression matrix
# ---------------------------------------------------------------------------

def regression_coefficients(idx, params: SystemParams) -> list[tuple[MomentIndex, complex]]:
    """Nonzero couplings ``d C[idx]/dt = sum coef * C[target]``.

    The detector is a passive sensor: it is fed by the emitter but does not
    act back on it, so couplings only ever lower the detector exponents.
    """
    m, n, mu, nu = idx = MomentIndex.checked(*idx)
    W, gs, G, g, Wa = (params.omega_sigma, params.gamma_sigma, params.Gamma,
                       params.g, params.omega_a)
    out: dict[MomentIndex, complex] = {}

    def add(target, coef):
        if coef != 0:
            out[target] = out.get(target, 0) + coef

    add(idx, -0.5 * gs * (m + n) - 0.5 * G * (mu + nu))
    add(MomentIndex(m, 1 - n, mu, nu), -1j * W * (n + 2 * m * (1 - n)))
    add(MomentIndex(1 - m, n, mu, nu), 1j * W * (m + 2 * n * (1 - m)))
    if nu:
        add(MomentIndex(m, n, mu, nu - 1), Wa * nu)
        add(MomentIndex(m, 1 - n, mu, nu - 1), -1j * g * (1 - n) * nu)
    if mu:
        add(MomentIndex(m, n, mu - 1, nu), Wa * mu)
        add(MomentIndex(1 - m, n, mu - 1, nu), 1j * g * (1 - m) * mu)
    return [(k, complex(v)) for k, v in out.items() if v != 0]


def indices_of_order(k: int) -> list[MomentIndex]:
    out = []
    for m, n in product((0, 1), repeat=2):
        rest = k - m - n
        for mu in range(rest + 1):
            if rest >= 0:
                out.append(MomentIndex(m, n, mu, rest - mu))
    return out


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

@dataclass
class MomentTable:
    entries: dict
    params: SystemParams
    order_max: int
    method: str = ""

    def __getitem__(self, idx) -> complex:
        idx = MomentIndex(*idx)
        if idx in self.entries:
            return self.entries[idx]
        if idx.conj() in self.entries:
            return complex(np.conj(self.entries[idx.conj()]))
        raise KeyError(f"moment {tuple(idx)} not in table (order_max={self.order_max})")

    def __contains__(self, idx) -> bool:
        idx = MomentIndex(*idx)
        return idx in self.entries or idx.conj() in self.entries

    def __iter__(self):
        return iter(sorted(self.entries))

    def detector_field(self, order: int = 2) -> dict:
        """Normally ordered moments ``{(i, j): <a^dag^i a^j>}`` for i, j <= order."""
        return {(i, j): self[0, 0, i, j] for i in range(order + 1) for j in range(order + 1)
                if (0, 0, i, j) in self}

    def to_json(self) -> str:
        data = {
            "params": self.params.as_dict(),
            "order_max": self.order_max,
            "method": self.method,
            "entries": {",".join(map(str, k)): [v.real, v.imag]
                        for k, v in sorted(self.entries.items())},
        }
        return json.dumps(data, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "MomentTable":
        data = json.loads(text)
        entries = {MomentIndex(*map(int, k.split(","))): complex(*v)
                   for k, v in data["entries"].items()}
        return cls(entries, SystemParams(**data["params"]), data["order_max"], data.get("method", ""))


@dataclass
class DensityOperator:
    """Joint state; basis index ``s * (n_max + 1) + k`` for emitter level s
    (0 ground, 1 excited) and detector Fock number k."""

    matrix: np.ndarray
    n_max: int
    extra: dict = field(default_factory=dict)

    def expect(self, op: np.ndarray) -> complex:
        return complex(np.trace(self.matrix @ op))

    def moment(self, idx) -> complex:
        ops = joint_ladder(self.n_max)
        return self.expect(moment_operator(ops, MomentIndex(*idx)))

    def moments(self, order_max: int, params: SystemParams) -> MomentTable:
        ops = joint_ladder(self.n_max)
        entries = {}
        for k in range(order_max + 1):
            for idx in indices_of_order(k):
                entries[idx] = complex(np.sum(self.matrix.T * moment_operator(ops, idx)))
        return MomentTable(entries, params, order_max, "liouvillian")

    def fock_populations(self) -> np.ndarray:
        d = self.n_max + 1
        p = np.real(np.diag(self.matrix)).reshape(2, d)
        return p.sum(axis=0)

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col", "re", "im"])
            for (i, j), v in np.ndenumerate(self.matrix):
                if v != 0:
                    w.writerow([i, j, repr(v.real), repr(v.imag)])

    def save_npy(self, path):
        np.save(path, self.matrix)


# ---------------------------------------------------------------------------
# hierarchy solvers
# ---------------------------------------------------------------------------

def _resolve(params: SystemParams, h: HomodyneConfig | None) -> SystemParams:
    validate(params, h).raise_if_invalid()
    if h is not None:
        params = params.with_homodyne(h)
    return params


def solve_recursive(params: SystemParams, order_max: int, h: HomodyneConfig | None = None,
                    truncation: TruncationConfig | None = None) -> MomentTable:
    """Leading-order moments, solved block by block in total order.

    Block ``k`` holds every moment with ``m + n + mu + nu = k``.  Couplings
    into block ``k + 1`` are higher order in the drive and are dropped;
    couplings into lower blocks act as sources.
    """
    if truncation is not None and order_max > truncation.n_max:
        raise TruncationError(f"order_max={order_max} exceeds n_max={truncation.n_max}")
    p = _resolve(params, h).rescaled()
    table = {MomentIndex(0, 0, 0, 0): 1.0 + 0j}
    for k in range(1, order_max + 1):
        block = indices_of_order(k)
        pos = {idx: i for i, idx in enumerate(block)}
        M = np.zeros((len(block), len(block)), complex)
        rhs = np.zeros(len(block), complex)
        with np.errstate(under="ignore"):  # tiny drives push high orders below 1e-308
            for i, idx in enumerate(block):
                for tgt, coef in regression_coefficients(idx, p):
                    o = tgt.order
                    if o == k:
                        M[i, pos[tgt]] += coef
                    elif o < k:
                        rhs[i] -= coef * table[tgt]
        try:
            v = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError as exc:
            raise SteadyStateError(f"singular block matrix at order {k}") from exc
        table.update(zip(block, v))
    return MomentTable(table, params, order_max, "recursive")


def hierarchy_indices(photon_max: int) -> list[MomentIndex]:
    return [MomentIndex(m, n, mu, nu) for mu in range(photon_max + 1)
            for nu in range(photon_max + 1) for m in (0, 1) for n in (0, 1)]


def hierarchy_matrix(params: SystemParams, photon_max: int) -> tuple[list, np.ndarray]:
    """Closed regression matrix on all moments with ``mu, nu <= photon_max``."""
    idxs = hierarchy_indices(photon_max)
    pos = {idx: i for i, idx in enumerate(idxs)}
    M = np.zeros((len(idxs), len(idxs)), complex)
    for i, idx in enumerate(idxs):
        for tgt, coef in regression_coefficients(idx, params):
            M[i, pos[tgt]] += coef
    return idxs, M


def solve_sensor(params: SystemParams, photon_max: int = 2,
                 h: HomodyneConfig | None = None) -> MomentTable:
    """Moments at any drive strength, to leading order in the coupling."""
    p = _resolve(params, h).rescaled()
    idxs, M = hierarchy_matrix(p, photon_max)
    free = [i for i, idx in enumerate(idxs) if idx != (0, 0, 0, 0)]
    one = idxs.index(MomentIndex(0, 0, 0, 0))
    A = M[np.ix_(free, free)]
    b = -M[free, one]
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SteadyStateError("singular sensor hierarchy") from exc
    entries = {MomentIndex(0, 0, 0, 0): 1.0 + 0j}
    entries.update({idxs[i]: v for i, v in zip(free, x)})
    return MomentTable(entries, params, 2 * photon_max + 2, "sensor")


# ---------------------------------------------------------------------------
# full master equation
# ---------------------------------------------------------------------------

def joint_ladder(n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """(sigma, a) on the emitter (x) Fock space."""
    sm = np.array([[0, 1], [0, 0]], complex)
    a = np.diag(np.sqrt(np.arange(1, n_max + 1)), 1).astype(complex)
    return np.kron(sm, np.eye(n_max + 1)), np.kron(np.eye(2), a)


def moment_operator(ops, idx: MomentIndex) -> np.ndarray:
    s, a = ops
    mp = np.linalg.matrix_power
    return (mp(s.conj().T, idx.m) @ mp(s, idx.n) @ mp(a.conj().T, idx.mu) @ mp(a, idx.nu))


def cascaded_coupling(params: SystemParams) -> float:
    """Effective coupling when the detector is a symmetric two-port filter fed
    by the whole emission (half its linewidth on each port)."""
    return math.sqrt(params.gamma_sigma * params.Gamma / 2)


def joint_operators(params: SystemParams, n_max: int, coupling: str = "sensor"):
    """Hamiltonian, collapse operators, and index of the detector click channel.

    ``sensor``: weakly coupled detector, ``H`` includes ``g (a^dag sigma + h.c.)``,
    collapse operators ``sqrt(gamma) sigma`` and ``sqrt(Gamma) a``.

    ``cascaded``: unidirectional feeding of a symmetric filter; the emitter
    output enters one port, clicks are counted on the other.  ``params.g`` is
    ignored and ``params.omega_a`` is interpreted relative to the effective
    coupling ``sqrt(gamma Gamma / 2)``.
    """
    s, a = joint_ladder(n_max)
    sd, ad = s.conj().T, a.conj().T
    W, gs, G = params.omega_sigma, params.gamma_sigma, params.Gamma
    H = W * (s + sd) + 1j * params.omega_a * (ad - a)
    if coupling == "sensor":
        H = H + params.g * (ad @ s + sd @ a)
        cops = [math.sqrt(gs) * s, math.sqrt(G) * a]
    elif coupling == "cascaded":
        k1 = k2 = G / 2
        geff = math.sqrt(gs * k1)
        H = H + 0.5 * geff * (ad @ s + sd @ a)
        cops = [1j * math.sqrt(gs) * s + math.sqrt(k1) * a, math.sqrt(k2) * a]
    else:
        raise ValueError(f"unknown coupling {coupling!r}")
    return H, cops, 1


def liouvillian(H: np.ndarray, cops) -> np.ndarray:
    """Column-stacking superoperator: ``vec(A X B) = (B^T kron A) vec(X)``."""
    d = H.shape[0]
    eye = np.eye(d)
    L = -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    for c in cops:
        cdc = c.conj().T @ c
        L += np.kron(c.conj(), c) - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye)
    return L


def _amplitude_scales(params: SystemParams, n_max: int, coupling: str) -> np.ndarray:
    """Typical amplitude of each basis state relative to the vacuum.

    Used as a diagonal similarity transform so that every unknown of the
    rescaled null-vector problem is of order one; without it fourth-order
    moments at weak drive sit far below double-precision resolution.
    """
    W, gs, G = params.omega_sigma, params.gamma_sigma, params.Gamma
    geff = params.g if coupling == "sensor" else cascaded_coupling(params)
    ls = min(1.0, 2 * W / gs) or 1.0
    la = min(1.0, 2 * (geff * ls + abs(params.omega_a)) / G) or 1.0
    w = np.array([ls ** s * la ** k for s in (0, 1) for k in range(n_max + 1)])
    return w


def liouvillian_steady_state(params: SystemParams, h: HomodyneConfig | None = None,
                             t: TruncationConfig | None = None,
                             coupling: str = "sensor") -> DensityOperator:
    """Null vector of the truncated master equation, normalised to unit trace."""
    t = t or TruncationConfig()
    validate(params, h, t).raise_if_invalid()
    p = params.rescaled()
    if h is not None:
        p = p.with_homodyne(h) if coupling == "sensor" else _cascaded_drive(p, h)
    H, cops, _ = joint_operators(p, t.n_max, coupling)
    L = liouvillian(H, cops)
    dim = H.shape[0]
    w = _amplitude_scales(p, t.n_max, coupling)
    dvec = np.kron(w, w)  # column stacking: index i + dim * j
    Ls = L * (dvec[None, :] / dvec[:, None])

    sv = np.linalg.svd(Ls, compute_uv=False)
    if sv[-2] <= 1e3 * np.finfo(float).eps * sv[0]:
        raise SteadyStateError("steady state is not unique")

    A = Ls.copy()
    trace_row = np.zeros(dim * dim, complex)
    diag = np.arange(dim) * (dim + 1)
    trace_row[diag] = dvec[diag]
    A[0] = trace_row  # row 0 is the vacuum population equation, redundant by trace conservation
    rhs = np.zeros(dim * dim, complex)
    rhs[0] = 1.0
    x = np.linalg.solve(A, rhs)
    rho = (dvec * x).reshape(dim, dim, order="F")
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real

    state = DensityOperator(rho, t.n_max, {"coupling": coupling, "params": p})
    pops = state.fock_populations()
    top = pops[-2:].sum()
    if top >= t.tol:
        raise TruncationError(f"population {top:.2e} in the top two Fock levels exceeds tol={t.tol}")
    return state


def _cascaded_drive(params: SystemParams, h: HomodyneConfig) -> SystemParams:
    from dataclasses import replace
    geff = cascaded_coupling(params)
    return replace(params, omega_a=geff * params.omega_sigma * h.mixing / params.gamma_sigma)


def liouvillian_moments(params: SystemParams, order_max: int, h: HomodyneConfig | None = None,
                        t: TruncationConfig | None = None, coupling: str = "sensor") -> MomentTable:
    state = liouvillian_steady_state(params, h, t, coupling)
    table = state.moments(order_max, params)
    return table


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

def gN_from_moments(table: MomentTable, N: int) -> float:
    """Zero-delay ``<a^dag^N a^N> / <a^dag a>^N``."""
    try:
        num = table[0, 0, N, N]
        n = table[0, 0, 1, 1]
    except KeyError as exc:
        raise ValueError(f"table lacks the order-{2 * N} moments") from exc
    if not n.real > 0:
        raise ValueError("detector population is zero")
    val = num / n ** N
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise ValueError(f"g^({N}) has an imaginary residue {val.imag:.3e}")
    return float(val.real)


def natural_scale(table: MomentTable, idx) -> float:
    """Magnitude a moment would have for uncorrelated fields,
    ``<sigma^dag sigma>^((m+n)/2) <a^dag a>^((mu+nu)/2)``."""
    m, n, mu, nu = idx
    ns = abs(table[1, 1, 0, 0])
    na = abs(table[0, 0, 1, 1]) if (0, 0, 1, 1) in table else 0.0
    return ns ** ((m + n) / 2) * na ** ((mu + nu) / 2)


def compare_tables(a: MomentTable, b: MomentTable, order_max: int) -> float:
    """Largest difference between two tables, each moment measured in units of
    its natural scale (well defined even where a moment vanishes)."""
    worst = 0.0
    for k in range(1, order_max + 1):
        for idx in indices_of_order(k):
            if idx not in a or idx not in b:
                continue
            s = natural_scale(b, idx)
            if s == 0:
                continue
            worst = max(worst, abs(a[idx] - b[idx]) / s)
    return worst
