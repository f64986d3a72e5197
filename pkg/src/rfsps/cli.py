"""Command-line front end.

Every command writes CSV/JSON files into ``--out`` together with a
``manifest.json`` that records the exact command line and resolved
configuration.  ``rfsps replay <manifest>`` reruns it.

Exit codes: 0 success, 1 verification failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import shlex
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, acceptance, analytic, dynamics, moments, trajectories
from .model import HomodyneConfig, SystemParams, build_configs, read_config

FIGURES = ("2a", "2b", "3a", "3b", "3c", "3d", "4")
SWEEPS = ("gN_filtered", "gN_homodyne", "compensation", "rates", "spectrum", "g2tau")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _num(x) -> str:
    return repr(float(x))


def write_csv(path: Path, header, rows, comments=()):
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_num(v) if isinstance(v, (float, np.floating, int, np.integer)) else v
                        for v in r])
    return path


def parse_axis(spec: str) -> tuple[str, np.ndarray]:
    """``name=v1,v2,...`` or ``name=start:stop:num[:log]``."""
    if "=" not in spec:
        raise UsageError(f"malformed axis spec {spec!r}: expected name=values")
    name, body = spec.split("=", 1)
    body = body.strip()
    if not body:
        raise UsageError("empty grid")
    try:
        if ":" in body:
            parts = body.split(":")
            if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] not in ("log", "lin")):
                raise ValueError
            a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
            log = len(parts) == 4 and parts[3] == "log"
            vals = np.geomspace(a, b, n) if log else np.linspace(a, b, n)
        else:
            vals = np.array([_fraction(v) for v in body.split(",") if v.strip()])
    except ValueError:
        raise UsageError(f"malformed axis spec {spec!r}") from None
    if vals.size == 0:
        raise UsageError("empty grid")
    return name.strip(), vals


def _fraction(text: str) -> float:
    text = text.strip()
    if "/" in text:
        a, b = text.split("/")
        return float(a) / float(b)
    return float(text)


def pmap(fn, items, threads: int = 1):
    """Ordered map; uses a process pool when ``threads > 1``."""
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

def fig_2a(ctx):
    rows = []
    for W in np.geomspace(1e-3, 1e2, 121):
        d = analytic.decompose_g2(analytic.sigma_field_moments(W))
        rows.append((W, d.g2, d.base, d.i0, d.i1, d.i2))
    return [write_csv(ctx.out / "fig2a.csv", ["omega_sigma", "g2", "base", "I0", "I1", "I2"], rows,
                      ["emitter field decomposition, g2 = base + I0 + I1 + I2"])]


def _fig2b_row(G):
    p = SystemParams(omega_sigma=1e-3, g=1e-3, Gamma=G)
    d = analytic.decompose_g2(moments.solve_recursive(p, 4).detector_field(2))
    return (G, d.g2, d.base, d.i0, d.i1, d.i2)


def fig_2b(ctx):
    rows = pmap(_fig2b_row, np.geomspace(1e-2, 1e2, 121), ctx.threads)
    return [write_csv(ctx.out / "fig2b.csv", ["Gamma", "g2", "base", "I0", "I1", "I2"], rows,
                      ["detector field decomposition at omega_sigma=1e-3"])]


def _g2_map_row(args):
    G, mixing_kind, taus = args
    p = SystemParams(omega_sigma=1e-3, g=1e-3, Gamma=G)
    h = None
    if mixing_kind == "compensated":
        h = HomodyneConfig.from_mixing(analytic.compensation_condition(1.0, G).f_minus)
    return dynamics.g2_tau_filtered(p, h, None, taus).real


def _fig3_map(ctx, kind, name):
    n_G, n_tau = (15, 100) if ctx.quick else (60, 400)
    Gs = np.geomspace(1e-2, 1e2, n_G)
    taus = np.linspace(0, 10, n_tau)
    maps = pmap(_g2_map_row, [(G, kind, taus) for G in Gs], ctx.threads)
    rows = [(G, t, v) for G, vals in zip(Gs, maps) for t, v in zip(taus, vals)]
    return [write_csv(ctx.out / name, ["Gamma", "tau", "g2"], rows,
                      [f"g2(tau) of the detector field, {kind}"])]


def fig_3a(ctx):
    return _fig3_map(ctx, "plain", "fig3a.csv")


def fig_3b(ctx):
    return _fig3_map(ctx, "compensated", "fig3b.csv")


def fig_3c(ctx):
    G = acceptance.GAMMA_REF
    taus = np.linspace(0, 10, 401)
    plain = _g2_map_row((G, "plain", taus))
    comp = _g2_map_row((G, "compensated", taus))
    bare = dynamics.g2_tau_sigma_closed_form(1e-3, 1.0, taus)
    rows = zip(taus, plain, comp, bare)
    return [write_csv(ctx.out / "fig3c.csv", ["tau", "g2_plain", "g2_compensated", "g2_unfiltered"],
                      rows, [f"cuts at Gamma={G}"])]


def fig_3d(ctx):
    s = acceptance.MonteCarloSettings(seed=ctx.seed)
    if ctx.quick:
        s.clicks_plain = s.clicks_compensated = s.clicks_coherent = 5000
    mc = acceptance.run_monte_carlo(s)
    a, b, c = mc["compensated"]["cdf"], mc["plain"]["cdf"], mc["coherent"]["cdf"]
    rows = zip(a.x_grid, a.cdf, b.cdf, c.cdf, trajectories.coherent_cdf(a.x_grid))
    ctx.seeds = [s.seed, s.seed + 1, s.seed + 2]
    ctx.extra["durations"] = [mc[k]["train"].duration for k in ("plain", "compensated", "coherent")]
    return [write_csv(ctx.out / "fig3d.csv",
                      ["x", "cdf_compensated", "cdf_plain", "cdf_coherent", "cdf_coherent_exact"],
                      rows, ["waiting-time CDFs against I * delay"])]


def fig_4(ctx):
    rows = []
    for G in np.geomspace(1e-2, 1e2, 121):
        F = analytic.compensation_condition(1.0, G).f_minus
        rows.append((G, analytic.gN_filtered(2, 1.0, G), analytic.intensity_ratio(0.0, 1.0),
                     analytic.g2_homodyne(1.0, G, F), analytic.compensated_ratio(1.0, G, ctx.h.t)))
    return [write_csv(ctx.out / "fig4.csv",
                      ["Gamma", "g2_plain", "rate_plain", "g2_compensated", "rate_compensated"],
                      rows, ["rates in units of the unfiltered emission rate 4 omega^2 / gamma"])]


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def run_sweep(ctx, quantity, axis, order):
    name, vals = parse_axis(axis)
    p, h = ctx.p, ctx.h
    gs = p.gamma_sigma
    rows, header = [], None
    if quantity in ("gN_filtered", "gN_homodyne", "compensation", "rates") and name != "Gamma" \
            and not (quantity == "rates" and name == "omega_sigma") \
            and not (quantity == "gN_homodyne" and name == "f_prime"):
        raise UsageError(f"cannot sweep {quantity} over {name!r}")
    if quantity == "gN_filtered":
        header = ["Gamma", f"g{order}"]
        rows = [(G, analytic.gN_filtered(order, gs, G)) for G in vals]
    elif quantity == "gN_homodyne":
        header = [name, f"g{order}"]
        if name == "Gamma":
            rows = [(G, analytic.gN_homodyne(order, gs, G, h.mixing)) for G in vals]
        else:
            rows = [(F, analytic.gN_homodyne(order, gs, p.Gamma,
                                             HomodyneConfig(F, h.t, h.r).mixing)) for F in vals]
    elif quantity == "compensation":
        header = ["Gamma", "f_minus", "f_plus"]
        for G in vals:
            c = analytic.compensation_condition(gs, G)
            rows.append((G, c.f_minus, c.f_plus))
    elif quantity == "rates":
        header = [name, "I_rf", "I_int", "ratio"]
        for v in vals:
            q = SystemParams(**(p.as_dict() | {name: v}))
            rows.append((v, *analytic.emission_rates(q, h)))
    elif quantity == "spectrum":
        if name != "omega":
            raise UsageError("spectrum sweeps run over the axis 'omega'")
        res = None if ctx.args.resolution is None else ctx.args.resolution
        curve = dynamics.spectrum_numeric(p, res, vals)
        header = ["omega", "density"]
        rows = list(zip(curve.omega_grid, curve.density))
    elif quantity == "g2tau":
        if name != "tau":
            raise UsageError("g2tau sweeps run over the axis 'tau'")
        s = dynamics.g2_tau_filtered(p, h if h.mixing else None, ctx.t, vals)
        header = ["tau", "g2"]
        rows = list(zip(s.tau_grid, s.real))
    else:  # argparse restricts the choices
        raise UsageError(f"unknown quantity {quantity!r}")
    return [write_csv(ctx.out / f"sweep_{quantity}.csv", header, rows,
                      [f"params: {json.dumps(p.as_dict(), sort_keys=True)}",
                       f"mixing: {h.mixing!r}"])]


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

class Context:
    def __init__(self, args, p, h, t):
        self.args, self.p, self.h, self.t = args, p, h, t
        self.out = Path(args.out)
        self.quick = args.quick
        self.seed = args.seed
        self.threads = args.threads
        self.seeds = [args.seed]
        self.extra = {}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", help="key = value file with parameters")
    g.add_argument("--out", default="out", help="output directory (default: out)")
    g.add_argument("--seed", type=int, default=2024)
    g.add_argument("--threads", type=int, default=1)
    g.add_argument("--quick", action="store_true", help="reduced grids / skip Monte Carlo")
    pg = common.add_argument_group("parameters (override --config)")
    for flag, key, typ in (("--omega-sigma", "omega_sigma", float), ("--gamma-sigma", "gamma_sigma", float),
                           ("--Gamma", "Gamma", float), ("--g", "g", float), ("--f-prime", "f_prime", float),
                           ("--t", "t", float), ("--n-max", "n_max", int)):
        pg.add_argument(flag, dest=key, type=typ, default=None)
    pg.add_argument("--compensate", action="store_true",
                    help="set the mixing ratio to the lower root that cancels g2")

    ap = argparse.ArgumentParser(prog="rfsps", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="verb", required=True)
    f = sub.add_parser("figure", parents=[common], help="write the data behind a figure")
    f.add_argument("id", choices=FIGURES)
    s = sub.add_parser("sweep", parents=[common], help="evaluate a quantity on a grid")
    s.add_argument("quantity", choices=SWEEPS)
    s.add_argument("--axis", required=True, help="name=v1,v2,... or name=start:stop:num[:log]")
    s.add_argument("--N", dest="order", type=int, default=2)
    s.add_argument("--resolution", type=float, default=None)
    v = sub.add_parser("verify", parents=[common], help="run the acceptance criteria")
    v.add_argument("--only", default=None, help="comma-separated criteria, e.g. A1,A4")
    tr = sub.add_parser("trajectories", parents=[common], help="quantum-jump click trains")
    tr.add_argument("--clicks", type=int, default=20000)
    tr.add_argument("--batches", type=int, default=1)
    tr.add_argument("--window", type=float, default=0.5)
    sp = sub.add_parser("spectrum", parents=[common], help="emission spectrum")
    sp.add_argument("--resolution", type=float, default=None, help="detector width (default: none)")
    sp.add_argument("--span", type=float, default=20.0)
    sp.add_argument("--points", type=int, default=4001)
    rp = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    rp.add_argument("manifest")
    return ap


def resolve(args):
    values = read_config(args.config) if args.config else {}
    for key in ("omega_sigma", "gamma_sigma", "Gamma", "g", "f_prime", "t", "n_max"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    p, h, t = build_configs(values)
    if getattr(args, "compensate", False):
        F = analytic.compensation_condition(p.gamma_sigma, p.Gamma).f_minus
        h = HomodyneConfig.from_mixing(F, h.t)
    return p, h, t


def cmd_figure(ctx):
    return globals()[f"fig_{ctx.args.id}"](ctx)


def cmd_sweep(ctx):
    return run_sweep(ctx, ctx.args.quantity, ctx.args.axis, ctx.args.order)


def cmd_verify(ctx):
    only = set(ctx.args.only.split(",")) if ctx.args.only else None
    unknown = sorted((only or set()) - set(acceptance.CHECKS))
    if unknown:
        raise UsageError(f"unknown criteria: {', '.join(unknown)}")
    results = acceptance.run_all(quick=ctx.quick, only=only)
    for r in results:
        print(r.line())
    ctx.extra["results"] = [{"name": r.name, "passed": r.passed, "measured": str(r.measured),
                             "expected": str(r.expected), "seconds": r.seconds} for r in results]
    path = ctx.out / "verify.json"
    path.write_text(json.dumps(ctx.extra["results"], indent=1))
    ctx.failed = not all(r.passed for r in results)
    return [path]


def cmd_trajectories(ctx):
    p, h, t = ctx.p, ctx.h, ctx.t
    rate, g2 = trajectories.expected_rate(p, h, t)
    if not rate > 0:
        raise UsageError("zero click rate for these parameters")
    per = ctx.args.clicks / rate / ctx.args.batches
    seeds = [ctx.seed + i for i in range(ctx.args.batches)]
    trains = pmap(_one_train, [(p, h, t, per, s) for s in seeds], ctx.threads)
    train = trajectories.merge_trains(trains)
    est, err = trajectories.g2_zero_from_clicks(train, ctx.args.window) if len(train) else (math.nan, math.nan)
    outs = [ctx.out / "clicks.csv"]
    train.to_csv(outs[0])
    if len(train) >= 2:
        cdf = trajectories.waiting_time_cdf(train)
        outs.append(ctx.out / "cdf.csv")
        cdf.to_csv(outs[-1])
    summary = {"clicks": len(train), "duration": train.duration, "rate": train.rate,
               "rate_expected": rate, "g2_estimate": est, "g2_stderr": err, "g2_expected": g2}
    outs.append(ctx.out / "summary.json")
    outs[-1].write_text(json.dumps(summary, indent=1))
    ctx.seeds = seeds
    ctx.extra["durations"] = [tr.duration for tr in trains]
    print(json.dumps(summary))
    return outs


def _one_train(args):
    p, h, t, duration, seed = args
    return trajectories.simulate_clicks(p, h if h.mixing else None, t, duration, seed)


def cmd_spectrum(ctx):
    a = ctx.args
    om = np.linspace(-a.span, a.span, a.points)
    curve = dynamics.spectrum_numeric(ctx.p, a.resolution, om)
    path = ctx.out / "spectrum.csv"
    curve.to_csv(path)
    return [path]


def write_run_manifest(ctx, argv, outputs, wall):
    data = {
        "argv": list(argv),
        "command": "rfsps " + shlex.join(argv),
        "version": __version__,
        "config": {"params": ctx.p.as_dict(),
                   "homodyne": {"f_prime": ctx.h.f_prime, "t": ctx.h.t, "r": ctx.h.r},
                   "truncation": vars(ctx.t)},
        "seeds": ctx.seeds,
        "outputs": [str(Path(o).name) for o in outputs],
        "wall_clock_s": round(wall, 3),
    }
    if "durations" in ctx.extra:
        data["durations"] = ctx.extra["durations"]
    (ctx.out / "manifest.json").write_text(json.dumps(data, indent=1))


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.verb == "replay":
        try:
            rec = json.loads(Path(args.manifest).read_text())
        except (OSError, ValueError, KeyError) as exc:
            print(f"error: cannot read manifest: {exc}", file=sys.stderr)
            return 2
        return main(rec["argv"])
    t0 = time.perf_counter()
    try:
        p, h, t = resolve(args)
        ctx = Context(args, p, h, t)
        ctx.out.mkdir(parents=True, exist_ok=True)
        ctx.failed = False
        outputs = globals()[f"cmd_{args.verb}"](ctx)
    except (UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    write_run_manifest(ctx, argv, outputs, time.perf_counter() - t0)
    return 1 if ctx.failed else 0
