"""Command-line experiment runner.

Each subcommand computes everything in memory, then writes CSV data files and
``summary.json`` into ``--out``.  Exit status: 0 all assertions pass, 1 an
assertion failed, 2 configuration or precondition error (nothing written),
3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__

from .conditions import (check_r1, check_rz, decade_grid, midpoints, r3_asymptote, r3_companion,
                         r3_delta_curve, spike_points, srt_ratio)
from .config import ExperimentConfig, load_config, parse_config
from .convolution import conv_table, renewal_fast, renewal_naive
from .errors import NumericalError, PreconditionError, ResourceError, SRTLabError
from .green import WeightSpec, check_g2, green_mass, green_ratio, regime_classifier
from .laws import build_law, build_norming, potter_envelope, write_csv
from .stable import (StableLaw, limit_constant_green, limit_constant_srt, sample_positive_stable,
                     stable_density)
from .tilting import gnedenko_sanity, lld_scan, tilt_identity_sides, truncated_lld_scan

SUBCOMMANDS = ("law", "renewal", "srt-scan", "conditions", "lld-scan", "tilt-check", "green", "oracle")


class Outcome:
    """Collected results: CSV writers, JSON results and named assertions."""

    def __init__(self):
        self.files: dict[str, callable] = {}
        self.results: dict = {}
        self.assertions: dict[str, bool] = {}

    def csv(self, name, writer):
        self.files[name] = writer

    def check(self, name, ok):
        self.assertions[name] = bool(ok)


def _renewal(law, xmax, method):
    return renewal_naive(law, xmax) if method == "naive" else renewal_fast(law, xmax)


def _decade_errors(curve, decades, target):
    errs = [abs(curve.at(int(d)) - target) / target for d in decades]
    return errs, all(b < a for a, b in zip(errs, errs[1:]))


# ---------------------------------------------------------------------------
# subcommands


def run_law(cfg: ExperimentConfig, out: Outcome):
    spec = cfg.tail_spec()
    xmax = cfg["renewal"]["xmax"]
    law = build_law(spec, xmax)
    mass = math.fsum(law.pmf.tolist()) + law.truncated_mass
    out.csv("law.csv", law.to_csv)
    out.results["law"] = {"spec": spec.to_config(), "xmin": law.xmin, "xmax": law.xmax,
                          "truncated_mass": law.truncated_mass, "aperiodic": law.aperiodic,
                          "mass_defect": abs(mass - 1)}
    out.check("mass_conserved", abs(mass - 1) <= 1e-12)
    out.check("aperiodic", law.aperiodic)
    scale = build_norming(spec)
    xs = decade_grid(cfg["grids"]["x_lo"], cfg["grids"]["x_hi"], cfg["grids"]["per_decade"])
    rep = potter_envelope(scale, 0.05, xs)
    inv = float(np.max(np.abs(scale.a(scale.A(xs.astype(float))) / xs - 1)))
    out.results["norming"] = {"eta": scale.eta, "potter_c": rep.c, "potter_violated": rep.violated,
                              "inverse_defect": inv}
    out.check("norming_inverse", inv < 1e-6)
    out.csv("norming.csv", lambda p: write_csv(p, ("x", "A"), xs, scale.A(xs.astype(float))))


def run_renewal(cfg, out):
    law = build_law(cfg.tail_spec(), cfg["renewal"]["xmax"])
    seq = _renewal(law, cfg["renewal"]["xmax"], cfg["renewal"]["method"])
    out.csv("renewal.csv", seq.to_csv)
    out.results["renewal"] = {"method": seq.method, "residual": seq.residual, "fallback": seq.fallback,
                              "xmax": seq.xmax}
    out.check("residual", seq.residual <= 1e-10)
    if seq.xmax <= 4096 and cfg["renewal"]["method"] == "fast":
        ref = renewal_naive(law, seq.xmax)
        d = float(np.abs(ref.g - seq.g).max())
        out.results["renewal"]["naive_max_abs"] = d
        out.check("matches_naive", d <= 1e-10)


def run_srt_scan(cfg, out):
    spec = cfg.tail_spec()
    xmax = cfg["renewal"]["xmax"]
    law = build_law(spec, xmax)
    seq = _renewal(law, xmax, cfg["renewal"]["method"])
    decades = [d for d in cfg["srt"]["decades"] if d <= xmax]
    xs = np.union1d(decade_grid(cfg["grids"]["x_lo"], min(cfg["grids"]["x_hi"], xmax), cfg["grids"]["per_decade"]),
                    np.asarray(decades, dtype=np.int64))
    curve = srt_ratio(law, seq, xs)
    const = limit_constant_srt(StableLaw(spec.alpha), detail=True)
    errs, dec = _decade_errors(curve, decades, const.value)
    out.csv("srt_ratio.csv", curve.to_csv)
    out.results["limit_constant"] = const.as_dict()
    out.results["renewal"] = {"method": seq.method, "residual": seq.residual}
    out.results["decades"] = [int(d) for d in decades]
    out.results["relative_errors"] = errs
    out.results["trend"] = curve.trend.as_dict()
    out.check("routes_agree", const.discrepancy <= 1e-6)
    out.check("final_error", errs[-1] <= cfg["srt"]["tolerance"])
    out.check("error_decreasing", dec)


def run_conditions(cfg, out):
    spec = cfg.tail_spec()
    c = cfg["conditions"]
    xmax = max(c["x"], cfg["renewal"]["xmax"]) if spec.family == "spike-perturbed" else c["x"]
    law = build_law(spec, xmax)
    xs = decade_grid(cfg["grids"]["x_lo"], min(cfg["grids"]["x_hi"], c["x"]), cfg["grids"]["per_decade"])
    rz = check_rz(law, xs)
    out.csv("rz.csv", rz.to_csv)
    nmax = c["n0"]
    r1 = check_r1(law, conv_table(law, nmax, int(xs.max())), c["n0"], xs)
    out.csv("r1.csv", r1.to_csv)
    r3 = r3_delta_curve(law, c["x"], cfg["grids"]["deltas"])
    out.csv("r3_delta.csv", r3.to_csv)
    scale = build_norming(spec)
    d0 = cfg["grids"]["deltas"][0]
    comp = r3_companion(law, scale, d0, c["x"])
    out.results.update({"rz": rz.summary(), "r1": r1.summary(), "r3_delta": r3.summary(),
                        "r3_values": dict(zip(map(str, (1 / r3.grid).tolist()), r3.values.tolist())),
                        "r3_companion_ratio": comp / r3.values[np.argmin(np.abs(1 / r3.grid - d0))]})
    if spec.family == "pure-power" and not spec.two_sided:
        out.results["r3_asymptote"] = {str(d): r3_asymptote(spec.alpha, d) for d in cfg["grids"]["deltas"]}
    if c["expect"] == "hold":
        out.check("rz_decreasing", rz.trend.decreasing)
        out.check("r1_decreasing", r1.trend.decreasing)
        out.check("r3_decreasing_in_delta", r3.trend.decreasing)
        return
    # expected failure: (rz) bounded below along the spikes, SRT ratio inflated there
    sp = spike_points(law)
    sp = sp[sp <= min(xmax, cfg["renewal"]["xmax"])][-(c["spikes"] + 1):]
    seq = _renewal(law, int(sp.max()), cfg["renewal"]["method"])
    rzs = check_rz(law, sp[1:])
    at = srt_ratio(law, seq, sp[1:])
    mid = srt_ratio(law, seq, midpoints(sp))
    ratio = at.values / mid.values
    out.csv("rz_spikes.csv", rzs.to_csv)
    out.csv("srt_spikes.csv", at.to_csv)
    out.csv("srt_midpoints.csv", mid.to_csv)
    out.results["spikes"] = {"x": sp[1:].tolist(), "rz": rzs.values.tolist(), "srt_at_spikes": at.values.tolist(),
                             "srt_at_midpoints": mid.values.tolist(), "ratio": ratio.tolist()}
    out.check("rz_bounded_below", rzs.values.min() >= c["rz_floor"])
    out.check("srt_spike_excess", ratio.min() >= c["spike_factor"])


def run_lld_scan(cfg, out):
    spec = cfg.tail_spec()
    scale = build_norming(spec)
    g = cfg["grids"]
    top = int(math.ceil(float(np.max(scale.a(np.asarray(g["n_range"], float)))) * max(g["theta_range"]))) + 2
    law = build_law(spec, max(top, 8))
    s1 = lld_scan(law, scale, g["n_range"], g["theta_range"])
    s2 = truncated_lld_scan(law, scale, cfg["lld"]["gamma"], g["n_range"], g["theta_range"])
    out.csv("lld_surface.csv", s1.to_csv)
    out.csv("truncated_surface.csv", s2.to_csv)
    out.results["lld"] = s1.summary()
    out.results["truncated"] = s2.summary()
    tol = cfg["lld"]["slope_tol"]
    out.check("lld_flat", s1.flat(tol))
    out.check("truncated_flat", s2.flat(tol))


def tilt_cases(cfg, law):
    t = cfg["tilt"]
    for n in t["n"]:
        for x in t["x"]:
            if n * float(law.tail_at(x)) >= 1:
                continue
            for gm in t["gamma"]:
                yield n, x, gm


def run_tilt_check(cfg, out):
    spec = cfg.tail_spec()
    t = cfg["tilt"]
    need = int(max(t["x"]) * max(1.0, max(t["gamma"]))) + 2
    law = build_law(spec, max(need, 8))
    rows = []
    for n, x, gm in tilt_cases(cfg, law):
        chk = tilt_identity_sides(law, n, x, gm)
        rows.append((n, x, gm, chk.left, chk.right, chk.discrepancy))
    if not rows:
        raise PreconditionError("no (n, x) pair satisfies n P(X > x) < 1")

    def write(path):
        with open(path, "w") as fh:
            fh.write("n,x,gamma,left,right,discrepancy\n")
            for n, x, gm, a, b, d in rows:
                fh.write(f"{n},{x},{gm!r},{a:.17g},{b:.17g},{d:.17g}\n")
    out.csv("tilt.csv", write)
    worst = max(r[-1] for r in rows)
    out.results["tilt"] = {"cases": len(rows), "max_discrepancy": worst}
    out.check("identity", worst <= t["tolerance"])


def run_green(cfg, out):
    spec = cfg.tail_spec()
    gcfg = cfg["green"]
    xmax = cfg["renewal"]["xmax"]
    law = build_law(spec, xmax)
    scale = build_norming(spec)
    stable = StableLaw(spec.alpha)
    w = WeightSpec(gcfg["beta"], gcfg["beta_l"])
    decades = [d for d in cfg["srt"]["decades"] if d <= xmax]
    if w.exact_integer:
        seq = _renewal(law, xmax, cfg["renewal"]["method"])
        gm = green_mass(law, w, None, seq, xmax)
    else:
        conv = conv_table(law, gcfg["nmax"], xmax)
        gm = green_mass(law, w, conv, None, xmax, scale, stable)
    xs = np.union1d(decade_grid(cfg["grids"]["x_lo"], min(cfg["grids"]["x_hi"], xmax), cfg["grids"]["per_decade"]),
                    np.asarray(decades, dtype=np.int64))
    curve = green_ratio(law, w, gm, xs, scale)
    out.csv("green_ratio.csv", curve.to_csv)
    out.csv("g2.csv", check_g2(law, w, xs, scale).to_csv)
    out.results["regime"] = regime_classifier(spec.alpha, w.beta)
    out.results["method"] = gm.method
    out.results["max_correction_share"] = gm.max_correction_share
    const = limit_constant_green(stable, w.beta, detail=True)
    out.results["limit_constant"] = const.as_dict()
    errs, dec = _decade_errors(curve, decades, const.value)
    out.results["relative_errors"] = errs
    out.check("routes_agree", const.discrepancy <= 1e-6)
    out.check("final_error", errs[-1] <= gcfg["tolerance"])
    out.check("error_decreasing", dec)


def run_oracle(cfg, out):
    spec = cfg.tail_spec()
    o = cfg["oracle"]
    if spec.two_sided:
        st = StableLaw(spec.alpha, 0.5)
        ys = np.asarray(o["y"])
        out.csv("density.csv", lambda p: write_csv(p, ("y", "f"), ys, stable_density(st, ys)))
        out.results["scale"] = st.scale
        return
    st = StableLaw(spec.alpha)
    ys = np.asarray(o["y"])
    f = np.asarray(stable_density(st, ys))
    out.csv("density.csv", lambda p: write_csv(p, ("y", "f"), ys, f))
    consts = {}
    for b in o["beta"]:
        c = limit_constant_green(st, b, detail=True) if b else limit_constant_srt(st, detail=True)
        consts[repr(b)] = c.as_dict()
        out.check(f"routes_agree_beta_{b:g}", c.discrepancy <= 1e-6)
    out.results["constants"] = consts
    y = sample_positive_stable(st, o["samples"], cfg.seed)
    lap = np.exp(-y)
    se = float(lap.std(ddof=1) / math.sqrt(y.size)) if y.size > 1 else math.inf
    mc = {"laplace_mean": float(lap.mean()), "laplace_exact": math.exp(-st.c_L), "laplace_se": se}
    v = st.alpha * y ** -st.alpha
    mc["srt_mean"] = float(v.mean())
    mc["srt_se"] = float(v.std(ddof=1) / math.sqrt(y.size)) if y.size > 1 else math.inf
    out.results["monte_carlo"] = mc
    out.csv("samples_head.csv", lambda p: write_csv(p, ("i", "y"), np.arange(min(1000, y.size)), y[:1000]))
    out.check("laplace_within_3se", abs(mc["laplace_mean"] - mc["laplace_exact"]) <= 3 * se)
    ref = consts["0.0"]["value"] if "0.0" in consts else limit_constant_srt(st)
    out.check("srt_within_3se", abs(mc["srt_mean"] - ref) <= 3 * mc["srt_se"])
    n = o["gnedenko_n"]
    scale = build_norming(spec)
    an = float(scale.a(float(n)))
    if an >= 1e3:
        law = build_law(spec, int(an * max(o["y"])) + 2)
        rep = gnedenko_sanity(law, scale, st, n, o["y"])
        out.results["gnedenko"] = rep.as_dict()
        out.check("gnedenko_5pct", float(rep.relative.max()) <= 0.05)


RUNNERS = {"law": run_law, "renewal": run_renewal, "srt-scan": run_srt_scan, "conditions": run_conditions,
           "lld-scan": run_lld_scan, "tilt-check": run_tilt_check, "green": run_green, "oracle": run_oracle}


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="srtlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"srtlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI file (defaults apply to missing keys)")
        sp.add_argument("--out", default=f"runs/{name}", help="output directory")
        sp.add_argument("--seed", type=int, help="overrides [run] seed")
        sp.add_argument("--assert", dest="check", action=argparse.BooleanOptionalAction, default=True,
                        help="exit 1 when an assertion fails (default on)")
    return ap


def versions() -> dict:
    return {"srtlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def run(command: str, cfg: ExperimentConfig, out_dir, check: bool = True) -> tuple[int, dict]:
    """Run one subcommand; returns (exit status, summary).  Writes nothing on error."""
    outcome = Outcome()
    try:
        RUNNERS[command](cfg, outcome)
    except (NumericalError, ResourceError) as e:
        return 3, {"error": str(e), "diagnostics": getattr(e, "diagnostics", {})}
    except SRTLabError as e:
        return 2, {"error": str(e)}
    summary = {"subcommand": command, "config": cfg.as_dict(), "config_sha256": cfg.sha256(),
               "seed": cfg.seed, "versions": versions(), "results": outcome.results,
               "assertions": outcome.assertions, "passed": all(outcome.assertions.values())}
    summary = _jsonable(summary)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, writer in outcome.files.items():
        writer(out / name)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    code = 0 if (summary["passed"] or not check) else 1
    return code, summary


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else parse_config("")
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
    except SRTLabError as e:
        print(f"srtlab: {e}", file=sys.stderr)
        return 2
    code, summary = run(args.command, cfg, args.out, args.check)
    if "error" in summary:
        print(f"srtlab: {summary['error']}", file=sys.stderr)
        if summary.get("diagnostics"):
            print(json.dumps(_jsonable(summary["diagnostics"]), sort_keys=True), file=sys.stderr)
        return code
    for name, ok in summary["assertions"].items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"wrote {args.out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
