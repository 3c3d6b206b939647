"""Experiment orchestration: subcommand dispatch, strict config handling,
deterministic seeding, and report/CSV/SVG persistence."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .biortho import certify_biorthogonality
from .cover import (
    build_cap_cover,
    build_plank_families,
    count_plank_overlap,
    covering_check,
    sample_difference_points,
    shell_classify,
    sort_into_plank,
)
from .lorentz import LorentzMap, neighborhood_rescaling_check
from .quadform import QuadraticSystem, certify_transversality, get_system
from .reporting import Report, write_csv, write_svg_loglog
from .smoothing import (
    AverageSpec,
    average_direct,
    fio_compare,
    make_annulus_field,
    oscillatory_integral,
    stationary_point,
)
from .sqfn.envelopes import (
    fit_loglog_slope,
    kakeya_check,
    measure_S,
    sq_ratio_ensemble,
)
from .sqfn.grid import plan_grid, set_fft_workers, synthesize_field
from .sqfn.tubes import tube_intersection

__all__ = ["main"]


class ConfigError(SystemExit):
    def __init__(self, message: str):
        super().__init__(f"config error: {message}")


def _parse_floats(text: str, field: str) -> list[float]:
    items = [s for s in str(text).split(",") if s.strip()]
    if not items:
        raise ConfigError(f"{field}: sweep list is empty")
    return [float(s) for s in items]


def _resolve_system(name_or_json: str) -> QuadraticSystem:
    if name_or_json.strip().startswith("{"):
        return QuadraticSystem.from_json(name_or_json, name="inline")
    return get_system(name_or_json)


def _load_config(path: str | None, allowed: dict) -> dict:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}")
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    for key in doc:
        if key not in allowed:
            raise ConfigError(
                f"{path}: unknown key {key!r}; allowed: {sorted(allowed)}")
    return doc


def _merged(args: argparse.Namespace, spec: dict) -> dict:
    """defaults < config file < explicit CLI flags, with strict keys."""
    cfg = _load_config(args.config, spec)
    out = {}
    for key, default in spec.items():
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            out[key] = cli_val
        elif key in cfg:
            out[key] = cfg[key]
        else:
            out[key] = default
    return out


def _emit(args, command: str, params: dict, measurements: dict, witnesses: dict,
          tables: dict | None = None, plots: list | None = None,
          started: float = 0.0) -> Report:
    report = Report(config={"command": command, **params},
                    measurements=measurements, witnesses=witnesses,
                    timing={"wall_seconds": time.time() - started},
                    version=__version__)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write(out / "report.json")
    for name, (header, rows) in (tables or {}).items():
        write_csv(out / f"{name}.csv", header, rows)
    for name, xs, ys, title, slope in plots or []:
        write_svg_loglog(out / f"{name}.svg", xs, ys, title, slope)
    return report


# ---------------------------------------------------------------------------
# subcommand runners

def run_certify(args) -> Report:
    t0 = time.time()
    p = _merged(args, {"system": "complex_parabola_rotated", "resolution": 10_000,
                       "refine_steps": 3})
    cert = certify_transversality(_resolve_system(p["system"]),
                                  int(p["resolution"]), int(p["refine_steps"]))
    meas = {"c_min": cert.c_min, "grid_spacing": cert.grid_spacing,
            "grid_lipschitz": cert.grid_lipschitz,
            "resolution": cert.resolution}
    wit = {"witness_nu": cert.witness_nu, "witness_subset": list(cert.witness_subset)}
    return _emit(args, "certify", p, meas, wit, started=t0)


def run_biortho(args) -> Report:
    t0 = time.time()
    p = _merged(args, {"system": "complex_parabola", "delta": "0.015625",
                       "tol": 1.0, "force": False, "max_triples": 10 ** 6})
    sys_ = _resolve_system(p["system"])
    deltas = _parse_floats(p["delta"], "delta")
    rows, meas, wit = [], {}, {}
    for dl in deltas:
        rep = certify_biorthogonality(sys_, dl, tolerance_multiplier=float(p["tol"]),
                                      max_triples=int(p["max_triples"]),
                                      force=bool(p["force"]))
        rows.append((dl, rep.worst_ratio, rep.count_admissible, rep.lattice_size))
        meas[f"worst_ratio@{dl}"] = rep.worst_ratio
        meas[f"count_admissible@{dl}"] = rep.count_admissible
        if rep.witness is not None:
            wit[f"witness@{dl}"] = {
                "xi1": rep.witness.xi1, "xi2": rep.witness.xi2,
                "xi3": rep.witness.xi3, "xi4": rep.witness.xi4}
    tables = {"ratio_vs_delta": (["delta", "worst_ratio", "count", "lattice"], rows)}
    return _emit(args, "biortho", p, meas, wit, tables, started=t0)


def run_cover(args) -> Report:
    t0 = time.time()
    p = _merged(args, {"action": args.action, "system": "parabola", "r": 16.0,
                       "sigma": "", "samples": 10_000, "D": 4.0, "E": 8.0,
                       "dilate": 10.0, "conical": True, "seed": 0})
    sys_ = _resolve_system(p["system"])
    r = float(p["r"])
    meas, wit, tables = {}, {}, {}
    if p["action"] == "build":
        caps = build_cap_cover(sys_, r, conical=bool(p["conical"]), D=float(p["D"]))
        meas["n_caps"] = len(caps)
        wit["bases"] = [c.frame.base for c in caps]
    elif p["action"] == "check":
        caps = build_cap_cover(sys_, r, conical=bool(p["conical"]), D=float(p["D"]))
        rep = covering_check(caps, sys_, r, samples=int(p["samples"]),
                             seed=int(p["seed"]))
        meas.update({"covered_fraction": rep.covered_fraction,
                     "max_multiplicity": rep.max_multiplicity})
    elif p["action"] == "overlap":
        fams = build_plank_families(sys_, r, E=float(p["E"]))
        caps = build_cap_cover(sys_, r, conical=True, D=float(p["D"]))
        rng = np.random.default_rng(int(p["seed"]))
        sigmas = ([float(s) for s in str(p["sigma"]).split(",") if s.strip()]
                  or sorted(fams, reverse=True))
        hist: dict = {}
        failures = 0
        for _ in range(int(p["samples"])):
            cap = caps[int(rng.integers(len(caps)))]
            om = sample_difference_points(cap, rng, 1)[0]
            sm = shell_classify(om, fams)
            if sm.sigma not in sigmas:
                continue
            cnt = count_plank_overlap(om, fams[sm.sigma], dilate=float(p["dilate"]))
            hist.setdefault(sm.sigma, []).append(cnt)
            try:
                sort_into_plank(om, cap.frame.base, fams[sm.sigma],
                                dilate=float(p["dilate"]))
            except Exception:
                failures += 1
        rows = []
        for s in sorted(hist, reverse=True):
            arr = np.array(hist[s])
            rows.append((s, len(arr), int(arr.max()), float(arr.mean())))
            meas[f"max_overlap@{s}"] = int(arr.max())
        meas["sort_failures"] = failures
        tables["overlap_histogram"] = (["sigma", "samples", "max", "mean"], rows)
    else:
        raise ConfigError(f"unknown cover action {p['action']!r}")
    return _emit(args, f"cover {p['action']}", p, meas, wit, tables, started=t0)


def run_lorentz(args) -> Report:
    t0 = time.time()
    p = _merged(args, {"system": "parabola", "s": 0.25, "xitau": "0.25",
                       "r": 64.0, "samples": 200, "seed": 0})
    sys_ = _resolve_system(p["system"])
    m = LorentzMap(sys=sys_, xi_tau=np.array(_parse_floats(p["xitau"], "xitau")),
                   s=float(p["s"]))
    rep = neighborhood_rescaling_check(m, float(p["r"]), samples=int(p["samples"]),
                                       seed=int(p["seed"]))
    meas = {"max_scaled_distance": rep.max_scaled_distance,
            "within_band": rep.within_band, "jacobian": rep.jacobian,
            "acceptance_C": rep.acceptance_C}
    return _emit(args, "lorentz check", p, meas, {}, started=t0)


def run_sqfn(args) -> Report:
    t0 = time.time()
    action = args.action
    if action == "ratio":
        p = _merged(args, {"action": action, "system": "parabola",
                           "delta": "0.0625,0.015625", "conical": False,
                           "ensemble": 25, "seed": 0})
        sys_ = _resolve_system(p["system"])
        deltas = _parse_floats(p["delta"], "delta")
        rows, maxima = [], []
        for dl in deltas:
            mx, _ = sq_ratio_ensemble(sys_, dl, conical=bool(p["conical"]),
                                      ensemble=int(p["ensemble"]), seed=int(p["seed"]))
            rows.append((dl, mx))
            maxima.append(mx)
        slope = (fit_loglog_slope([1 / d for d in deltas], maxima)
                 if len(deltas) > 1 else 0.0)
        meas = {f"max_ratio@{d}": m for d, m in zip(deltas, maxima)}
        meas["slope_vs_inverse_delta"] = slope
        tables = {"ratio_sweep": (["delta", "max_ratio"], rows)}
        plots = [("ratio_sweep", [1 / d for d in deltas], maxima,
                  "square-function ratio vs 1/delta", slope)]
        return _emit(args, "sqfn ratio", p, meas, {}, tables, plots, t0)
    if action == "kakeya":
        p = _merged(args, {"action": action, "system": "parabola", "r": "8",
                           "ensemble": 10, "seed": 0, "packets": 30})
        sys_ = _resolve_system(p["system"])
        rows, meas = [], {}
        for r in _parse_floats(p["r"], "r"):
            seeds = np.random.SeedSequence(int(p["seed"])).spawn(int(p["ensemble"]))
            worst = 0.0
            for ms in seeds:
                f = synthesize_field(sys_, r ** -2, True, packets=int(p["packets"]),
                                     seed=int(ms.generate_state(1)[0]))
                worst = max(worst, kakeya_check(f, r).ratio)
            rows.append((r, worst))
            meas[f"max_ratio@r={r}"] = worst
        tables = {"kakeya_sweep": (["r", "max_ratio"], rows)}
        return _emit(args, "sqfn kakeya", p, meas, {}, tables, started=t0)
    if action == "smeasure":
        p = _merged(args, {"action": action, "system": "parabola",
                           "pairs": "2:4,4:16", "ensemble": 4, "seed": 0})
        sys_ = _resolve_system(p["system"])
        rows, meas = [], {}
        for pair in str(p["pairs"]).split(","):
            r_s, R_s = pair.split(":")
            rep = measure_S(sys_, float(r_s), float(R_s),
                            ensemble=int(p["ensemble"]), seed=int(p["seed"]))
            rows.append((rep.r, rep.R, rep.S_emp))
            meas[f"S({r_s},{R_s})"] = rep.S_emp
        tables = {"two_scale": (["r", "R", "S_emp"], rows)}
        return _emit(args, "sqfn smeasure", p, meas, {}, tables, started=t0)
    if action == "tubes":
        p = _merged(args, {"action": action, "system": "parabola", "K": 4096.0,
                           "s": "0.0625,0.125,0.25", "method": "auto",
                           "samples": 10 ** 6, "seed": 0})
        sys_ = _resolve_system(p["system"])
        ss = _parse_floats(p["s"], "s")
        rows, vols = [], []
        for s in ss:
            xi1 = np.zeros(sys_.d)
            xi2 = np.zeros(sys_.d)
            xi1[0], xi2[0] = -s / 2, s / 2
            tv = tube_intersection(sys_, float(p["K"]), xi1, xi2,
                                   method=str(p["method"]),
                                   samples=int(p["samples"]), seed=int(p["seed"]))
            rows.append((s, tv.volume, tv.stderr, tv.method))
            vols.append(tv.volume)
        slope = fit_loglog_slope(ss, vols) if len(ss) > 1 else 0.0
        meas = {"separation_exponent": slope, "K": float(p["K"])}
        tables = {"tube_volumes": (["s", "volume", "stderr", "method"], rows)}
        plots = [("tube_volumes", ss, vols, "tube intersection volume vs separation",
                  slope)]
        return _emit(args, "sqfn tubes", p, meas, {}, tables, plots, t0)
    raise ConfigError(f"unknown sqfn action {action!r}")


def run_smoothing(args) -> Report:
    t0 = time.time()
    action = args.action
    spec = AverageSpec.complex_paraboloid()
    if action == "phase":
        p = _merged(args, {"action": action, "xi": "0.7,-0.4,1.0", "form": 0})
        pd = stationary_point(spec, int(p["form"]), _parse_floats(p["xi"], "xi"))
        meas = {"s_star": pd.s_star, "phase_value": pd.phase_value,
                "grad_norm": pd.grad_norm}
        return _emit(args, "smoothing phase", p, meas, {}, started=t0)
    if action == "osc":
        p = _merged(args, {"action": action, "t": "100,1000,10000",
                           "xi": "1.0,1.0", "form": 0, "scalar": True})
        sp = AverageSpec.scalar(2.0) if bool(p["scalar"]) else spec
        xi = _parse_floats(p["xi"], "xi")
        ts = _parse_floats(p["t"], "t")
        vals = [oscillatory_integral(sp, int(p["form"]), t, xi) for t in ts]
        mods = [abs(v) for v in vals]
        slope = fit_loglog_slope(ts, mods) if len(ts) > 1 else 0.0
        rows = [(t, m, np.angle(v)) for t, m, v in zip(ts, mods, vals)]
        meas = {"decay_slope": slope}
        tables = {"oscillatory_decay": (["t", "modulus", "arg"], rows)}
        plots = [("oscillatory_decay", ts, mods, "|I(t)| vs t", slope)]
        return _emit(args, "smoothing osc", p, meas, {}, tables, plots, t0)
    if action == "average":
        p = _merged(args, {"action": action, "nband": 8, "modes": 30,
                           "t": "1.0,1.0", "seed": 0})
        f = make_annulus_field(spec, int(p["nband"]), int(p["modes"]), int(p["seed"]))
        out = average_direct(spec, f, _parse_floats(p["t"], "t"))
        meas = {"input_l4": f.l4_4() ** 0.25, "output_l4": out.l4_4() ** 0.25}
        return _emit(args, "smoothing average", p, meas, {}, started=t0)
    if action == "fio":
        p = _merged(args, {"action": action, "nband": "8,16", "modes": 40,
                           "seed": 0})
        bands = [int(b) for b in _parse_floats(p["nband"], "nband")]
        rows, maxima = [], []
        for nb in bands:
            f = make_annulus_field(spec, nb, int(p["modes"]), int(p["seed"]))
            rep = fio_compare(spec, f, nb)
            rows.append((nb, rep.max_ratio, rep.min_ratio))
            maxima.append(rep.max_ratio)
        slope = fit_loglog_slope(bands, maxima) if len(bands) > 1 else 0.0
        meas = {"ratio_slope": slope}
        meas.update({f"max_ratio@N={nb}": m for nb, m in zip(bands, maxima)})
        tables = {"fio_sweep": (["N", "max_ratio", "min_ratio"], rows)}
        plots = [("fio_sweep", bands, maxima, "average/FIO-model ratio vs N", slope)]
        return _emit(args, "smoothing fio", p, meas, {}, tables, plots, t0)
    raise ConfigError(f"unknown smoothing action {action!r}")


# ---------------------------------------------------------------------------

def _add_common(sp, names):
    for name, kind in names.items():
        flag = "--" + name.replace("_", "-")
        if kind is bool:
            sp.add_argument(flag, action="store_const", const=True, default=None)
        else:
            sp.add_argument(flag, type=kind, default=None)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON config (strict keys)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--out", default="quadcone-out")
    parser = argparse.ArgumentParser(
        prog="quadcone",
        parents=[common],
        description="Desk-scale numerical checks for square-function and "
                    "wave-envelope geometry of quadratic manifolds and cones")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parser(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    sp = add_parser("certify")
    _add_common(sp, {"system": str, "resolution": int, "refine_steps": int})
    sp.set_defaults(func=run_certify)

    sp = add_parser("biortho")
    _add_common(sp, {"system": str, "delta": str, "tol": float,
                     "force": bool, "max_triples": int})
    sp.set_defaults(func=run_biortho)

    sp = add_parser("cover")
    sp.add_argument("action", choices=["build", "check", "overlap"])
    _add_common(sp, {"system": str, "r": float, "sigma": str, "samples": int,
                     "D": float, "E": float, "dilate": float, "conical": bool})
    sp.set_defaults(func=run_cover)

    sp = add_parser("lorentz")
    sp.add_argument("action", choices=["check"], nargs="?", default="check")
    _add_common(sp, {"system": str, "s": float, "xitau": str, "r": float,
                     "samples": int})
    sp.set_defaults(func=run_lorentz)

    sp = add_parser("sqfn")
    sp.add_argument("action", choices=["ratio", "kakeya", "smeasure", "tubes"])
    _add_common(sp, {"system": str, "delta": str, "conical": bool,
                     "ensemble": int, "r": str, "pairs": str, "K": float,
                     "s": str, "method": str, "samples": int, "packets": int})
    sp.set_defaults(func=run_sqfn)

    sp = add_parser("smoothing")
    sp.add_argument("action", choices=["phase", "osc", "average", "fio"])
    _add_common(sp, {"xi": str, "form": int, "t": str, "scalar": bool,
                     "nband": str, "modes": int})
    sp.set_defaults(func=run_smoothing)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        set_fft_workers(args.threads)
    report = args.func(args)
    print(json.dumps(report.payload()["measurements"], sort_keys=True, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
