"""Command-line front end.

Subcommands: simulate | estimate | band | select-bandwidth | study.
Configuration comes from YAML/JSON files merged onto the built-in defaults;
`--set key.path=value` overrides individual fields.  Exit codes: 0 ok,
1 validation, 2 numerical-oracle failure, 3 I/O.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from ouspec import __version__
from ouspec.config import (
    ConfigError,
    apply_overrides,
    build_grid,
    build_kernel,
    build_model,
    config_hash,
    default_config,
    load_config_file,
    resolve_theta,
    validate_config,
)
from ouspec.experiments import (
    StudySpec,
    run_study,
    spec_hash,
)
from ouspec.inference import KEstimate, confidence_band, monotonize, select_bandwidth
from ouspec.model import NumericsError
from ouspec.simulate import PathConfig, read_path_csv, simulate_path, stationary_sample, write_path_csv
from ouspec.spectral import SpectralConfig, build_ecf_cache
from ouspec.inference import estimate as run_estimate

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_ORACLE = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


# --- serialization -----------------------------------------------------------

def _meta_lines(meta: dict) -> list:
    return [f"# {k}={v}" for k, v in meta.items()]


def _fmt(v) -> str:
    return repr(float(v))


def write_estimate_file(path, est: KEstimate, chash: str, selector=None, fmt="csv"):
    payload = {
        "kind": "estimate",
        "config_hash": chash,
        "n": est.n,
        "h": est.h,
        "theta": est.theta,
        "quad_panels": est.quad_panels,
        "selector": None
        if selector is None
        else {
            "chosen": selector.chosen,
            "candidates": selector.candidates.tolist(),
            "distances": selector.distances.tolist(),
            "fallback_used": selector.fallback_used,
        },
        "x": est.x.tolist(),
        "khat": est.khat.tolist(),
        "sigma_hat": est.sigma_hat.tolist(),
        "diagnostics": est.diagnostics,
    }
    if fmt == "json":
        with open(path, "w") as f:
            json.dump(payload, f, indent=1)
            f.write("\n")
        return
    meta = {
        "kind": "estimate",
        "config_hash": chash,
        "n": est.n,
        "h": _fmt(est.h),
        "theta": _fmt(est.theta),
        "quad_panels": est.quad_panels,
        "clamp_fraction": _fmt(est.diagnostics.get("clamp_fraction", 0.0)),
        "unreliable": est.diagnostics.get("unreliable", False),
    }
    if selector is not None:
        meta["selector_chosen"] = _fmt(selector.chosen)
    lines = _meta_lines(meta)
    lines.append("x,khat,sigma_hat")
    for x, k, s in zip(est.x, est.khat, est.sigma_hat):
        lines.append(f"{_fmt(x)},{_fmt(k)},{_fmt(s)}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_estimate_file(path) -> dict:
    with open(path) as f:
        text = f.read()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        for key in ("x", "khat", "sigma_hat", "n", "h"):
            if key not in data:
                raise ConfigError(f"estimate file {path} is missing field {key!r}")
        return data
    meta = {}
    rows = []
    header = None
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key.strip()] = val.strip()
        elif header is None:
            header = line.split(",")
        else:
            rows.append([float(v) for v in line.split(",")])
    if header != ["x", "khat", "sigma_hat"] or "n" not in meta or "h" not in meta:
        raise ConfigError(f"{path} is not an estimate file")
    arr = np.asarray(rows)
    return {
        "config_hash": meta.get("config_hash", ""),
        "n": int(meta["n"]),
        "h": float(meta["h"]),
        "theta": float(meta.get("theta", "nan")),
        "quad_panels": int(meta.get("quad_panels", 0)),
        "x": arr[:, 0].tolist(),
        "khat": arr[:, 1].tolist(),
        "sigma_hat": arr[:, 2].tolist(),
        "diagnostics": {"unreliable": meta.get("unreliable", "False") == "True"},
    }


def write_band_file(path, bands, est_data: dict, chash: str, monotonized: bool, fmt="csv"):
    if fmt == "json":
        payload = {
            "kind": "band",
            "config_hash": chash,
            "n": est_data["n"],
            "h": est_data["h"],
            "monotonize": monotonized,
            "x": list(est_data["x"]),
            "khat": list(est_data["khat"]),
            "sigma_hat": list(est_data["sigma_hat"]),
            "bands": [],
        }
        for band, band_m in bands:
            entry = {
                "tau": band.tau,
                "q": band.q,
                "lower": band.lower.tolist(),
                "upper": band.upper.tolist(),
                "unreliable": band.unreliable,
            }
            if band_m is not None:
                entry["lower_monotone"] = band_m.lower.tolist()
                entry["upper_monotone"] = band_m.upper.tolist()
            payload["bands"].append(entry)
        with open(path, "w") as f:
            json.dump(payload, f, indent=1)
            f.write("\n")
        return
    meta = {
        "kind": "band",
        "config_hash": chash,
        "n": est_data["n"],
        "h": _fmt(est_data["h"]),
        "monotonize": monotonized,
    }
    lines = _meta_lines(meta)
    cols = "tau,q,x,khat,sigma_hat,lower,upper"
    if monotonized:
        cols += ",lower_monotone,upper_monotone"
    lines.append(cols)
    for band, band_m in bands:
        for i, x in enumerate(est_data["x"]):
            row = [
                _fmt(band.tau),
                _fmt(band.q),
                _fmt(x),
                _fmt(est_data["khat"][i]),
                _fmt(est_data["sigma_hat"][i]),
                _fmt(band.lower[i]),
                _fmt(band.upper[i]),
            ]
            if band_m is not None:
                row += [_fmt(band_m.lower[i]), _fmt(band_m.upper[i])]
            lines.append(",".join(row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_selection_file(path, sel, chash: str, fmt="csv"):
    if fmt == "json":
        payload = {
            "kind": "bandwidth-selection",
            "config_hash": chash,
            "pilot": sel.pilot,
            "J": sel.J,
            "kappa": sel.kappa,
            "chosen": sel.chosen,
            "fallback_used": sel.fallback_used,
            "candidates": sel.candidates.tolist(),
            "distances": sel.distances.tolist(),
        }
        with open(path, "w") as f:
            json.dump(payload, f, indent=1)
            f.write("\n")
        return
    meta = {
        "kind": "bandwidth-selection",
        "config_hash": chash,
        "pilot": _fmt(sel.pilot),
        "J": sel.J,
        "kappa": _fmt(sel.kappa),
        "chosen": _fmt(sel.chosen),
        "fallback_used": sel.fallback_used,
    }
    lines = _meta_lines(meta)
    lines.append("j,h,distance")
    for j, h in enumerate(sel.candidates, start=1):
        d = "" if j == 1 else _fmt(sel.distances[j - 2])
        lines.append(f"{j},{_fmt(h)},{d}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def _study_rows(kind: str, records: list, points=None) -> tuple:
    """Flatten study records to one CSV row per replication per point."""
    rows = []
    if kind == "normality":
        header = ["replication", "seed", "h", "x", "khat", "sigma_hat", "stat"]
        for rec in records:
            for i, _ in enumerate(rec["khat"]):
                rows.append(
                    [rec["replication"], rec["seed"], _fmt(rec["h"]),
                     _fmt(points[i]), _fmt(rec["khat"][i]), _fmt(rec["sigma_hat"][i]),
                     _fmt(rec["stat"][i])]
                )
    elif kind == "coverage":
        taus = sorted(
            float(k.split("inside_tau")[1]) for k in records[0] if k.startswith("inside_tau")
        )
        header = ["replication", "seed", "h", "x", "khat", "sigma_hat"]
        for tau in taus:
            header += [f"inside_tau{tau}", f"width_tau{tau}"]
        for rec in records:
            for i, _ in enumerate(rec["khat"]):
                row = [rec["replication"], rec["seed"], _fmt(rec["h"]), _fmt(points[i]),
                       _fmt(rec["khat"][i]), _fmt(rec["sigma_hat"][i])]
                for tau in taus:
                    row += [int(rec[f"inside_tau{tau}"][i]), _fmt(rec[f"width_tau{tau}"][i])]
                rows.append(row)
    elif kind == "bandwidth-diagnostic":
        header = ["replication", "seed", "j", "h", "distance", "error", "chosen"]
        for rec in records:
            for j, h in enumerate(rec["candidates"], start=1):
                d = "" if j == 1 else _fmt(rec["distances"][j - 2])
                rows.append(
                    [rec["replication"], rec["seed"], j, _fmt(h), d,
                     _fmt(rec["errors"][j - 1]), int(j == rec["chosen_index"] + 1)]
                )
    elif kind == "consistency":
        header = ["replication", "seed", "h_small", "err_small", "h_large", "err_large"]
        for rec in records:
            rows.append(
                [rec["replication"], rec["seed"], _fmt(rec["h_small"]),
                 _fmt(rec["err_small"]), _fmt(rec["h_large"]), _fmt(rec["err_large"])]
            )
    else:  # oracle
        header = ["name", "measured", "threshold", "passed"]
        for rec in records:
            rows.append([rec["name"], _fmt(rec["measured"]), _fmt(rec["threshold"]),
                         int(rec["passed"])])
    return header, rows


# --- subcommands -------------------------------------------------------------

def _resolved_config(args) -> dict:
    cfg = load_config_file(args.config) if args.config else {}
    cfg = apply_overrides(cfg, args.set)
    return validate_config(cfg)


def _spectral_config(cfg, h, n, design_points):
    return SpectralConfig(
        h=h,
        theta=resolve_theta(cfg, n),
        kernel=build_kernel(cfg),
        quad_panels=int(cfg["spectral"]["quad_panels"]),
        design_points=design_points,
    )


def _simulate_from_config(cfg):
    model = build_model(cfg)
    s = cfg["sampling"]
    if s["burn_in"] is None:
        return model, stationary_sample(model, int(s["n"]), float(s["delta"]), int(s["seed"]))
    pc = PathConfig(
        n=int(s["n"]),
        delta=float(s["delta"]),
        seed=int(s["seed"]),
        burn_in_time=float(s["burn_in"]),
        x0=model.stationary_mean,
    )
    return model, simulate_path(model, pc)


def cmd_simulate(args) -> int:
    cfg = _resolved_config(args)
    chash = config_hash(cfg)
    _, sample = _simulate_from_config(cfg)
    out = args.out or cfg["output"]["path"] or f"path_seed{sample.seed}_{chash}.csv"
    write_path_csv(sample, out, extra_meta={"model_hash": chash})
    print(f"wrote {sample.n} observations to {out}")
    return EXIT_OK


def _fit_from_path(cfg, sample):
    """Shared by estimate/select-bandwidth: selector when h is unset."""
    grid = build_grid(cfg)
    sp = cfg["spectral"]
    sel = None
    if sp["h"] is None:
        base = _spectral_config(cfg, float(sp["selector"]["pilot"]), sample.n, grid)
        sel = select_bandwidth(
            sample,
            base,
            pilot=float(sp["selector"]["pilot"]),
            J=int(sp["selector"]["J"]),
            kappa=float(sp["selector"]["kappa"]),
        )
        h = sel.chosen
    else:
        h = float(sp["h"])
    return _spectral_config(cfg, h, sample.n, grid), sel


def cmd_estimate(args) -> int:
    cfg = _resolved_config(args)
    chash = config_hash(cfg)
    sample, _ = read_path_csv(args.path)
    scfg, sel = _fit_from_path(cfg, sample)
    est = run_estimate(sample, scfg)
    fmt = args.format or cfg["output"]["format"]
    out = args.out or cfg["output"]["path"] or f"estimate_seed{sample.seed}_{chash}.{fmt}"
    write_estimate_file(out, est, chash, selector=sel, fmt=fmt)
    print(f"wrote estimate (h={est.h:g}) to {out}")
    return EXIT_OK


def cmd_band(args) -> int:
    cfg = _resolved_config(args)
    chash = config_hash(cfg)
    data = read_estimate_file(args.estimate)
    est = KEstimate(
        x=np.asarray(data["x"]),
        khat=np.asarray(data["khat"]),
        sigma_hat=np.asarray(data["sigma_hat"]),
        n=int(data["n"]),
        h=float(data["h"]),
        theta=float(data.get("theta") or 1.0),
        quad_panels=int(data.get("quad_panels") or 256),
        diagnostics=data.get("diagnostics", {}),
    )
    mono = bool(cfg["inference"]["monotonize"])
    bands = []
    for tau in cfg["inference"]["tau"]:
        band = confidence_band(est, float(tau))
        bands.append((band, monotonize(band) if mono else None))
    fmt = args.format or cfg["output"]["format"]
    out = args.out or cfg["output"]["path"] or f"band_{chash}.{fmt}"
    write_band_file(out, bands, data, chash, mono, fmt=fmt)
    print(f"wrote {len(bands)} band(s) to {out}")
    return EXIT_OK


def cmd_select_bandwidth(args) -> int:
    cfg = _resolved_config(args)
    chash = config_hash(cfg)
    sample, _ = read_path_csv(args.path)
    grid = build_grid(cfg)
    sp = cfg["spectral"]
    base = _spectral_config(cfg, float(sp["selector"]["pilot"]), sample.n, grid)
    sel = select_bandwidth(
        sample,
        base,
        pilot=float(sp["selector"]["pilot"]),
        J=int(sp["selector"]["J"]),
        kappa=float(sp["selector"]["kappa"]),
    )
    fmt = args.format or cfg["output"]["format"]
    out = args.out or cfg["output"]["path"] or f"selection_seed{sample.seed}_{chash}.{fmt}"
    write_selection_file(out, sel, chash, fmt=fmt)
    print(f"selected h={sel.chosen:g} (fallback={sel.fallback_used}); wrote {out}")
    return EXIT_OK


_DEFAULT_REPLICATIONS = {
    "normality": 1000,
    "coverage": 500,
    "bandwidth-diagnostic": 5,
    "consistency": 100,
    "oracle": 1,
}


def cmd_study(args) -> int:
    import os

    cfg = _resolved_config(args)
    kind = args.kind or cfg["study"]["kind"]
    if kind is None:
        raise ConfigError("study kind required (--kind or study.kind)")
    if kind not in _DEFAULT_REPLICATIONS:
        raise ConfigError(
            f"unknown study kind {kind!r}; expected one of {tuple(_DEFAULT_REPLICATIONS)}"
        )
    reps = args.replications or cfg["study"]["replications"] or _DEFAULT_REPLICATIONS[kind]
    spec = StudySpec(
        model=build_model(cfg),
        kind=kind,
        n=int(cfg["sampling"]["n"]),
        delta=float(cfg["sampling"]["delta"]),
        grid=build_grid(cfg),
        kernel=build_kernel(cfg),
        h=None if cfg["spectral"]["h"] is None else float(cfg["spectral"]["h"]),
        pilot=float(cfg["spectral"]["selector"]["pilot"]),
        J=int(cfg["spectral"]["selector"]["J"]),
        kappa=float(cfg["spectral"]["selector"]["kappa"]),
        theta_c=float(cfg["spectral"]["theta_c"]),
        quad_panels=int(cfg["spectral"]["quad_panels"]),
        replications=int(reps),
        base_seed=int(cfg["sampling"]["seed"]),
        points=tuple(float(p) for p in cfg["study"]["points"]),
        taus=tuple(float(t) for t in cfg["inference"]["tau"]),
        workers=int(cfg["study"]["workers"]),
    )
    result = run_study(spec)
    tag = f"{kind}_seed{spec.base_seed}_{spec_hash(spec)}"
    out_dir = args.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    if kind == "oracle":
        records = result.summary["results"]
    else:
        records = result.records
    points = list(spec.points) if kind == "normality" else spec.grid.tolist()
    header, rows = _study_rows(kind, records, points)
    csv_path = os.path.join(out_dir, f"{tag}.records.csv")
    with open(csv_path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(str(v) for v in row) + "\n")
    json_path = os.path.join(out_dir, f"{tag}.summary.json")
    with open(json_path, "w") as f:
        json.dump(result.summary, f, indent=1)
        f.write("\n")
    print(f"wrote {csv_path} and {json_path}")
    if kind == "oracle" and not result.passed:
        print("oracle suite FAILED", file=sys.stderr)
        return EXIT_ORACLE
    if kind == "normality" and not result.passed:
        print("normality study: too many degenerate replications", file=sys.stderr)
        return EXIT_ORACLE
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="ouspec", description=__doc__)
    parser.add_argument("--version", action="version", version=f"ouspec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML/JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field (repeatable)")
        p.add_argument("--out", help="output file path")
        p.add_argument("--format", choices=("csv", "json"), help="output format")

    p = sub.add_parser("simulate", help="simulate a path and write it as CSV")
    common(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate the tail-mass function from a path file")
    common(p)
    p.add_argument("--path", required=True, help="input path CSV")
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("band", help="build confidence bands from an estimate file")
    common(p)
    p.add_argument("--estimate", required=True, help="input estimate file")
    p.set_defaults(fn=cmd_band)

    p = sub.add_parser("select-bandwidth", help="run the bandwidth selector on a path file")
    common(p)
    p.add_argument("--path", required=True, help="input path CSV")
    p.set_defaults(fn=cmd_select_bandwidth)

    p = sub.add_parser("study", help="run a Monte Carlo study")
    common(p)
    p.add_argument("--kind", help="study kind")
    p.add_argument("--replications", type=int, help="number of replications")
    p.add_argument("--out-dir", help="directory for study outputs")
    p.set_defaults(fn=cmd_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"ouspec: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"ouspec: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericsError as exc:
        print(f"ouspec: numerical failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except OSError as exc:
        print(f"ouspec: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
