"""Command-line front end: ``hcm analytic|simulate|sweep|reproduce|calibrate|replay``.

Exit status is 0 on success, 2 for invalid input (bad config, bad flags,
parameters outside the operating regime) and 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import analytic
from .config import config_from_dict, config_to_dict, load_config
from .engine import resolve, run_batch
from .errors import ConfigError, HcmError, InvalidArgument, RegimeError
from .experiments import (
    FIGURES,
    SWEEP_COLUMNS,
    SweepSpec,
    build_manifest,
    file_digest,
    predicted_fidelities,
    reproduce,
    run_sweep,
    write_csv,
    write_json,
)

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2
_VALIDATION_ERRORS = (ConfigError, InvalidArgument, RegimeError)


def _default_threads() -> int:
    raw = os.environ.get("HCM_THREADS")
    if raw is None or raw == "":
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError("HCM_THREADS", f"not an integer: {raw!r}") from None
    if n < 1:
        raise ConfigError("HCM_THREADS", "must be >= 1")
    return n


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hcm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True, config_required=True):
        if config:
            sp.add_argument("--config", required=config_required, help="JSON configuration file")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--shots", type=int, help="override raw shots per quadrature run")
        sp.add_argument("--threads", type=int, help="worker threads (default: $HCM_THREADS or 1)")
        sp.add_argument("--out", help="output directory")

    common(sub.add_parser("analytic", help="closed-form gains, moments and fidelity bounds"))
    sp = sub.add_parser("simulate", help="Monte Carlo run writing stats.json")
    common(sp)
    sp.add_argument("--samples", action="store_true", help="also write samples.csv")
    sp = sub.add_parser("sweep", help="sweep one parameter, one CSV row per value")
    common(sp, config_required=False)
    sp.add_argument("--spec", help="JSON sweep spec {parameter, values, base}")
    sp.add_argument("--param", help="parameter to sweep")
    sp.add_argument("--values", help="comma-separated values")
    sp = sub.add_parser("reproduce", help="emit data files for a figure")
    sp.add_argument("figure", choices=FIGURES)
    common(sp, config=False)
    common(sub.add_parser("calibrate", help="unity-gain filter calibration"))
    sp = sub.add_parser("replay", help="re-run a manifest and compare file digests")
    sp.add_argument("manifest")
    sp.add_argument("--threads", type=int)
    sp.add_argument("--out", help="output directory (default: a fresh 'replay' subdirectory)")
    return p


def _config_doc(args) -> dict:
    cfg = load_config(args.config)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.shots is not None:
        over["shots"] = args.shots
    doc = config_to_dict(cfg)
    doc.update(over)
    config_from_dict(doc)  # revalidate overrides
    return doc


# -- command bodies: (params, out, threads) -> list of written files ------------


def _analytic_report(cfg) -> dict:
    gains = analytic.derive_gains(cfg.n_clones, cfg.t_s)
    mom = analytic.clone_moments_ideal(gains, cfg.alpha_in)
    f_n = analytic.no_cloning_limit(cfg.n_clones)
    rep = {
        "gains": gains.as_dict(),
        "gains_squared": {"g_dla_sq": gains.g_dla**2, "g_nla_sq": gains.g_nla**2,
                          "g_nla_prime_sq": gains.g_nla_prime**2},
        "feedforward_scale": analytic.feedforward_scale(cfg.t_s),
        "clone_moments": {"mean_x": mom.mean.x, "mean_p": mom.mean.p,
                          "var_x": mom.variance_x, "var_p": mom.variance_p},
        "fidelity_unity": analytic.fidelity_unity(cfg.n_clones, cfg.t_s),
        "fidelity_unity_lossy": analytic.fidelity_unity_lossy(cfg.n_clones, cfg.t_s, cfg.eta_dh),
        "fidelity_max": analytic.fidelity_max(cfg.n_clones),
        "no_cloning_limit": float(f_n),
        "no_cloning_limit_fraction": f"{f_n.numerator}/{f_n.denominator}",
        "measure_and_prepare_limit": analytic.MEASURE_AND_PREPARE_LIMIT,
    }
    try:
        pipe = resolve(cfg)
        rep["filter"] = pipe.filter.as_dict()
        rep["success_probability"] = pipe.success_probability()
        rep["fidelity_filter"] = predicted_fidelities(cfg)
    except HcmError as exc:
        # zero-mean inputs cannot be calibrated; the closed forms above still apply
        rep["filter"] = None
        rep["success_probability"] = None
        rep["filter_error"] = str(exc)
    return rep


def _print_report(rep, prefix=""):
    for k, v in rep.items():
        if isinstance(v, dict):
            _print_report(v, prefix + k + ".")
        elif isinstance(v, float):
            print(f"{prefix}{k} = {v:.6f}")
        elif isinstance(v, list):
            print(f"{prefix}{k} = " + ", ".join(f"{x:.6f}" for x in v))
        elif v is not None:
            print(f"{prefix}{k} = {v}")


def _cmd_analytic(params, out, threads):
    cfg = config_from_dict(params["config"])
    rep = _analytic_report(cfg)
    _print_report(rep)
    return [write_json(out / "analytic.json", rep)] if out else []


def _cmd_simulate(params, out, threads):
    cfg = config_from_dict(params["config"])
    res = run_batch(cfg, threads=threads, keep_samples=params.get("samples", False))
    files = [write_json(out / "stats.json", res.stats_dict())]
    if params.get("samples"):
        rows = []
        for quad in ("x", "p"):
            arr = res.samples[quad]
            for i in range(arr.shape[0]):
                for j in range(arr.shape[1]):
                    rows.append({"quadrature": quad, "shot": i, "clone": j + 1, "value": arr[i, j]})
        files.append(write_csv(out / "samples.csv", ["quadrature", "shot", "clone", "value"], rows))
    print(f"acceptance_rate = {res.acceptance_rate:.6g}")
    for i, f in enumerate(res.fidelities):
        print(f"clone{i + 1}.fidelity = {f.value:.6f} +- {f.std_dev:.6f} ({f.n_samples} samples)")
    return files


def _cmd_sweep(params, out, threads):
    spec = SweepSpec(params["parameter"], tuple(params["values"]),
                     config_from_dict(params["config"]))
    rows = run_sweep(spec, threads=threads)
    for r in rows:
        if r["status"] == "ok":
            print(f"{spec.parameter}={r['value']:.6g}: acceptance {r['acceptance_rate']:.4g}, "
                  f"fidelity {r['fidelity_mean']:.4f}")
        else:
            print(f"{spec.parameter}={r['value']:.6g}: {r['error']}")
    return [write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)]


def _cmd_reproduce(params, out, threads):
    files, summary = reproduce(params["figure"], out, shots=params.get("shots"),
                               seed=params.get("seed", 0), threads=threads)
    print(json.dumps(json.loads((out / "summary.json").read_text()), indent=2))
    return files


def _cmd_calibrate(params, out, threads):
    cfg = config_from_dict(params["config"])
    cfg = replace(cfg, g_prime="calibrate")
    pipe = resolve(cfg)
    g_an = analytic.derive_gains(cfg.n_clones, cfg.t_s).g_nla_prime
    print(f"g_prime = {pipe.filter.g_prime:.9f}")
    print(f"g_prime_analytic = {g_an:.9f}")
    print(f"cutoff = {pipe.filter.cutoff:.6f}")
    print(f"beta = {pipe.beta:.6g}")
    print(f"predicted_acceptance = {pipe.success_probability():.6g}")
    patch = {"filter": {"g_prime": pipe.filter.g_prime, "beta": pipe.beta,
                        "cutoff_geometry": pipe.filter.geometry}}
    return [write_json(out / "calibration_patch.json", patch)]


_COMMANDS = {
    "analytic": _cmd_analytic,
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "reproduce": _cmd_reproduce,
    "calibrate": _cmd_calibrate,
}


def execute(command: str, params: dict, out: Path | None, threads: int) -> list[Path]:
    """Run one command and, when ``out`` is given, write ``manifest.json`` next to its files."""
    started = time.time()
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    files = _COMMANDS[command](params, out, threads)
    if out is not None:
        cfg = params.get("config")
        seed = cfg["seed"] if cfg else params.get("seed")
        manifest = build_manifest(command, params, files, started, config=cfg, seed=seed)
        files.append(write_json(out / "manifest.json", manifest))
    return files


def _params(args) -> dict:
    cmd = args.command
    if cmd == "reproduce":
        return {"figure": args.figure, "shots": args.shots,
                "seed": 0 if args.seed is None else args.seed}
    if cmd == "sweep":
        if args.spec:
            try:
                spec = json.loads(Path(args.spec).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError("--spec", str(exc)) from exc
            unknown = set(spec) - {"parameter", "values", "base"}
            if unknown:
                raise ConfigError(sorted(unknown)[0], "unknown key in sweep spec")
            for key in ("parameter", "values", "base"):
                if key not in spec:
                    raise ConfigError(key, "missing from sweep spec")
            doc = config_to_dict(config_from_dict(spec["base"]))
            param, values = spec["parameter"], spec["values"]
            if not isinstance(values, list):
                raise ConfigError("values", "must be a list")
        else:
            if not (args.config and args.param and args.values is not None):
                raise ConfigError("--spec", "give --spec, or --config with --param and --values")
            doc = _config_doc(args)
            param = args.param
            try:
                values = [float(v) for v in args.values.split(",") if v.strip()]
            except ValueError as exc:
                raise ConfigError("--values", str(exc)) from exc
        if args.seed is not None:
            doc["seed"] = args.seed
        if args.shots is not None:
            doc["shots"] = args.shots
        SweepSpec(param, tuple(values), config_from_dict(doc))
        return {"parameter": param, "values": values, "config": doc}
    params = {"config": _config_doc(args)}
    if cmd == "simulate":
        params["samples"] = bool(args.samples)
    return params


def _replay(args, threads) -> int:
    path = Path(args.manifest)
    try:
        man = json.loads(path.read_text())
        command, params, expected = man["command"], man["args"], man["files"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError("manifest", f"unreadable manifest: {exc}") from exc
    if command not in _COMMANDS:
        raise ConfigError("manifest.command", f"unknown command {command!r}")
    out = Path(args.out) if args.out else path.parent / "replay"
    files = execute(command, params, out, threads)
    got = {f.name: file_digest(f) for f in files if f.name != "manifest.json"}
    bad = sorted(k for k in expected if k != "manifest.json" and got.get(k) != expected[k])
    for name in sorted(expected):
        if name == "manifest.json":
            continue
        print(f"{name}: {'MISMATCH' if name in bad else 'identical'}")
    return EXIT_OK if not bad else EXIT_RUNTIME


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        threads = args.threads if args.threads is not None else _default_threads()
        if threads < 1:
            raise ConfigError("--threads", "must be >= 1")
        if args.command == "replay":
            return _replay(args, threads)
        params = _params(args)
        out = Path(args.out) if args.out else None
        if out is None and args.command in ("simulate", "sweep", "reproduce"):
            out = Path("results")
        if args.command == "calibrate" and out is None:
            out = Path(".")
        execute(args.command, params, out, threads)
    except _VALIDATION_ERRORS as exc:
        print(f"hcm: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (HcmError, OSError, ArithmeticError) as exc:
        print(f"hcm: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
