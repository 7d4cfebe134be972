"""Command-line front door: config in, CSV artifacts and a manifest out.

Exit codes: 0 success, 1 scientific failure (conditional-descent violation,
gradient-check failure, training divergence, runtime precondition), 2 usage
error (bad flags, missing or invalid config, unknown keys, missing seed).
Every error line goes to stderr prefixed with "ERROR:". Each run writes a
manifest JSON carrying the fully resolved configuration, the seed, and
sha256 checksums of every artifact, sufficient to re-run it exactly.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from enfold import grad, harness, unfold
from enfold.energy import BetaMode, EnergyConfig
from enfold.harness import ExperimentKind, ExperimentSpec
from enfold.numerics import RngStream

__all__ = ["main"]

_EXPERIMENT_COMMANDS = {
    "aim-trace": ExperimentKind.AIM_TRACE,
    "raster-s": ExperimentKind.RASTER_S,
    "raster-t": ExperimentKind.RASTER_T,
    "energy-curves": ExperimentKind.ENERGY_CURVES,
    "audit": ExperimentKind.DESCENT_AUDIT,
}

_GRAD_CHECK_DEFAULTS = {
    "tol": 1e-4, "depth": 2, "d": 6, "n": 5, "scale": 0.5,
    "use_relu": True, "layernorm": False, "h": 1e-5,
}

_TRAIN_DEFAULTS = {
    "depth": 2, "d": 8, "n": 8, "steps": 200, "learning_rate": 0.01,
    "batch": 4, "dataset_size": 32, "scale": 0.02,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"ERROR: {message}", file=sys.stderr)
        raise SystemExit(2)


def _build_parser() -> _Parser:
    parser = _Parser(prog="enfold", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in [*_EXPERIMENT_COMMANDS, "grad-check", "train"]:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True)
        cmd.add_argument("--out", default=".")
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--grid", type=int, default=None)
        cmd.add_argument("--quiet", action="store_true")
    return parser


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(cfg) - {"version", "seed", "params"}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    if cfg.get("version") != 1:
        raise UsageError("config must declare \"version\": 1")
    if "params" in cfg and not isinstance(cfg["params"], dict):
        raise UsageError("config params must be an object")
    return cfg


def _resolve_seed(cli_seed, cfg: dict) -> int:
    if cli_seed is not None:
        return int(cli_seed)
    if "seed" in cfg:
        return int(cfg["seed"])
    raise UsageError("no seed given: pass --seed or put \"seed\" in the config")


def _merge_defaults(defaults: dict, overrides: dict) -> dict:
    merged = dict(defaults)
    for key, value in overrides.items():
        if key not in merged:
            raise UsageError(f"unknown parameter {key!r}")
        merged[key] = value
    return merged


def _sha256(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def _write_manifest(out_dir: Path, subcommand: str, seed: int, params: dict,
                    outputs: dict, summary: dict) -> Path:
    manifest = {
        "version": 1,
        "subcommand": subcommand,
        "seed": seed,
        "config": {"version": 1, "seed": seed, "params": params},
        "outputs": outputs,
        "summary": summary,
    }
    path = out_dir / "manifest.json"
    path.write_bytes((json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode("utf-8"))
    return path


def _emit(out_dir: Path, name: str, data: bytes, outputs: dict, quiet: bool) -> None:
    path = out_dir / name
    path.write_bytes(data)
    outputs[name] = _sha256(data)
    if not quiet:
        print(f"wrote {path}")


def _run_experiment(args, kind: ExperimentKind, seed: int, params: dict) -> int:
    if args.grid is not None:
        if kind not in (ExperimentKind.RASTER_S, ExperimentKind.RASTER_T):
            raise UsageError("--grid only applies to raster subcommands")
        params = {**params, "grid": int(args.grid)}
    try:
        spec = ExperimentSpec.resolve(kind, seed, params)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    table = harness.run_experiment(spec)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs: dict = {}
    name = kind.value + ".csv"
    _emit(out_dir, name, table.to_bytes(), outputs, args.quiet)

    summary: dict = {"rows": len(table.rows)}
    code = 0
    if kind is ExperimentKind.DESCENT_AUDIT:
        violations = int(table.column("violation").sum())
        summary["violations"] = violations
        summary["conditioned_steps"] = int(table.column("conditions_met").sum())
        if violations > 0:
            print(f"ERROR: {violations} conditional-descent violations", file=sys.stderr)
            code = 1
    _write_manifest(out_dir, args.subcommand, seed, spec.params, outputs, summary)
    if not args.quiet:
        print(f"wrote {out_dir / 'manifest.json'}")
    return code


def _grad_check_stack(params: dict, seed: int):
    weights = unfold.LayerWeights.random(
        int(params["d"]), alpha2=0.5, scale=float(params["scale"]),
        rng=RngStream(seed, 71))
    stack = unfold.StackConfig(
        depth=int(params["depth"]), weights=weights,
        energy=EnergyConfig(beta_mode=BetaMode.REWEIGHTED),
        use_relu=bool(params["use_relu"]), layernorm=bool(params["layernorm"]))
    head = grad.MetaHead(
        head_matrix=0.3 * RngStream(seed, 72).generator().standard_normal((int(params["d"]), 1)),
        loss_kind=grad.LossKind.SQUARED_ERROR)
    return stack, head


def _run_grad_check(args, seed: int, params: dict) -> int:
    params = _merge_defaults(_GRAD_CHECK_DEFAULTS, params)
    stack, head = _grad_check_stack(params, seed)
    report = grad.grad_check(stack, head, tol=float(params["tol"]),
                             n=int(params["n"]), seed=seed, h=float(params["h"]))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "max_rel_err": report.max_rel_err,
        "threshold": report.threshold,
        "rel_errors": report.rel_errors,
        "excluded": report.excluded,
        "passed": report.passed,
    }
    outputs: dict = {}
    _emit(out_dir, "grad_check.json",
          (json.dumps(payload, sort_keys=True, indent=2) + "\n").encode("utf-8"),
          outputs, args.quiet)
    _write_manifest(out_dir, args.subcommand, seed, params, outputs,
                    {"max_rel_err": report.max_rel_err, "passed": report.passed})
    if not args.quiet:
        print(f"wrote {out_dir / 'manifest.json'}")
    if not report.passed:
        print(f"ERROR: gradient check failed: max_rel_err {report.max_rel_err:.3e} "
              f"> {report.threshold:.3e}", file=sys.stderr)
        return 1
    return 0


def _run_train(args, seed: int, params: dict) -> int:
    params = _merge_defaults(_TRAIN_DEFAULTS, params)
    depth, d, n = int(params["depth"]), int(params["d"]), int(params["n"])
    weights = unfold.LayerWeights.random(d, alpha2=0.5, scale=float(params["scale"]),
                                         rng=RngStream(seed, 43))
    stack = unfold.StackConfig(depth=depth, weights=weights,
                               energy=EnergyConfig(beta_mode=BetaMode.UNIFORM))
    gen = RngStream(seed, 300).generator()
    size = int(params["dataset_size"])
    data = [(gen.standard_normal((n, d)) + (0.3 if i % 2 else -0.3), float(i % 2))
            for i in range(size)]
    head = grad.MetaHead(
        head_matrix=0.1 * RngStream(seed, 44).generator().standard_normal((d, 1)),
        loss_kind=grad.LossKind.LOGISTIC_BINARY)
    tspec = grad.TrainSpec(dataset_size=size, learning_rate=float(params["learning_rate"]),
                           steps=int(params["steps"]), batch=int(params["batch"]), seed=seed)
    try:
        result = grad.sgd_train(data, stack, head, tspec)
    except FloatingPointError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs: dict = {}
    curve = harness.CsvTable(header=["step", "loss"],
                             rows=[(i, v) for i, v in enumerate(result.losses)])
    _emit(out_dir, "loss_curve.csv", curve.to_bytes(), outputs, args.quiet)
    for name, mat in (("W_a.npy", result.weights.W_a_raw),
                      ("W_f.npy", result.weights.W_f_raw),
                      ("head.npy", result.head.head_matrix)):
        buf = _npy_bytes(mat)
        _emit(out_dir, name, buf, outputs, args.quiet)
    summary = {"initial_loss": result.losses[0] if result.losses else None,
               "final_loss": result.losses[-1] if result.losses else None}
    _write_manifest(out_dir, args.subcommand, seed, params, outputs, summary)
    if not args.quiet:
        print(f"wrote {out_dir / 'manifest.json'}")
    return 0


def _npy_bytes(arr: np.ndarray) -> bytes:
    import io

    buf = io.BytesIO()
    np.save(buf, arr)
    return buf.getvalue()


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        seed = _resolve_seed(args.seed, cfg)
        params = cfg.get("params", {})
        if args.subcommand in _EXPERIMENT_COMMANDS:
            return _run_experiment(args, _EXPERIMENT_COMMANDS[args.subcommand], seed, params)
        if args.subcommand == "grad-check":
            if args.grid is not None:
                raise UsageError("--grid only applies to raster subcommands")
            return _run_grad_check(args, seed, params)
        if args.grid is not None:
            raise UsageError("--grid only applies to raster subcommands")
        return _run_train(args, seed, params)
    except UsageError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FloatingPointError) as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
