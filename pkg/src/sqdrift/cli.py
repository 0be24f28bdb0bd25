"""Command-line entry point: ``sqdrift run|sweep|bounds|oracle|inspect``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .pipeline import (
    SWEEP_AXES,
    ConfigError,
    RunConfig,
    StageError,
    config_from_manifest,
    load_hamiltonian,
    rows_to_csv,
    run_pipeline,
    sweep,
)


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def _load_config(path: str, args) -> RunConfig:
    doc = _read_json(path)
    cfg = config_from_manifest(doc) if "config" in doc and "artifacts" in doc else RunConfig.from_json(doc)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["master_seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    return replace(cfg, **overrides) if overrides else cfg


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _parse_values(text: str) -> list[float]:
    values = [float(v) for v in text.split(",") if v.strip()]
    return [int(v) if v.is_integer() else v for v in values]


def cmd_run(args) -> int:
    cfg = _load_config(args.config, args)
    manifest = run_pipeline(cfg, args.out or "run", base_dir=Path(args.config).resolve().parent)
    print(json.dumps({"out": args.out or "run", "energy": manifest["energy"],
                      "dimension": manifest["dimension"], "fci_energy": manifest["fci_energy"],
                      "n_circuits": manifest["n_circuits"]}))
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config, args)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    values = _parse_values(args.values)
    if args.axis == "subsample_fraction":
        values = [float(v) for v in values]
    rows = sweep(cfg, args.axis, values, seeds, base_dir=Path(args.config).resolve().parent)
    _emit(rows_to_csv(rows), args.out)
    return 0


def cmd_bounds(args) -> int:
    from .bounds import BoundParams, SpectralData, evaluate, grid

    doc = _read_json(args.params)
    params = BoundParams.from_json(doc["params"])
    if "spectral" in doc:
        spectral = SpectralData(**{k: v for k, v in doc["spectral"].items() if k != "delta"})
    elif "input" in doc:
        from .oracle import fci_solve

        spectral = fci_solve(load_hamiltonian(doc["input"], Path(args.params).resolve().parent)).spectrum
    else:
        raise ConfigError("bounds file needs 'spectral' data or an 'input' Hamiltonian")
    if "grid" in doc:
        _emit(rows_to_csv(grid(params, spectral, doc["grid"])), args.out)
    else:
        _emit(json.dumps(evaluate(params, spectral).to_json(), indent=1) + "\n", args.out)
    return 0


def cmd_oracle(args) -> int:
    from .hamiltonian import enumerate_terms
    from .oracle import channel_error, fci_solve

    cfg = _load_config(args.config, args)
    h = load_hamiltonian(cfg.input, Path(args.config).resolve().parent)
    if args.channel_steps:
        dist = enumerate_terms(h, cfg.threshold)
        rows = []
        for n in _parse_values(args.channel_steps):
            ce = channel_error(h, dist, int(n), cfg.n_rand, cfg.t, args.trials, cfg.master_seed + int(n))
            rows.append({"N": int(n), "empirical_error": ce.empirical_error,
                         "analytic_bound": ce.deterministic_bound, "realization_std": ce.realization_std})
        _emit(rows_to_csv(rows), args.out)
    else:
        _emit(json.dumps(fci_solve(h).to_json(), indent=1) + "\n", args.out)
    return 0


def cmd_inspect(args) -> int:
    doc = _read_json(args.manifest)
    keys = ("version", "n_circuits", "energy", "fci_energy", "dimension", "recombined_dimension", "system")
    for key in keys:
        print(f"{key}: {json.dumps(doc.get(key))}")
    print(f"master_seed: {doc.get('seeds', {}).get('master_seed')}")
    for name, digest in doc.get("artifacts", {}).items():
        print(f"artifact {name}: {digest[:16]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sqdrift", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--workers", type=int, help="parallel circuit workers")
        p.add_argument("--out", help="output directory or file")

    p = sub.add_parser("run", help="run the full pipeline from a JSON config or manifest")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="convergence sweep along one parameter, CSV output")
    p.add_argument("config")
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--seeds", help="comma-separated master seeds")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bounds", help="evaluate the bound chain from a JSON parameter file")
    p.add_argument("params")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bounds, seed=None, workers=None)

    p = sub.add_parser("oracle", help="exact FCI reference or channel-error sweep")
    p.add_argument("config")
    p.add_argument("--channel-steps", help="comma-separated N values for a channel-error CSV")
    p.add_argument("--trials", type=int, default=2000)
    common(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("inspect", help="summarise a run manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_inspect, seed=None, workers=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"sqdrift: error in stage {exc.stage}: {exc}", file=sys.stderr)
        for path in exc.artifacts:
            print(f"sqdrift: artifact written: {path}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        print(f"sqdrift: error in stage config: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
