"""Command-line front end: ``gadc <subcommand> [flags]``.

Exit codes: 0 success, 1 failed check, 2 bad input, 3 capacity exceeded,
4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import checks
from . import experiments as ex
from .diffusion import DiffusionConfig
from .errors import GadcError, InputError
from .io import ensure_dir, read_graph, read_matrix, write_matrix
from .perturb import GALLERY, generate_gallery

log = logging.getLogger("gadc")

KIND_FLAGS = {"sym": "symmetric", "row": "row_stochastic"}
BENCH_SCENARIOS = {"denoise-bench": "denoise", "attack-bench": "attack", "heterophily-sweep": "heterophily"}


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("gadc.presets").iterdir() if p.name.endswith(".json"))


def load_config(args) -> ex.ExperimentConfig:
    if args.config and args.preset:
        raise InputError("give either --config or --preset, not both")
    if args.preset:
        path = resources.files("gadc.presets") / f"{args.preset}.json"
        if not path.is_file():
            raise InputError(f"unknown preset {args.preset!r}; available: {', '.join(preset_names())}")
        return ex.ExperimentConfig.from_dict(json.loads(path.read_text()))
    if args.config:
        try:
            return ex.ExperimentConfig.load(args.config)
        except FileNotFoundError:
            raise InputError(f"{args.config}: no such file") from None
    return ex.ExperimentConfig()


def apply_overrides(cfg: ex.ExperimentConfig, args) -> ex.ExperimentConfig:
    diff = dict(cfg.diffusion)
    for flag, key in (("option", "option"), ("lam", "lam"), ("K", "K"), ("epsilon", "epsilon")):
        value = getattr(args, flag, None)
        if value is not None:
            diff[key] = value
    if getattr(args, "kind", None):
        diff["kind"] = KIND_FLAGS[args.kind]
    if getattr(args, "drop_low_order", False):
        diff["drop_low_order"] = True
    updates = {"diffusion": diff}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        updates["runs"] = args.runs
    return replace(cfg, **updates)


def write_json(path: Path, payload) -> None:
    path.write_text(ex.dumps(payload))


# ---------------------------------------------------------------- commands

def _diffuse_inputs(args, cfg: ex.ExperimentConfig):
    if args.gallery:
        g = generate_gallery(args.gallery)
        return g, np.eye(g.n)
    if args.edges or args.features:
        if not (args.edges and args.features):
            raise InputError("--edges and --features go together")
        x = read_matrix(args.features)
        return read_graph(args.edges, x.shape[0]), x
    g, ds = ex.load_dataset(cfg.data, cfg.seed)
    return g, ds.features


def cmd_diffuse(args) -> int:
    cfg = apply_overrides(load_config(args), args)
    dcfg = cfg.diffusion_config()
    g, x = _diffuse_inputs(args, cfg)
    f, report = ex.run_diffusion_report(g, x, dcfg)
    payload = {"diffusion": dcfg.to_dict(), "n": g.n, "d": int(x.shape[1]), "report": report.to_dict()}
    if args.out:
        out = ensure_dir(args.out)
        write_matrix(out / "features.bin", f)
        write_json(out / "report.json", payload)
    summary = {"beta": report.beta, "tau": report.tau, "n": g.n, "d": int(x.shape[1])}
    print(json.dumps(ex._jsonable(summary), sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    scenario = BENCH_SCENARIOS[args.command]
    cfg = load_config(args)
    if cfg.scenario != scenario:
        if args.config or args.preset:
            raise InputError(f"config scenario is {cfg.scenario!r}, {args.command} needs {scenario!r}")
        cfg = replace(cfg, scenario=scenario)
    cfg = apply_overrides(cfg, args)
    g, ds = ex.load_dataset(cfg.data, cfg.seed)
    reports = ex.BENCHES[scenario](cfg, g, ds, workers=args.workers)
    payload = ex.bench_payload(scenario, reports, cfg)
    if args.out:
        out = ensure_dir(args.out)
        write_json(out / "report.json", payload)
        (out / "summary.csv").write_text(ex.summary_csv(reports))
    for r in reports:
        print(f"{r.cell:>16s}  mean={r.mean:.4f}  std={r.std:.4f}  runs={len(r.accuracies)}")
    if "summary" in payload and "best_cell" in payload["summary"]:
        print(f"best cell: {payload['summary']['best_cell']}")
    return 0


def cmd_verify(args) -> int:
    results = []
    for check in checks.suite(args.level, seed=args.seed or 0):
        res = check()
        print(res.line(), flush=True)
        results.append(res)
    failed = [r.name for r in results if not r.passed]
    if args.out:
        out = ensure_dir(args.out)
        write_json(out / "verify.json", {"level": args.level, "checks": [r.to_dict() for r in results],
                                         "failed": failed})
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def cmd_presets(args) -> int:
    for name in preset_names():
        print(name)
    return 0


# ---------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser, diffusion: bool = True):
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--preset", help="name of a bundled preset (see `gadc presets`)")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--out", help="output directory")
    if diffusion:
        p.add_argument("--option", choices=["plain", "1", "2", "3", "4"])
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--K", type=int)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--kind", choices=sorted(KIND_FLAGS))
        p.add_argument("--drop-low-order", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gadc", description="Adversarial graph diffusion toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("diffuse", help="compute F = S X and a diffusion report")
    _common(p)
    p.add_argument("--edges", help="edge list (u v [w])")
    p.add_argument("--features", help="feature matrix (GADCMAT1 or CSV)")
    p.add_argument("--gallery", choices=GALLERY, help="built-in small graph with identity features")
    p.set_defaults(func=cmd_diffuse)

    for name, scenario in BENCH_SCENARIOS.items():
        p = sub.add_parser(name, help=f"run the {scenario} protocol")
        _common(p)
        p.add_argument("--runs", type=int)
        p.add_argument("--workers", type=int, default=1)
        p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="run the executable theory checks")
    p.add_argument("--level", choices=["fast", "full"], default="fast")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("presets", help="list bundled presets")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except GadcError as exc:
        print(f"gadc: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"gadc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
