"""Command-line entry point for the experiment harness.

Subcommands mirror the experiment kinds; `--config` supplies a JSON file
matching the harness config schema, and the common flags override its seed,
output directory, trial count, and thread count. `validate` and `haar-check`
run without a config file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import ConfigError, ExperimentConfig, run, write_outputs

_SUBCOMMANDS = {
    "simulate": "trajectory",
    "min-l": "min-l",
    "sweep-beta": "sweep-beta",
    "sweep-epsilon": "sweep-epsilon",
    "sweep-gamma-noise": "sweep-gamma-noise",
    "markov": "markov",
    "plan": "plan",
    "validate": "validate",
    "haar-check": "haar-check",
}

_NO_CONFIG_OK = {"validate", "haar-check"}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON experiment config")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", type=Path, help="override the output directory")
    parser.add_argument("--threads", type=int, help="worker threads for grid points")
    parser.add_argument("--trials", type=int, help="override the trial count")
    parser.add_argument("--samples", type=int,
                        help="sample count for validate/haar-check")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermalizer",
        description="Repeated-interaction thermalization experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        _add_common(sub.add_parser(name))
    return parser


def _load_config(args) -> ExperimentConfig:
    kind = _SUBCOMMANDS[args.command]
    if args.config is not None:
        with open(args.config) as fh:
            data = json.load(fh)
        data["kind"] = kind
        data.setdefault("name", Path(args.config).stem)
    else:
        if kind not in _NO_CONFIG_OK:
            raise SystemExit(f"{args.command}: --config is required")
        data = {"name": kind, "kind": kind}
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["out"] = str(args.out)
    if args.threads is not None:
        data["threads"] = args.threads
    if args.trials is not None:
        data["trials"] = args.trials
        data["max_trials"] = max(args.trials, data.get("max_trials", args.trials))
    if args.samples is not None:
        data["samples"] = args.samples
    return ExperimentConfig.from_dict(data)


def _summarize(cfg: ExperimentConfig, result, paths) -> None:
    print(f"{cfg.kind} '{cfg.name}': {len(result.records)} records "
          f"-> {paths['csv']}")
    if cfg.kind in ("validate", "haar-check"):
        for rec in result.records:
            status = "pass" if rec["passed"] else "FAIL"
            print(f"  [{status}] {rec['check']}: {rec['detail']}")
    if "fit" in result.meta:
        fit = result.meta["fit"]
        print(f"  power-law fit: slope {fit['slope']:.4f} "
              f"(r^2 {fit['r_squared']:.4f})")
    if cfg.kind == "plan":
        plan = result.meta["plan"]
        print(f"  alpha {plan['alpha']:.6g}, t {plan['t']:.6g}, "
              f"steps {plan['steps']}")
    if cfg.kind in ("sweep-beta", "sweep-gamma-noise", "min-l"):
        for rec in result.records:
            label = rec.get("beta") if cfg.kind == "sweep-beta" else \
                rec.get("sigma") if cfg.kind == "sweep-gamma-noise" else \
                f"alpha={rec['alpha']:.4g},t={rec['t']:.4g}"
            print(f"  grid {rec['grid_index']} ({label}): "
                  f"min_l={rec['min_l']} reached={rec['reached']}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        result = run(cfg)
    except ConfigError as exc:
        print(f"thermalizer: config error: {exc}", file=sys.stderr)
        return 2
    paths = write_outputs(cfg, result)
    if cfg.kind == "markov":
        out = Path(cfg.out)
        for idx, gen in result.meta.get("generators", {}).items():
            gen_path = out / f"{cfg.name}.generator{idx}.json"
            with open(gen_path, "w") as fh:
                json.dump(gen, fh, indent=2, sort_keys=True)
                fh.write("\n")
    _summarize(cfg, result, paths)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
