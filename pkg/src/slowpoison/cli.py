"""Command line front end: ``slowpoison run`` and ``slowpoison sweep``.

Flags mirror the experiment configuration; a JSON config file can seed the
values and explicit flags override it.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .harness import (
    DATASETS,
    SWEEP_AXES,
    ExperimentConfig,
    run_experiment,
    sweep,
)

_MODE_ALIASES = {"benign": "benign", "white": "white_box", "grey": "grey_box"}
_COST_ALIASES = {"grnb": "grnb", "influence": "influence_norm", "gradient": "gradient_norm"}


def _add_common_flags(p):
    p.add_argument("--dataset", choices=DATASETS)
    p.add_argument("--data-dir", dest="data_dir")
    p.add_argument("--sigma", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--poisons", dest="m_poison", type=int)
    p.add_argument("--mode", choices=sorted(_MODE_ALIASES))
    p.add_argument("--cost", choices=sorted(_COST_ALIASES))
    p.add_argument("--ignore-model-dep", dest="ignore_model_dep",
                   choices=("true", "false"))
    p.add_argument("--norm", choices=("l1", "linf"))
    p.add_argument("--radius", type=float)
    p.add_argument("--n-pgd", dest="n_pgd", type=int)
    p.add_argument("--n-requests", dest="n_requests", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", dest="base_seed", type=int)
    p.add_argument("--out", dest="output_path")
    p.add_argument("--config", dest="config_file",
                   help="JSON file with config values; flags override it")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="slowpoison",
        description="Certified-removal unlearning experiments with slow-down poisoning",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run one experiment (a set of seeded trials)")
    _add_common_flags(run_p)
    sweep_p = sub.add_parser("sweep", help="sweep one axis, benign vs attacked")
    _add_common_flags(sweep_p)
    sweep_p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated axis values")
    return parser


def config_from_args(args) -> ExperimentConfig:
    values = {}
    if args.config_file:
        with open(args.config_file) as fh:
            values.update(json.load(fh))
    budget_kwargs = {
        k: values.pop(k) for k in ("epsilon", "delta", "sigma", "lam")
        if k in values
    }
    config = ExperimentConfig(**values) if values or budget_kwargs else ExperimentConfig()
    if budget_kwargs:
        config = replace(config, budget=replace(config.budget, **budget_kwargs))

    overrides = {}
    for field_name in ("dataset", "data_dir", "m_poison", "radius", "n_pgd",
                       "n_requests", "trials", "base_seed", "output_path"):
        value = getattr(args, field_name, None)
        if value is not None:
            overrides[field_name] = value
    if args.mode is not None:
        overrides["mode"] = _MODE_ALIASES[args.mode]
    if args.cost is not None:
        overrides["cost_kind"] = _COST_ALIASES[args.cost]
    if args.ignore_model_dep is not None:
        overrides["ignore_model_dependence"] = args.ignore_model_dep == "true"
    if getattr(args, "norm", None) is not None:
        overrides["norm_p"] = args.norm
    if overrides:
        config = replace(config, **overrides)
    budget_overrides = {
        k: getattr(args, k) for k in ("epsilon", "delta", "sigma", "lam")
        if getattr(args, k, None) is not None
    }
    if budget_overrides:
        config = replace(config, budget=replace(config.budget, **budget_overrides))
    return config


def _parse_values(axis, text):
    items = [v.strip() for v in text.split(",") if v.strip()]
    if axis in ("sigma", "lambda", "radius"):
        return [float(v) for v in items]
    return items


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = config_from_args(args)
    if args.command == "run":
        report = run_experiment(config)
        print(json.dumps(report.summary, indent=2, sort_keys=True))
        return 0
    rows = sweep(config, args.axis, _parse_values(args.axis, args.values))
    header = f"{'value':>12} {'benign':>10} {'attack':>10} {'% down':>8}"
    print(header)
    for row in rows:
        print(
            f"{row['value']!s:>12} {row['benign_interval']:>10.4g} "
            f"{row['attack_interval']:>10.4g} {row['pct_reduction']:>8.4g}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
