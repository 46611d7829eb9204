"""Command line entry point: ``varac run|eval|grad-check --config FILE``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .errors import ContractViolation, DivergenceError, NonProperPolicyError


def _load(args) -> harness.ExperimentConfig:
    config = harness.ExperimentConfig.load(args.config)
    if getattr(args, "backend", None):
        config.backend = args.backend
    return config


def cmd_run(args) -> int:
    config = _load(args)
    output = args.output or config.output
    if not output:
        print("error: no output path (set \"output\" in the config or pass --output)", file=sys.stderr)
        return 2
    history = harness.run_training(config)
    harness.export_history(history, output)
    last = history.records[-1]
    print(f"episodes={last.episode} eta={last.eta:.6f} J={last.J_oracle:.6f} V={last.V_oracle:.6f} "
          f"grad_norm={last.grad_norm:.3g} critic_gap={last.critic_gap:.3g} -> {output}")
    return 0


def cmd_eval(args) -> int:
    doc = harness.sanitize(harness.eval_report(_load(args)))
    json.dump(doc, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def cmd_grad_check(args) -> int:
    report = harness.grad_check(_load(args))
    for line in report.lines():
        print(line)
    print("ALL PASS" if report.passed else "SOME CHECKS FAILED")
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varac", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log clamp events and progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, helptext in (("run", cmd_run, "train and write the history CSV"),
                                 ("eval", cmd_eval, "print the exact evaluation as JSON"),
                                 ("grad-check", cmd_grad_check, "verify gradients; exit 0 iff all pass")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--backend", choices=("numba", "numpy"), help="override the kernel backend")
        if name == "run":
            p.add_argument("--output", help="CSV path (overrides the config)")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, ContractViolation, DivergenceError, NonProperPolicyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
