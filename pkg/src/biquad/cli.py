"""Command-line front end: build, inspect, project, validate, bench, theorems.

Exit codes: 0 success, 1 validation failure, 2 usage or configuration error.
Every run prints a reproducibility header with the seed and config hash.
"""
from __future__ import annotations

import argparse
import json
import re
import sys

import numpy as np

from .bench import FunctionEnsemble, projection_error, theorem_suite
from .domains import Domain
from .optimizer import OptConfig
from .refquad import InnerProductSpec
from .rules import (RuleFormatError, RuleIntegrityError, build_rule,
                    config_hash, exactness_residual, load_rule, project,
                    save_rule)
from .objective import sigma_of_rule

DOMAINS = {
    "interval": Domain.interval,
    "triangle": Domain.triangle,
    "square": Domain.square,
    "disk": Domain.disk,
    "circle": Domain.circle,
}


class UsageError(Exception):
    pass


def _domain_from_flags(args) -> Domain:
    make = DOMAINS[args.domain]
    if args.domain == "interval":
        return make(args.interval[0], args.interval[1])
    return make()


def _ip_from_flags(args, domain) -> InnerProductSpec:
    if args.ip == "l2":
        return InnerProductSpec(domain)
    try:
        return InnerProductSpec(domain, sobolev_order=1, weight=args.h1_weight)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _opt_config(args) -> OptConfig:
    settings = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            settings.update(json.load(fh))
    if getattr(args, "starts", None) is not None:
        settings["n_starts"] = args.starts
    if getattr(args, "seed", None) is not None:
        settings["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        settings["threads"] = args.threads
    try:
        return OptConfig.from_dict(settings)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad optimizer configuration: {exc}") from exc


def _print_header(seed: int, chash: str) -> None:
    print(f"# seed={seed} config={chash}")


def _rule_row(rule) -> str:
    kappa = f"{rule.kappa_inf:.5e}" if rule.kappa_inf is not None else "n/a"
    return f"{rule.degree} {rule.dimension} {rule.sigma:.5f} {kappa}"


def cmd_build(args) -> int:
    domain = _domain_from_flags(args)
    ip = _ip_from_flags(args, domain)
    cfg = _opt_config(args)
    chash = config_hash(domain, args.degree, ip, cfg)
    _print_header(cfg.seed, chash)
    rule = build_rule(domain, args.degree, ip=ip, cfg=cfg)
    save_rule(rule, args.output)
    print(_rule_row(rule))
    print(f"# wrote {args.output}")
    return 0


def cmd_info(args) -> int:
    rule = load_rule(args.rule)
    prov = rule.provenance or {}
    _print_header(prov.get("seed", -1), prov.get("config_hash", "unknown"))
    print(_rule_row(rule))
    print(f"# domain={rule.domain} ip={rule.ip.label} points={rule.n_points}")
    print(f"# exactness_residual={exactness_residual(rule):.3e}")
    return 0


def cmd_project(args) -> int:
    rule = load_rule(args.rule)
    values = np.loadtxt(args.values, ndmin=1)
    if values.shape != (rule.n_points,):
        raise UsageError(f"expected {rule.n_points} values, got {values.shape[0]}")
    prov = rule.provenance or {}
    _print_header(prov.get("seed", -1), prov.get("config_hash", "unknown"))
    for c in project(rule, values):
        print(format(float(c), ".17g"))
    return 0


def cmd_validate(args) -> int:
    try:
        rule = load_rule(args.rule)
    except RuleIntegrityError as exc:
        print(f"FAIL {exc}")
        return 1
    prov = rule.provenance or {}
    _print_header(prov.get("seed", -1), prov.get("config_hash", "unknown"))
    residual = exactness_residual(rule)
    sigma = sigma_of_rule(rule)
    ok = residual <= 1e-9 and abs(sigma - rule.sigma) <= 1e-10
    status = "PASS" if ok else "FAIL"
    print(f"{status} exactness_residual={residual:.3e} "
          f"sigma_stored={rule.sigma:.12e} sigma_recomputed={sigma:.12e}")
    return 0 if ok else 1


_ENSEMBLE_RE = re.compile(r"^(pprime)(\d+)$|^(c|tp)$")


def _ensemble_from_flags(args, rule) -> FunctionEnsemble:
    m = _ENSEMBLE_RE.match(args.ensemble)
    if not m:
        raise UsageError(f"unknown ensemble {args.ensemble!r} "
                         "(use pprime<N>, c, or tp)")
    if m.group(1):
        return FunctionEnsemble("pprime", rule.domain, seed=args.seed,
                                degree=int(m.group(2)))
    return FunctionEnsemble(m.group(3), rule.domain, seed=args.seed)


def cmd_bench(args) -> int:
    rule = load_rule(args.rule)
    ensemble = _ensemble_from_flags(args, rule)
    chash = (rule.provenance or {}).get("config_hash", "unknown")
    _print_header(args.seed, chash)
    try:
        report = projection_error(rule, ensemble, args.count, args.ref_degree)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(f"{report.ensemble_kind} {report.count} {report.mean_relative_error:.6e}")
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
        print(f"# wrote {args.output}")
    return 0


def cmd_theorems(args) -> int:
    cfg = _opt_config(args)
    _print_header(cfg.seed, "theorems")
    checks = theorem_suite(cfg)
    all_ok = True
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
        all_ok &= c.passed
    return 0 if all_ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biquad",
        description="Construct, inspect, and validate bilinear quadrature rules.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_opt_flags(p, default_starts=None):
        p.add_argument("--seed", type=int, default=0, help="seed for all randomness")
        p.add_argument("--starts", type=int, default=default_starts,
                       help="number of optimizer starts")
        p.add_argument("--threads", type=int, default=None, help="worker cap")
        p.add_argument("--config", help="JSON file with optimizer settings")

    p = sub.add_parser("build", help="construct a rule and write it to a file")
    p.add_argument("--domain", choices=sorted(DOMAINS), required=True)
    p.add_argument("--degree", type=int, required=True,
                   help="total degree (frequency cap on the circle)")
    p.add_argument("--ip", choices=["l2", "h1"], default="l2")
    p.add_argument("--h1-weight", default="one",
                   help="named coefficient A(x) for H1 (one, one_plus_x2, exp)")
    p.add_argument("--interval", type=float, nargs=2, default=(-1.0, 1.0),
                   metavar=("A", "B"))
    p.add_argument("-o", "--output", required=True, help="rule file to write")
    add_opt_flags(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("info", help="print a rule file summary")
    p.add_argument("--rule", required=True)
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("project", help="project sampled values onto the rule's space")
    p.add_argument("--rule", required=True)
    p.add_argument("--values", required=True,
                   help="text file, one sample per evaluation point")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("validate", help="recheck a rule file's invariants")
    p.add_argument("--rule", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="projection-error statistics on an ensemble")
    p.add_argument("--rule", required=True)
    p.add_argument("--ensemble", required=True, help="pprime<N>, c, or tp")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ref-degree", type=int, default=40)
    p.add_argument("-o", "--output", help="write the report as JSON")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("theorems", help="run the classical recovery checks")
    add_opt_flags(p, default_starts=16)
    p.set_defaults(func=cmd_theorems)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuleFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
