import argparse
import json
import logging
import sys

from approx_solvers import (
    greedy_conversion,
    greedy_solve,
    hom_full_conversion,
    min_nm_approx,
    welfare_maximizing_edges,
    world_gap_ratio,
)
from equilibrium import Equilibrium, evaluate, max_competitive_prices, verify_equilibrium
from exact_solver import ExactLimits, optimal_revenue, prm
from instance_lab import (
    FAMILIES,
    GenSpec,
    ReductionBundle,
    generate,
    load_allocation,
    load_edges,
    load_market,
    save_bundle,
    save_market,
)
from market import format_decimal, format_rational
from pipeline_utils import (
    CapacityError,
    FailureLogger,
    InstanceError,
    PlatformMatchError,
    ReportValidator,
    UsageError,
    load_config,
)
from special_solvers import CLASS_SHGB, CLASS_SWSH, classify_market, shgb_solve, swsh_solve

SOLVERS = ("auto", "exact", "swsh", "shgb", "greedy", "hom-convert", "min-nm")

# gen flag -> GenSpec parameter, with the type argparse should parse
GEN_PARAMS = {
    "n": int, "m": int, "k": int, "seed": int, "num_vars": int,
    "buyers": int, "sellers": int, "max_value": int,
    "eps": str, "H": str, "density": str, "value": str,
    "cnf": str, "graph": str,
}


def setup_logging(config, verbose=False):
    logger = logging.getLogger("PlatformMatch")
    level = logging.DEBUG if verbose or config.get("debug_mode", False) else logging.INFO
    logger.setLevel(level)
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(asctime)s %(message)s", datefmt="[%Y-%m-%d %H:%M:%S]"))
        logger.addHandler(handler)
    return logger


class CliParser(argparse.ArgumentParser):
    """Reports usage errors as UsageError so the caller can print them as JSON."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser():
    parser = CliParser(prog="platform-match", description="Platform revenue maximization in two-sided markets")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging on standard error")
    parser.add_argument("--config", help="Path to a config.json")
    verbs = parser.add_subparsers(dest="verb", required=True)

    gen = verbs.add_parser("gen", help="Generate a market or reduction bundle")
    gen.add_argument("--family", required=True, choices=FAMILIES)
    for name, kind in GEN_PARAMS.items():
        gen.add_argument(f"--{name.replace('_', '-')}", dest=name, type=kind)
    gen.add_argument("--homogeneous", action="store_true", help="fig3 with homogeneous buyers")
    gen.add_argument("--out", help="Write here instead of standard output")

    solve = verbs.add_parser("solve", help="Choose platform edges")
    solve.add_argument("--input", required=True)
    solve.add_argument("--solver", choices=SOLVERS, default="auto")
    solve.add_argument("--max-exact", type=int, help="Largest side the exact solver accepts")
    solve.add_argument("--concurrency", type=int)

    ev = verbs.add_parser("eval", help="Price a given platform edge set")
    ev.add_argument("--input", required=True)
    ev.add_argument("--edges", required=True)

    convert = verbs.add_parser("convert", help="Greedy welfare-to-revenue conversion")
    convert.add_argument("--input", required=True)
    convert.add_argument("--edges", help="Candidate edges (default: welfare-maximizing edges)")

    ratio = verbs.add_parser("prm", help="Price of revenue maximization")
    ratio.add_argument("--input", required=True)
    ratio.add_argument("--max-exact", type=int)
    ratio.add_argument("--concurrency", type=int)

    verify = verbs.add_parser("verify", help="Check an allocation and prices against the equilibrium conditions")
    verify.add_argument("--input", required=True)
    verify.add_argument("--edges", required=True)
    verify.add_argument("--allocation", required=True)
    return parser


class CommandRunner:
    """Runs one parsed command; every handler returns (payload, exit_code)."""

    def __init__(self, args, config, logger):
        self.args = args
        self.config = config
        self.logger = logger
        self.places = config.get("decimal_places", 6)
        log_dir = config.get("failure_log", "")
        self.failure_logger = FailureLogger(directory=log_dir) if log_dir else None

    def log(self, message):
        self.logger.debug(message)

    def limits(self):
        config = dict(self.config)
        max_exact = getattr(self.args, "max_exact", None)
        if max_exact is not None:
            config["max_buyers"] = max_exact
            config["max_sellers"] = max_exact
        return ExactLimits.from_config(config)

    def concurrency(self):
        value = getattr(self.args, "concurrency", None)
        return value if value is not None else self.config.get("concurrency", 1)

    def checked(self, report):
        ok, reason = ReportValidator.validate(report)
        if not ok:
            raise InstanceError(f"report failed accounting checks: {reason}")
        return report.to_dict(self.places)

    # --- verbs ---

    def gen(self):
        params = {name: getattr(self.args, name) for name in GEN_PARAMS if getattr(self.args, name) is not None}
        if self.args.homogeneous:
            params["homogeneous"] = True
        result = generate(GenSpec(self.args.family, params))
        is_bundle = isinstance(result, ReductionBundle)
        market = result.market if is_bundle else result
        if not self.args.out:
            return result.to_dict(), 0
        (save_bundle if is_bundle else save_market)(result, self.args.out)
        self.logger.info(f"Wrote {self.args.family} instance ({market.n} buyers, {market.m} sellers) to {self.args.out}")
        summary = {"family": self.args.family, "out": self.args.out, "buyers": market.n, "sellers": market.m}
        if is_bundle:
            summary["threshold"] = format_rational(result.threshold)
        return summary, 0

    def _exact(self, market):
        return optimal_revenue(
            market,
            limits=self.limits(),
            concurrency=self.concurrency(),
            deterministic_mode=self.config.get("deterministic_mode", True),
            log_callback=self.log,
        )

    def _auto(self, market):
        tag = classify_market(market)
        self.logger.info(f"Market class: {tag}")
        if tag == CLASS_SHGB:
            return shgb_solve(market, self.log)
        if tag == CLASS_SWSH:
            return swsh_solve(market, self.log)
        try:
            return self._exact(market)
        except CapacityError as e:
            self.logger.warning(f"Exact search unavailable ({e}); falling back to greedy conversion")
            if self.failure_logger:
                self.failure_logger.log_fallback(self.args.input, "exact", "greedy", e)
            return greedy_solve(market, self.log, details={"fallback_from": "exact", "fallback_reason": str(e)})

    def solve(self):
        market = load_market(self.args.input)
        solvers = {
            "auto": self._auto,
            "exact": self._exact,
            "swsh": lambda mk: swsh_solve(mk, self.log),
            "shgb": lambda mk: shgb_solve(mk, self.log),
            "greedy": lambda mk: greedy_solve(mk, self.log),
            "hom-convert": lambda mk: hom_full_conversion(mk, self.log),
            "min-nm": lambda mk: min_nm_approx(mk, self.log),
        }
        report = solvers[self.args.solver](market)
        self.logger.info(f"{report.solver_name}: revenue {report.revenue}, welfare {report.welfare} of {report.optimal_welfare}")
        return self.checked(report), 0

    def eval(self):
        market = load_market(self.args.input)
        edges = load_edges(self.args.edges, market)
        return self.checked(evaluate(market, edges)), 0

    def convert(self):
        market = load_market(self.args.input)
        if self.args.edges:
            candidates = load_edges(self.args.edges, market)
        else:
            candidates = welfare_maximizing_edges(market)
        report = greedy_conversion(market, candidates, self.log)
        data = report.to_dict(self.places)
        gap = world_gap_ratio(market)
        data["world_gap_ratio"] = None if gap is None else format_rational(gap)
        data["world_gap_ratio_decimal"] = None if gap is None else format_decimal(gap, self.places)
        return data, 0

    def prm(self):
        market = load_market(self.args.input)
        report = prm(
            market,
            limits=self.limits(),
            concurrency=self.concurrency(),
            deterministic_mode=self.config.get("deterministic_mode", True),
            log_callback=self.log,
        )
        return report.to_dict(self.places), 0

    def verify(self):
        market = load_market(self.args.input)
        edges = load_edges(self.args.edges, market)
        pairs, prices = load_allocation(self.args.allocation)
        if prices is None:
            prices = max_competitive_prices(market, edges)
        eq = Equilibrium(allocation=tuple(pairs), prices=prices)
        violations = verify_equilibrium(market, edges, eq)
        for violation in violations:
            self.logger.info(f"Violation: {violation.rule} ({violation.agent}) {violation.detail}")
            if self.failure_logger:
                self.failure_logger.log_violation(self.args.allocation, violation)
        payload = {"valid": not violations, "violations": [v.to_dict() for v in violations]}
        return payload, 0 if not violations else 1


def _emit(stream, payload):
    stream.write(json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False))
    stream.write("\n")


def run(argv=None, stdout=None, stderr=None):
    """Entry point; returns the process exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        _emit(stderr, {"error": e.kind, "message": str(e)})
        return e.exit_code
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else 0

    try:
        config = load_config(args.config)
        logger = setup_logging(config, args.verbose)
        runner = CommandRunner(args, config, logger)
        payload, code = getattr(runner, args.verb)()
    except PlatformMatchError as e:
        _emit(stderr, {"error": e.kind, "message": str(e)})
        return e.exit_code
    except Exception as e:
        logging.getLogger("PlatformMatch").exception("Unexpected failure")
        _emit(stderr, {"error": "internal", "message": str(e)})
        return 1

    _emit(stdout, payload)
    return code
