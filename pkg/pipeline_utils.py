import time
import json
import logging
import os
import threading

_file_lock = threading.Lock()

CONFIG_FILE = os.path.join(os.path.dirname(os.path.abspath(__file__)), "config.json")
MAX_EXACT_ENV = "PLATFORM_MATCH_MAX_EXACT"

DEFAULT_CONFIG = {
    "max_buyers": 8,
    "max_sellers": 8,
    "matching_enumeration_cap": 100000,
    "max_candidate_sets": 2000000,
    "concurrency": 1,
    "deterministic_mode": True,
    "debug_mode": False,
    "failure_log": "",
    "decimal_places": 6,
}


class PlatformMatchError(Exception):
    """Base class for every error the library raises on purpose."""
    kind = "error"
    exit_code = 1


class InstanceError(PlatformMatchError, ValueError):
    kind = "instance"


class ClassError(InstanceError):
    kind = "class"


class SpecError(InstanceError):
    kind = "spec"


class NotAnEquilibriumError(InstanceError):
    kind = "not_an_equilibrium"


class UsageError(PlatformMatchError):
    """Bad command line; raised instead of argparse's exit."""
    kind = "usage"


class CapacityError(PlatformMatchError):
    kind = "capacity"
    exit_code = 2


class ParseError(PlatformMatchError, ValueError):
    kind = "parse"
    exit_code = 3

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


def load_config(path=None, environ=None):
    """
    Reads config.json on top of the built-in defaults.
    PLATFORM_MATCH_MAX_EXACT overrides both exact-solver size limits.
    """
    config = dict(DEFAULT_CONFIG)
    path = path or CONFIG_FILE
    if os.path.exists(path):
        try:
            with open(path, 'r', encoding='utf-8') as f:
                config.update(json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            logging.getLogger("PlatformMatch").warning(f"Ignoring unreadable config {path}: {e}")

    environ = os.environ if environ is None else environ
    override = environ.get(MAX_EXACT_ENV)
    if override:
        try:
            limit = int(override)
        except ValueError:
            raise SpecError(f"{MAX_EXACT_ENV} must be a positive integer, got {override!r}")
        if limit < 1:
            raise SpecError(f"{MAX_EXACT_ENV} must be a positive integer, got {override!r}")
        config["max_buyers"] = limit
        config["max_sellers"] = limit
    return config


class SolverStats:
    def __init__(self):
        self.metrics = {
            "start_time": time.time(),
            "end_time": None,
            "candidate_sets": 0,
            "evaluated_sets": 0,
            "best_revenue": None,
            "workers": 1,
        }
        self._lock = threading.Lock()

    def add_candidates(self, count):
        with self._lock:
            self.metrics["candidate_sets"] += count

    def add_evaluated(self, count):
        with self._lock:
            self.metrics["evaluated_sets"] += count

    def record_best(self, revenue):
        with self._lock:
            self.metrics["best_revenue"] = revenue

    def record_workers(self, workers):
        with self._lock:
            self.metrics["workers"] = workers

    def finish(self):
        self.metrics["end_time"] = time.time()
        self.metrics["total_duration"] = self.metrics["end_time"] - self.metrics["start_time"]
        return self.metrics

    def get_summary(self):
        return (
            f"Search completed in {self.metrics.get('total_duration', 0):.2f}s "
            f"on {self.metrics['workers']} worker(s). "
            f"Edge sets: {self.metrics['evaluated_sets']}/{self.metrics['candidate_sets']} evaluated, "
            f"best revenue {self.metrics['best_revenue']}."
        )


class FailureLogger:
    """Appends equilibrium violations and solver fallbacks to JSONL files."""

    def __init__(self, run_id=None, directory=""):
        self.run_id = run_id or int(time.time())
        self.violations_file = os.path.join(directory, "violations_log.jsonl")
        self.fallbacks_file = os.path.join(directory, "fallbacks_log.jsonl")
        self._lock = threading.Lock()

    def log_violation(self, source, violation):
        entry = {
            "run_id": self.run_id,
            "timestamp": time.time(),
            "source": source,
            "rule": violation.rule,
            "agent": violation.agent,
            "detail": violation.detail,
        }
        self._append_to_log(self.violations_file, entry)

    def log_fallback(self, source, requested, used, error):
        entry = {
            "run_id": self.run_id,
            "timestamp": time.time(),
            "source": source,
            "requested_solver": requested,
            "used_solver": used,
            "error": str(error),
        }
        self._append_to_log(self.fallbacks_file, entry)

    def _append_to_log(self, filepath, entry):
        """Appends a single JSON entry as a new line (JSONL format)."""
        with _file_lock:
            with open(filepath, 'a', encoding='utf-8') as f:
                json.dump(entry, f, ensure_ascii=False, sort_keys=True)
                f.write('\n')


class ReportValidator:
    @staticmethod
    def validate(report):
        """
        Checks the accounting identities every SolveReport must satisfy.
        Returns (is_valid, reason)
        """
        eq = report.equilibrium
        platform = set(report.platform_edges.edges)
        revenue = sum((eq.prices.get(s, 0) for (b, s) in eq.allocation if (b, s) in platform), 0)

        if revenue != report.revenue:
            return False, f"Revenue {report.revenue} differs from allocated platform prices {revenue}"

        if report.revenue < 0:
            return False, "Negative revenue"

        if report.revenue > report.welfare:
            return False, "Revenue exceeds welfare"

        if report.welfare > report.optimal_welfare:
            return False, "Welfare exceeds optimal welfare"

        return True, ""


class ResourceGuard:
    MAX_BUYERS = DEFAULT_CONFIG["max_buyers"]
    MAX_SELLERS = DEFAULT_CONFIG["max_sellers"]

    @staticmethod
    def check_market_size(market, max_buyers=None, max_sellers=None):
        max_buyers = max_buyers or ResourceGuard.MAX_BUYERS
        max_sellers = max_sellers or ResourceGuard.MAX_SELLERS
        n, m = len(market.buyers), len(market.sellers)
        if n > max_buyers or m > max_sellers:
            raise CapacityError(
                f"Market too large for exhaustive search ({n} buyers x {m} sellers). "
                f"Max allowed is {max_buyers} x {max_sellers}; raise {MAX_EXACT_ENV} or use an approximate solver."
            )

    @staticmethod
    def check_candidate_count(count, limit):
        if count > limit:
            raise CapacityError(f"Too many candidate edge sets (more than {limit}). Try a smaller market.")
