import unittest
import sys
import os
import json
import threading
from fractions import Fraction
from unittest.mock import patch, mock_open

# Add the parent directory to sys.path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from equilibrium import RULE_ENVY, Equilibrium, SolveReport, Violation, evaluate
from instance_lab import gen_fig1, gen_fig4
from market import PlatformEdgeSet
from pipeline_utils import (
    DEFAULT_CONFIG,
    CapacityError,
    ClassError,
    FailureLogger,
    InstanceError,
    ParseError,
    ReportValidator,
    ResourceGuard,
    SolverStats,
    SpecError,
    UsageError,
    load_config,
)


class TestSolverStats(unittest.TestCase):
    def setUp(self):
        self.stats = SolverStats()

    def test_init(self):
        self.assertIsNotNone(self.stats.metrics["start_time"])
        self.assertIsNone(self.stats.metrics["end_time"])
        self.assertEqual(self.stats.metrics["candidate_sets"], 0)
        self.assertEqual(self.stats.metrics["evaluated_sets"], 0)
        self.assertIsNone(self.stats.metrics["best_revenue"])
        self.assertEqual(self.stats.metrics["workers"], 1)

    def test_counters(self):
        self.stats.add_candidates(5)
        self.stats.add_candidates(2)
        self.assertEqual(self.stats.metrics["candidate_sets"], 7)
        self.stats.add_evaluated(3)
        self.assertEqual(self.stats.metrics["evaluated_sets"], 3)
        self.stats.record_best("5/4")
        self.assertEqual(self.stats.metrics["best_revenue"], "5/4")
        self.stats.record_workers(4)
        self.assertEqual(self.stats.metrics["workers"], 4)

    @patch('time.time')
    def test_finish(self, mock_time):
        mock_time.side_effect = [100.0, 105.5]
        stats = SolverStats()
        metrics = stats.finish()
        self.assertEqual(metrics["end_time"], 105.5)
        self.assertEqual(metrics["total_duration"], 5.5)

    def test_get_summary(self):
        self.stats.add_candidates(10)
        self.stats.add_evaluated(10)
        self.stats.record_best("3")
        self.stats.record_workers(2)
        self.stats.finish()
        summary = self.stats.get_summary()
        self.assertIn("on 2 worker(s)", summary)
        self.assertIn("Edge sets: 10/10 evaluated", summary)
        self.assertIn("best revenue 3.", summary)

    def test_thread_safety(self):
        def worker():
            for _ in range(100):
                self.stats.add_evaluated(1)

        threads = [threading.Thread(target=worker) for _ in range(5)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

        self.assertEqual(self.stats.metrics["evaluated_sets"], 500)


class TestErrors(unittest.TestCase):
    def test_kinds_and_exit_codes(self):
        self.assertEqual((InstanceError("x").kind, InstanceError("x").exit_code), ("instance", 1))
        self.assertEqual(ClassError("x").kind, "class")
        self.assertEqual(SpecError("x").kind, "spec")
        self.assertEqual(CapacityError("x").exit_code, 2)
        self.assertEqual(ParseError("x").exit_code, 3)
        self.assertIsInstance(ClassError("x"), InstanceError)
        self.assertEqual((UsageError("x").kind, UsageError("x").exit_code), ("usage", 1))

    def test_parse_error_location(self):
        e = ParseError("bad value", "market.valuations[2]")
        self.assertEqual(str(e), "market.valuations[2]: bad value")
        self.assertEqual(str(ParseError("bad value")), "bad value")


class TestLoadConfig(unittest.TestCase):
    def test_defaults_when_missing(self):
        config = load_config("/nonexistent/config.json", environ={})
        self.assertEqual(config, DEFAULT_CONFIG)

    @patch('os.path.exists', return_value=True)
    @patch('builtins.open', new_callable=mock_open, read_data='{"max_buyers": 5, "concurrency": 4}')
    def test_file_overrides(self, mock_file, mock_exists):
        config = load_config("custom.json", environ={})
        self.assertEqual(config["max_buyers"], 5)
        self.assertEqual(config["concurrency"], 4)
        self.assertEqual(config["max_sellers"], DEFAULT_CONFIG["max_sellers"])

    @patch('os.path.exists', return_value=True)
    @patch('builtins.open', new_callable=mock_open, read_data='{not json')
    def test_unreadable_file_falls_back(self, mock_file, mock_exists):
        config = load_config("broken.json", environ={})
        self.assertEqual(config, DEFAULT_CONFIG)

    def test_environment_override(self):
        config = load_config("/nonexistent/config.json", environ={"PLATFORM_MATCH_MAX_EXACT": "3"})
        self.assertEqual((config["max_buyers"], config["max_sellers"]), (3, 3))
        for bad in ("zero", "0", "-2"):
            with self.assertRaises(SpecError):
                load_config("/nonexistent/config.json", environ={"PLATFORM_MATCH_MAX_EXACT": bad})


class TestReportValidator(unittest.TestCase):
    def test_valid_report(self):
        report = evaluate(gen_fig4(Fraction(1, 4)), [("b1", "s1"), ("b2", "s2")])
        is_valid, reason = ReportValidator.validate(report)
        self.assertTrue(is_valid)
        self.assertEqual(reason, "")

    def make_report(self, revenue, welfare, optimal):
        edges = PlatformEdgeSet(edges=(("b1", "s1"),))
        eq = Equilibrium(allocation=(("b1", "s1"),), prices={"s1": Fraction(1)})
        return SolveReport(edges, eq, Fraction(revenue), Fraction(welfare), Fraction(optimal), "test", False)

    def test_revenue_mismatch(self):
        is_valid, reason = ReportValidator.validate(self.make_report(2, 3, 3))
        self.assertFalse(is_valid)
        self.assertIn("differs from allocated platform prices", reason)

    def test_revenue_above_welfare(self):
        is_valid, reason = ReportValidator.validate(self.make_report(1, 0, 3))
        self.assertFalse(is_valid)
        self.assertEqual(reason, "Revenue exceeds welfare")

    def test_welfare_above_optimum(self):
        is_valid, reason = ReportValidator.validate(self.make_report(1, 4, 3))
        self.assertFalse(is_valid)
        self.assertEqual(reason, "Welfare exceeds optimal welfare")


class TestResourceGuard(unittest.TestCase):
    def test_check_market_size(self):
        ResourceGuard.check_market_size(gen_fig1(3))
        ResourceGuard.check_market_size(gen_fig1(3), max_buyers=3, max_sellers=3)
        with self.assertRaises(CapacityError) as cm:
            ResourceGuard.check_market_size(gen_fig1(3), max_buyers=2, max_sellers=8)
        self.assertIn("Market too large", str(cm.exception))
        with self.assertRaises(CapacityError):
            ResourceGuard.check_market_size(gen_fig1(9))

    def test_check_candidate_count(self):
        ResourceGuard.check_candidate_count(500, 500)
        with self.assertRaises(CapacityError) as cm:
            ResourceGuard.check_candidate_count(501, 500)
        self.assertIn("Too many candidate edge sets", str(cm.exception))


class TestFailureLogger(unittest.TestCase):
    @patch('builtins.open', new_callable=mock_open)
    def test_log_violation(self, mock_file):
        logger = FailureLogger(run_id=123)
        logger.log_violation("alloc.json", Violation(RULE_ENVY, "b1", "s2 gives 1 > 0"))

        mock_file.assert_called_with("violations_log.jsonl", 'a', encoding='utf-8')
        handle = mock_file()

        writes = [call.args[0] for call in handle.write.call_args_list]
        data = json.loads("".join(writes).strip())
        self.assertEqual(data["run_id"], 123)
        self.assertEqual(data["rule"], RULE_ENVY)
        self.assertEqual(data["agent"], "b1")
        self.assertEqual(data["source"], "alloc.json")

    @patch('builtins.open', new_callable=mock_open)
    def test_log_fallback(self, mock_file):
        logger = FailureLogger(run_id=456, directory="logs")
        logger.log_fallback("market.json", "exact", "greedy", CapacityError("too big"))

        mock_file.assert_called_with(os.path.join("logs", "fallbacks_log.jsonl"), 'a', encoding='utf-8')
        handle = mock_file()

        writes = [call.args[0] for call in handle.write.call_args_list]
        data = json.loads("".join(writes).strip())
        self.assertEqual(data["run_id"], 456)
        self.assertEqual(data["requested_solver"], "exact")
        self.assertEqual(data["used_solver"], "greedy")
        self.assertEqual(data["error"], "too big")


if __name__ == '__main__':
    unittest.main()
