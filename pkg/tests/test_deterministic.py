import unittest
from unittest.mock import patch
import sys
import os
import io
import tempfile

# Add parent directory to path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from cli import run
from exact_solver import optimal_revenue, prm
from instance_lab import GenSpec, gen_fig2, gen_random, save_market
from pipeline_utils import SolverStats


class TestDeterministicMode(unittest.TestCase):

    def test_repeated_runs_are_identical(self):
        market = gen_random(GenSpec("random_general", {"seed": 11, "n": 4, "m": 4}))
        first = optimal_revenue(market).to_dict()
        second = optimal_revenue(market).to_dict()
        self.assertEqual(first, second)

    def test_threads_agree_with_sequential_search(self):
        for seed in range(10):
            market = gen_random(GenSpec("random_general", {"seed": seed, "n": 4, "m": 4, "density": "1/2"}))
            sequential = optimal_revenue(market, deterministic_mode=True)
            threaded = optimal_revenue(market, concurrency=4, deterministic_mode=False)
            self.assertEqual(sequential.to_dict(), threaded.to_dict(), f"seed {seed}")
            self.assertEqual(prm(market).to_dict(), prm(market, concurrency=4, deterministic_mode=False).to_dict())

    @patch('exact_solver.os.cpu_count', return_value=8)
    @patch('exact_solver.SolverStats')
    def test_deterministic_mode_forces_one_worker(self, mock_stats_class, mock_cpu):
        stats = SolverStats()
        mock_stats_class.return_value = stats
        optimal_revenue(gen_fig2(), concurrency=6, deterministic_mode=True)
        self.assertEqual(stats.metrics["workers"], 1)

        stats = SolverStats()
        mock_stats_class.return_value = stats
        optimal_revenue(gen_fig2(), concurrency=6, deterministic_mode=False)
        self.assertEqual(stats.metrics["workers"], 6)

    def test_cli_output_is_stable(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "market.json")
            save_market(gen_fig2(), path)
            outputs = []
            for _ in range(2):
                out = io.StringIO()
                code = run(["--config", os.path.join(tmp, "none.json"), "solve", "--input", path, "--solver", "exact"],
                           stdout=out, stderr=io.StringIO())
                self.assertEqual(code, 0)
                outputs.append(out.getvalue())
            self.assertEqual(outputs[0], outputs[1])


if __name__ == '__main__':
    unittest.main()
