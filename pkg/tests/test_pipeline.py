import unittest
import sys
import os
import random
from fractions import Fraction

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from approx_solvers import (
    greedy_conversion,
    greedy_solve,
    hom_full_conversion,
    min_nm_approx,
    welfare_maximizing_edges,
)
from equilibrium import (
    evaluate,
    optimal_welfare,
    platform_best_equilibrium,
    social_welfare,
    verify_equilibrium,
)
from exact_solver import optimal_revenue, prm
from instance_lab import (
    GenSpec,
    fig3_dummy_edges,
    gen_fig1,
    gen_fig3,
    gen_fig4,
    gen_random,
    gen_sat_reduction,
    gen_vc_reduction,
    is_satisfiable,
    parse_graph,
    vc_construction_edges,
)
from market import union_edges
from matching import opportunity_price
from pipeline_utils import ReportValidator
from special_solvers import CLASS_SHGB, CLASS_SWSH, classify_market, market_classes, shgb_solve, swsh_solve
from fixtures import harmonic

CORPUS_SIZE = 200


def corpus(family, max_side, count=CORPUS_SIZE, **fixed):
    """Seeded markets of a random family with sides drawn from 1..max_side."""
    for seed in range(count):
        sizes = random.Random(10_000 + seed)
        params = {"seed": seed, "n": sizes.randint(1, max_side), "m": sizes.randint(1, max_side)}
        params.update(fixed)
        yield seed, gen_random(GenSpec(family, params))


def shgb_corpus(max_buyers=8, count=CORPUS_SIZE):
    for seed in range(count):
        sizes = random.Random(20_000 + seed)
        buyers = sizes.randint(1, max_buyers)
        sellers = sizes.randint(1, max(1, (buyers + 1) // 2 + 1))
        yield seed, gen_random(GenSpec("random_shgb", {"seed": seed, "buyers": buyers, "sellers": sellers}))


def non_world_pairs(market):
    return [(b, s) for b in market.buyers for s in market.sellers
            if market.value(b, s) > 0 and not market.is_world(b, s)]


class ReportChecks(unittest.TestCase):
    def assertSoundReport(self, market, report, seed):
        is_valid, reason = ReportValidator.validate(report)
        self.assertTrue(is_valid, f"seed {seed}: {reason}")
        self.assertEqual(verify_equilibrium(market, report.platform_edges, report.equilibrium), [], f"seed {seed}")
        for price in report.equilibrium.prices.values():
            self.assertGreaterEqual(price, 0)
        self.assertLessEqual(report.revenue, report.welfare)
        self.assertLessEqual(report.welfare, report.optimal_welfare)


class TestFigureReproduction(ReportChecks):
    def test_staircase(self):
        for n in range(2, 6):
            market = gen_fig1(n)
            self.assertEqual(optimal_revenue(market).revenue, Fraction(n * (n + 1), 2))
            every_pair = [(b, s) for b in market.buyers for s in market.sellers]
            self.assertEqual(evaluate(market, every_pair).revenue, n)

    def test_conversion_tightness(self):
        for k in range(1, 5):
            market = gen_fig3(k)
            dummy = fig3_dummy_edges(k)
            report = greedy_conversion(market, dummy)
            self.assertEqual(report.input_delta_w, harmonic(k))
            self.assertEqual(report.revenue, 1)
            self.assertEqual(report.guarantee, 1)
            self.assertEqual(optimal_revenue(market).revenue, 1)

    def test_price_of_revenue_maximization_approaches_two(self):
        ratios = [prm(gen_fig4(Fraction(1, k))).ratio for k in (4, 10, 100)]
        self.assertEqual(ratios[0], Fraction(8, 5))
        self.assertEqual(ratios, sorted(ratios))
        self.assertTrue(all(r < 2 for r in ratios))

    def test_reduction_thresholds(self):
        for cnf, num_vars in (([], 1), ([[1, -1]], None), ([[1], [-1]], None), ([], 2)):
            bundle = gen_sat_reduction(cnf, num_vars)
            revenue = optimal_revenue(bundle.market).revenue
            self.assertEqual(revenue >= bundle.threshold, is_satisfiable(cnf, num_vars), f"cnf {cnf}")
        triangle = gen_vc_reduction(parse_graph("a-b b-c a-c"), H=2)
        self.assertEqual(evaluate(triangle.market, vc_construction_edges(triangle)).revenue, 13)


class TestGeneralCorpus(ReportChecks):
    def test_conversion_guarantee(self):
        for seed, market in corpus("random_general", 6):
            candidates = welfare_maximizing_edges(market)
            report = greedy_conversion(market, candidates)
            self.assertGreaterEqual(report.revenue, report.guarantee, f"seed {seed}")
            gap = optimal_welfare(market) - social_welfare(market)
            self.assertGreaterEqual(report.revenue, gap / harmonic(min(market.n, market.m)), f"seed {seed}")
            self.assertTrue(set(report.chosen_subset) <= set(report.input_edges))

    def test_conversion_guarantee_on_arbitrary_candidates(self):
        for seed, market in corpus("random_general", 6):
            rng = random.Random(seed)
            pairs = non_world_pairs(market)
            chosen = rng.sample(pairs, min(len(pairs), rng.randint(0, 5)))
            report = greedy_conversion(market, chosen)
            self.assertGreaterEqual(report.revenue, report.guarantee, f"seed {seed}")

    def test_oracle_dominance_and_prm_bound(self):
        for seed, market in corpus("random_general", 6):
            oracle = optimal_revenue(market)
            self.assertSoundReport(market, oracle, seed)
            greedy = greedy_solve(market)
            self.assertSoundReport(market, greedy, seed)
            self.assertLessEqual(greedy.revenue, oracle.revenue, f"seed {seed}")

            report = prm(market)
            self.assertEqual(report.optimal_revenue, oracle.revenue, f"seed {seed}")
            self.assertLessEqual(report.ratio, harmonic(min(market.n, market.m)) + 1, f"seed {seed}")


class TestSpecialClassCorpus(ReportChecks):
    def test_swsh_matches_oracle(self):
        for seed, market in corpus("random_swsh", 6):
            self.assertIn(CLASS_SWSH, market_classes(market))
            report = swsh_solve(market)
            self.assertSoundReport(market, report, seed)
            self.assertEqual(report.revenue, optimal_revenue(market).revenue, f"seed {seed}")

    def test_shgb_matches_oracle(self):
        for seed, market in shgb_corpus():
            self.assertEqual(classify_market(market), CLASS_SHGB)
            report = shgb_solve(market)
            self.assertSoundReport(market, report, seed)
            self.assertEqual(report.revenue, optimal_revenue(market).revenue, f"seed {seed}")

    def test_generator_examples(self):
        first = gen_random(GenSpec("random_swsh", {"n": 5, "m": 5, "seed": 7}))
        self.assertEqual(first, gen_random(GenSpec("random_swsh", {"n": 5, "m": 5, "seed": 7})))
        self.assertEqual(classify_market(gen_random(GenSpec("random_shgb", {"buyers": 6, "seed": 1}))), CLASS_SHGB)


class TestHomogeneousCorpus(ReportChecks):
    def test_full_conversion(self):
        for seed, market in corpus("random_homogeneous", 6):
            report = hom_full_conversion(market)
            self.assertSoundReport(market, report, seed)
            self.assertEqual(report.welfare, report.optimal_welfare, f"seed {seed}")
            self.assertGreaterEqual(report.revenue, report.optimal_welfare - social_welfare(market), f"seed {seed}")

    def test_no_welfare_loss_and_pair_approximation(self):
        for seed, market in corpus("random_homogeneous", 6):
            report = prm(market)
            self.assertEqual(report.best_revenue_optimal_welfare, report.optimal_welfare, f"seed {seed}")

            approx = min_nm_approx(market)
            self.assertSoundReport(market, approx, seed)
            self.assertGreaterEqual(approx.revenue * min(market.n, market.m), report.optimal_revenue, f"seed {seed}")
            self.assertLessEqual(approx.revenue, report.optimal_revenue, f"seed {seed}")

    def test_opportunity_prices_match_competitive_prices(self):
        for seed, market in corpus("random_homogeneous", 6):
            rng = random.Random(seed)
            pairs = non_world_pairs(market)
            platform = rng.sample(pairs, rng.randint(0, len(pairs)))
            eq = platform_best_equilibrium(market, platform)
            edges = union_edges(market, platform)
            for trade in eq.allocation:
                self.assertEqual(
                    opportunity_price(market, edges, eq.allocation, trade),
                    eq.prices[trade[1]],
                    f"seed {seed}, trade {trade}",
                )


if __name__ == '__main__':
    unittest.main()
