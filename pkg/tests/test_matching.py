import unittest
import sys
import os
import random
from fractions import Fraction
from itertools import combinations

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from market import union_edges
from matching import (
    BipartiteGraph,
    WeightedBipartiteGraph,
    assignment,
    deficiency,
    enumerate_max_weight_matchings,
    max_difference_hall_violator,
    max_weight_matching,
    max_weight_value,
    maximum_matching,
    maximum_matching_size,
    opportunity_price,
    opportunity_reachable,
    vertex_hall_violator,
)
from instance_lab import gen_fig1, gen_fig2
from pipeline_utils import CapacityError, ClassError, InstanceError
from fixtures import homogeneous_market

FIG2_PLATFORM = [("b1", "s2"), ("b2", "s1"), ("b3", "s3"), ("b4", "s4")]


class TestWeightedMatching(unittest.TestCase):
    def setUp(self):
        self.g = WeightedBipartiteGraph(
            ["a", "b"], ["x", "y"],
            {("a", "x"): 1, ("a", "y"): 1, ("b", "x"): 1, ("b", "y"): Fraction(1, 4)},
        )

    def test_max_weight(self):
        matching, value = max_weight_matching(self.g)
        self.assertEqual(value, 2)
        self.assertEqual(matching, (("a", "y"), ("b", "x")))

    def test_value_without_a_vertex(self):
        self.assertEqual(max_weight_value(self.g), 2)
        self.assertEqual(max_weight_value(self.g, exclude_right=["x"]), 1)

    def test_ties_break_lexicographically(self):
        g = WeightedBipartiteGraph(["a", "b"], ["x", "y"], {("a", "x"): 1, ("a", "y"): 1, ("b", "x"): 1, ("b", "y"): 1})
        matching, value = max_weight_matching(g)
        self.assertEqual(value, 2)
        self.assertEqual(matching, (("a", "x"), ("b", "y")))

    def test_rectangular(self):
        g = WeightedBipartiteGraph(["a", "b", "c"], ["x"], {("a", "x"): 1, ("b", "x"): 3, ("c", "x"): 2})
        matching, value = max_weight_matching(g)
        self.assertEqual(matching, (("b", "x"),))
        self.assertEqual(value, 3)

    def test_integer_assignment(self):
        weights = {(0, 0): 3, (0, 1): 2, (1, 0): 2, (1, 1): 0}
        self.assertEqual(assignment(weights, [0, 1], [0, 1]), (4, [(0, 1), (1, 0)]))
        self.assertEqual(assignment(weights, [0, 1], [0]), (3, [(0, 0)]))
        self.assertEqual(assignment(weights, [], [0, 1]), (0, []))

    def test_empty(self):
        matching, value = max_weight_matching(WeightedBipartiteGraph([], ["x"], {}))
        self.assertEqual(matching, ())
        self.assertEqual(value, 0)

    def test_rejects_bad_weights(self):
        with self.assertRaises(InstanceError):
            WeightedBipartiteGraph(["a"], ["x"], {("a", "x"): -1})
        with self.assertRaises(InstanceError):
            WeightedBipartiteGraph(["a"], ["x"], {("a", "z"): 1})

    def test_enumeration(self):
        g = WeightedBipartiteGraph(["a", "b"], ["x", "y"], {("a", "x"): 1, ("a", "y"): 1, ("b", "x"): 1, ("b", "y"): 1})
        found = enumerate_max_weight_matchings(g, cap=10)
        self.assertEqual(found, [(("a", "x"), ("b", "y")), (("a", "y"), ("b", "x"))])
        self.assertEqual(enumerate_max_weight_matchings(self.g, cap=10), [(("a", "y"), ("b", "x"))])

    def test_enumeration_cap(self):
        g = WeightedBipartiteGraph(["a", "b"], ["x", "y"], {("a", "x"): 1, ("a", "y"): 1, ("b", "x"): 1, ("b", "y"): 1})
        with self.assertRaises(CapacityError):
            enumerate_max_weight_matchings(g, cap=1)
        with self.assertRaises(InstanceError):
            enumerate_max_weight_matchings(g, cap=0)


class TestHall(unittest.TestCase):
    def test_maximum_matching_and_deficiency(self):
        g = BipartiteGraph(["a", "b", "c"], ["x"], [("a", "x"), ("b", "x"), ("c", "x")])
        self.assertEqual(maximum_matching_size(g), 1)
        self.assertEqual(deficiency(g), 2)
        perfect = BipartiteGraph(["a", "b"], ["x", "y"], [("a", "x"), ("b", "y"), ("a", "y")])
        self.assertEqual(maximum_matching(perfect), {"a": "x", "b": "y"})
        self.assertEqual(deficiency(perfect), 0)

    def test_max_difference_violator(self):
        g = BipartiteGraph(["a", "b", "c"], ["x", "y"], [("a", "x"), ("b", "x"), ("c", "y")])
        cert = max_difference_hall_violator(g)
        self.assertEqual(cert.violator_set, frozenset(["a", "b"]))
        self.assertEqual(cert.neighborhood, frozenset(["x"]))
        self.assertEqual(cert.difference, 1)
        self.assertEqual(cert.difference, deficiency(g))

    def test_no_violator_when_perfect(self):
        g = BipartiteGraph(["a", "b"], ["x", "y"], [("a", "x"), ("b", "y")])
        self.assertIsNone(max_difference_hall_violator(g))
        self.assertIsNone(vertex_hall_violator(g, "a"))

    def test_vertex_violator(self):
        g = BipartiteGraph(["a", "b", "c"], ["x", "y"], [("a", "x"), ("b", "x"), ("c", "y")])
        cert = vertex_hall_violator(g, "a")
        self.assertIn("a", cert.violator_set)
        self.assertEqual(cert.violator_set, frozenset(["a", "b"]))
        self.assertEqual(cert.difference, 1)
        whole = vertex_hall_violator(g, "c")
        self.assertEqual(whole.violator_set, frozenset(["a", "b", "c"]))
        self.assertEqual(whole.neighborhood, frozenset(["x", "y"]))

    def test_isolated_vertex(self):
        g = BipartiteGraph(["a", "b"], ["x"], [("a", "x")])
        cert = vertex_hall_violator(g, "b")
        self.assertEqual(cert.violator_set, frozenset(["b"]))
        self.assertEqual(cert.neighborhood, frozenset())
        self.assertEqual(cert.difference, 1)
        with self.assertRaises(InstanceError):
            vertex_hall_violator(g, "zz")


def random_graph(rng, max_left, max_right):
    left = [f"l{i}" for i in range(rng.randint(1, max_left))]
    right = [f"r{j}" for j in range(rng.randint(1, max_right))]
    edges = [(a, b) for a in left for b in right if rng.random() < 0.3]
    return BipartiteGraph(left, right, edges)


def random_weighted_graph(rng, max_side):
    left = [f"l{i}" for i in range(rng.randint(1, max_side))]
    right = [f"r{j}" for j in range(rng.randint(1, max_side))]
    weights = {}
    for a in left:
        for b in right:
            if rng.random() < 0.6:
                weights[(a, b)] = Fraction(rng.randint(0, 3), rng.choice([1, 2]))
    return WeightedBipartiteGraph(left, right, weights)


def subsets(items):
    for size in range(len(items) + 1):
        yield from combinations(items, size)


def all_matchings(g):
    """Every matching of positive edges, as pair tuples in left order."""
    found = []

    def walk(i, used, partial):
        if i == len(g.left):
            found.append(tuple(partial))
            return
        walk(i + 1, used, partial)
        a = g.left[i]
        for b in g.right:
            if b not in used and g.weights.get((a, b), 0) > 0:
                partial.append((a, b))
                walk(i + 1, used | {b}, partial)
                partial.pop()

    walk(0, frozenset(), [])
    return found


class TestMatchingProperties(unittest.TestCase):
    def test_deficiency_is_largest_hall_difference(self):
        for seed in range(150):
            rng = random.Random(seed)
            g = random_graph(rng, 10, 8)
            largest = max(len(s) - len(g.neighborhood(s)) for s in subsets(g.left))
            self.assertEqual(deficiency(g), largest, f"seed {seed}")

            cert = max_difference_hall_violator(g)
            if largest == 0:
                self.assertIsNone(cert, f"seed {seed}")
            else:
                self.assertEqual(cert.difference, largest, f"seed {seed}")
                self.assertEqual(cert.neighborhood, g.neighborhood(cert.violator_set))

    def test_vertex_violator_exists_exactly_when_some_set_fails(self):
        for seed in range(150):
            rng = random.Random(1000 + seed)
            g = random_graph(rng, 7, 6)
            for b in g.left:
                others = [a for a in g.left if a != b]
                violated = any(len(g.neighborhood(s + (b,))) < len(s) + 1 for s in subsets(others))
                cert = vertex_hall_violator(g, b)
                if not violated:
                    self.assertIsNone(cert, f"seed {seed}, vertex {b}")
                    continue
                self.assertIsNotNone(cert, f"seed {seed}, vertex {b}")
                self.assertIn(b, cert.violator_set)
                self.assertEqual(cert.neighborhood, g.neighborhood(cert.violator_set))
                self.assertLess(len(cert.neighborhood), len(cert.violator_set))

    def test_enumeration_matches_brute_force(self):
        for seed in range(200):
            rng = random.Random(2000 + seed)
            g = random_weighted_graph(rng, 5)
            matchings = all_matchings(g)
            best = max(sum((g.weights[p] for p in mt), Fraction(0)) for mt in matchings)
            expected = sorted(
                (mt for mt in matchings if sum((g.weights[p] for p in mt), Fraction(0)) == best),
                key=lambda mt: [g.pair_key(p) for p in mt],
            )

            self.assertEqual(enumerate_max_weight_matchings(g, cap=len(expected)), expected, f"seed {seed}")
            self.assertEqual(max_weight_value(g), best, f"seed {seed}")
            matching, value = max_weight_matching(g)
            self.assertEqual(value, best, f"seed {seed}")
            self.assertEqual(matching, expected[0], f"seed {seed}")
            if len(expected) > 1:
                with self.assertRaises(CapacityError):
                    enumerate_max_weight_matchings(g, cap=len(expected) - 1)


class TestOpportunityPaths(unittest.TestCase):
    def setUp(self):
        self.market = gen_fig2()
        self.edges = union_edges(self.market, FIG2_PLATFORM)
        self.allocation = FIG2_PLATFORM

    def test_reachable_includes_origin(self):
        self.assertEqual(opportunity_reachable(self.market, self.edges, self.allocation, "b1"), frozenset(["b1", "b2"]))
        self.assertEqual(
            opportunity_reachable(self.market, self.edges, self.allocation, "b4"),
            frozenset(["b1", "b2", "b3", "b4"]),
        )

    def test_prices(self):
        self.assertEqual(opportunity_price(self.market, self.edges, self.allocation, ("b1", "s2")), 9)
        self.assertEqual(opportunity_price(self.market, self.edges, self.allocation, ("b2", "s1")), 9)
        self.assertEqual(opportunity_price(self.market, self.edges, self.allocation, ("b3", "s3")), 3)
        self.assertEqual(opportunity_price(self.market, self.edges, self.allocation, ("b4", "s4")), 1)

    def test_unsold_item_in_reach_prices_zero(self):
        market = homogeneous_market({"b1": 1, "b2": 1}, ["s1", "s2"], [("b1", "s1"), ("b1", "s2")])
        edges = union_edges(market)
        self.assertEqual(opportunity_price(market, edges, [("b1", "s1")], ("b1", "s1")), 0)

    def test_errors(self):
        with self.assertRaises(InstanceError):
            opportunity_price(self.market, self.edges, self.allocation, ("b1", "s1"))
        with self.assertRaises(InstanceError):
            opportunity_reachable(self.market, self.edges, self.allocation, "nobody")
        fig1 = gen_fig1(2)
        with self.assertRaises(ClassError):
            opportunity_price(fig1, union_edges(fig1, [("b1", "s1")]), [("b1", "s1")], ("b1", "s1"))


if __name__ == '__main__':
    unittest.main()
