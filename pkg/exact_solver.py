import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

from equilibrium import (
    evaluate,
    max_platform_revenue,
    optimal_welfare,
    platform_best_by_enumeration,
    prune_platform_edges,
)
from market import PlatformEdgeSet, format_decimal, format_rational
from pipeline_utils import CapacityError, ResourceGuard, SolverStats, SpecError

UNRESTRICTED_MAX_SIDE = 3


@dataclass(frozen=True)
class ExactLimits:
    max_buyers: int = 8
    max_sellers: int = 8
    matching_enumeration_cap: int = 100000
    max_candidate_sets: int = 2000000

    def __post_init__(self):
        for name in ("max_buyers", "max_sellers", "matching_enumeration_cap", "max_candidate_sets"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise SpecError(f"{name} must be a positive integer, got {value!r}")

    @classmethod
    def from_config(cls, config):
        return cls(
            max_buyers=int(config.get("max_buyers", 8)),
            max_sellers=int(config.get("max_sellers", 8)),
            matching_enumeration_cap=int(config.get("matching_enumeration_cap", 100000)),
            max_candidate_sets=int(config.get("max_candidate_sets", 2000000)),
        )


@dataclass(frozen=True)
class PrmReport:
    optimal_welfare: Fraction
    worst_revenue_optimal_welfare: Fraction
    ratio: Fraction
    witness_edges: PlatformEdgeSet
    optimal_revenue: Fraction
    best_revenue_optimal_welfare: Fraction

    def to_dict(self, places=6):
        data = {"witness_edges": self.witness_edges.to_dict()["edges"]}
        for name in ("optimal_welfare", "worst_revenue_optimal_welfare", "ratio",
                     "optimal_revenue", "best_revenue_optimal_welfare"):
            value = getattr(self, name)
            data[name] = format_rational(value)
            data[f"{name}_decimal"] = format_decimal(value, places)
        return data


class _SearchResult:
    """Running optimum of one search branch; merged deterministically."""

    def __init__(self):
        self.count = 0
        self.revenue = -1
        self.key = None
        self.worst_welfare = None
        self.worst_key = None
        self.best_welfare = None

    def offer(self, revenue, welfare, key):
        self.count += 1
        if revenue > self.revenue:
            self.revenue = revenue
            self.key = key
            self.worst_welfare, self.worst_key = welfare, key
            self.best_welfare = welfare
            return
        if revenue < self.revenue:
            return
        if key < self.key:
            self.key = key
        if welfare < self.worst_welfare or (welfare == self.worst_welfare and key < self.worst_key):
            self.worst_welfare, self.worst_key = welfare, key
        if welfare > self.best_welfare:
            self.best_welfare = welfare

    def merge(self, other):
        self.count += other.count
        if other.key is None:
            return
        if other.revenue > self.revenue or self.key is None:
            self.revenue, self.key = other.revenue, other.key
            self.worst_welfare, self.worst_key = other.worst_welfare, other.worst_key
            self.best_welfare = other.best_welfare
        elif other.revenue == self.revenue:
            self.key = min(self.key, other.key)
            if (other.worst_welfare, other.worst_key) < (self.worst_welfare, self.worst_key):
                self.worst_welfare, self.worst_key = other.worst_welfare, other.worst_key
            self.best_welfare = max(self.best_welfare, other.best_welfare)


class _RevenueSearch:
    """
    Exhaustive search over matchings of positive-value non-world pairs.

    Every world-only sub-problem is answered from a table T[buyer mask][seller mask]
    of max-weight world matchings, so a candidate with k platform edges costs
    O(2^k * k) lookups instead of fresh matching runs.
    """

    def __init__(self, market, limits, log_callback=None):
        self.market = market
        self.limits = limits
        self.log_callback = log_callback
        self.scale = market.scale
        n, m = market.n, market.m

        self.weight = [[int(market.value(b, s) * self.scale) for s in market.sellers] for b in market.buyers]

        world = [(market.buyer_index[b], market.seller_index[s]) for b, s in market.world_edges]
        world = [(i, j) for i, j in world if self.weight[i][j] > 0]
        active_buyers = sorted({i for i, _ in world})
        active_sellers = sorted({j for _, j in world})
        self.buyer_bit = [0] * n
        self.seller_bit = [0] * m
        for k, i in enumerate(active_buyers):
            self.buyer_bit[i] = 1 << k
        for k, j in enumerate(active_sellers):
            self.seller_bit[j] = 1 << k
        self.full_buyers = (1 << len(active_buyers)) - 1
        self.full_sellers = (1 << len(active_sellers)) - 1
        self.table = self._world_table(active_buyers, world)

        # candidate pairs and interchangeable agents
        self.options = [
            [j for j in range(m) if self.weight[i][j] > 0 and not market.is_world(market.buyers[i], market.sellers[j])]
            for i in range(n)
        ]
        seller_signature = {}
        for j, s in enumerate(market.sellers):
            signature = (tuple(self.weight[i][j] for i in range(n)), market.world_buyers(s))
            seller_signature.setdefault(signature, []).append(j)
        self.seller_classes = list(seller_signature.values())
        self.class_of_seller = {}
        for c, members in enumerate(self.seller_classes):
            for j in members:
                self.class_of_seller[j] = c
        self.buyer_classes = [
            sorted({self.class_of_seller[j] for j in self.options[i]}) for i in range(n)
        ]

        buyer_signature = {}
        self.previous_twin = [-1] * n
        for i, b in enumerate(market.buyers):
            signature = (tuple(self.weight[i]), market.world_neighbors(b))
            if signature in buyer_signature:
                self.previous_twin[i] = buyer_signature[signature]
            buyer_signature[signature] = i

    def _world_table(self, active_buyers, world):
        ns = self.full_sellers.bit_length()
        by_buyer = {}
        for i, j in world:
            by_buyer.setdefault(i, []).append((self.seller_bit[j], self.weight[i][j]))
        size = 1 << ns
        table = [[0] * size]
        for bm in range(1, 1 << len(active_buyers)):
            low = (bm & -bm).bit_length() - 1
            rest = table[bm & (bm - 1)]
            row = list(rest)
            for sb, w in by_buyer[active_buyers[low]]:
                for sm in range(size):
                    if sm & sb:
                        value = w + rest[sm ^ sb]
                        if value > row[sm]:
                            row[sm] = value
            table.append(row)
        return table

    def evaluate(self, chosen):
        """(welfare, revenue) in scaled integers for a platform matching [(i, j), ...]."""
        k = len(chosen)
        size = 1 << k
        weight = [0] * size
        bmask = [self.full_buyers] * size
        smask = [self.full_sellers] * size
        base = [self.table[self.full_buyers][self.full_sellers]] + [0] * (size - 1)
        for c in range(1, size):
            t = (c & -c).bit_length() - 1
            prev = c & (c - 1)
            i, j = chosen[t]
            weight[c] = weight[prev] + self.weight[i][j]
            bmask[c] = bmask[prev] & ~self.buyer_bit[i]
            smask[c] = smask[prev] & ~self.seller_bit[j]
            base[c] = weight[c] + self.table[bmask[c]][smask[c]]
        welfare = max(base)

        prices = []
        for t in range(k):
            bit = 1 << t
            sb = self.seller_bit[chosen[t][1]]
            without = max(
                weight[c] + self.table[bmask[c]][smask[c] & ~sb]
                for c in range(size) if not c & bit
            )
            prices.append(welfare - without)

        revenue = 0
        price_sum = [0] * size
        for c in range(1, size):
            t = (c & -c).bit_length() - 1
            price_sum[c] = price_sum[c & (c - 1)] + prices[t]
            if base[c] == welfare and price_sum[c] > revenue:
                revenue = price_sum[c]
        return welfare, revenue

    def branches(self):
        """Top-level choices of the first buyer; each is an independent task."""
        if not self.market.buyers:
            return [None]
        branches = [None] + list(self.buyer_classes[0])
        if self.log_callback:
            self.log_callback(f"Exact search: {len(branches)} branches, {len(self.seller_classes)} seller classes")
        return branches

    def run_branch(self, first_choice):
        result = _SearchResult()
        n = self.market.n
        if n == 0:
            welfare, revenue = self.evaluate([])
            result.offer(revenue, welfare, (0, ()))
            return result

        used_sellers = set()
        choice = [None] * n
        chosen = []
        limit = self.limits.max_candidate_sets

        def options_for(i):
            twin = self.previous_twin[i]
            floor = choice[twin] if twin >= 0 else -1
            opts = []
            if floor is not None:
                for c in self.buyer_classes[i]:
                    if c >= floor:
                        opts.append(c)
            opts.append(None)
            return opts

        def lowest_free(c):
            for j in self.seller_classes[c]:
                if j not in used_sellers:
                    return j
            return None

        def visit(i):
            if i == n:
                welfare, revenue = self.evaluate(chosen)
                key = (len(chosen), tuple(chosen))
                result.offer(revenue, welfare, key)
                if result.count > limit:
                    raise CapacityError(f"more than {limit} candidate edge sets; raise max_candidate_sets")
                return
            opts = options_for(i) if i > 0 else [first_choice]
            for c in opts:
                if c is None:
                    choice[i] = None
                    visit(i + 1)
                    continue
                j = lowest_free(c)
                if j is None:
                    continue
                choice[i] = c
                used_sellers.add(j)
                chosen.append((i, j))
                visit(i + 1)
                chosen.pop()
                used_sellers.discard(j)
            choice[i] = None

        visit(0)
        return result


def _search(market, limits, concurrency=1, deterministic_mode=True, log_callback=None):
    ResourceGuard.check_market_size(market, limits.max_buyers, limits.max_sellers)
    stats = SolverStats()
    search = _RevenueSearch(market, limits, log_callback)

    if deterministic_mode:
        concurrency = 1
    concurrency = max(1, min(concurrency, os.cpu_count() or 1))
    stats.record_workers(concurrency)

    branches = search.branches()
    total = _SearchResult()
    if concurrency == 1:
        for branch in branches:
            total.merge(search.run_branch(branch))
    else:
        results = [None] * len(branches)
        with ThreadPoolExecutor(max_workers=concurrency) as executor:
            future_to_index = {executor.submit(search.run_branch, b): idx for idx, b in enumerate(branches)}
            for future in as_completed(future_to_index):
                results[future_to_index[future]] = future.result()
        for result in results:
            total.merge(result)

    ResourceGuard.check_candidate_count(total.count, limits.max_candidate_sets)
    stats.add_candidates(total.count)
    stats.add_evaluated(total.count)
    stats.record_best(format_rational(Fraction(total.revenue, search.scale)))
    stats.finish()
    if log_callback:
        log_callback(stats.get_summary())
    return search, total


def _pairs_from_key(market, key):
    return [(market.buyers[i], market.sellers[j]) for i, j in key[1]]


def optimal_revenue(market, limits=None, concurrency=1, deterministic_mode=True, log_callback=None):
    """Certified revenue-optimal platform edge set by exhaustive search."""
    limits = limits or ExactLimits()
    search, total = _search(market, limits, concurrency, deterministic_mode, log_callback)
    best = Fraction(total.revenue, search.scale)

    witness = PlatformEdgeSet.of(market, _pairs_from_key(market, total.key))
    pruned = prune_platform_edges(market, witness)

    # certify the witness with the full list of max-weight matchings
    certified, _ = platform_best_by_enumeration(market, pruned, limits.matching_enumeration_cap)
    if certified != best:
        if log_callback:
            log_callback(f"Pruned witness priced at {certified}, expected {best}; keeping the unpruned set")
        pruned = witness

    return evaluate(market, pruned, solver_name="exact", certified_optimal=True,
                    details={"candidate_sets": total.count})


def prm(market, limits=None, concurrency=1, deterministic_mode=True, log_callback=None):
    """Welfare loss of revenue maximization, worst case over revenue-optimal configurations."""
    limits = limits or ExactLimits()
    search, total = _search(market, limits, concurrency, deterministic_mode, log_callback)
    scale = search.scale
    w_star = optimal_welfare(market)
    worst = Fraction(total.worst_welfare, scale)
    if worst == 0:
        ratio = Fraction(1)
    else:
        ratio = w_star / worst
    return PrmReport(
        optimal_welfare=w_star,
        worst_revenue_optimal_welfare=worst,
        ratio=ratio,
        witness_edges=PlatformEdgeSet.of(market, _pairs_from_key(market, total.worst_key)),
        optimal_revenue=Fraction(total.revenue, scale),
        best_revenue_optimal_welfare=Fraction(total.best_welfare, scale),
    )


def optimal_revenue_unrestricted(market, log_callback=None):
    """
    Brute force over every set of positive-value non-world pairs, one or many
    edges per buyer. Only for markets up to 3 x 3.
    """
    if market.n > UNRESTRICTED_MAX_SIDE or market.m > UNRESTRICTED_MAX_SIDE:
        raise CapacityError(
            f"Unrestricted search is limited to {UNRESTRICTED_MAX_SIDE} x {UNRESTRICTED_MAX_SIDE} markets"
        )
    pairs = [
        (b, s) for b in market.buyers for s in market.sellers
        if market.value(b, s) > 0 and not market.is_world(b, s)
    ]
    best_revenue, best_set = Fraction(-1), ()
    for size in range(len(pairs) + 1):
        for subset in combinations(pairs, size):
            revenue = max_platform_revenue(market, subset)
            if revenue > best_revenue:
                best_revenue, best_set = revenue, subset
    if log_callback:
        log_callback(f"Unrestricted search over {2 ** len(pairs)} edge sets: best revenue {best_revenue}")
    return evaluate(market, best_set, solver_name="exact-unrestricted", certified_optimal=True)
