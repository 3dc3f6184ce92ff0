from dataclasses import dataclass, field
from fractions import Fraction

from market import PlatformEdgeSet, format_decimal, format_rational, union_edges
from matching import (
    WeightedBipartiteGraph,
    enumerate_max_weight_matchings,
    matched_right,
    max_weight_matching,
    max_weight_value,
)
from pipeline_utils import InstanceError, NotAnEquilibriumError

RULE_NOT_MATCHING = "allocation not a matching"
RULE_UNAVAILABLE = "allocation uses unavailable edge"
RULE_UNKNOWN_SELLER = "price for unknown seller"
RULE_NEGATIVE_PRICE = "negative price"
RULE_UNSOLD_PRICE = "unsold item nonzero price"
RULE_NEGATIVE_UTILITY = "negative utility"
RULE_ENVY = "buyer prefers another available item"
RULE_UNALLOCATED = "unallocated buyer has a profitable trade"
RULE_WELFARE = "not welfare-maximal"


@dataclass(frozen=True)
class Violation:
    rule: str
    agent: str
    detail: str = ""

    def to_dict(self):
        return {"rule": self.rule, "agent": self.agent, "detail": self.detail}


@dataclass(frozen=True)
class Equilibrium:
    allocation: tuple
    prices: dict = field(default_factory=dict, hash=False)

    def seller_of(self, buyer):
        for b, s in self.allocation:
            if b == buyer:
                return s
        return None

    def to_dict(self, places=6):
        return {
            "allocation": [[b, s] for b, s in self.allocation],
            "prices": {s: format_rational(p) for s, p in self.prices.items()},
            "prices_decimal": {s: format_decimal(p, places) for s, p in self.prices.items()},
        }


@dataclass(frozen=True)
class SolveReport:
    platform_edges: PlatformEdgeSet
    equilibrium: Equilibrium
    revenue: Fraction
    welfare: Fraction
    optimal_welfare: Fraction
    solver_name: str
    certified_optimal: bool
    details: dict = field(default_factory=dict, hash=False, compare=False)

    @property
    def welfare_gap(self):
        return self.optimal_welfare - self.welfare

    def to_dict(self, places=6):
        data = {
            "solver": self.solver_name,
            "certified_optimal": self.certified_optimal,
            "edges": self.platform_edges.to_dict()["edges"],
            "equilibrium": self.equilibrium.to_dict(places),
        }
        for name in ("revenue", "welfare", "optimal_welfare", "welfare_gap"):
            value = getattr(self, name)
            data[name] = format_rational(value)
            data[f"{name}_decimal"] = format_decimal(value, places)
        if self.details:
            data["details"] = self.details
        return data


def market_graph(market, extra_edges=None):
    """Weighted graph of world edges plus extra edges; zero-value pairs are left out."""
    weights = {}
    for b, s in union_edges(market, extra_edges):
        v = market.value(b, s)
        if v > 0:
            weights[(b, s)] = v
    return WeightedBipartiteGraph(market.buyers, market.sellers, weights)


def _complete_graph(market):
    weights = {k: v for k, v in market.valuations.items() if v > 0}
    return WeightedBipartiteGraph(market.buyers, market.sellers, weights)


def social_welfare(market, extra_edges=None):
    """W(G) for the world graph plus extra_edges."""
    return max_weight_value(market_graph(market, extra_edges))


def optimal_welfare(market):
    """W* on the complete bipartite graph."""
    return max_weight_value(_complete_graph(market))


def _prices_for_graph(market, graph):
    welfare = max_weight_value(graph)
    prices = {s: Fraction(0) for s in market.sellers}
    # sellers left out of one max-weight matching price at 0
    for s in matched_right(graph):
        prices[s] = welfare - max_weight_value(graph, exclude_right=[s])
    return welfare, prices


def max_competitive_prices(market, extra_edges=None):
    """p_j = W(G) - W(G without s_j) for every seller, in market order."""
    _, prices = _prices_for_graph(market, market_graph(market, extra_edges))
    return prices


def _check_allocation(market, edges, allocation):
    pairs = [tuple(p) for p in allocation]
    buyers = [b for b, _ in pairs]
    sellers = [s for _, s in pairs]
    for b, s in pairs:
        market.check_pair(b, s)
        if (b, s) not in edges:
            raise InstanceError(f"allocated pair ({b}, {s}) is not an available edge")
    if len(set(buyers)) != len(buyers) or len(set(sellers)) != len(sellers):
        raise InstanceError("allocation is not a matching")
    return market.sort_pairs(pairs)


def build_equilibrium(market, extra_edges, allocation):
    """Pairs a max-weight allocation with the maximum competitive prices."""
    edges = union_edges(market, extra_edges)
    pairs = _check_allocation(market, edges, allocation)
    graph = market_graph(market, extra_edges)
    welfare, prices = _prices_for_graph(market, graph)
    weight = sum((market.value(b, s) for b, s in pairs), Fraction(0))
    if weight != welfare:
        raise NotAnEquilibriumError(
            f"allocation weight {weight} is below the maximum {welfare}; no prices support it"
        )
    return Equilibrium(allocation=pairs, prices=prices)


def verify_equilibrium(market, extra_edges, eq):
    """Lists every equilibrium condition the pair (allocation, prices) breaks."""
    violations = []
    edges = union_edges(market, extra_edges)
    allocation = [tuple(p) for p in eq.allocation]

    buyers_seen, sellers_seen = set(), set()
    for b, s in allocation:
        if b in buyers_seen:
            violations.append(Violation(RULE_NOT_MATCHING, b, "buyer allocated twice"))
        if s in sellers_seen:
            violations.append(Violation(RULE_NOT_MATCHING, s, "seller allocated twice"))
        buyers_seen.add(b)
        sellers_seen.add(s)
        if (b, s) not in edges:
            violations.append(Violation(RULE_UNAVAILABLE, b, f"({b}, {s}) is neither a world nor a platform edge"))

    for s in eq.prices:
        if s not in market.seller_index:
            violations.append(Violation(RULE_UNKNOWN_SELLER, str(s)))

    def price(s):
        return Fraction(eq.prices.get(s, 0))

    for s in market.sellers:
        if price(s) < 0:
            violations.append(Violation(RULE_NEGATIVE_PRICE, s, f"price {price(s)}"))
        if s not in sellers_seen and price(s) != 0:
            violations.append(Violation(RULE_UNSOLD_PRICE, s, f"unsold at price {price(s)}"))

    options = {}
    for b, s in edges:
        options.setdefault(b, []).append(s)
    assigned = {}
    for b, s in allocation:
        assigned.setdefault(b, s)

    for b in market.buyers:
        available = sorted(options.get(b, ()), key=market.seller_index.__getitem__)
        if b in assigned:
            s = assigned[b]
            utility = market.value(b, s) - price(s)
            if utility < 0:
                violations.append(Violation(RULE_NEGATIVE_UTILITY, b, f"utility {utility} from {s}"))
            for k in available:
                alternative = market.value(b, k) - price(k)
                if alternative > utility:
                    violations.append(Violation(RULE_ENVY, b, f"{k} gives {alternative} > {utility}"))
                    break
        else:
            for k in available:
                gain = market.value(b, k) - price(k)
                if gain > 0:
                    violations.append(Violation(RULE_UNALLOCATED, b, f"{k} gives {gain}"))
                    break

    weight = sum((market.value(b, s) for b, s in allocation), Fraction(0))
    best = social_welfare(market, extra_edges)
    if weight < best:
        violations.append(Violation(RULE_WELFARE, "allocation", f"weight {weight} < {best}"))
    return violations


def platform_revenue(eq, platform_edges):
    platform = set(platform_edges)
    return sum((eq.prices.get(s, Fraction(0)) for b, s in eq.allocation if (b, s) in platform), Fraction(0))


def _platform_bonus(market, platform, prices):
    # one unit of welfare outweighs any possible revenue difference
    weight_unit = Fraction(1, market.scale)
    total = sum(prices.values(), Fraction(0))
    factor = total / weight_unit + 1
    bonus = {pair: prices[pair[1]] for pair in platform}
    return factor, bonus


def _lexicographic_graph(market, platform, prices):
    factor, bonus = _platform_bonus(market, platform, prices)
    weights = {}
    for b, s in union_edges(market, platform):
        v = market.value(b, s)
        if v > 0:
            weights[(b, s)] = v * factor + bonus.get((b, s), 0)
    return factor, WeightedBipartiteGraph(market.buyers, market.sellers, weights)


def platform_best_equilibrium(market, platform_edges):
    """
    Maximum-price equilibrium whose allocation is the max-weight matching that
    maximizes platform revenue (ties broken lexicographically).
    """
    platform = frozenset(platform_edges)
    _, prices = _prices_for_graph(market, market_graph(market, platform))
    _, graph = _lexicographic_graph(market, platform, prices)
    allocation, _ = max_weight_matching(graph)
    return Equilibrium(allocation=market.sort_pairs(allocation), prices=prices)


def max_platform_revenue(market, platform_edges):
    """Revenue of the platform-best equilibrium, without building the allocation."""
    platform = frozenset(platform_edges)
    if not platform:
        return Fraction(0)
    welfare, prices = _prices_for_graph(market, market_graph(market, platform))
    factor, graph = _lexicographic_graph(market, platform, prices)
    return max_weight_value(graph) - welfare * factor


def platform_best_by_enumeration(market, platform_edges, cap):
    """Same quantity as max_platform_revenue, by listing every max-weight matching."""
    platform = frozenset(platform_edges)
    graph = market_graph(market, platform)
    _, prices = _prices_for_graph(market, graph)
    best = None
    for matching in enumerate_max_weight_matchings(graph, cap):
        eq = Equilibrium(allocation=market.sort_pairs(matching), prices=prices)
        revenue = platform_revenue(eq, platform)
        if best is None or revenue > best[0]:
            best = (revenue, eq)
    if best is None:
        return Fraction(0), Equilibrium(allocation=(), prices=prices)
    return best


def evaluate(market, platform_edges, solver_name="eval", certified_optimal=False, details=None):
    """SolveReport for a platform edge set under platform-favoring tie-breaking."""
    if not isinstance(platform_edges, PlatformEdgeSet):
        platform_edges = PlatformEdgeSet.of(market, platform_edges)
    eq = platform_best_equilibrium(market, platform_edges)
    revenue = platform_revenue(eq, platform_edges)
    welfare = sum((market.value(b, s) for b, s in eq.allocation), Fraction(0))
    return SolveReport(
        platform_edges=platform_edges,
        equilibrium=eq,
        revenue=revenue,
        welfare=welfare,
        optimal_welfare=optimal_welfare(market),
        solver_name=solver_name,
        certified_optimal=certified_optimal,
        details=dict(details or {}),
    )


def prune_platform_edges(market, platform_edges):
    """Drops platform edges that do not trade, or trade at price 0, in the platform-best equilibrium."""
    if not isinstance(platform_edges, PlatformEdgeSet):
        platform_edges = PlatformEdgeSet.of(market, platform_edges)
    eq = platform_best_equilibrium(market, platform_edges)
    allocated = set(eq.allocation)
    kept = [e for e in platform_edges if e in allocated and eq.prices[e[1]] > 0]
    pruned = PlatformEdgeSet.of(market, kept)
    if max_platform_revenue(market, pruned) < platform_revenue(eq, platform_edges):
        return platform_edges
    return pruned
