from dataclasses import dataclass
from fractions import Fraction

from equilibrium import (
    evaluate,
    max_competitive_prices,
    market_graph,
    optimal_welfare,
    platform_best_equilibrium,
    social_welfare,
)
from market import PlatformEdgeSet, format_decimal, format_rational
from matching import (
    BipartiteGraph,
    WeightedBipartiteGraph,
    max_weight_matching,
    maximum_matching,
    vertex_hall_violator,
)
from pipeline_utils import ClassError, InstanceError


def harmonic(k):
    return sum((Fraction(1, i) for i in range(1, k + 1)), Fraction(0))


@dataclass(frozen=True)
class ConversionReport:
    input_edges: PlatformEdgeSet
    input_delta_w: Fraction
    chosen_subset: PlatformEdgeSet
    revenue: Fraction
    guarantee: Fraction
    harmonic_k: int
    trace: tuple = ()

    def to_dict(self, places=6):
        data = {
            "input_edges": self.input_edges.to_dict()["edges"],
            "chosen_subset": self.chosen_subset.to_dict()["edges"],
            "harmonic_k": self.harmonic_k,
            "trace": [format_rational(r) for r in self.trace],
        }
        for name in ("input_delta_w", "revenue", "guarantee"):
            value = getattr(self, name)
            data[name] = format_rational(value)
            data[f"{name}_decimal"] = format_decimal(value, places)
        return data


def welfare_maximizing_edges(market):
    """Non-world edges of a welfare-optimal matching that uses as many world edges as possible."""
    positive = {k: v for k, v in market.valuations.items() if v > 0}
    # a world edge is worth less than the smallest welfare step, so welfare still comes first
    tie = Fraction(1, market.scale * (min(market.n, market.m) + 1))
    weights = {k: v + (tie if market.is_world(*k) else 0) for k, v in positive.items()}
    matching, _ = max_weight_matching(WeightedBipartiteGraph(market.buyers, market.sellers, weights))

    edges = [p for p in matching if not market.is_world(*p)]
    target = optimal_welfare(market)
    for pair in list(edges):
        trial = [e for e in edges if e != pair]
        if social_welfare(market, trial) == target:
            edges = trial
    return PlatformEdgeSet.of(market, edges)


def greedy_conversion(market, candidate_edges, log_callback=None):
    """
    Repeatedly drops the platform edge earning the least in the platform-best
    equilibrium and keeps the best set seen along the way.
    """
    if not isinstance(candidate_edges, PlatformEdgeSet):
        candidate_edges = PlatformEdgeSet.of(market, candidate_edges)
    k = len(candidate_edges)
    delta = social_welfare(market, candidate_edges) - social_welfare(market)
    guarantee = delta / harmonic(k) if k else Fraction(0)

    current = list(candidate_edges)
    history = []
    while True:
        eq = platform_best_equilibrium(market, current)
        allocated = set(eq.allocation)
        earned = {e: (eq.prices[e[1]] if e in allocated else Fraction(0)) for e in current}
        total = sum(earned.values(), Fraction(0))
        history.append((tuple(current), total))
        if log_callback:
            log_callback(f"Greedy step with {len(current)} edges: revenue {total}")
        if not current:
            break
        weakest = min(current, key=lambda e: (earned[e], market.pair_key(e)))
        current.remove(weakest)

    best_edges, best_revenue = history[0]
    for edges, revenue in history[1:]:
        if revenue > best_revenue:
            best_edges, best_revenue = edges, revenue

    return ConversionReport(
        input_edges=candidate_edges,
        input_delta_w=delta,
        chosen_subset=PlatformEdgeSet.of(market, best_edges),
        revenue=best_revenue,
        guarantee=guarantee,
        harmonic_k=k,
        trace=tuple(r for _, r in history),
    )


def greedy_solve(market, log_callback=None, details=None):
    """greedy_conversion from the welfare-maximizing edges, reported as a SolveReport."""
    conversion = greedy_conversion(market, welfare_maximizing_edges(market), log_callback)
    extra = {
        "input_delta_w": format_rational(conversion.input_delta_w),
        "guarantee": format_rational(conversion.guarantee),
        "harmonic_k": conversion.harmonic_k,
    }
    extra.update(details or {})
    return evaluate(market, conversion.chosen_subset, solver_name="greedy", certified_optimal=False, details=extra)


def world_gap_ratio(market):
    """(W* - W(G_w)) / W(G_w) exactly; None when the world graph carries no welfare."""
    world = social_welfare(market)
    if world == 0:
        return None
    return (optimal_welfare(market) - world) / world


def _require_homogeneous(market, what):
    if not market.is_homogeneous():
        raise ClassError(f"{what} needs a homogeneous-goods market")


def _top_buyers(market):
    ranked = sorted(market.buyers, key=lambda b: (-market.buyer_value(b), market.buyer_index[b]))
    return ranked[:min(market.n, market.m)]


def hom_full_conversion(market, log_callback=None):
    """
    Replaces the buyers a welfare-optimal outcome leaves out with the ones it
    needs, one platform edge each; welfare reaches W* and no value is lost to prices.
    """
    _require_homogeneous(market, "hom_full_conversion")
    world_matching, _ = max_weight_matching(market_graph(market))
    seller_of = dict(world_matching)
    value = market.buyer_value

    def preference(b):
        return (-value(b), 0 if b in seller_of else 1, market.buyer_index[b])

    wanted = sorted((b for b in market.buyers if value(b) > 0), key=preference)[:min(market.n, market.m)]
    wanted_set = set(wanted)
    newcomers = [b for b in wanted if b not in seller_of]
    leaving = sorted((b for b in seller_of if b not in wanted_set),
                     key=lambda b: (-value(b), market.buyer_index[b]))
    sold = set(seller_of.values())
    unsold = [s for s in market.sellers if s not in sold]

    edges = []
    for i, b in enumerate(newcomers):
        s = seller_of[leaving[i]] if i < len(leaving) else unsold[i - len(leaving)]
        if not market.is_world(b, s):
            edges.append((b, s))
    if log_callback:
        log_callback(f"Homogeneous conversion: {len(newcomers)} newcomers, {len(leaving)} displaced")
    return evaluate(market, edges, solver_name="hom-convert", certified_optimal=False)


def _pair_up(market, buyers, sellers):
    """Bijection-style pairing that uses world edges where it can, then pairs the rest in order."""
    buyers, sellers = list(buyers), list(sellers)
    world = [(b, s) for b in buyers for s in sellers if market.is_world(b, s)]
    matched = maximum_matching(BipartiteGraph(buyers, sellers, world))
    pairs = list(matched.items())
    used = set(matched.values())
    rest_buyers = [b for b in buyers if b not in matched]
    rest_sellers = [s for s in sellers if s not in used]
    pairs.extend(zip(rest_buyers, rest_sellers))
    return pairs


def max_pair_price(market, buyer, seller):
    """
    Highest price at which `seller` can sell to `buyer` over all platform edge sets,
    with an edge set that realizes it; None when only price 0 is reachable.
    """
    _require_homogeneous(market, "max_pair_price")
    market.check_pair(buyer, seller)
    if market.is_world(buyer, seller):
        raise InstanceError(f"({buyer}, {seller}) is already a world edge")
    top = _top_buyers(market)
    if buyer not in top:
        raise InstanceError(f"{buyer} is not among the top {len(top)} buyers by value")

    value = market.buyer_value
    others = [s for s in market.sellers if s != seller]
    lowest_first = sorted((b for b in top if b != buyer), key=lambda b: (value(b), -market.buyer_index[b]))

    best = None
    for dropped in range(len(lowest_first) + 1):
        group = [buyer] + lowest_first[dropped:]
        world = [(b, s) for b in group for s in market.world_neighbors(b) if s != seller]
        cert = vertex_hall_violator(BipartiteGraph(group, others, world), buyer)
        if cert is None:
            break
        price = min(value(b) for b in cert.violator_set)
        if best is None or price > best[0]:
            best = (price, cert)
    if best is None or best[0] == 0:
        return None

    cert = best[1]
    neighborhood = sorted(cert.neighborhood, key=market.seller_index.__getitem__)
    helpers = sorted(cert.violator_set - {buyer}, key=lambda b: (-value(b), market.buyer_index[b]))
    helpers = helpers[:len(neighborhood)]
    trades = [(buyer, seller)] + _pair_up(market, helpers, neighborhood)

    used_buyers = {b for b, _ in trades}
    used_sellers = {s for _, s in trades}
    extra_buyers = [b for b in top if b not in used_buyers]
    extra_sellers = [s for s in market.sellers if s not in used_sellers]
    trades += _pair_up(market, extra_buyers, extra_sellers)

    edges = PlatformEdgeSet.of(market, [p for p in trades if not market.is_world(*p)])
    return max_competitive_prices(market, edges)[seller], edges


def min_nm_approx(market, log_callback=None):
    """Best single-trade price over all admissible pairs."""
    _require_homogeneous(market, "min_nm_approx")
    best = None
    top = set(_top_buyers(market))
    for b in market.buyers:
        if b not in top:
            continue
        for s in market.sellers:
            if market.is_world(b, s):
                continue
            found = max_pair_price(market, b, s)
            if found is not None and (best is None or found[0] > best[0]):
                best = (found[0], found[1], (b, s))
    if best is None:
        if log_callback:
            log_callback("No pair can be sold at a positive price")
        return evaluate(market, (), solver_name="min-nm", certified_optimal=False)
    price, edges, pair = best
    if log_callback:
        log_callback(f"Best pair {pair} sells at {price}")
    return evaluate(market, edges, solver_name="min-nm", certified_optimal=False,
                    details={"pair": list(pair), "pair_price": format_rational(price)})
