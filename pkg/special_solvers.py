from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import networkx as nx

from equilibrium import evaluate, max_platform_revenue, prune_platform_edges
from market import PlatformEdgeSet
from matching import BipartiteGraph, assignment, maximum_matching_size
from pipeline_utils import ClassError

CLASS_GENERAL = "general"
CLASS_HOMOGENEOUS = "homogeneous"
CLASS_SWSH = "SWSH"
CLASS_SHGB = "SHGB"

# ties at the top-m boundary are tried exhaustively up to this many variants
MAX_TIE_VARIANTS = 64


def _is_swsh(market):
    return market.is_homogeneous() and all(len(market.world_neighbors(b)) <= 1 for b in market.buyers)


def common_value(market):
    """The single positive value every valued pair shares, or None."""
    values = {market.value(b, s) for b in market.buyers for s in market.sellers} - {0}
    if len(values) != 1:
        return None
    return values.pop()


def _valued_buyers(market):
    return [b for b in market.buyers if market.buyer_value(b) > 0]


def _is_shgb(market):
    # homogeneous rows, so a buyer values every seller at c or none at all
    if not market.buyers or not market.sellers or not market.is_homogeneous():
        return False
    if common_value(market) is None:
        return False
    shared = set()
    for b in market.buyers:
        nbrs = market.world_neighbors(b)
        if len(nbrs) > 2:
            return False
        if len(nbrs) == 2:
            if nbrs in shared:
                return False
            shared.add(nbrs)
    return True


def market_classes(market):
    """Every class tag the market satisfies (general always holds)."""
    tags = {CLASS_GENERAL}
    if market.is_homogeneous():
        tags.add(CLASS_HOMOGENEOUS)
    if _is_swsh(market):
        tags.add(CLASS_SWSH)
    if _is_shgb(market):
        tags.add(CLASS_SHGB)
    return tags


def classify_market(market):
    """Most specific tag: SHGB, then SWSH, then homogeneous, else general."""
    tags = market_classes(market)
    for tag in (CLASS_SHGB, CLASS_SWSH, CLASS_HOMOGENEOUS):
        if tag in tags:
            return tag
    return CLASS_GENERAL


@dataclass(frozen=True)
class SellerSubgraph:
    seller: str
    members: tuple
    value: Fraction

    @property
    def top(self):
        return self.members[0]

    @property
    def others(self):
        return self.members[1:]


@dataclass(frozen=True)
class SubgraphDecomposition:
    seller_subgraphs: tuple
    dangling_buyers: tuple
    dangling_sellers: tuple

    @property
    def order(self):
        return tuple(sg.seller for sg in self.seller_subgraphs)


def decompose(market):
    """Seller subgraphs sorted by their largest buyer value (richer subgraphs first on ties)."""
    if not _is_swsh(market):
        raise ClassError("seller-subgraph decomposition needs a SWSH market")

    def rank(b):
        return (-market.buyer_value(b), market.buyer_index[b])

    subgraphs = []
    for s in market.sellers:
        members = tuple(sorted(market.world_buyers(s), key=rank))
        if members:
            subgraphs.append(SellerSubgraph(s, members, market.buyer_value(members[0])))
    subgraphs.sort(key=lambda sg: (
        -sg.value,
        tuple(-market.buyer_value(b) for b in sg.members),
        market.seller_index[sg.seller],
    ))
    return SubgraphDecomposition(
        seller_subgraphs=tuple(subgraphs),
        dangling_buyers=tuple(b for b in market.buyers if not market.world_neighbors(b)),
        dangling_sellers=tuple(s for s in market.sellers if not market.world_buyers(s)),
    )


@dataclass(frozen=True)
class ChainCycleConfig:
    """
    cycles: (first, last) positions in the decomposition order.
    chain: (first, last, feeder seller, attachment buyer) or None; the feeder is a
    dangling seller selling to the top of `last`, and seller `first` sells to the
    attachment buyer.
    """
    cycles: tuple = ()
    chain: tuple = None
    zero_chain_assignments: tuple = ()

    def trades(self, decomposition):
        order = decomposition.seller_subgraphs
        pairs = []
        for first, last in self.cycles:
            if first == last:
                pairs.append((order[first].top, order[first].seller))
                continue
            for x in range(first, last + 1):
                nxt = first if x == last else x + 1
                pairs.append((order[nxt].top, order[x].seller))
        if self.chain is not None:
            first, last, feeder, attachment = self.chain
            pairs.append((order[last].top, feeder))
            for x in range(first + 1, last + 1):
                pairs.append((order[x - 1].top, order[x].seller))
            pairs.append((attachment, order[first].seller))
        pairs.extend((b, s) for s, b in self.zero_chain_assignments)
        return pairs

    def platform_edges(self, market, decomposition):
        return PlatformEdgeSet.of(market, [p for p in self.trades(decomposition) if not market.is_world(*p)])

    def describe(self, decomposition):
        order = decomposition.order
        data = {"cycles": [[order[x] for x in range(a, e + 1)] for a, e in self.cycles]}
        if self.chain is not None:
            first, last, feeder, attachment = self.chain
            data["chain"] = {
                "sellers": [order[x] for x in range(first, last + 1)],
                "feeder": feeder,
                "attachment": attachment,
            }
        data["zero_chains"] = [[s, b] for s, b in self.zero_chain_assignments]
        return data


class _SwshPlanner:
    def __init__(self, reduced, original, log_callback=None):
        self.reduced = reduced
        self.original = original
        self.log_callback = log_callback
        self.dec = decompose(reduced)
        self.order = self.dec.seller_subgraphs
        self.position = {}
        for x, sg in enumerate(self.order):
            for b in sg.others:
                self.position[b] = x
        value = reduced.buyer_value
        leftovers = [b for sg in self.order for b in sg.others] + list(self.dec.dangling_buyers)
        self.leftovers = sorted(leftovers, key=lambda b: (-value(b), reduced.buyer_index[b]))
        self._blocks = {}

    def _rank(self, buyers):
        return sorted(buyers, key=lambda b: (-self.reduced.buyer_value(b), self.reduced.buyer_index[b]))

    def block_revenue(self, first, last):
        """Revenue of one cycle and its own 0-chains, priced on the isolated sub-market."""
        key = (first, last)
        if key not in self._blocks:
            block = self.order[first:last + 1]
            others = self._rank([b for sg in block for b in sg.others])
            feeders = self.dec.dangling_sellers[:len(others)]
            config = ChainCycleConfig(
                cycles=((0, last - first),),
                zero_chain_assignments=tuple(zip(feeders, others)),
            )
            sub = self.reduced.restrict(
                [b for sg in block for b in sg.members],
                [sg.seller for sg in block] + list(feeders),
            )
            local = SubgraphDecomposition(tuple(block), (), tuple(feeders))
            self._blocks[key] = max_platform_revenue(sub, config.platform_edges(sub, local))
        return self._blocks[key]

    def partition(self, limit, closed_at=None):
        """Best split of positions [0, limit) into cycles of length 1-3; closed_at must end its cycle."""
        best = [(Fraction(0), ())]
        for i in range(1, limit + 1):
            candidate = None
            for length in (3, 2, 1):
                if length > i:
                    continue
                first, last = i - length, i - 1
                if closed_at is not None and first <= closed_at < last:
                    continue
                value = best[first][0] + self.block_revenue(first, last)
                if candidate is None or value > candidate[0]:
                    candidate = (value, best[first][1] + ((first, last),))
            best.append(candidate)
        return best[limit][1]

    def configurations(self):
        size = len(self.order)
        feeders = self.dec.dangling_sellers
        yield ChainCycleConfig(
            cycles=self.partition(size),
            zero_chain_assignments=tuple(zip(feeders, self.leftovers)),
        )
        if not feeders:
            return
        feeder, rest = feeders[0], feeders[1:]
        for first in range(size):
            for attachment in self.leftovers:
                remaining = [b for b in self.leftovers if b != attachment]
                zero = tuple(zip(rest, remaining))
                chain = (first, size - 1, feeder, attachment)
                seen = set()
                x = self.position.get(attachment)
                variants = [None] + ([x] if x is not None and x < first else [])
                for closed_at in variants:
                    cycles = self.partition(first, closed_at)
                    if cycles in seen:
                        continue
                    seen.add(cycles)
                    yield ChainCycleConfig(cycles=cycles, chain=chain, zero_chain_assignments=zero)

    def best(self):
        winner = None
        for config in self.configurations():
            edges = config.platform_edges(self.original, self.dec)
            revenue = max_platform_revenue(self.original, edges)
            if winner is None or revenue > winner[1]:
                winner = (config, revenue, edges)
        return winner


def _reductions(market):
    """Equal-size markets the optimum can be read from (one per boundary tie resolution)."""
    n, m = market.n, market.m
    if m > n:
        dangling = [s for s in market.sellers if not market.world_buyers(s)]
        drop = set(dangling[len(dangling) - (m - n):])
        return [market.restrict(market.buyers, [s for s in market.sellers if s not in drop])]
    if n > m:
        ranked = sorted(market.buyers, key=lambda b: (-market.buyer_value(b), market.buyer_index[b]))
        cutoff = market.buyer_value(ranked[m - 1]) if m else None
        sure = [b for b in ranked if m and market.buyer_value(b) > cutoff]
        tied = [b for b in ranked if m and market.buyer_value(b) == cutoff]
        need = m - len(sure)
        variants = []
        for picked in combinations(tied, need):
            variants.append(market.restrict(sure + list(picked), market.sellers))
            if len(variants) >= MAX_TIE_VARIANTS:
                break
        return variants or [market.restrict([], market.sellers)]
    return [market]


def swsh_plan(market, log_callback=None):
    """(ChainCycleConfig, SubgraphDecomposition, revenue, edges) of the best chain/cycle configuration."""
    if not _is_swsh(market):
        raise ClassError("swsh_solve needs a homogeneous market where every buyer knows at most one seller")
    best = None
    for reduced in _reductions(market):
        planner = _SwshPlanner(reduced, market, log_callback)
        config, revenue, edges = planner.best()
        if log_callback:
            log_callback(f"SWSH reduction with {reduced.n} buyers: best configuration revenue {revenue}")
        if best is None or revenue > best[2]:
            best = (config, planner.dec, revenue, edges)
    return best


def swsh_solve(market, log_callback=None):
    config, dec, revenue, edges = swsh_plan(market, log_callback)
    pruned = prune_platform_edges(market, edges)
    return evaluate(market, pruned, solver_name="swsh", certified_optimal=True,
                    details=config.describe(dec))


class _ShgbPlanner:
    def __init__(self, market):
        self.value = common_value(market)
        # buyers valuing nothing never trade
        self.market = market.restrict(_valued_buyers(market), market.sellers)
        self.nbrs = {b: self.market.world_neighbors(b) for b in self.market.buyers}
        self._peel()
        self._components()

    def _peel(self):
        peeled, removed = [], set()
        changed = True
        while changed:
            changed = False
            for b in self.market.buyers:
                if b in peeled:
                    continue
                if len([s for s in self.nbrs[b] if s not in removed]) <= 1:
                    peeled.append(b)
                    removed.update(self.nbrs[b])
                    changed = True
        self.peeled = peeled
        self.peeled_sellers = removed

    def _components(self):
        # remaining sellers are vertices, remaining buyers are the edges between them
        graph = nx.Graph()
        for b in self.market.buyers:
            if b not in self.peeled:
                x, y = self.nbrs[b]
                graph.add_edge(x, y, buyer=b)
        index = self.market.seller_index
        self.trees, self.cyclic = [], []
        for comp in sorted(nx.connected_components(graph), key=lambda c: min(index[s] for s in c)):
            sub = graph.subgraph(comp)
            buyers = sorted((d["buyer"] for _, _, d in sub.edges(data=True)), key=self.market.buyer_index.__getitem__)
            sellers = sorted(comp, key=index.__getitem__)
            entry = (buyers, sellers)
            (self.trees if nx.is_tree(sub) else self.cyclic).append(entry)

    def neighborhood(self, buyers):
        found = set()
        for b in buyers:
            found.update(self.nbrs[b])
        return found

    def formula(self, buyers):
        """min(|B|, |S|) - |N(B)| + k, k = matching size through complement pairs into N(B)."""
        nbhd = self.neighborhood(buyers)
        complement = [(b, s) for b in buyers for s in nbhd if s not in self.nbrs[b]]
        k = maximum_matching_size(BipartiteGraph(buyers, sorted(nbhd), complement))
        return min(len(buyers), self.market.m) - len(nbhd) + k

    def surplus(self, buyers):
        return len(self.neighborhood(buyers)) - len(buyers)

    def maximum_set(self):
        """The largest non-positive-surplus set, with the trees left out of it."""
        budget = (len(self.peeled) - len(self.peeled_sellers)
                  + sum(len(bs) - len(ss) for bs, ss in self.cyclic))
        index = self.market.seller_index
        ranked = sorted(self.trees, key=lambda t: (-len(t[0]), index[t[1][0]]))
        chosen = ranked[:max(0, budget)]
        buyers = list(self.peeled)
        for bs, _ in self.cyclic + chosen:
            buyers.extend(bs)
        unselected = [t for t in self.trees if t not in chosen]
        return self._ordered(buyers), unselected

    def _ordered(self, buyers):
        return tuple(sorted(set(buyers), key=self.market.buyer_index.__getitem__))

    def candidates(self):
        """(buyer set, trees offering a free seller) pairs, maximum set first."""
        largest, unselected = self.maximum_set()
        yield largest, unselected
        buyers = self.market.buyers
        for size in range(3):
            for subset in combinations(buyers, size):
                yield self._ordered(subset), unselected
        low = [b for b in buyers if len(self.nbrs[b]) <= 1]
        two = [b for b in buyers if len(self.nbrs[b]) == 2]
        for size in range(3):
            for extra in combinations(two, size):
                yield self._ordered(low + list(extra)), unselected

    def realize(self, buyers, unselected_trees):
        """Platform edges for a surplus set: every neighbour sold inside the set, the rest sold outside."""
        market = self.market
        if not buyers:
            return []
        nbhd = self.neighborhood(buyers)
        free = {s for s in market.sellers if not market.world_buyers(s)}
        for _, sellers in unselected_trees:
            free.add(sellers[0])
        unit = len(buyers) + 2
        heavy = unit * (len(buyers) + 1) + 1
        weights = {}
        for r, b in enumerate(buyers):
            for c, s in enumerate(market.sellers):
                if s in nbhd:
                    weights[(r, c)] = heavy if s in self.nbrs[b] else heavy + unit
                else:
                    weights[(r, c)] = unit + (1 if s in free else 0)
        _, pairs = assignment(weights, range(len(buyers)), range(market.m))
        trades = [(buyers[r], market.sellers[c]) for r, c in pairs]
        return [p for p in trades if not market.is_world(*p)]

    def best(self):
        seen, scored = set(), []
        for cand, unselected in self.candidates():
            if cand in seen:
                continue
            seen.add(cand)
            if self.surplus(cand) <= 0:
                scored.append((self.formula(cand), len(scored), cand, unselected))
        scored.sort(key=lambda item: (-item[0], item[1]))

        winner = None
        for formula, _, cand, unselected in scored:
            if winner is not None and formula * self.value <= winner[0]:
                break
            edges = self.realize(cand, unselected)
            revenue = max_platform_revenue(self.market, edges)
            if winner is None or revenue > winner[0]:
                winner = (revenue, cand, formula, edges)
        return winner


def shgb_surplus_set(market):
    """The non-positive-surplus buyer set the SHGB solver realizes, with its unit revenue."""
    if classify_market(market) != CLASS_SHGB:
        raise ClassError("shgb_solve needs a unit-value market with buyer degree at most 2")
    _, cand, formula, _ = _ShgbPlanner(market).best()
    return frozenset(cand), formula


def shgb_solve(market, log_callback=None):
    if classify_market(market) != CLASS_SHGB:
        raise ClassError("shgb_solve needs a unit-value market with buyer degree at most 2")
    planner = _ShgbPlanner(market)
    revenue, cand, formula, edges = planner.best()
    if log_callback:
        log_callback(f"SHGB: peeled {len(planner.peeled)} buyers, surplus set of {len(cand)} buyers, "
                     f"{formula} units at value {planner.value}")
    pruned = prune_platform_edges(market, edges)
    return evaluate(market, pruned, solver_name="shgb", certified_optimal=True, details={
        "surplus_set": list(cand),
        "units": formula,
        "unit_value": str(planner.value),
        "peeled": list(planner.peeled),
    })
