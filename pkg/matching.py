import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import networkx as nx
from networkx.algorithms import bipartite

from pipeline_utils import CapacityError, ClassError, InstanceError


@dataclass(frozen=True)
class WeightedBipartiteGraph:
    left: tuple
    right: tuple
    weights: dict = field(default_factory=dict, hash=False)

    def __post_init__(self):
        left, right = tuple(self.left), tuple(self.right)
        left_set, right_set = set(left), set(right)
        weights = {}
        for (a, b), w in dict(self.weights).items():
            if a not in left_set or b not in right_set:
                raise InstanceError(f"edge ({a}, {b}) has an unknown endpoint")
            w = Fraction(w)
            if w < 0:
                raise InstanceError(f"negative weight on ({a}, {b})")
            weights[(a, b)] = w
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        object.__setattr__(self, "weights", weights)

    @cached_property
    def left_index(self):
        return {x: i for i, x in enumerate(self.left)}

    @cached_property
    def right_index(self):
        return {y: j for j, y in enumerate(self.right)}

    @cached_property
    def _integers(self):
        scale = 1
        for w in self.weights.values():
            scale = math.lcm(scale, w.denominator)
        int_weights = {}
        for (a, b), w in self.weights.items():
            if w > 0:
                int_weights[(self.left_index[a], self.right_index[b])] = int(w * scale)
        return scale, int_weights

    def support(self):
        return BipartiteGraph(self.left, self.right, self.weights.keys())

    def pair_key(self, pair):
        return (self.left_index[pair[0]], self.right_index[pair[1]])


class BipartiteGraph:
    """Unweighted bipartite graph; left/right ids must be distinct within a side."""

    def __init__(self, left, right, edges):
        self.left = tuple(left)
        self.right = tuple(right)
        right_set = set(self.right)
        self.adjacency = {x: [] for x in self.left}
        for a, b in edges:
            if a not in self.adjacency or b not in right_set:
                raise InstanceError(f"edge ({a}, {b}) has an unknown endpoint")
            if b not in self.adjacency[a]:
                self.adjacency[a].append(b)
        order = {y: j for j, y in enumerate(self.right)}
        for a in self.adjacency:
            self.adjacency[a].sort(key=order.__getitem__)

    def neighbors(self, a):
        return self.adjacency[a]

    def neighborhood(self, lefts):
        found = set()
        for a in lefts:
            found.update(self.adjacency[a])
        return frozenset(found)

    def without(self, lefts=(), rights=()):
        lefts, rights = set(lefts), set(rights)
        left = [a for a in self.left if a not in lefts]
        right = [b for b in self.right if b not in rights]
        edges = [(a, b) for a in left for b in self.adjacency[a] if b not in rights]
        return BipartiteGraph(left, right, edges)

    def to_networkx(self):
        g = nx.Graph()
        g.add_nodes_from((("L", a) for a in self.left), bipartite=0)
        g.add_nodes_from((("R", b) for b in self.right), bipartite=1)
        g.add_edges_from((("L", a), ("R", b)) for a in self.left for b in self.adjacency[a])
        return g


@dataclass(frozen=True)
class HallCertificate:
    violator_set: frozenset
    neighborhood: frozenset
    difference: int


def assignment(int_weights, rows, cols):
    """
    Max-weight matching over positive integer weights restricted to rows x cols.
    Returns (value, [(row, col), ...]) sorted.
    """
    rows, cols = set(rows), set(cols)
    graph = nx.Graph()
    graph.add_weighted_edges_from(
        (("r", r), ("c", c), w)
        for (r, c), w in sorted(int_weights.items())
        if w > 0 and r in rows and c in cols
    )
    pairs = []
    for u, v in nx.max_weight_matching(graph, maxcardinality=False):
        (_, r), (_, c) = (u, v) if u[0] == "r" else (v, u)
        pairs.append((r, c))
    return sum(int_weights[p] for p in pairs), sorted(pairs)


def canonical_assignment(int_weights, rows, cols, target=None):
    """
    The lexicographically smallest positive-edge matching reaching the optimum:
    edges are forced greedily in sorted order whenever the remainder can still
    make up the difference.
    """
    rows, cols = list(rows), list(cols)
    if target is None:
        target, _ = assignment(int_weights, rows, cols)
    free_rows, free_cols = set(rows), set(cols)
    row_set, col_set = set(rows), set(cols)
    edges = sorted(e for e in int_weights if e[0] in row_set and e[1] in col_set and int_weights[e] > 0)

    chosen = []
    acc = 0
    for r, c in edges:
        if acc == target:
            break
        if r not in free_rows or c not in free_cols:
            continue
        w = int_weights[(r, c)]
        if acc + w > target:
            continue
        rest_rows = [x for x in rows if x in free_rows and x != r]
        rest_cols = [y for y in cols if y in free_cols and y != c]
        rest, _ = assignment(int_weights, rest_rows, rest_cols)
        if acc + w + rest == target:
            chosen.append((r, c))
            acc += w
            free_rows.discard(r)
            free_cols.discard(c)
    return chosen


def max_weight_matching(g):
    """Max-weight matching with ties broken towards the lexicographically smallest edge list."""
    scale, int_weights = g._integers
    rows = range(len(g.left))
    cols = range(len(g.right))
    value, _ = assignment(int_weights, rows, cols)
    chosen = canonical_assignment(int_weights, rows, cols, target=value)
    matching = tuple((g.left[r], g.right[c]) for r, c in chosen)
    return matching, Fraction(value, scale)


def max_weight_value(g, exclude_right=()):
    scale, int_weights = g._integers
    excluded = {g.right_index[y] for y in exclude_right}
    value, _ = assignment(int_weights, range(len(g.left)), [j for j in range(len(g.right)) if j not in excluded])
    return Fraction(value, scale)


def matched_right(g):
    """Right vertices covered by one (arbitrary) max-weight matching."""
    _, int_weights = g._integers
    _, pairs = assignment(int_weights, range(len(g.left)), range(len(g.right)))
    return [g.right[c] for _, c in pairs]


def enumerate_max_weight_matchings(g, cap):
    """Every positive-edge matching of maximum weight, in lexicographic order."""
    if cap < 1:
        raise InstanceError("enumeration cap must be at least 1")
    scale, int_weights = g._integers
    n, m = len(g.left), len(g.right)
    by_row = [[] for _ in range(n)]
    for (r, c), w in sorted(int_weights.items()):
        by_row[r].append((c, w))

    memo = {}

    def best(i, used):
        if i == n:
            return 0
        key = (i, used)
        if key not in memo:
            value = best(i + 1, used)
            for c, w in by_row[i]:
                if not used >> c & 1:
                    value = max(value, w + best(i + 1, used | 1 << c))
            memo[key] = value
        return memo[key]

    target = best(0, 0)
    found = []

    def walk(i, used, need, partial):
        if i == n:
            if need == 0:
                found.append(tuple(partial))
                if len(found) > cap:
                    raise CapacityError(f"more than {cap} maximum-weight matchings; raise the enumeration cap")
            return
        for c, w in by_row[i]:
            if not used >> c & 1 and w + best(i + 1, used | 1 << c) == need:
                partial.append((g.left[i], g.right[c]))
                walk(i + 1, used | 1 << c, need - w, partial)
                partial.pop()
        if best(i + 1, used) == need:
            walk(i + 1, used, need, partial)

    walk(0, 0, target, [])
    found.sort(key=lambda mt: [g.pair_key(p) for p in mt])
    return found


def maximum_matching(g):
    """Maximum-cardinality matching (Hopcroft-Karp) as a left -> right dict."""
    graph = g.to_networkx()
    top = [("L", a) for a in g.left]
    matching = bipartite.hopcroft_karp_matching(graph, top_nodes=top)
    return {a: matching[("L", a)][1] for a in g.left if ("L", a) in matching}


def maximum_matching_size(g):
    return len(maximum_matching(g))


def deficiency(g):
    """|left| minus the maximum-cardinality matching size."""
    return len(g.left) - maximum_matching_size(g)


def max_difference_hall_violator(g):
    """
    Left vertices reachable by alternating paths from unmatched left vertices.
    Their difference |S| - |N(S)| equals the deficiency.
    """
    matched = maximum_matching(g)
    partner_of_right = {b: a for a, b in matched.items()}
    unmatched = [a for a in g.left if a not in matched]
    if not unmatched:
        return None

    reached_left = set(unmatched)
    reached_right = set()
    queue = deque(unmatched)
    while queue:
        a = queue.popleft()
        for b in g.neighbors(a):
            if b in reached_right:
                continue
            reached_right.add(b)
            owner = partner_of_right.get(b)
            if owner is not None and owner not in reached_left:
                reached_left.add(owner)
                queue.append(owner)

    violator = frozenset(reached_left)
    neighborhood = g.neighborhood(violator)
    return HallCertificate(violator, neighborhood, len(violator) - len(neighborhood))


def vertex_hall_violator(g, b):
    """A Hall violator containing left vertex b, or None if every set holding b satisfies Hall."""
    if b not in g.adjacency:
        raise InstanceError(f"unknown left vertex {b!r}")
    own = frozenset(g.neighbors(b))
    if not own:
        return HallCertificate(frozenset([b]), frozenset(), 1)

    rest = g.without(lefts=[b], rights=own)
    best = max_difference_hall_violator(rest)
    if best is None or best.difference < len(own):
        return None
    violator = best.violator_set | {b}
    neighborhood = g.neighborhood(violator)
    return HallCertificate(violator, neighborhood, len(violator) - len(neighborhood))


def opportunity_reachable(market, edges, allocation, b):
    """Buyers reachable from b by non-transacting then transacting steps, b included."""
    if b not in market.buyer_index:
        raise InstanceError(f"unknown buyer {b!r}")
    allocated = set(allocation)
    buyer_of = {s: x for x, s in allocated}
    out = {}
    for x, s in edges:
        if (x, s) not in allocated:
            out.setdefault(x, []).append(s)

    reached = {b}
    queue = deque([b])
    while queue:
        x = queue.popleft()
        for s in out.get(x, ()):
            y = buyer_of.get(s)
            if y is not None and y not in reached:
                reached.add(y)
                queue.append(y)
    return frozenset(reached)


def opportunity_price(market, edges, allocation, trade):
    """Price of an allocated trade in a homogeneous market, read off opportunity paths."""
    if not market.is_homogeneous():
        raise ClassError("opportunity prices are only defined for homogeneous-goods markets")
    trade = tuple(trade)
    allocation = set(allocation)
    if trade not in allocation:
        raise InstanceError(f"trade {trade} is not in the allocation")

    sold = {s for _, s in allocation}
    reach = opportunity_reachable(market, edges, allocation, trade[0])
    for x, s in edges:
        if x in reach and s not in sold:
            return Fraction(0)
    return min(market.buyer_value(x) for x in reach)
