import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, product

from market import Market, PlatformEdgeSet, format_rational, parse_rational
from pipeline_utils import ParseError, SpecError


@dataclass(frozen=True)
class GenSpec:
    family: str
    params: dict = field(default_factory=dict, hash=False)


@dataclass(frozen=True)
class ReductionBundle:
    market: Market
    threshold: Fraction
    provenance: dict = field(default_factory=dict, hash=False)

    def to_dict(self):
        data = self.market.to_dict()
        data["threshold"] = format_rational(self.threshold)
        data["provenance"] = self.provenance
        return data


def _rational(value, name):
    if isinstance(value, float):
        raise SpecError(f"{name} must be an exact rational, got float {value!r}")
    if isinstance(value, Fraction):
        return value
    try:
        return parse_rational(value, name)
    except ParseError as e:
        raise SpecError(str(e))


def _positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise SpecError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value


def _build(buyers, sellers, valuations, world=()):
    return Market(buyers=tuple(buyers), sellers=tuple(sellers), valuations=valuations, world_edges=frozenset(world))


# --- Named constructions ---

def gen_fig1(n):
    """No world edges; b1 values s1 at 1 and b_i values s_{i-1}, s_i at i."""
    n = _positive_int(n, "n")
    buyers = [f"b{i}" for i in range(1, n + 1)]
    sellers = [f"s{i}" for i in range(1, n + 1)]
    valuations = {("b1", "s1"): 1}
    for i in range(2, n + 1):
        valuations[(f"b{i}", f"s{i - 1}")] = i
        valuations[(f"b{i}", f"s{i}")] = i
    return _build(buyers, sellers, valuations)


def gen_fig2():
    """The four-subgraph SWSH example: values 10, 9, 3, 1 and a dangling s4."""
    buyers = ["b1", "b2", "b3", "b4"]
    sellers = ["s1", "s2", "s3", "s4"]
    values = {"b1": 10, "b2": 9, "b3": 3, "b4": 1}
    valuations = {(b, s): values[b] for b in buyers for s in sellers}
    world = [("b1", "s1"), ("b2", "s2"), ("b3", "s2"), ("b4", "s3")]
    return _build(buyers, sellers, valuations, world)


def gen_fig3(k, homogeneous=False):
    """
    Buyers b1..bk value s1..sk at 1/i, dummy buyers bd1..bdk value every seller at 1.
    Both buyer groups know all of s1..sk; dummy sellers sd1..sdk know nobody.
    With homogeneous=True, b_i values the dummy sellers at 1/i as well.
    """
    k = _positive_int(k, "k")
    real = [f"b{i}" for i in range(1, k + 1)]
    dummies = [f"bd{i}" for i in range(1, k + 1)]
    core = [f"s{i}" for i in range(1, k + 1)]
    extra = [f"sd{i}" for i in range(1, k + 1)]

    valuations = {}
    for i, b in enumerate(real, start=1):
        for s in core + (extra if homogeneous else []):
            valuations[(b, s)] = Fraction(1, i)
    for b in dummies:
        for s in core + extra:
            valuations[(b, s)] = 1
    world = [(b, s) for b in real + dummies for s in core]
    return _build(real + dummies, core + extra, valuations, world)


def fig3_dummy_edges(k):
    """The welfare-adding dummy-buyer to dummy-seller edges of gen_fig3(k)."""
    return [(f"bd{i}", f"sd{i}") for i in range(1, k + 1)]


def gen_fig4(eps):
    eps = _rational(eps, "eps")
    if not 0 < eps < 1:
        raise SpecError(f"eps must lie strictly between 0 and 1, got {eps}")
    valuations = {("b1", "s1"): 1, ("b1", "s2"): 1, ("b2", "s1"): 1, ("b2", "s2"): eps}
    return _build(["b1", "b2"], ["s1", "s2"], valuations, [("b2", "s1")])


def gen_mono_example(eps):
    """One seller known only to the value-1 buyer; the outsider values it at 1+eps."""
    eps = _rational(eps, "eps")
    if eps <= 0:
        raise SpecError(f"eps must be positive, got {eps}")
    return _build(["b1", "b2"], ["s1"], {("b1", "s1"): 1, ("b2", "s1"): 1 + eps}, [("b1", "s1")])


# --- 3-SAT reduction ---

def parse_cnf(text):
    """DIMACS-style literals, each clause terminated by 0: "1 -2 0 2 0"."""
    clauses, current = [], []
    for token in text.replace(",", " ").split():
        try:
            literal = int(token)
        except ValueError:
            raise SpecError(f"not a literal: {token!r}")
        if literal == 0:
            clauses.append(current)
            current = []
        else:
            current.append(literal)
    if current:
        clauses.append(current)
    return clauses


def _check_cnf(cnf, num_vars):
    clauses = [tuple(int(lit) for lit in clause) for clause in cnf]
    for clause in clauses:
        if not 1 <= len(clause) <= 3:
            raise SpecError(f"clause {list(clause)} must have one to three literals")
        if 0 in clause:
            raise SpecError("literal 0 is not a variable")
    used = max((abs(lit) for clause in clauses for lit in clause), default=0)
    if num_vars is None:
        num_vars = used
    if num_vars < used:
        raise SpecError(f"num_vars={num_vars} but literal {used} appears")
    if num_vars < 1:
        raise SpecError("the formula needs at least one variable")
    return clauses, num_vars


def is_satisfiable(cnf, num_vars=None):
    clauses, num_vars = _check_cnf(cnf, num_vars)
    for bits in product((False, True), repeat=num_vars):
        if all(any(bits[abs(lit) - 1] == (lit > 0) for lit in clause) for clause in clauses):
            return True
    return False


def sat_threshold(k, q, t, Z, H):
    return k * Z + q * (t - 1) * (2 * Z + 1) + H * (2 * t * q - k)


def gen_sat_reduction(cnf, num_vars=None, H=None):
    """
    Market whose optimal revenue reaches the threshold exactly when the formula is
    satisfiable. Each variable gets one (x or not x) clause, then more of them
    until every variable occurs 2t times.
    """
    clauses, q = _check_cnf(cnf, num_vars)
    positive = [0] * (q + 1)
    negative = [0] * (q + 1)
    for clause in clauses:
        for lit in clause:
            (positive if lit > 0 else negative)[abs(lit)] += 1
    for i in range(1, q + 1):
        if positive[i] != negative[i]:
            raise SpecError(f"variable {i} occurs {positive[i]} times positively and {negative[i]} negatively")

    t = max(positive[i] + 1 for i in range(1, q + 1))
    padding = []
    missing = {i: t - positive[i] - 1 for i in range(1, q + 1)}
    while any(missing.values()):
        for i in range(1, q + 1):
            if missing[i]:
                padding.append((i, -i))
                missing[i] -= 1
    full = [(i, -i) for i in range(1, q + 1)] + clauses + padding
    k = len(full)
    Z = q * k * t
    H = Z + 1 if H is None else _rational(H, "H")
    if H < Z + 1:
        raise SpecError(f"H must be at least Z+1 = {Z + 1}, got {H}")

    buyers, sellers = [], []
    valuations, world = {}, []
    for i in range(1, q + 1):
        sellers += [f"a{i}_{j}" for j in range(t)] + [f"t{i}_{j}" for j in range(t)]
    for i in range(1, q + 1):
        sellers += [f"g{i}_{j}" for j in range(1, t)] + [f"d{i}_{j}" for j in range(1, t)]

    # occurrences take items in clause order; the first (x or not x) clause gets index 0
    next_item = {lit: 0 for i in range(1, q + 1) for lit in (i, -i)}
    occurrences = []
    for c, clause in enumerate(full, start=1):
        buyer = f"U{c}"
        buyers.append(buyer)
        items = []
        for lit in clause:
            item = f"{'a' if lit > 0 else 't'}{abs(lit)}_{next_item[lit]}"
            next_item[lit] += 1
            valuations[(buyer, item)] = Z
            items.append(item)
        occurrences.append(items)

    for i in range(1, q + 1):
        for j in range(1, t):
            for prefix, buyer, extra in (("a", f"A{i}_{j}", f"g{i}_{j}"), ("t", f"T{i}_{j}", f"d{i}_{j}")):
                buyers.append(buyer)
                literal_items = [f"{prefix}{i}_0", f"{prefix}{i}_{j}"]
                for item in literal_items + [extra]:
                    valuations[(buyer, item)] = Z + 1
                world += [(buyer, item) for item in literal_items]

    literal_items = [s for s in sellers if s[0] in "at"]
    for r in range(1, 2 * t * q - k + 1):
        buyer = f"D{r}"
        buyers.append(buyer)
        for item in literal_items:
            valuations[(buyer, item)] = H

    provenance = {
        "kind": "sat",
        "cnf": [list(c) for c in clauses],
        "num_vars": q,
        "padding": [list(c) for c in padding],
        "clauses": [list(c) for c in full],
        "occurrences": occurrences,
        "q": q, "k": k, "t": t,
        "Z": Z,
        "H": format_rational(H),
    }
    market = _build(buyers, sellers, valuations, world)
    return ReductionBundle(market=market, threshold=Fraction(sat_threshold(k, q, t, Z, H)), provenance=provenance)


# --- Vertex-cover reduction ---

def _check_graph(edges, vertices):
    edges = [(str(u), str(v)) for u, v in edges]
    seen = set()
    for u, v in edges:
        if u == v:
            raise SpecError(f"self-loop at {u}")
        if frozenset((u, v)) in seen:
            raise SpecError(f"duplicate edge {u}-{v}")
        seen.add(frozenset((u, v)))
    if vertices is None:
        vertices = []
        for u, v in edges:
            for x in (u, v):
                if x not in vertices:
                    vertices.append(x)
    vertices = [str(x) for x in vertices]
    missing = {x for e in edges for x in e} - set(vertices)
    if missing:
        raise SpecError(f"edges mention unknown vertices {sorted(missing)}")
    return edges, vertices


def parse_graph(text):
    """Edges written "u-v", separated by commas or spaces."""
    edges = []
    for token in text.replace(",", " ").split():
        parts = token.split("-")
        if len(parts) != 2 or not all(parts):
            raise SpecError(f"expected u-v, got {token!r}")
        edges.append((parts[0], parts[1]))
    return edges


def min_vertex_cover(vertices, edges):
    """Smallest cover by brute force, first in combination order."""
    edges, vertices = _check_graph(edges, vertices)
    for size in range(len(vertices) + 1):
        for cover in combinations(vertices, size):
            chosen = set(cover)
            if all(u in chosen or v in chosen for u, v in edges):
                return list(cover)
    return list(vertices)


def gen_vc_reduction(edges, vertices=None, H=2):
    """
    Vertex buyers B<v> with items S<v> and a<v>_<i>, edge buyers E<u>_<v>, and |E| dummy
    buyers. Optimal revenue is 2|V| + (H+1)|E| - q for a minimum cover of size q.
    """
    edges, vertices = _check_graph(edges, vertices)
    H = _rational(H, "H")
    if H < 2:
        raise SpecError(f"H must be at least 2, got {H}")
    degree = {v: 0 for v in vertices}
    for u, v in edges:
        degree[u] += 1
        degree[v] += 1

    alpha = {v: [f"a{v}_{i}" for i in range(1, degree[v] + 1)] for v in vertices}
    sellers = [f"S{v}" for v in vertices] + [item for v in vertices for item in alpha[v]]
    buyers, valuations, world = [], {}, []
    for v in vertices:
        buyer = f"B{v}"
        buyers.append(buyer)
        for item in [f"S{v}"] + alpha[v]:
            valuations[(buyer, item)] = 2
        world += [(buyer, item) for item in alpha[v]]
    for u, v in edges:
        buyer = f"E{u}_{v}"
        buyers.append(buyer)
        for item in alpha[u] + alpha[v]:
            valuations[(buyer, item)] = 1
    all_alpha = [item for v in vertices for item in alpha[v]]
    for r in range(1, len(edges) + 1):
        buyer = f"D{r}"
        buyers.append(buyer)
        for item in all_alpha:
            valuations[(buyer, item)] = H

    cover = min_vertex_cover(vertices, edges)
    threshold = 2 * len(vertices) + (H + 1) * len(edges) - len(cover)
    provenance = {
        "kind": "vc",
        "vertices": vertices,
        "edges": [[u, v] for u, v in edges],
        "H": format_rational(H),
        "q": len(cover),
        "cover": cover,
    }
    market = _build(buyers, sellers, valuations, world)
    return ReductionBundle(market=market, threshold=Fraction(threshold), provenance=provenance)


def vc_construction_edges(bundle):
    """Platform edges of the cover-based configuration whose revenue equals the threshold."""
    if bundle.provenance.get("kind") != "vc":
        raise SpecError("not a vertex-cover bundle")
    market = bundle.market
    cover = set(bundle.provenance["cover"])
    vertices = bundle.provenance["vertices"]
    degree = {v: 0 for v in vertices}
    for u, v in bundle.provenance["edges"]:
        degree[u] += 1
        degree[v] += 1
    free = {v: [f"a{v}_{i}" for i in range(1, degree[v] + 1)] for v in vertices}

    pairs = [(f"B{v}", f"S{v}") for v in vertices]
    for u, v in bundle.provenance["edges"]:
        end = u if u in cover else v
        item = free[end].pop(0)
        pairs.append((f"E{u}_{v}", item))
    leftovers = [s for v in vertices for s in free[v]]
    dummies = [b for b in market.buyers if b.startswith("D")]
    pairs += list(zip(dummies, leftovers))
    return PlatformEdgeSet.of(market, pairs)


# --- Random families ---

def _rng(params):
    if "seed" not in params:
        raise SpecError("random families need a seed")
    seed = params["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise SpecError(f"seed must be an integer, got {seed!r}")
    return random.Random(seed)


def _density(params, default):
    value = _rational(params.get("density", default), "density")
    if value > 1:
        raise SpecError(f"density must be at most 1, got {value}")
    return value


def _coin(rng, probability):
    return Fraction(rng.randrange(1000), 1000) < probability


def _ids(prefix, count):
    return [f"{prefix}{i}" for i in range(1, count + 1)]


def random_general(params):
    rng = _rng(params)
    n = _positive_int(params.get("n", 3), "n")
    m = _positive_int(params.get("m", n), "m")
    max_value = _positive_int(params.get("max_value", 6), "max_value")
    density = _density(params, Fraction(1, 3))
    buyers, sellers = _ids("b", n), _ids("s", m)
    valuations, world = {}, []
    for b in buyers:
        for s in sellers:
            value = Fraction(rng.randint(0, 2 * max_value), 2)
            if value:
                valuations[(b, s)] = value
            if _coin(rng, density):
                world.append((b, s))
    return _build(buyers, sellers, valuations, world)


def random_homogeneous(params):
    rng = _rng(params)
    n = _positive_int(params.get("n", 3), "n")
    m = _positive_int(params.get("m", n), "m")
    max_value = _positive_int(params.get("max_value", 6), "max_value")
    density = _density(params, Fraction(1, 3))
    buyers, sellers = _ids("b", n), _ids("s", m)
    valuations, world = {}, []
    for b in buyers:
        value = rng.randint(1, max_value)
        for s in sellers:
            valuations[(b, s)] = value
            if _coin(rng, density):
                world.append((b, s))
    return _build(buyers, sellers, valuations, world)


def random_swsh(params):
    """Homogeneous buyers with distinct values, each knowing at most one seller."""
    rng = _rng(params)
    n = _positive_int(params.get("n", 4), "n")
    m = _positive_int(params.get("m", n), "m")
    max_value = _positive_int(params.get("max_value", 3 * n), "max_value")
    if max_value < n:
        raise SpecError(f"max_value must be at least n={n} to keep values distinct")
    connected = _density(params, Fraction(3, 4))
    buyers, sellers = _ids("b", n), _ids("s", m)
    values = rng.sample(range(1, max_value + 1), n)
    valuations, world = {}, []
    for b, value in zip(buyers, values):
        for s in sellers:
            valuations[(b, s)] = value
        if _coin(rng, connected):
            world.append((b, rng.choice(sellers)))
    return _build(buyers, sellers, valuations, world)


def random_shgb(params):
    """Common value everywhere; buyers know at most two sellers, and no seller pair twice."""
    rng = _rng(params)
    n = _positive_int(params.get("buyers", params.get("n", 6)), "buyers")
    m = _positive_int(params.get("sellers", params.get("m", max(1, (n + 1) // 2))), "sellers")
    value = _rational(params.get("value", 1), "value")
    if value <= 0:
        raise SpecError("the common value must be positive")
    buyers, sellers = _ids("b", n), _ids("s", m)
    unused_pairs = list(combinations(sellers, 2))
    world = []
    for b in buyers:
        degree = rng.choice((0, 1, 1, 2, 2, 2))
        if degree == 2 and unused_pairs:
            pair = unused_pairs.pop(rng.randrange(len(unused_pairs)))
            world += [(b, pair[0]), (b, pair[1])]
        elif degree >= 1:
            world.append((b, rng.choice(sellers)))
    valuations = {(b, s): value for b in buyers for s in sellers}
    return _build(buyers, sellers, valuations, world)


RANDOM_FAMILIES = {
    "random_general": random_general,
    "random_homogeneous": random_homogeneous,
    "random_swsh": random_swsh,
    "random_shgb": random_shgb,
}

_ALLOWED = {
    "fig1": {"n"},
    "fig2": set(),
    "fig3": {"k", "homogeneous"},
    "fig4": {"eps"},
    "mono_example": {"eps"},
    "sat_reduction": {"cnf", "num_vars", "H"},
    "vc_reduction": {"graph", "vertices", "H"},
    "random_general": {"n", "m", "seed", "max_value", "density"},
    "random_homogeneous": {"n", "m", "seed", "max_value", "density"},
    "random_swsh": {"n", "m", "seed", "max_value", "density"},
    "random_shgb": {"buyers", "sellers", "n", "m", "seed", "value"},
}
FAMILIES = tuple(_ALLOWED)


def _check_params(spec):
    if spec.family not in _ALLOWED:
        raise SpecError(f"unknown family {spec.family!r}; choose from {', '.join(FAMILIES)}")
    unknown = set(spec.params) - _ALLOWED[spec.family]
    if unknown:
        raise SpecError(f"family {spec.family} does not take {sorted(unknown)}")


def gen_random(spec):
    """Seeded instance of a random family; equal specs give equal markets."""
    _check_params(spec)
    if spec.family not in RANDOM_FAMILIES:
        raise SpecError(f"{spec.family} is not a random family")
    return RANDOM_FAMILIES[spec.family](dict(spec.params))


def generate(spec):
    """Any family: a Market, or a ReductionBundle for the reductions."""
    _check_params(spec)
    params = dict(spec.params)

    def need(name):
        if name not in params:
            raise SpecError(f"family {spec.family} needs '{name}'")
        return params[name]

    if spec.family in RANDOM_FAMILIES:
        return gen_random(spec)
    if spec.family == "fig1":
        return gen_fig1(need("n"))
    if spec.family == "fig2":
        return gen_fig2()
    if spec.family == "fig3":
        return gen_fig3(need("k"), homogeneous=bool(params.get("homogeneous", False)))
    if spec.family == "fig4":
        return gen_fig4(need("eps"))
    if spec.family == "mono_example":
        return gen_mono_example(need("eps"))
    if spec.family == "sat_reduction":
        cnf = need("cnf")
        if isinstance(cnf, str):
            cnf = parse_cnf(cnf)
        return gen_sat_reduction(cnf, params.get("num_vars"), params.get("H"))
    graph = need("graph")
    if isinstance(graph, str):
        graph = parse_graph(graph)
    return gen_vc_reduction(graph, params.get("vertices"), params.get("H", 2))


# --- JSON files ---

def _read_json(path):
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg} (line {e.lineno}, column {e.colno})", path)
    except OSError as e:
        raise ParseError(f"cannot read file: {e.strerror}", path)


def _write_json(path, data):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write('\n')


def load_market(path):
    """Reads a market file; reduction bundle files load as their market."""
    data = _read_json(path)
    if isinstance(data, dict) and "threshold" in data:
        data = {k: v for k, v in data.items() if k not in ("threshold", "provenance")}
    return Market.from_dict(data, location=path)


def save_market(market, path):
    _write_json(path, market.to_dict())


def load_bundle(path):
    data = _read_json(path)
    if not isinstance(data, dict) or "threshold" not in data:
        raise ParseError("missing 'threshold'", path)
    threshold = parse_rational(data["threshold"], f"{path}.threshold")
    provenance = data.get("provenance", {})
    if not isinstance(provenance, dict):
        raise ParseError("'provenance' must be an object", path)
    market_data = {k: v for k, v in data.items() if k not in ("threshold", "provenance")}
    return ReductionBundle(Market.from_dict(market_data, location=path), threshold, provenance)


def save_bundle(bundle, path):
    _write_json(path, bundle.to_dict())


def load_edges(path, market=None):
    """Pair list from {"edges": [...]}; checked against the market when one is given."""
    pairs = PlatformEdgeSet.pairs_from_dict(_read_json(path), location=path)
    if market is None:
        return pairs
    for i, (b, s) in enumerate(pairs):
        if b not in market.buyer_index or s not in market.seller_index:
            raise ParseError(f"unknown pair [{b!r}, {s!r}]", f"{path}.edges[{i}]")
    return PlatformEdgeSet.of(market, pairs)


def save_edges(edges, path):
    _write_json(path, {"edges": [[b, s] for b, s in edges]})


def load_allocation(path):
    """
    (pairs, prices) from {"allocation": [...], "prices": {...}}; an equilibrium
    report works as input. prices is None when the file has none.
    """
    data = _read_json(path)
    if not isinstance(data, dict):
        raise ParseError("expected a JSON object", path)
    pairs = PlatformEdgeSet.pairs_from_dict({"edges": data.get("allocation", data.get("edges"))}, location=path)
    if "prices" not in data:
        return pairs, None
    if not isinstance(data["prices"], dict):
        raise ParseError("'prices' must map seller ids to rationals", path)
    prices = {s: parse_rational(p, f"{path}.prices.{s}") for s, p in data["prices"].items()}
    return pairs, prices
