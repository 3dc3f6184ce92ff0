import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

from pipeline_utils import InstanceError, ParseError

_RATIONAL_RE = re.compile(r"^\s*(\d+)\s*(?:/\s*(\d+)\s*)?$")


def parse_rational(text, location=None):
    """Parses "5" or "3/2" (or a plain int) into an exact, non-negative Fraction."""
    if isinstance(text, bool):
        raise ParseError(f"expected a rational string, got {text!r}", location)
    if isinstance(text, int):
        if text < 0:
            raise ParseError(f"value must be non-negative, got {text}", location)
        return Fraction(text)
    if not isinstance(text, str):
        raise ParseError(f"expected a rational string, got {type(text).__name__}", location)

    match = _RATIONAL_RE.match(text)
    if not match:
        raise ParseError(f"not a non-negative integer or num/den string: {text!r}", location)
    num, den = match.group(1), match.group(2)
    if den is not None and int(den) == 0:
        raise ParseError(f"zero denominator in {text!r}", location)
    return Fraction(int(num), int(den) if den is not None else 1)


def format_rational(value):
    return str(Fraction(value))


def format_decimal(value, places=6):
    """Fixed-point rendering for humans; never parsed back."""
    scaled = round(Fraction(value) * 10 ** places)
    sign = "-" if scaled < 0 else ""
    digits = str(abs(scaled)).rjust(places + 1, "0")
    if places == 0:
        return f"{sign}{digits}"
    return f"{sign}{digits[:-places]}.{digits[-places:]}"


def _as_fraction(value):
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return parse_rational(value)
    if isinstance(value, float):
        raise InstanceError(f"valuations must be exact; got float {value!r}")
    return Fraction(value)


@dataclass(frozen=True)
class Market:
    """
    Buyers, sellers, valuations (missing pairs are worth 0) and the world edges
    that exist before the platform acts. Instances are treated as immutable.
    """
    buyers: tuple
    sellers: tuple
    valuations: dict = field(default_factory=dict, hash=False)
    world_edges: frozenset = frozenset()

    def __post_init__(self):
        buyers = tuple(self.buyers)
        sellers = tuple(self.sellers)
        if len(set(buyers)) != len(buyers):
            raise InstanceError("duplicate buyer id")
        if len(set(sellers)) != len(sellers):
            raise InstanceError("duplicate seller id")
        buyer_set, seller_set = set(buyers), set(sellers)

        valuations = {}
        for (b, s), value in dict(self.valuations).items():
            if b not in buyer_set or s not in seller_set:
                raise InstanceError(f"valuation for unknown pair ({b}, {s})")
            value = _as_fraction(value)
            if value < 0:
                raise InstanceError(f"negative valuation for ({b}, {s})")
            valuations[(b, s)] = value

        world = set()
        for b, s in self.world_edges:
            if b not in buyer_set or s not in seller_set:
                raise InstanceError(f"world edge with unknown endpoint ({b}, {s})")
            world.add((b, s))

        object.__setattr__(self, "buyers", buyers)
        object.__setattr__(self, "sellers", sellers)
        object.__setattr__(self, "valuations", valuations)
        object.__setattr__(self, "world_edges", frozenset(world))

    @property
    def n(self):
        return len(self.buyers)

    @property
    def m(self):
        return len(self.sellers)

    @cached_property
    def buyer_index(self):
        return {b: i for i, b in enumerate(self.buyers)}

    @cached_property
    def seller_index(self):
        return {s: j for j, s in enumerate(self.sellers)}

    @cached_property
    def scale(self):
        """Least common denominator of all valuations."""
        scale = 1
        for value in self.valuations.values():
            scale = math.lcm(scale, value.denominator)
        return scale

    @cached_property
    def _world_by_buyer(self):
        adjacency = {b: [] for b in self.buyers}
        for b, s in self.world_edges:
            adjacency[b].append(s)
        return {b: tuple(sorted(ss, key=self.seller_index.__getitem__)) for b, ss in adjacency.items()}

    @cached_property
    def _world_by_seller(self):
        adjacency = {s: [] for s in self.sellers}
        for b, s in self.world_edges:
            adjacency[s].append(b)
        return {s: tuple(sorted(bs, key=self.buyer_index.__getitem__)) for s, bs in adjacency.items()}

    def value(self, buyer, seller):
        return self.valuations.get((buyer, seller), Fraction(0))

    def buyer_value(self, buyer):
        """The buyer's highest valuation; in a homogeneous market, their single value."""
        return max((self.value(buyer, s) for s in self.sellers), default=Fraction(0))

    def is_world(self, buyer, seller):
        return (buyer, seller) in self.world_edges

    def world_neighbors(self, buyer):
        return self._world_by_buyer[buyer]

    def world_buyers(self, seller):
        return self._world_by_seller[seller]

    def check_pair(self, buyer, seller):
        if buyer not in self.buyer_index:
            raise InstanceError(f"unknown buyer {buyer!r}")
        if seller not in self.seller_index:
            raise InstanceError(f"unknown seller {seller!r}")

    def pair_key(self, pair):
        return (self.buyer_index[pair[0]], self.seller_index[pair[1]])

    def sort_pairs(self, pairs):
        return tuple(sorted(pairs, key=self.pair_key))

    @cached_property
    def sorted_world_edges(self):
        return self.sort_pairs(self.world_edges)

    def is_homogeneous(self):
        """True iff every buyer values all sellers equally (zero rows allowed)."""
        for b in self.buyers:
            values = {self.value(b, s) for s in self.sellers}
            if len(values) > 1:
                return False
        return True

    def restrict(self, buyers, sellers):
        """Induced sub-market on the given buyers and sellers, keeping this market's order."""
        keep_b = set(buyers)
        keep_s = set(sellers)
        for b in keep_b:
            if b not in self.buyer_index:
                raise InstanceError(f"unknown buyer {b!r}")
        for s in keep_s:
            if s not in self.seller_index:
                raise InstanceError(f"unknown seller {s!r}")
        return Market(
            buyers=tuple(b for b in self.buyers if b in keep_b),
            sellers=tuple(s for s in self.sellers if s in keep_s),
            valuations={k: v for k, v in self.valuations.items() if k[0] in keep_b and k[1] in keep_s},
            world_edges=frozenset(e for e in self.world_edges if e[0] in keep_b and e[1] in keep_s),
        )

    def to_dict(self):
        return {
            "buyers": list(self.buyers),
            "sellers": list(self.sellers),
            "valuations": [
                {"buyer": b, "seller": s, "value": format_rational(v)}
                for (b, s), v in sorted(self.valuations.items(), key=lambda item: self.pair_key(item[0]))
            ],
            "world_edges": [[b, s] for b, s in self.sorted_world_edges],
        }

    @classmethod
    def from_dict(cls, data, location="market"):
        if not isinstance(data, dict):
            raise ParseError("expected a JSON object", location)
        for key in ("buyers", "sellers"):
            if not isinstance(data.get(key), list):
                raise ParseError(f"missing or non-list '{key}'", location)
        unknown = set(data) - {"buyers", "sellers", "valuations", "world_edges"}
        if unknown:
            raise ParseError(f"unknown keys {sorted(unknown)}", location)

        buyers = _parse_ids(data["buyers"], f"{location}.buyers")
        sellers = _parse_ids(data["sellers"], f"{location}.sellers")
        buyer_set, seller_set = set(buyers), set(sellers)

        valuations = {}
        for i, entry in enumerate(data.get("valuations", [])):
            where = f"{location}.valuations[{i}]"
            if not isinstance(entry, dict) or set(entry) != {"buyer", "seller", "value"}:
                raise ParseError("expected {buyer, seller, value}", where)
            pair = (entry["buyer"], entry["seller"])
            _check_pair_ids(pair, buyer_set, seller_set, where)
            if pair in valuations:
                raise ParseError(f"duplicate valuation for {list(pair)}", where)
            valuations[pair] = parse_rational(entry["value"], f"{where}.value")

        world = set()
        for i, edge in enumerate(data.get("world_edges", [])):
            where = f"{location}.world_edges[{i}]"
            pair = _parse_pair(edge, where)
            _check_pair_ids(pair, buyer_set, seller_set, where)
            if pair in world:
                raise ParseError(f"duplicate world edge {list(pair)}", where)
            world.add(pair)

        return cls(buyers=tuple(buyers), sellers=tuple(sellers), valuations=valuations, world_edges=frozenset(world))


@dataclass(frozen=True)
class PlatformEdgeSet:
    """Edges the platform introduces; sorted by the market's buyer/seller order."""
    edges: tuple = ()

    @classmethod
    def of(cls, market, pairs):
        pairs = [tuple(p) for p in pairs]
        seen = set()
        for b, s in pairs:
            market.check_pair(b, s)
            if market.is_world(b, s):
                raise InstanceError(f"platform edge ({b}, {s}) is already a world edge")
            if (b, s) in seen:
                raise InstanceError(f"duplicate platform edge ({b}, {s})")
            seen.add((b, s))
        return cls(edges=market.sort_pairs(seen))

    def __iter__(self):
        return iter(self.edges)

    def __len__(self):
        return len(self.edges)

    def __contains__(self, pair):
        return tuple(pair) in self.edges

    def to_dict(self):
        return {"edges": [[b, s] for b, s in self.edges]}

    @staticmethod
    def pairs_from_dict(data, location="edges"):
        if not isinstance(data, dict) or not isinstance(data.get("edges"), list):
            raise ParseError("expected {\"edges\": [[buyer, seller], ...]}", location)
        pairs = []
        seen = set()
        for i, edge in enumerate(data["edges"]):
            pair = _parse_pair(edge, f"{location}.edges[{i}]")
            if pair in seen:
                raise ParseError(f"duplicate edge {list(pair)}", f"{location}.edges[{i}]")
            seen.add(pair)
            pairs.append(pair)
        return pairs


def union_edges(market, extra_edges=None):
    """World edges plus the given extra pairs, with every id checked."""
    edges = set(market.world_edges)
    for b, s in (extra_edges or ()):
        market.check_pair(b, s)
        edges.add((b, s))
    return frozenset(edges)


def _parse_ids(values, location):
    ids = []
    for i, value in enumerate(values):
        if not isinstance(value, str) or not value:
            raise ParseError("ids must be non-empty strings", f"{location}[{i}]")
        if value in ids:
            raise ParseError(f"duplicate id {value!r}", f"{location}[{i}]")
        ids.append(value)
    return ids


def _parse_pair(edge, location):
    if not isinstance(edge, list) or len(edge) != 2 or not all(isinstance(x, str) for x in edge):
        raise ParseError("expected [buyer, seller]", location)
    return (edge[0], edge[1])


def _check_pair_ids(pair, buyer_set, seller_set, location):
    if pair[0] not in buyer_set:
        raise ParseError(f"unknown buyer {pair[0]!r}", location)
    if pair[1] not in seller_set:
        raise ParseError(f"unknown seller {pair[1]!r}", location)
