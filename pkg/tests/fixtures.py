import os
import sys
from fractions import Fraction

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from market import Market


def make_market(values, world=(), buyers=None, sellers=None):
    """values: {(buyer, seller): value}; ids default to first-appearance order."""
    if buyers is None:
        buyers = list(dict.fromkeys(b for b, _ in list(values) + list(world)))
    if sellers is None:
        sellers = list(dict.fromkeys(s for _, s in list(values) + list(world)))
    return Market(buyers=tuple(buyers), sellers=tuple(sellers), valuations=dict(values), world_edges=frozenset(world))


def homogeneous_market(buyer_values, sellers, world=()):
    """Every buyer values every seller at their single value."""
    values = {(b, s): v for b, v in buyer_values.items() for s in sellers}
    return make_market(values, world, buyers=list(buyer_values), sellers=list(sellers))


def unit_market(buyers, sellers, world):
    return homogeneous_market({b: 1 for b in buyers}, sellers, world)


def triangle_shgb():
    """Sellers x, y, z; one unit buyer per triangle side."""
    world = [("bxy", "x"), ("bxy", "y"), ("byz", "y"), ("byz", "z"), ("bxz", "x"), ("bxz", "z")]
    return unit_market(["bxy", "byz", "bxz"], ["x", "y", "z"], world)


def path_shgb():
    world = [("bxy", "x"), ("bxy", "y"), ("byz", "y"), ("byz", "z")]
    return unit_market(["bxy", "byz"], ["x", "y", "z"], world)


def harmonic(k):
    return sum((Fraction(1, i) for i in range(1, k + 1)), Fraction(0))
