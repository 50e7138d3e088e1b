"""Independent plaintext oracles shared by the test modules."""

import itertools
import random
from fractions import Fraction

from esas.cpabe import AccessTree, gate, leaf


def satisfies(tree: AccessTree, attrs) -> bool:
    if tree.is_leaf:
        return tree.attribute in attrs
    return sum(satisfies(c, attrs) for c in tree.children) >= tree.threshold


def plain_dot(v, q) -> Fraction:
    return sum((Fraction(x) * Fraction(y) for x, y in zip(v, q)), Fraction(0))


def random_tree(rng: random.Random, universe, max_depth=3, max_leaves=6) -> AccessTree:
    budget = [rng.randint(1, max_leaves)]

    def build(depth):
        if depth == max_depth or budget[0] <= 1 or rng.random() < 0.35:
            budget[0] -= 1
            return leaf(rng.choice(universe))
        width = rng.randint(2, min(4, budget[0]))
        children = []
        for i in range(width):
            if budget[0] <= 0:
                break
            children.append(build(depth + 1))
        return gate(rng.randint(1, len(children)), children) if len(children) > 1 else children[0]

    return build(0)


def subsets(universe):
    for size in range(len(universe) + 1):
        yield from itertools.combinations(universe, size)
