"""Ciphertext-policy ABE key encapsulation over threshold access trees.

Scheme (multiplicative notation, ``g`` the facade generator):

* setup:   X = e(g, g)^alpha, h = g^beta published alongside g^a, g^b
* keygen:  S = g^((alpha+u)/beta), S1 = g^u, S_m = g^u H(at_m)^(r_m), S'_m = g^(r_m)
* encaps:  C = K X^(r0), C0 = g^s, C1 = h^(r0), C2 = g^(s-r0),
           C_n = g^(q_n(0)), C'_n = H(att(n))^(q_n(0)) for every leaf n
* leaf:    M_n = e(S_m, C_n) / e(S'_m, C'_n) = e(g, g)^(u q_n(0))
* root:    M_r = e(g, g)^(u r0) by Lagrange interpolation in the exponent
* check:   e(C2, S1) M_r == e(C0, S1)
* decaps:  K = C / (e(C1, S) / M_r)

The document key K lives in the target group because it is multiplied by X.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from petrelic.multiplicative.pairing import GTElement

from . import envelope
from .errors import AttributeNotHeld, PolicyError, PolicySyntaxError
from .group import (
    Element,
    GroupContext,
    RandomSource,
    decode_gt,
    decode_scalar,
    default_rng,
    encode_gt,
    encode_scalar,
    hash_to_g1,
    pair,
    random_gt,
    setup_group,
)

Path = tuple[int, ...]

_ATTR_RE = re.compile(r"[A-Za-z0-9_:-]+")
_GATE_RE = re.compile(r"(\d+)-of")


def attribute_point(attribute: str) -> Element:
    return hash_to_g1(b"attr:" + attribute.encode("utf-8"))


# -- access trees ------------------------------------------------------------


@dataclass(frozen=True)
class AccessTree:
    """A node of a threshold access tree.

    Leaves carry an attribute; internal nodes carry a threshold ``k`` and an
    ordered tuple of children whose 1-based positions are the Lagrange points.
    """

    threshold: int = 1
    children: tuple["AccessTree", ...] = ()
    attribute: Optional[str] = None

    def __post_init__(self) -> None:
        if self.attribute is not None:
            if self.children:
                raise PolicyError("a leaf cannot have children")
            if not self.attribute:
                raise PolicyError("empty attribute")
            return
        if not self.children:
            raise PolicyError("internal node without children")
        if not 1 <= self.threshold <= len(self.children):
            raise PolicyError(
                f"threshold {self.threshold} out of bounds for {len(self.children)} children"
            )

    @property
    def is_leaf(self) -> bool:
        return self.attribute is not None

    def leaves(self, prefix: Path = ()) -> list[tuple[Path, str]]:
        if self.is_leaf:
            return [(prefix, self.attribute)]
        out: list[tuple[Path, str]] = []
        for index, child in enumerate(self.children, start=1):
            out.extend(child.leaves(prefix + (index,)))
        return out

    def node(self, path: Path) -> "AccessTree":
        node = self
        for index in path:
            node = node.children[index - 1]
        return node

    def depth(self) -> int:
        return 0 if self.is_leaf else 1 + max(c.depth() for c in self.children)

    def to_policy(self) -> str:
        if self.is_leaf:
            return self.attribute
        inner = ", ".join(c.to_policy() for c in self.children)
        n = len(self.children)
        if self.threshold == n and n > 1:
            return f"and({inner})"
        if self.threshold == 1:
            return f"or({inner})"
        return f"{self.threshold}-of({inner})"

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"attribute": self.attribute}
        return {"threshold": self.threshold, "children": [c.to_dict() for c in self.children]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "AccessTree":
        if "attribute" in data:
            return cls(attribute=str(data["attribute"]))
        return cls(
            threshold=int(data["threshold"]),
            children=tuple(cls.from_dict(c) for c in data["children"]),
        )


def leaf(attribute: str) -> AccessTree:
    return AccessTree(attribute=attribute)


def gate(threshold: int, children: Sequence[AccessTree]) -> AccessTree:
    return AccessTree(threshold=threshold, children=tuple(children))


class _PolicyParser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _expect(self, char: str) -> None:
        self._skip_ws()
        if self.pos >= len(self.text) or self.text[self.pos] != char:
            found = repr(self.text[self.pos]) if self.pos < len(self.text) else "end of input"
            raise PolicySyntaxError(f"expected {char!r}, found {found}", self.pos)
        self.pos += 1

    def parse(self) -> AccessTree:
        tree = self._policy()
        self._skip_ws()
        if self.pos != len(self.text):
            raise PolicySyntaxError(f"unexpected {self.text[self.pos]!r}", self.pos)
        return tree

    def _policy(self) -> AccessTree:
        self._skip_ws()
        start = self.pos
        m = _ATTR_RE.match(self.text, self.pos)
        if m is None:
            found = repr(self.text[start]) if start < len(self.text) else "end of input"
            raise PolicySyntaxError(f"expected attribute or gate, found {found}", start)
        word = m.group(0)
        self.pos = m.end()
        self._skip_ws()
        if self.pos >= len(self.text) or self.text[self.pos] != "(":
            return leaf(word)

        if word == "and":
            threshold = None
        elif word == "or":
            threshold = 1
        else:
            g = _GATE_RE.fullmatch(word)
            if g is None:
                raise PolicySyntaxError(f"unknown gate {word!r}", start)
            threshold = int(g.group(1))
        self.pos += 1
        children = [self._policy()]
        self._skip_ws()
        while self.pos < len(self.text) and self.text[self.pos] == ",":
            self.pos += 1
            children.append(self._policy())
            self._skip_ws()
        self._expect(")")
        if threshold is None:
            threshold = len(children)
        if not 1 <= threshold <= len(children):
            raise PolicyError(
                f"threshold {threshold} out of bounds for {len(children)} children (gate at position {start})"
            )
        return gate(threshold, children)


def parse_policy(text: str) -> AccessTree:
    """Parse ``and(...)``, ``or(...)``, ``k-of(...)`` and bare attributes."""
    return _PolicyParser(text).parse()


# -- parameters and keys -----------------------------------------------------


def _el(data: str) -> Element:
    return Element.from_bytes(envelope.unb64(data))


@dataclass(frozen=True)
class SystemParams:
    ctx: GroupContext
    g: Element
    g_a: Element
    g_b: Element
    h: Element  # g^beta, needed by owners to form C1
    X: GTElement

    def to_dict(self) -> dict:
        return {
            "security_level": self.ctx.security_level,
            "group": self.ctx.descriptor(),
            "g": envelope.b64(self.g.to_bytes()),
            "g_a": envelope.b64(self.g_a.to_bytes()),
            "g_b": envelope.b64(self.g_b.to_bytes()),
            "h": envelope.b64(self.h.to_bytes()),
            "X": envelope.b64(encode_gt(self.X)),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SystemParams":
        ctx = setup_group(int(data["security_level"]))
        return cls(
            ctx=ctx,
            g=_el(data["g"]),
            g_a=_el(data["g_a"]),
            g_b=_el(data["g_b"]),
            h=_el(data["h"]),
            X=decode_gt(envelope.unb64(data["X"])),
        )


@dataclass(frozen=True)
class MasterSecret:
    alpha: int
    beta: int
    a: int
    b: int

    def to_dict(self, order: int) -> dict:
        return {
            k: envelope.b64(encode_scalar(getattr(self, k), order))
            for k in ("alpha", "beta", "a", "b")
        }

    @classmethod
    def from_dict(cls, data: Mapping, order: int) -> "MasterSecret":
        return cls(**{k: decode_scalar(envelope.unb64(data[k]), order) for k in ("alpha", "beta", "a", "b")})


def system_setup(
    ctx: GroupContext, rng: Optional[RandomSource] = None
) -> tuple[SystemParams, MasterSecret]:
    rng = rng or default_rng()
    alpha, beta, a, b = (ctx.random_scalar(rng) for _ in range(4))
    g = ctx.g
    params = SystemParams(ctx=ctx, g=g, g_a=g ** a, g_b=g ** b, h=g ** beta, X=ctx.gt ** alpha)
    return params, MasterSecret(alpha=alpha, beta=beta, a=a, b=b)


@dataclass(frozen=True)
class UserKey:
    attributes: frozenset[str]
    S: Element
    S1: Element
    components: Mapping[str, tuple[Element, Element]] = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "attributes": sorted(self.attributes),
            "S": envelope.b64(self.S.to_bytes()),
            "S1": envelope.b64(self.S1.to_bytes()),
            "components": {
                attr: [envelope.b64(sm.to_bytes()), envelope.b64(sm_.to_bytes())]
                for attr, (sm, sm_) in sorted(self.components.items())
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "UserKey":
        return cls(
            attributes=frozenset(data["attributes"]),
            S=_el(data["S"]),
            S1=_el(data["S1"]),
            components={a: (_el(v[0]), _el(v[1])) for a, v in data["components"].items()},
        )


def user_keygen(
    params: SystemParams,
    msk: MasterSecret,
    attributes: Iterable[str],
    rng: Optional[RandomSource] = None,
) -> UserKey:
    attrs = frozenset(attributes)
    if not attrs:
        raise ValueError("a user key needs at least one attribute")
    rng = rng or default_rng()
    ctx = params.ctx
    p = ctx.order
    u = ctx.random_scalar(rng)
    g = params.g
    g_u = g ** u
    components = {}
    for attr in sorted(attrs):
        r = ctx.random_scalar(rng)
        components[attr] = (g_u * attribute_point(attr) ** r, g ** r)
    S = g ** ((msk.alpha + u) * pow(msk.beta, -1, p) % p)
    return UserKey(attributes=attrs, S=S, S1=g_u, components=components)


# -- secret sharing and encapsulation ---------------------------------------


def _poly_eval(coeffs: Sequence[int], x: int, p: int) -> int:
    acc = 0
    for c in reversed(coeffs):
        acc = (acc * x + c) % p
    return acc


def share_root_secret(
    tree: AccessTree, r0: int, order: int, rng: Optional[RandomSource] = None
) -> dict[Path, int]:
    """Top-down sharing: each node gets a degree k-1 polynomial with q(0) = its share."""
    rng = rng or default_rng()
    shares: dict[Path, int] = {}

    def walk(node: AccessTree, secret: int, path: Path) -> None:
        if node.is_leaf:
            shares[path] = secret
            return
        coeffs = [secret] + [rng.randrange(1, order) for _ in range(node.threshold - 1)]
        for index, child in enumerate(node.children, start=1):
            walk(child, _poly_eval(coeffs, index, order), path + (index,))

    walk(tree, r0 % order, ())
    return shares


def lagrange_at_zero(i: int, points: Iterable[int], order: int) -> int:
    num, den = 1, 1
    for j in points:
        if j != i:
            num = num * j % order
            den = den * (j - i) % order
    return num * pow(den, -1, order) % order


@dataclass(frozen=True)
class KeyCiphertext:
    tree: AccessTree
    C: GTElement
    C0: Element
    C1: Element
    C2: Element
    leaves: Mapping[Path, tuple[Element, Element]] = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "tree": self.tree.to_dict(),
            "C": envelope.b64(encode_gt(self.C)),
            "C0": envelope.b64(self.C0.to_bytes()),
            "C1": envelope.b64(self.C1.to_bytes()),
            "C2": envelope.b64(self.C2.to_bytes()),
            "leaves": [
                [list(path), envelope.b64(cn.to_bytes()), envelope.b64(cn_.to_bytes())]
                for path, (cn, cn_) in sorted(self.leaves.items())
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "KeyCiphertext":
        tree = AccessTree.from_dict(data["tree"])
        leaves = {tuple(entry[0]): (_el(entry[1]), _el(entry[2])) for entry in data["leaves"]}
        if set(leaves) != {path for path, _ in tree.leaves()}:
            raise PolicyError("leaf components do not match the access tree")
        return cls(
            tree=tree,
            C=decode_gt(envelope.unb64(data["C"])),
            C0=_el(data["C0"]),
            C1=_el(data["C1"]),
            C2=_el(data["C2"]),
            leaves=leaves,
        )


def encapsulate_key(
    params: SystemParams, tree: AccessTree, rng: Optional[RandomSource] = None
) -> tuple[GTElement, KeyCiphertext]:
    rng = rng or default_rng()
    ctx = params.ctx
    p = ctx.order
    K = random_gt(ctx, rng)
    s = ctx.random_scalar(rng)
    r0 = ctx.random_scalar(rng)
    g = params.g
    shares = share_root_secret(tree, r0, p, rng)
    leaves = {
        path: (g ** shares[path], attribute_point(attr) ** shares[path])
        for path, attr in tree.leaves()
    }
    ck = KeyCiphertext(
        tree=tree,
        C=K * params.X ** r0,
        C0=g ** s,
        C1=params.h ** r0,
        C2=g ** ((s - r0) % p),
        leaves=leaves,
    )
    return K, ck


# -- decryption side ---------------------------------------------------------


def leaf_decrypt(ukey: UserKey, ck: KeyCiphertext, path: Path) -> GTElement:
    """M_n = e(S_m, C_n) / e(S'_m, C'_n) for the leaf at ``path``."""
    attr = ck.tree.node(path).attribute
    if attr is None:
        raise ValueError(f"node {path} is not a leaf")
    if attr not in ukey.components:
        raise AttributeNotHeld(f"key does not hold attribute {attr!r}")
    s_m, s_m_prime = ukey.components[attr]
    c_n, c_n_prime = ck.leaves[path]
    return pair(s_m, c_n) * pair(s_m_prime, c_n_prime).inverse()


def plan_leaves(tree: AccessTree, attrs: Iterable[str]) -> Optional[list[Path]]:
    """Leaves used for reconstruction, or None if ``attrs`` do not satisfy ``tree``.

    At every gate the k satisfied children with the smallest indexes are used.
    """
    held = set(attrs)

    def walk(node: AccessTree, path: Path) -> Optional[list[Path]]:
        if node.is_leaf:
            return [path] if node.attribute in held else None
        chosen: list[Path] = []
        live = 0
        for index, child in enumerate(node.children, start=1):
            sub = walk(child, path + (index,))
            if sub is not None:
                chosen.extend(sub)
                live += 1
                if live == node.threshold:
                    return chosen
        return None

    return walk(tree, ())


def reconstruct_root(
    tree: AccessTree, leaf_values: Mapping[Path, GTElement], attrs: Iterable[str], order: int
) -> Optional[GTElement]:
    """Combine leaf values into the root value, or None if the tree is unsatisfied."""
    held = set(attrs)

    def walk(node: AccessTree, path: Path) -> Optional[GTElement]:
        if node.is_leaf:
            if node.attribute in held and path in leaf_values:
                return leaf_values[path]
            return None
        live: list[tuple[int, GTElement]] = []
        for index, child in enumerate(node.children, start=1):
            value = walk(child, path + (index,))
            if value is not None:
                live.append((index, value))
                if len(live) == node.threshold:
                    break
        if len(live) < node.threshold:
            return None
        points = [i for i, _ in live]
        result = None
        for i, value in live:
            term = value ** lagrange_at_zero(i, points, order)
            result = term if result is None else result * term
        return result

    return walk(tree, ())


def recover_root(ck: KeyCiphertext, ukey: UserKey, order: int) -> Optional[GTElement]:
    """Decrypt only the leaves needed and reconstruct M_r."""
    plan = plan_leaves(ck.tree, ukey.attributes)
    if plan is None:
        return None
    values = {path: leaf_decrypt(ukey, ck, path) for path in plan}
    return reconstruct_root(ck.tree, values, ukey.attributes, order)


def check_root(ck: KeyCiphertext, s1: Element, root_value: GTElement) -> bool:
    """e(C2, S1) M_r == e(C0, S1), evaluated with one pairing as e(C0 / C2, S1) == M_r."""
    return pair(ck.C0 / ck.C2, s1) == root_value


def verify_authorization(ck: KeyCiphertext, ukey: UserKey, order: Optional[int] = None) -> bool:
    order = order or setup_group().order
    root_value = recover_root(ck, ukey, order)
    if root_value is None:
        return False
    return check_root(ck, ukey.S1, root_value)


def decapsulate_key(ck: KeyCiphertext, ukey: UserKey, root_value: GTElement) -> GTElement:
    """K = C / (e(C1, S) / M_r)."""
    return ck.C * root_value * pair(ck.C1, ukey.S).inverse()
