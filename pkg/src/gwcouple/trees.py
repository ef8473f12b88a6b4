"""Rooted ordered trees as sets of integer-sequence vertex addresses.

A vertex address is a tuple of positive integers; the root is the empty
tuple.  A finite vertex set is a valid tree when it contains the root and
is closed under taking parents and elder siblings, i.e. the children of
any vertex form an initial segment (1), (2), ..., (c).  That closure makes
a tree isomorphic to a *nested tuple*: a node is the tuple of its
children's nested forms.  The nested form is what every hot path in this
package manipulates; address sets are derived on demand.

``OrderedTree`` wraps a complete finite tree.  ``TruncatedTree`` wraps a
depth-limited view of a (possibly infinite) tree: vertices up to a depth
horizon, with leaves at the horizon optionally marked as roots of
unexplored infinite subtrees (``FRONTIER``), plus a status recording any
cap-induced truncation that makes the view unreliable.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field

from .errors import DomainError, EnumerationCapError, ParseError

ENUMERATION_CAP = 12

Address = tuple[int, ...]
ROOT: Address = ()


class _Frontier:
    """Leaf marker: vertex present, subtree infinite but not explored."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "FRONTIER"


FRONTIER = _Frontier()


# ---------------------------------------------------------------------------
# vertex addresses


def parent(v: Address) -> Address:
    """Drop the last component; the parent of a depth-1 vertex is the root."""
    if not v:
        raise DomainError("the root has no parent")
    return v[:-1]


def elder_sibling(v: Address) -> Address | None:
    """The next-older sibling, or None when v is a first child."""
    if not v:
        raise DomainError("the root has no siblings")
    if v[-1] <= 1:
        return None
    return v[:-1] + (v[-1] - 1,)


def is_valid_vertex_set(vertices) -> bool:
    """Closure check: root present, parent-closed, elder-sibling-closed."""
    vs = set(vertices)
    if ROOT not in vs:
        return False
    for v in vs:
        if not v:
            continue
        if any(c < 1 for c in v):
            return False
        if v[:-1] not in vs:
            return False
        if v[-1] > 1 and v[:-1] + (v[-1] - 1,) not in vs:
            return False
    return True


# ---------------------------------------------------------------------------
# nested-form primitives (hot paths; FRONTIER-aware)


def nested_size(node) -> int:
    if node is FRONTIER:
        return 1
    return 1 + sum(nested_size(c) for c in node)


def nested_depth(node) -> int:
    if node is FRONTIER or not node:
        return 0
    return 1 + max(nested_depth(c) for c in node)


def nested_contains(a, b) -> bool:
    """Vertex-set containment of nested forms (frontier marks are metadata)."""
    if a is FRONTIER or not a:
        return True
    if b is FRONTIER:
        return False
    if len(a) > len(b):
        return False
    return all(nested_contains(x, y) for x, y in zip(a, b))


def nested_union(a, b):
    """Vertex-set union of two nested forms; stays closed by construction."""
    if a is FRONTIER:
        if b is FRONTIER or not b:
            return FRONTIER
        raise DomainError("cannot union a frontier leaf with explored structure")
    if b is FRONTIER:
        if not a:
            return FRONTIER
        raise DomainError("cannot union a frontier leaf with explored structure")
    if not a:
        return b
    if not b:
        return a
    if len(a) < len(b):
        a, b = b, a
    nb = len(b)
    return tuple(nested_union(a[i], b[i]) if i < nb else a[i] for i in range(len(a)))


def nested_clip(node, depth: int):
    """Keep vertices at distance <= depth from this node's root."""
    if node is FRONTIER:
        return FRONTIER
    if depth <= 0 or not node:
        return ()
    return tuple(nested_clip(c, depth - 1) for c in node)


def nested_addresses(node, prefix: Address = ROOT):
    yield prefix
    if node is FRONTIER:
        return
    for i, c in enumerate(node, start=1):
        yield from nested_addresses(c, prefix + (i,))


def nested_frontier(node, prefix: Address = ROOT):
    if node is FRONTIER:
        yield prefix
        return
    for i, c in enumerate(node, start=1):
        yield from nested_frontier(c, prefix + (i,))


def preorder_child_counts(node) -> tuple[int, ...]:
    """Depth-first child-count sequence; the canonical compact form."""
    out = []

    def walk(n):
        out.append(0 if n is FRONTIER else len(n))
        if n is not FRONTIER:
            for c in n:
                walk(c)

    walk(node)
    return tuple(out)


def nested_from_vertices(vertices):
    vs = set(vertices)
    if not is_valid_vertex_set(vs):
        raise DomainError("vertex set is not parent- and elder-sibling-closed")

    def build(u: Address):
        kids = []
        i = 1
        while u + (i,) in vs:
            kids.append(build(u + (i,)))
            i += 1
        return tuple(kids)

    return build(ROOT)


# ---------------------------------------------------------------------------
# text form: nested bracket lists, child order significant, '*' = frontier


def _parse_node(s: str, i: int):
    if i >= len(s) or s[i] != "[":
        raise ParseError(f"expected '[' at position {i}", position=i)
    i += 1
    kids = []
    if i < len(s) and s[i] == "]":
        i += 1
    else:
        while True:
            child, i = _parse_node(s, i)
            kids.append(child)
            if i < len(s) and s[i] == ",":
                i += 1
                continue
            if i < len(s) and s[i] == "]":
                i += 1
                break
            raise ParseError(f"expected ',' or ']' at position {i}", position=i)
    if i < len(s) and s[i] == "*":
        if kids:
            raise ParseError(f"frontier marker on a node with children at position {i}", position=i)
        return FRONTIER, i + 1
    return tuple(kids), i


def parse_marked(s: str):
    """Parse the bracket text form, allowing '*' frontier markers."""
    s = s.strip()
    node, i = _parse_node(s, 0)
    if i != len(s):
        raise ParseError(f"trailing input at position {i}", position=i)
    return node


def encode_nested(node) -> str:
    if node is FRONTIER:
        return "[]*"
    return "[" + ",".join(encode_nested(c) for c in node) + "]"


# ---------------------------------------------------------------------------
# the tree classes


class OrderedTree:
    """A finite rooted ordered tree (complete, no truncation)."""

    __slots__ = ("root", "_size", "_vertices")

    def __init__(self, root=()):
        if not isinstance(root, tuple):
            raise DomainError("nested form must be a tuple of tuples")
        self.root = root
        self._size = None
        self._vertices = None

    @classmethod
    def from_vertices(cls, vertices) -> "OrderedTree":
        return cls(nested_from_vertices(vertices))

    @classmethod
    def decode(cls, text: str) -> "OrderedTree":
        node = parse_marked(text)
        if any(True for _ in nested_frontier(node)):
            raise ParseError("frontier markers are not allowed in a complete tree")
        return cls(node)

    @property
    def size(self) -> int:
        if self._size is None:
            self._size = nested_size(self.root)
        return self._size

    @property
    def vertices(self) -> frozenset[Address]:
        if self._vertices is None:
            self._vertices = frozenset(nested_addresses(self.root))
        return self._vertices

    @property
    def depth(self) -> int:
        return nested_depth(self.root)

    def contains(self, other: "OrderedTree") -> bool:
        """True when other's vertex set is a subset of this tree's."""
        return nested_contains(other.root, self.root)

    def subtree(self, v: Address) -> "OrderedTree | None":
        """Descendants of v re-rooted at the root; None when v is absent."""
        node = self.root
        for i in v:
            if i < 1 or node is FRONTIER or i > len(node):
                return None
            node = node[i - 1]
        return OrderedTree(node)

    def child_count(self) -> int:
        return len(self.root)

    def encode(self) -> str:
        return encode_nested(self.root)

    def clip(self, depth: int) -> "OrderedTree":
        return OrderedTree(nested_clip(self.root, depth))

    def __eq__(self, other) -> bool:
        return isinstance(other, OrderedTree) and self.root == other.root

    def __hash__(self) -> int:
        return hash(self.root)

    def __repr__(self) -> str:
        return f"OrderedTree({self.encode()!r})"


TREE_ROOT_ONLY = OrderedTree(())


@dataclass(frozen=True)
class TruncatedTree:
    """Depth-limited view of a possibly infinite tree.

    ``status`` empty means the view is clean: every vertex at depth <= the
    horizon is exact and frontier marks identify exactly the horizon
    vertices with infinite subtrees below.  A nonempty status lists the
    caps that fired; such views must be filtered from fine statistics but
    are still safe for containment checks.
    """

    root: object
    depth_horizon: int
    status: tuple[str, ...] = ()

    @property
    def clean(self) -> bool:
        return not self.status

    @property
    def size(self) -> int:
        return nested_size(self.root)

    @property
    def vertices(self) -> frozenset[Address]:
        return frozenset(nested_addresses(self.root))

    @property
    def frontier(self) -> frozenset[Address]:
        return frozenset(nested_frontier(self.root))

    def contains(self, other: "TruncatedTree") -> bool:
        """Vertex containment compared up to the smaller depth horizon."""
        d = min(self.depth_horizon, other.depth_horizon)
        a = other.root if other.depth_horizon <= d else nested_clip(other.root, d)
        b = self.root if self.depth_horizon <= d else nested_clip(self.root, d)
        return nested_contains(a, b)

    def encode(self) -> str:
        return encode_nested(self.root)

    def validate(self) -> None:
        """Assert the frontier-only-at-horizon invariant (test helper)."""
        for addr in nested_frontier(self.root):
            if len(addr) != self.depth_horizon:
                raise DomainError(
                    f"frontier vertex {addr} is not at the depth horizon {self.depth_horizon}"
                )

    def __repr__(self) -> str:
        flag = "" if self.clean else f", status={self.status}"
        return f"TruncatedTree({self.encode()!r}, depth={self.depth_horizon}{flag})"


def contains(a, b) -> bool:
    """Module-level containment: does a contain b (V(b) subset of V(a))?"""
    if isinstance(a, TruncatedTree) or isinstance(b, TruncatedTree):
        if not isinstance(a, TruncatedTree):
            a = TruncatedTree(a.root, depth_horizon=nested_depth(a.root))
        if not isinstance(b, TruncatedTree):
            b = TruncatedTree(b.root, depth_horizon=nested_depth(b.root))
        return a.contains(b)
    return a.contains(b)


# ---------------------------------------------------------------------------
# enumeration


@functools.lru_cache(maxsize=None)
def _all_trees(k: int) -> tuple:
    """Nested forms of all trees with k vertices, ordered lexicographically
    by their depth-first child-count sequence."""
    if k == 1:
        return ((),)
    forests = []
    for j in range(1, k):
        for comp in _compositions(k - 1, j):
            for kids in itertools.product(*(_all_trees(part) for part in comp)):
                forests.append(kids)
    forests.sort(key=preorder_child_counts)
    return tuple(forests)


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def enumerate_trees(k: int, cap: int = ENUMERATION_CAP) -> list[OrderedTree]:
    """All trees with exactly k vertices, in canonical deterministic order."""
    if k < 1:
        raise DomainError("tree size must be at least 1")
    if k > cap:
        raise EnumerationCapError(f"enumeration of size {k} exceeds cap {cap}")
    return [OrderedTree(n) for n in _all_trees(k)]


@functools.lru_cache(maxsize=None)
def tree_index(k: int) -> dict:
    """Map nested form -> index within enumerate_trees(k)."""
    return {n: i for i, n in enumerate(_all_trees(k))}


def insertion_slots(node) -> int:
    """Number of ways to add one vertex keeping closure: one new last child
    per existing vertex."""
    return nested_size(node)


def insert_at(node, slot: int):
    """Insert a new last child at the slot-th vertex in preorder (0-based)."""

    def walk(n, s):
        # returns (new_node, vertices_consumed) or (None, count) if s beyond
        if s == 0:
            return n + ((),), 1
        used = 1
        kids = list(n)
        for i, c in enumerate(kids):
            sub, cnt = walk(c, s - used)
            if sub is not None:
                kids[i] = sub
                return tuple(kids), 0
            used += cnt
        return None, used

    out, _ = walk(node, slot)
    if out is None:
        raise DomainError(f"insertion slot {slot} out of range")
    return out


def removable_vertices(node) -> list[Address]:
    """Vertices whose removal keeps closure: childless last children."""
    out = []

    def walk(n, prefix):
        for i, c in enumerate(n, start=1):
            if i == len(n) and not c:
                out.append(prefix + (i,))
            walk(c, prefix + (i,))

    walk(node, ROOT)
    return out


def remove_vertex(node, v: Address):
    """Remove a childless last child address, returning the smaller tree."""
    if not v:
        raise DomainError("cannot remove the root")

    def walk(n, path):
        i = path[0]
        if len(path) == 1:
            if i != len(n) or n[i - 1]:
                raise DomainError(f"{v} is not a removable vertex")
            return n[:-1]
        return n[: i - 1] + (walk(n[i - 1], path[1:]),) + n[i:]

    return walk(node, v)


# ---------------------------------------------------------------------------
# DOT export


def to_dot(tree, name: str = "tree") -> str:
    """GraphViz digraph with one edge per (parent, child) pair."""
    root = tree.root if isinstance(tree, (OrderedTree, TruncatedTree)) else tree
    lines = [f"digraph {name} {{"]

    def label(addr: Address) -> str:
        return "o" if not addr else ".".join(map(str, addr))

    def walk(n, addr):
        shape = "circle" if n is not FRONTIER else "doublecircle"
        style = "" if n is not FRONTIER else ", style=dashed"
        lines.append(f'  "{label(addr)}" [shape={shape}{style}];')
        if n is FRONTIER:
            return
        for i, c in enumerate(n, start=1):
            child = addr + (i,)
            walk(c, child)
            lines.append(f'  "{label(addr)}" -> "{label(child)}";')

    walk(root, ROOT)
    lines.append("}")
    return "\n".join(lines)
