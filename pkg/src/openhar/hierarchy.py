"""Binary class hierarchy: agglomerative construction, queries, import/export.

The hierarchy is a strictly binary tree whose leaves are class names. Built
trees come out of bottom-up agglomeration of class centroids under average
cosine-distance linkage and carry one merge distance per internal node.
Imported trees (e.g. knowledge-driven ones) may lack merge distances, in
which case distance queries raise :class:`CapabilityError`.

Node ids are dense integers ``0 .. n_nodes-1``. Leaves are numbered by the
sorted order of their class names; internal nodes are numbered in creation
order (children always have smaller ids than their parent), so the root is
always ``n_nodes - 1``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CapabilityError, FormatError


@dataclass
class ClassCentroid:
    """Arithmetic mean of one class's feature vectors."""

    label: str
    vector: np.ndarray
    count: int


def class_centroids(features: np.ndarray, labels) -> list[ClassCentroid]:
    """Per-class mean vectors, sorted by class name.

    ``features`` is an (N, F) matrix and ``labels`` a length-N sequence of
    class names. Every class must have at least one row.
    """
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[0] != len(labels):
        raise ValueError("features must be (N, F) with one label per row")
    if features.shape[0] == 0:
        raise ValueError("no feature vectors given")
    by_class: dict[str, list[int]] = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(str(lab), []).append(i)
    out = []
    for lab in sorted(by_class):
        rows = by_class[lab]
        out.append(ClassCentroid(lab, features[rows].mean(axis=0), len(rows)))
    return out


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cos(a, b). Raises on zero-norm input; result lies in [0, 2]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine distance is undefined for zero vectors")
    return float(1.0 - np.dot(a, b) / (na * nb))


@dataclass
class Hierarchy:
    """Strictly binary tree over class leaves.

    ``parent[i]`` is the parent id of node ``i`` (``None`` for the root),
    ``children`` maps each internal node to its ordered ``(left, right)``
    pair, ``leaf_class`` maps leaf ids to class names, and
    ``merge_distance`` maps internal node ids to the linkage distance of
    the merge that created them (empty for imported trees).
    """

    parent: list[int | None]
    children: dict[int, tuple[int, int]]
    leaf_class: dict[int, str]
    merge_distance: dict[int, float]
    root: int
    _leaf_sets: dict[int, frozenset[str]] = field(
        default_factory=dict, repr=False, compare=False
    )

    @property
    def n_nodes(self) -> int:
        return len(self.parent)

    @property
    def n_classes(self) -> int:
        return len(self.leaf_class)

    @property
    def leaves(self) -> list[int]:
        return sorted(self.leaf_class)

    @property
    def internal_nodes(self) -> list[int]:
        return sorted(self.children)

    @property
    def classes(self) -> list[str]:
        """Class names in leaf-id order."""
        return [self.leaf_class[i] for i in self.leaves]

    def is_leaf(self, n: int) -> bool:
        self._check_node(n)
        return n in self.leaf_class

    def leaf_for_class(self, label: str) -> int:
        for leaf, cls in self.leaf_class.items():
            if cls == label:
                return leaf
        raise ValueError(f"class {label!r} is not a leaf of this hierarchy")

    def _check_node(self, n: int) -> None:
        if not isinstance(n, (int, np.integer)) or not 0 <= n < self.n_nodes:
            raise ValueError(f"invalid node id {n!r}")

    def anc(self, n: int) -> list[int]:
        """Nodes on the path root -> n, including the root, excluding n."""
        self._check_node(n)
        path = []
        cur = self.parent[n]
        while cur is not None:
            path.append(cur)
            cur = self.parent[cur]
        return path[::-1]

    def depth(self, n: int) -> int:
        return len(self.anc(n))

    def lca(self, s: int, t: int) -> int:
        """Deepest node that is an ancestor-or-self of both s and t."""
        self._check_node(s)
        self._check_node(t)
        s_line = set(self.anc(s)) | {s}
        cur: int | None = t
        while cur is not None:
            if cur in s_line:
                return cur
            cur = self.parent[cur]
        raise ValueError("nodes share no ancestor; hierarchy is corrupt")

    def leaf_set(self, n: int) -> frozenset[str]:
        """Class names of all leaves under node n (n itself if a leaf)."""
        self._check_node(n)
        cached = self._leaf_sets.get(n)
        if cached is not None:
            return cached
        if n in self.leaf_class:
            out = frozenset([self.leaf_class[n]])
        else:
            a, b = self.children[n]
            out = self.leaf_set(a) | self.leaf_set(b)
        self._leaf_sets[n] = out
        return out

    def validate(self) -> None:
        """Check structural invariants; raises FormatError on violation."""
        n = self.n_nodes
        if n == 0:
            raise FormatError("empty hierarchy")
        if self.parent[self.root] is not None:
            raise FormatError("root must have no parent")
        roots = [i for i in range(n) if self.parent[i] is None]
        if roots != [self.root]:
            raise FormatError(f"expected a single root, found nodes {roots}")
        for node, (a, b) in self.children.items():
            if self.parent[a] != node or self.parent[b] != node:
                raise FormatError(f"children of {node} disagree with parent array")
        for i in range(n):
            if (i in self.children) == (i in self.leaf_class):
                raise FormatError(f"node {i} must be exactly one of leaf/internal")
        if len(set(self.leaf_class.values())) != len(self.leaf_class):
            raise FormatError("duplicate class names among leaves")
        # reachability from the root doubles as the acyclicity check
        seen: set[int] = set()
        stack = [self.root]
        while stack:
            cur = stack.pop()
            if cur in seen:
                raise FormatError("cycle detected")
            seen.add(cur)
            if cur in self.children:
                stack.extend(self.children[cur])
        if len(seen) != n:
            raise FormatError("unreachable nodes present")


def _average_linkage(members_a, members_b, dist: np.ndarray) -> float:
    """Mean pairwise centroid distance between two clusters of leaf ids."""
    total = 0.0
    for i in members_a:
        for j in members_b:
            total += dist[i, j]
    return total / (len(members_a) * len(members_b))


def hac_build(centroids: list[ClassCentroid]) -> Hierarchy:
    """Bottom-up agglomeration of class centroids under average linkage.

    At each step the pair of clusters with minimal average pairwise cosine
    distance between their member class centroids is merged; the new
    internal node records that distance. Ties are broken by the
    lexicographically smallest pair of (sorted) member-leaf tuples, which
    makes the construction fully deterministic.
    """
    if len(centroids) < 2:
        raise ValueError("need at least 2 class centroids to build a hierarchy")
    order = sorted(range(len(centroids)), key=lambda i: centroids[i].label)
    labels = [centroids[i].label for i in order]
    if len(set(labels)) != len(labels):
        raise ValueError("duplicate class labels among centroids")
    vecs = [np.asarray(centroids[i].vector, dtype=float) for i in order]
    k = len(vecs)

    dist = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            dist[i, j] = dist[j, i] = cosine_distance(vecs[i], vecs[j])

    n_nodes = 2 * k - 1
    parent: list[int | None] = [None] * n_nodes
    children: dict[int, tuple[int, int]] = {}
    merge_distance: dict[int, float] = {}
    leaf_class = {i: labels[i] for i in range(k)}

    # active clusters: sorted leaf tuple -> current node id
    active: dict[tuple[int, ...], int] = {(i,): i for i in range(k)}
    next_id = k
    while len(active) > 1:
        keys = sorted(active)
        best: tuple[float, tuple[int, ...], tuple[int, ...]] | None = None
        for ai in range(len(keys)):
            for bi in range(ai + 1, len(keys)):
                a, b = keys[ai], keys[bi]
                cand = (_average_linkage(a, b, dist), a, b)
                if best is None or cand < best:
                    best = cand
        d, a, b = best
        node_a, node_b = active.pop(a), active.pop(b)
        new = next_id
        next_id += 1
        parent[node_a] = parent[node_b] = new
        children[new] = (node_a, node_b)
        merge_distance[new] = d
        active[tuple(sorted(a + b))] = new

    h = Hierarchy(parent, children, leaf_class, merge_distance, root=n_nodes - 1)
    h.validate()
    return h


def cumulative_cosine_distance(h: Hierarchy, s: int, t: int) -> float:
    """Tree distance where each edge (child, parent) weighs the parent's
    merge distance; summed along both legs of the path through lca(s, t).
    """
    if not h.merge_distance or set(h.merge_distance) != set(h.children):
        raise CapabilityError(
            "cumulative cosine distance needs merge distances on every "
            "internal node; this hierarchy was imported without them"
        )
    q = h.lca(s, t)
    total = 0.0
    for node in (s, t):
        cur = node
        while cur != q:
            par = h.parent[cur]
            total += h.merge_distance[par]
            cur = par
    return total


# --- serialization ---------------------------------------------------------


def _tree_dict(h: Hierarchy, n: int) -> dict:
    if n in h.leaf_class:
        return {"name": h.leaf_class[n]}
    out: dict = {"name": f"n{n}"}
    if n in h.merge_distance:
        out["merge_distance"] = h.merge_distance[n]
    a, b = h.children[n]
    out["children"] = [_tree_dict(h, a), _tree_dict(h, b)]
    return out


def export_json_tree(h: Hierarchy) -> str:
    """Nested-object encoding; loses nothing a rebuilt Hierarchy needs."""
    return json.dumps(_tree_dict(h, h.root), indent=2, sort_keys=True)


def export_dot(h: Hierarchy) -> str:
    """Graphviz rendering with merge distances as edge labels when known."""
    lines = ["digraph class_hierarchy {"]
    for n in range(h.n_nodes):
        if n in h.leaf_class:
            lines.append(f'  n{n} [label="{h.leaf_class[n]}", shape=box];')
        else:
            lines.append(f'  n{n} [label="n{n}"];')
    for n in sorted(h.children):
        a, b = h.children[n]
        for c in (a, b):
            if n in h.merge_distance:
                lines.append(f'  n{n} -> n{c} [label="{h.merge_distance[n]:.6f}"];')
            else:
                lines.append(f"  n{n} -> n{c};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def fingerprint(h: Hierarchy) -> str:
    """Stable content hash of the json-tree export."""
    return hashlib.sha256(export_json_tree(h).encode("utf-8")).hexdigest()


class _ParsedNode:
    __slots__ = ("name", "merge_distance", "children")

    def __init__(self, name, merge_distance, children):
        self.name = name
        self.merge_distance = merge_distance
        self.children = children


def _parse_tree(obj, path: str) -> _ParsedNode:
    if not isinstance(obj, dict):
        raise FormatError(f"tree node at {path} must be an object")
    kids = obj.get("children", [])
    if not isinstance(kids, list):
        raise FormatError(f"'children' at {path} must be a list")
    name = obj.get("name")
    if not kids and not isinstance(name, str):
        raise FormatError(f"leaf at {path} must carry a string 'name'")
    md = obj.get("merge_distance")
    if md is not None and not isinstance(md, (int, float)):
        raise FormatError(f"'merge_distance' at {path} must be numeric")
    parsed_kids = [
        _parse_tree(k, f"{path}.children[{i}]") for i, k in enumerate(kids)
    ]
    return _ParsedNode(name, None if md is None else float(md), parsed_kids)


def _binarize(node: _ParsedNode) -> _ParsedNode:
    """Left-leaning chaining of >2 siblings; unary nodes collapse away."""
    node.children = [_binarize(c) for c in node.children]
    if len(node.children) == 1:
        return node.children[0]
    while len(node.children) > 2:
        joined = _ParsedNode(None, None, node.children[:2])
        node.children = [joined] + node.children[2:]
    return node


def hierarchy_from_tree(obj: dict) -> Hierarchy:
    """Build a Hierarchy from a parsed json-tree object."""
    root = _binarize(_parse_tree(obj, "$"))
    if not root.children:
        raise FormatError("tree must have at least 2 leaves")

    leaves: list[_ParsedNode] = []

    def collect(n: _ParsedNode) -> None:
        if not n.children:
            leaves.append(n)
        for c in n.children:
            collect(c)

    collect(root)
    names = [l.name for l in leaves]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise FormatError(f"duplicate leaf names: {dupes}")

    leaf_ids = {name: i for i, name in enumerate(sorted(names))}
    n_nodes = 2 * len(leaves) - 1
    parent: list[int | None] = [None] * n_nodes
    children: dict[int, tuple[int, int]] = {}
    leaf_class: dict[int, str] = {i: name for name, i in leaf_ids.items()}
    merge_distance: dict[int, float] = {}
    counter = [len(leaves)]  # next internal id, assigned post-order

    def build(n: _ParsedNode) -> int:
        if not n.children:
            return leaf_ids[n.name]
        a = build(n.children[0])
        b = build(n.children[1])
        me = counter[0]
        counter[0] += 1
        parent[a] = parent[b] = me
        children[me] = (a, b)
        if n.merge_distance is not None:
            merge_distance[me] = n.merge_distance
        return me

    root_id = build(root)
    h = Hierarchy(parent, children, leaf_class, merge_distance, root=root_id)
    h.validate()
    return h


def import_hierarchy(path) -> Hierarchy:
    """Load a json-tree file; non-binary trees are binarized on the way in."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None
    return hierarchy_from_tree(obj)


def structurally_equal(a: Hierarchy, b: Hierarchy) -> bool:
    """Same shape, same leaf names, same merge distances (where present)."""

    def eq(na: int, nb: int) -> bool:
        la, lb = na in a.leaf_class, nb in b.leaf_class
        if la != lb:
            return False
        if la:
            return a.leaf_class[na] == b.leaf_class[nb]
        da, db = a.merge_distance.get(na), b.merge_distance.get(nb)
        if (da is None) != (db is None):
            return False
        if da is not None and not math.isclose(da, db, rel_tol=0, abs_tol=1e-12):
            return False
        (a1, a2), (b1, b2) = a.children[na], b.children[nb]
        return eq(a1, b1) and eq(a2, b2)

    return a.n_nodes == b.n_nodes and eq(a.root, b.root)
