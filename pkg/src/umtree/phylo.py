"""Rooted leaf-labelled trees: Newick I/O, mrca matrices, breakup,
display tests, isomorphism, and a small-instance enumeration oracle.

Trees are immutable after construction; every internal node has at least
two children and leaf labels are unique per tree. Internal nodes may
carry a taxon label and/or an integer rank. Child order is preserved for
serialization but carries no meaning: equality of topologies goes through
canonical forms.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

_LABEL_RE = re.compile(r"[A-Za-z0-9_.\-]+")
_FLOAT_RE = re.compile(r"[+-]?\d+(\.\d+)?([eE][+-]?\d+)?")
_INT_RE = re.compile(r"\d+")


class NewickParseError(ValueError):
    """Malformed Newick input; carries the offending position."""

    def __init__(self, pos: int, message: str):
        super().__init__(f"parse error at position {pos}: {message}")
        self.pos = pos


class NotUltrametricError(ValueError):
    """Matrix has an index triple without a tie for the minimum."""

    def __init__(self, triple: tuple[int, int, int]):
        super().__init__(f"no tie for the minimum at index triple {triple}")
        self.triple = triple


@dataclass(frozen=True, eq=False)
class PhyloTree:
    """A rooted tree node; a node with no children is a leaf.

    `label` is the leaf label on leaves and the optional taxon label on
    internal nodes. `rank` is an optional positive integer on internal
    nodes. Instances are shared freely; identity (not structure) is used
    as a dict key, structural comparison goes through canonical_form.
    """

    children: tuple["PhyloTree", ...] = ()
    label: str | None = None
    rank: int | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.children


def leaf(label: str) -> PhyloTree:
    return PhyloTree(label=label)


def node(children: Iterable[PhyloTree], label: str | None = None, rank: int | None = None) -> PhyloTree:
    kids = tuple(children)
    if len(kids) < 2:
        raise ValueError("internal node needs at least 2 children")
    return PhyloTree(children=kids, label=label, rank=rank)


def iter_nodes(tree: PhyloTree) -> Iterator[PhyloTree]:
    """Preorder traversal."""
    stack = [tree]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(n.children))


def leaf_labels(tree: PhyloTree) -> frozenset[str]:
    return frozenset(n.label for n in iter_nodes(tree) if n.is_leaf)


def all_labels(tree: PhyloTree) -> frozenset[str]:
    """Leaf labels plus internal taxon labels."""
    return frozenset(n.label for n in iter_nodes(tree) if n.label is not None)


def validate_tree(tree: PhyloTree) -> None:
    """Enforce unique labels and arity >= 2 on internal nodes."""
    seen: set[str] = set()
    for n in iter_nodes(tree):
        if not n.is_leaf and len(n.children) < 2:
            raise ValueError("internal node with fewer than 2 children")
        if n.is_leaf and n.label is None:
            raise ValueError("unlabelled leaf")
        if n.label is not None:
            if n.label in seen:
                raise ValueError(f"duplicate label {n.label!r}")
            seen.add(n.label)


# -- relational atoms -------------------------------------------------------


@dataclass(frozen=True, order=True)
class Triple:
    """(xy)z: x and y are closer to each other than either is to z."""

    x: str
    y: str
    z: str

    @staticmethod
    def of(a: str, b: str, outsider: str) -> "Triple":
        if len({a, b, outsider}) != 3:
            raise ValueError("triple needs three distinct species")
        if b < a:
            a, b = b, a
        return Triple(a, b, outsider)

    def __str__(self) -> str:
        return f"({self.x},{self.y}){self.z}"

    @property
    def species(self) -> tuple[str, str, str]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True, order=True)
class Fan:
    """(xyz): the relationship among the three species is unresolved."""

    x: str
    y: str
    z: str

    @staticmethod
    def of(a: str, b: str, c: str) -> "Fan":
        if len({a, b, c}) != 3:
            raise ValueError("fan needs three distinct species")
        a, b, c = sorted((a, b, c))
        return Fan(a, b, c)

    def __str__(self) -> str:
        return f"({self.x},{self.y},{self.z})"

    @property
    def species(self) -> tuple[str, str, str]:
        return (self.x, self.y, self.z)


Atom = Triple | Fan

_ATOM_RE = re.compile(
    r"^\(([A-Za-z0-9_.\-]+),([A-Za-z0-9_.\-]+)(?:\)([A-Za-z0-9_.\-]+)|,([A-Za-z0-9_.\-]+)\))$"
)


def parse_atom(text: str) -> Atom:
    """Parse "(a,b)c" as a triple or "(a,b,c)" as a fan."""
    m = _ATOM_RE.match(text.strip())
    if not m:
        raise ValueError(f"malformed atom {text!r}; expected (a,b)c or (a,b,c)")
    a, b, outsider, fan_third = m.groups()
    if outsider is not None:
        return Triple.of(a, b, outsider)
    return Fan.of(a, b, fan_third)


# -- Newick -----------------------------------------------------------------


def parse_newick(text: str) -> PhyloTree:
    """Parse one Newick tree; branch lengths are accepted and ignored."""
    pos = 0
    size = len(text)

    def skip_ws() -> None:
        nonlocal pos
        while pos < size and text[pos].isspace():
            pos += 1

    def expect(ch: str) -> None:
        nonlocal pos
        skip_ws()
        if pos >= size or text[pos] != ch:
            raise NewickParseError(pos, f"expected {ch!r}")
        pos += 1

    def read_label() -> str:
        nonlocal pos
        skip_ws()
        m = _LABEL_RE.match(text, pos)
        if not m:
            raise NewickParseError(pos, "expected a label")
        pos = m.end()
        return m.group()

    def read_rank() -> int:
        nonlocal pos
        m = _INT_RE.match(text, pos)
        if not m:
            raise NewickParseError(pos, "expected an integer rank after '#'")
        pos = m.end()
        rank = int(m.group())
        if rank < 1:
            raise NewickParseError(pos, "rank must be a positive integer")
        return rank

    def skip_branch_length() -> None:
        nonlocal pos
        skip_ws()
        if pos < size and text[pos] == ":":
            pos += 1
            skip_ws()
            m = _FLOAT_RE.match(text, pos)
            if not m:
                raise NewickParseError(pos, "expected a number after ':'")
            pos = m.end()

    def read_node() -> PhyloTree:
        nonlocal pos
        skip_ws()
        if pos < size and text[pos] == "(":
            pos += 1
            kids = [read_node()]
            skip_ws()
            while pos < size and text[pos] == ",":
                pos += 1
                kids.append(read_node())
                skip_ws()
            expect(")")
            if len(kids) < 2:
                raise NewickParseError(pos, "internal node needs at least 2 children")
            label: str | None = None
            rank: int | None = None
            skip_ws()
            if pos < size and text[pos] == "#":
                pos += 1
                rank = read_rank()
            elif pos < size and _LABEL_RE.match(text, pos):
                label = read_label()
                if pos < size and text[pos] == "#":
                    pos += 1
                    rank = read_rank()
            skip_branch_length()
            return PhyloTree(children=tuple(kids), label=label, rank=rank)
        label = read_label()
        skip_branch_length()
        return PhyloTree(label=label)

    tree = read_node()
    expect(";")
    skip_ws()
    if pos != size:
        raise NewickParseError(pos, "trailing characters after ';'")
    labels: set[str] = set()
    for n in iter_nodes(tree):
        if n.is_leaf:
            if n.label in labels:
                raise NewickParseError(0, f"duplicate leaf label {n.label!r}")
            labels.add(n.label)
    return tree


def parse_newick_many(text: str) -> list[PhyloTree]:
    """Parse a file's worth of semicolon-terminated trees."""
    trees = []
    for chunk in text.split(";"):
        if chunk.strip():
            trees.append(parse_newick(chunk + ";"))
    if not trees:
        raise NewickParseError(0, "no trees found")
    return trees


def serialize_newick(tree: PhyloTree) -> str:
    def ser(n: PhyloTree) -> str:
        if n.is_leaf:
            return n.label
        inner = ",".join(ser(c) for c in n.children)
        suffix = n.label or ""
        if n.rank is not None:
            suffix += f"#{n.rank}"
        return f"({inner}){suffix}"

    return ser(tree) + ";"


# -- depths and matrices ----------------------------------------------------


def depth_labels(tree: PhyloTree) -> dict[PhyloTree, int]:
    """Depth of every node, root = 1, children = parent + 1.

    Matches the matrix model, whose off-diagonal domains run from 1 up to
    the species count minus one.
    """
    depths: dict[PhyloTree, int] = {}
    stack = [(tree, 1)]
    while stack:
        n, d = stack.pop()
        depths[n] = d
        for c in n.children:
            stack.append((c, d + 1))
    return depths


@dataclass(frozen=True)
class UltrametricIntMatrix:
    """Symmetric integer matrix over sorted species labels, diagonal 0."""

    labels: tuple[str, ...]
    values: np.ndarray

    @property
    def n(self) -> int:
        return len(self.labels)

    def __post_init__(self) -> None:
        v = self.values
        if v.shape != (self.n, self.n):
            raise ValueError("matrix shape does not match label count")
        if not (np.diag(v) == 0).all():
            raise ValueError("diagonal must be 0")
        if not (v == v.T).all():
            raise ValueError("matrix must be symmetric")

    def value(self, a: str, b: str) -> int:
        i = self.labels.index(a)
        j = self.labels.index(b)
        return int(self.values[i, j])


def tree_to_matrix(tree: PhyloTree) -> UltrametricIntMatrix:
    """Depth label of the mrca of every leaf pair (root depth 1)."""
    labels = tuple(sorted(leaf_labels(tree)))
    index = {lab: i for i, lab in enumerate(labels)}
    n = len(labels)
    m = np.zeros((n, n), dtype=int)

    def collect(nd: PhyloTree, depth: int) -> list[int]:
        if nd.is_leaf:
            return [index[nd.label]]
        groups = [collect(c, depth + 1) for c in nd.children]
        for gi in range(len(groups)):
            for gj in range(gi + 1, len(groups)):
                for a in groups[gi]:
                    for b in groups[gj]:
                        m[a, b] = m[b, a] = depth
        merged: list[int] = []
        for g in groups:
            merged.extend(g)
        return merged

    collect(tree, 1)
    return UltrametricIntMatrix(labels, m)


def _components(adj: np.ndarray) -> list[np.ndarray]:
    """Connected components of a small dense boolean adjacency matrix."""
    k = adj.shape[0]
    unseen = np.ones(k, dtype=bool)
    comps = []
    while unseen.any():
        seed = int(np.argmax(unseen))
        comp = np.zeros(k, dtype=bool)
        comp[seed] = True
        frontier = comp.copy()
        while frontier.any():
            reach = adj[frontier].any(axis=0) & ~comp
            comp |= reach
            frontier = reach
        comps.append(np.flatnonzero(comp))
        unseen &= ~comp
    return comps


def _find_violating_triple(values: np.ndarray) -> tuple[int, int, int]:
    n = values.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                a, b, c = values[i, j], values[i, k], values[j, k]
                lo = min(a, b, c)
                if (a == lo) + (b == lo) + (c == lo) < 2:
                    return (i, j, k)
    raise AssertionError("no violating triple found")


def matrix_to_tree(matrix: UltrametricIntMatrix) -> PhyloTree:
    """The unique tree whose mrca depths reproduce the matrix.

    Only comparisons between entries are used, so matrices equal up to a
    strictly increasing relabelling of values give isomorphic trees. At
    each level the leaves split along the classes of "strictly deeper
    than the minimum"; a level that does not split has no tie for the
    minimum somewhere, and the input is rejected with a violating triple.
    """
    values = matrix.values
    if matrix.n > 1:
        off = values[~np.eye(matrix.n, dtype=bool)]
        if (off <= 0).any():
            raise ValueError("off-diagonal entries must be positive")

    def build(idx: np.ndarray) -> PhyloTree:
        if len(idx) == 1:
            return leaf(matrix.labels[int(idx[0])])
        sub = values[np.ix_(idx, idx)]
        k = len(idx)
        m0 = int(sub[~np.eye(k, dtype=bool)].min())
        comps = _components(sub > m0)
        if len(comps) < 2:
            i, j, t = _find_violating_triple(values)
            raise NotUltrametricError((i, j, t))
        return PhyloTree(children=tuple(build(idx[c]) for c in comps))

    if matrix.n == 0:
        raise ValueError("empty matrix")
    return build(np.arange(matrix.n))


# -- breakup ----------------------------------------------------------------


class _WorkNode:
    __slots__ = ("children", "label", "parent", "depth", "order")

    def __init__(self, label: str | None, depth: int, order: int):
        self.children: list[_WorkNode] = []
        self.label = label
        self.parent: _WorkNode | None = None
        self.depth = depth
        self.order = order


def _build_work_tree(tree: PhyloTree) -> tuple[_WorkNode, list[_WorkNode]]:
    """Mutable copy plus interior nodes in non-increasing depth order."""
    counter = 0
    interior: list[_WorkNode] = []

    def copy(nd: PhyloTree, depth: int) -> _WorkNode:
        nonlocal counter
        w = _WorkNode(nd.label if nd.is_leaf else None, depth, counter)
        counter += 1
        if not nd.is_leaf:
            interior.append(w)
            for c in nd.children:
                cw = copy(c, depth + 1)
                cw.parent = w
                w.children.append(cw)
        return w

    root = copy(tree, 1)
    interior.sort(key=lambda w: (-w.depth, w.order))
    return root, interior


def _leaf_labels_under(w: _WorkNode) -> list[str]:
    out: list[str] = []
    stack = [w]
    while stack:
        n = stack.pop()
        if not n.children:
            if n.label is not None:
                out.append(n.label)
        else:
            stack.extend(n.children)
    return out


def _uncle_or_cousin(c0: _WorkNode) -> str:
    """Smallest leaf label under any sibling of c0's parent (current tree)."""
    parent = c0.parent
    grand = parent.parent
    best: str | None = None
    for sib in grand.children:
        if sib is parent:
            continue
        for lab in _leaf_labels_under(sib):
            if best is None or lab < best:
                best = lab
    assert best is not None
    return best


def _breakup(tree: PhyloTree, hard: bool) -> list[Atom]:
    if len(leaf_labels(tree)) < 3:
        return []
    root, interior = _build_work_tree(tree)
    atoms: list[Atom] = []
    seen: set[Atom] = set()

    def emit(atom: Atom) -> None:
        if atom not in seen:
            seen.add(atom)
            atoms.append(atom)

    i = 0
    while i < len(interior):
        v = interior[i]
        if not v.children:  # already collapsed as part of an ancestor
            i += 1
            continue
        is_root = v.parent is None
        degree = len(v.children)
        if hard:
            if is_root and degree <= 2:
                break
            c0 = v.children[0]
            if degree == 2:
                c1 = v.children[1]
                emit(Triple.of(c0.label, c1.label, _uncle_or_cousin(c0)))
                v.children = []
                v.label = c0.label
                i += 1
            else:
                for j in range(1, degree - 1):
                    for k in range(j + 1, degree):
                        emit(Fan.of(c0.label, v.children[j].label, v.children[k].label))
                v.children.remove(c0)
        else:
            if is_root:
                break
            c0 = v.children[0]
            c1 = v.children[1]
            emit(Triple.of(c0.label, c1.label, _uncle_or_cousin(c0)))
            if degree == 2:
                v.children = []
                v.label = c0.label
                i += 1
            else:
                v.children.remove(c0)
    return atoms


def hard_breakup(tree: PhyloTree) -> list[Atom]:
    """Triples and fans; multifurcations are real evidence.

    A d-ary interior node contributes all d-choose-3 fans over its
    children before collapsing. Trees with fewer than 3 leaves give [].
    """
    return _breakup(tree, hard=True)


def soft_breakup(tree: PhyloTree) -> list[Atom]:
    """Triples only; multifurcations are lack of evidence (no fans).

    The root is never processed, so a root fan contributes nothing.
    """
    return _breakup(tree, hard=False)


# -- restriction, display, isomorphism --------------------------------------


def restrict_and_suppress(tree: PhyloTree, labels: Iterable[str]) -> PhyloTree:
    """Minimal subtree connecting the kept leaves, degree-2 chains contracted."""
    keep = set(labels)
    have = leaf_labels(tree)
    if not keep:
        raise ValueError("need at least one leaf to restrict to")
    if not keep <= have:
        raise ValueError(f"labels not in tree: {sorted(keep - have)}")

    def restrict(nd: PhyloTree) -> PhyloTree | None:
        if nd.is_leaf:
            return nd if nd.label in keep else None
        kids = [r for r in (restrict(c) for c in nd.children) if r is not None]
        if not kids:
            return None
        if len(kids) == 1:
            return kids[0]
        return PhyloTree(children=tuple(kids), label=nd.label, rank=nd.rank)

    out = restrict(tree)
    assert out is not None
    return out


def canonical_form(tree: PhyloTree, with_internal_labels: bool = True) -> str:
    """Order-independent structural key; equal forms mean isomorphic trees."""
    if tree.is_leaf:
        return tree.label
    parts = sorted(canonical_form(c, with_internal_labels) for c in tree.children)
    suffix = ""
    if with_internal_labels:
        if tree.label:
            suffix = tree.label
        if tree.rank is not None:
            suffix += f"#{tree.rank}"
    return "(" + ",".join(parts) + ")" + suffix


def isomorphic(t1: PhyloTree, t2: PhyloTree) -> bool:
    """Unordered rooted isomorphism respecting leaf and internal labels."""
    return canonical_form(t1) == canonical_form(t2)


def displays(t1: PhyloTree, t2: PhyloTree) -> bool:
    """True iff restricting t1 to t2's leaves reproduces t2's topology.

    Internal labels and ranks are ignored. t2's leaves must be a subset
    of t1's.
    """
    l2 = leaf_labels(t2)
    if not l2 <= leaf_labels(t1):
        raise ValueError("second tree has leaves outside the first")
    restricted = restrict_and_suppress(t1, l2)
    return canonical_form(restricted, with_internal_labels=False) == canonical_form(
        t2, with_internal_labels=False
    )


def _label_ancestry(tree: PhyloTree) -> tuple[dict[str, int], dict[str, set[int]]]:
    """Per label: the id of its node and the ids of that node's ancestors
    (including itself)."""
    own: dict[str, int] = {}
    ancs: dict[str, set[int]] = {}

    def walk(nd: PhyloTree, path: set[int]) -> None:
        here = path | {id(nd)}
        if nd.label is not None:
            own[nd.label] = id(nd)
            ancs[nd.label] = here
        for c in nd.children:
            walk(c, here)

    walk(tree, set())
    return own, ancs


def perfectly_displays(t: PhyloTree, t_prime: PhyloTree) -> bool:
    """Display plus exact preservation of label ancestry.

    Checks: every label of t_prime occurs in t; t displays t_prime
    (internal labels ignored); and for every pair of labels of t_prime,
    one labels a descendant of the other in t_prime exactly when it does
    in t. Leaves of t_prime must be leaves of t, otherwise False.
    """
    if not all_labels(t_prime) <= all_labels(t):
        return False
    if not leaf_labels(t_prime) <= leaf_labels(t):
        return False
    if not displays(t, t_prime):
        return False
    own_p, anc_p = _label_ancestry(t_prime)
    own_t, anc_t = _label_ancestry(t)
    labels = sorted(own_p)
    for a in labels:
        for b in labels:
            if a == b:
                continue
            desc_in_prime = own_p[b] in anc_p[a]
            desc_in_t = own_t[b] in anc_t[a]
            if desc_in_prime != desc_in_t:
                return False
    return True


# -- atoms of a tree ---------------------------------------------------------


def atom_holds(matrix: UltrametricIntMatrix, atom: Atom) -> bool:
    """Whether a tree (given as its mrca matrix) displays the atom."""
    if isinstance(atom, Triple):
        return matrix.value(atom.x, atom.y) > matrix.value(atom.x, atom.z) == matrix.value(
            atom.y, atom.z
        )
    a = matrix.value(atom.x, atom.y)
    return a == matrix.value(atom.x, atom.z) == matrix.value(atom.y, atom.z)


# -- exhaustive enumeration (test oracle) ------------------------------------


def _set_partitions(items: tuple) -> Iterator[list[tuple]]:
    """All partitions of items into unordered non-empty blocks."""
    if len(items) == 1:
        yield [items]
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [(first,) + part[i]] + part[i + 1 :]
        yield [(first,)] + part


def all_rooted_trees(leaves: Iterable[str], max_leaves: int = 8) -> Iterator[PhyloTree]:
    """Every rooted tree on the leaf set, once per isomorphism class.

    All interior degrees are >= 2. Guarded to small leaf sets; the count
    grows like 1, 1, 4, 26, 236, 2752, 39208, 660032.
    """
    labels = tuple(sorted(set(leaves)))
    if not labels:
        raise ValueError("need at least one leaf")
    if len(labels) > max_leaves:
        raise ValueError(f"refusing to enumerate more than {max_leaves} leaves")

    memo: dict[tuple, list[PhyloTree]] = {}

    def gen(block: tuple) -> list[PhyloTree]:
        if block in memo:
            return memo[block]
        if len(block) == 1:
            out = [leaf(block[0])]
        else:
            out = []
            for part in _set_partitions(block):
                if len(part) < 2:
                    continue
                for combo in itertools.product(*(gen(b) for b in part)):
                    out.append(PhyloTree(children=combo))
        memo[block] = out
        return out

    yield from gen(labels)
