"""Bounds-consistent propagation of the ultrametric relation.

The ultrametric relation over three integers requires a tie for the
minimum: either all three are equal, or two are equal and the third is
strictly greater. This module provides

* `lb_fix` / `ub_fix`: single-pass bound filters for one variable triple,
* a three-variable propagator (`UltrametricThree`) that reaches bounds
  consistency per wake and detects entailment,
* a whole-matrix propagator (`UltrametricMatrix`) that enforces the
  relation over every index triple of a symmetric matrix of variables
  while storing only one propagator object (constant code representation
  instead of an n-choose-3 constraint list), and
* a deliberately weak disjunctive propagator (`DelayedDisjunctionUm3`)
  that only filters once a single disjunct remains bound-feasible; it
  exists to demonstrate why the specialised propagator is needed.

Lower bounds that are individually supported always support each other,
so at any non-failed fixpoint the lower-bound tuple itself satisfies the
relation. Upper bounds enjoy no such property.
"""

from __future__ import annotations

from typing import Optional, Sequence

from .engine import Engine, Propagator, Wake
from .store import Event, Store

_LB_EVENTS = Event.MIN | Event.FIX


def lb_fix(store: Store, x: int, y: int, z: int) -> None:
    """Raise the strictly smallest lower bound up to the middle one.

    After one pass the three lower bounds form a tie for the minimum.
    Sorting ties break by variable index for reproducibility. May fail
    the store when the raise crosses an upper bound.
    """
    lbs = store.lbs
    a, b, c = x, y, z
    if (lbs[b], b) < (lbs[a], a):
        a, b = b, a
    if (lbs[c], c) < (lbs[b], b):
        b, c = c, b
        if (lbs[b], b) < (lbs[a], a):
            a, b = b, a
    if lbs[a] < lbs[b]:
        store.tighten_lb(a, lbs[b])


def ub_fix(store: Store, x: int, y: int, z: int) -> None:
    """Drop an unsupported upper bound, if any, in a single pass.

    With S, M, L the variables in non-decreasing upper-bound order
    (ties by index): when ub(S) < ub(M), ub(M) is supported only through
    a common value of S and L, and ub(L) only through one of S and M.
    Emptiness of those bound intersections decides which bound falls to
    ub(S). May fail the store when the drop crosses a lower bound.
    """
    ubs = store.ubs
    lbs = store.lbs
    a, b, c = x, y, z
    if (ubs[b], b) < (ubs[a], a):
        a, b = b, a
    if (ubs[c], c) < (ubs[b], b):
        b, c = c, b
        if (ubs[b], b) < (ubs[a], a):
            a, b = b, a
    su = ubs[a]
    if su < ubs[b]:
        if lbs[c] > su:  # S and L cannot meet
            store.tighten_ub(b, su)
        elif lbs[b] > su:  # S and M cannot meet
            store.tighten_ub(c, su)


def um3_apply(store: Store, x: int, y: int, z: int, events: Event) -> None:
    """Run the bound filters demanded by the coalesced event kinds.

    A lower-bound change can invalidate both lower and upper bounds, so
    MIN and FIX run lb_fix then ub_fix; an upper-bound change can only
    invalidate upper bounds, so MAX alone runs ub_fix. ub_fix is skipped
    when lb_fix already failed the store.
    """
    if events & _LB_EVENTS:
        lb_fix(store, x, y, z)
        if not store.failed:
            ub_fix(store, x, y, z)
    elif events & Event.MAX:
        ub_fix(store, x, y, z)


def um3_wake(store: Store, x: int, y: int, z: int, events: Event) -> Wake:
    """One propagator wake over a variable triple.

    Returns ENTAILED as soon as at least two of the three domains are
    singletons: any further narrowing of the third is then consistent, so
    the propagator can never prune again.
    """
    um3_apply(store, x, y, z, events)
    if store.failed:
        return Wake.PROGRESS
    lbs, ubs = store.lbs, store.ubs
    fixed = (lbs[x] == ubs[x]) + (lbs[y] == ubs[y]) + (lbs[z] == ubs[z])
    return Wake.ENTAILED if fixed >= 2 else Wake.PROGRESS


class UltrametricThree(Propagator):
    """Bounds-consistency propagator for one variable triple."""

    __slots__ = ("x", "y", "z")

    def __init__(self, x: int, y: int, z: int):
        if len({x, y, z}) != 3:
            raise ValueError("ultrametric triple needs three distinct variables")
        super().__init__((x, y, z))
        self.x, self.y, self.z = x, y, z

    def wake(self, store: Store, var: Optional[int], events: Event) -> Wake:
        return um3_wake(store, self.x, self.y, self.z, events)


def post_um3(engine: Engine, x: int, y: int, z: int) -> UltrametricThree:
    p = UltrametricThree(x, y, z)
    engine.register(p)
    return p


class MrcaMatrix:
    """Symmetric matrix of variables over species pairs.

    Cell (i, j) holds the depth of the most recent common ancestor of
    species i and j; the diagonal is the constant 0 and is not stored.
    Off-diagonal domains start at [1, n-1]. cell(i, j) and cell(j, i)
    are the same variable by construction.
    """

    __slots__ = ("store", "labels", "n", "index", "cell_vars", "_base", "_pos")

    def __init__(self, store: Store, labels: Sequence[str]):
        labels = tuple(labels)
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate species labels")
        n = len(labels)
        if n < 3:
            raise ValueError("matrix needs at least 3 species")
        self.store = store
        self.labels = labels
        self.n = n
        self.index = {lab: i for i, lab in enumerate(labels)}
        # row base so that cell (i, j) with i < j lives at _base[i] + j
        self._base = [i * n - (i * (i + 1)) // 2 - i - 1 for i in range(n)]
        self.cell_vars = [store.new_var(1, n - 1) for _ in range(n * (n - 1) // 2)]
        self._pos = {}
        k = 0
        for i in range(n):
            for j in range(i + 1, n):
                self._pos[self.cell_vars[k]] = (i, j)
                k += 1

    def cell(self, i: int, j: int) -> int:
        """Variable id of the unordered pair {i, j}, i != j."""
        if i > j:
            i, j = j, i
        elif i == j:
            raise ValueError("diagonal cells are the constant 0, not variables")
        return self.cell_vars[self._base[i] + j]

    def cell_by_label(self, a: str, b: str) -> int:
        return self.cell(self.index[a], self.index[b])

    def index_of(self, var: int) -> tuple[int, int]:
        return self._pos[var]

    def lower_bounds(self):
        """Current lb of every cell as a full symmetric n x n array."""
        import numpy as np

        m = np.zeros((self.n, self.n), dtype=int)
        lbs = self.store.lbs
        k = 0
        for i in range(self.n):
            for j in range(i + 1, self.n):
                m[i, j] = m[j, i] = lbs[self.cell_vars[k]]
                k += 1
        return m


class UltrametricMatrix(Propagator):
    """Single propagator keeping a whole MrcaMatrix ultrametric.

    On an event at cell (i, j) it sweeps k over all other indices and
    applies the triple filters to (M_ij, M_ik, M_jk) - linear work per
    event instead of waking a cubic number of triple propagators. The
    initial wake does nothing: cells are constructed at [1, n-1], which
    is already bounds-consistent (all-equal tuples support every bound).
    """

    __slots__ = ("matrix",)

    def __init__(self, matrix: MrcaMatrix):
        super().__init__(matrix.cell_vars)
        self.matrix = matrix

    def wake(self, store: Store, var: Optional[int], events: Event) -> Wake:
        if var is None:
            return Wake.PROGRESS
        mat = self.matrix
        i, j = mat.index_of(var)
        n = mat.n
        cells = mat.cell_vars
        base = mat._base
        run_lb = bool(events & _LB_EVENTS)
        for k in range(n):
            if k == i or k == j:
                continue
            b = cells[base[i] + k] if i < k else cells[base[k] + i]
            c = cells[base[j] + k] if j < k else cells[base[k] + j]
            if run_lb:
                lb_fix(store, var, b, c)
                if store.failed:
                    return Wake.PROGRESS
            ub_fix(store, var, b, c)
            if store.failed:
                return Wake.PROGRESS
        return Wake.PROGRESS


def post_um_matrix(engine: Engine, matrix: MrcaMatrix) -> UltrametricMatrix:
    """Register the single matrix propagator watching every cell."""
    p = UltrametricMatrix(matrix)
    engine.register(p)
    return p


class DelayedDisjunctionUm3(Propagator):
    """Weak disjunctive encoding of the ultrametric triple (demonstrator).

    Mirrors how generic toolkits treat a disjunction of the four shapes
    (x > y = z), (y > x = z), (z > x = y), (x = y = z): nothing is
    filtered until at most one disjunct remains bound-feasible. Kept only
    to reproduce the non-pruning behaviour that motivates the specialised
    propagator; never used by the supertree pipeline.
    """

    __slots__ = ("x", "y", "z")

    def __init__(self, x: int, y: int, z: int):
        super().__init__((x, y, z))
        self.x, self.y, self.z = x, y, z

    @staticmethod
    def _tie_feasible(store: Store, top: int, u: int, v: int) -> bool:
        # top > u = v realisable within current bounds
        lo = max(store.lbs[u], store.lbs[v])
        hi = min(store.ubs[u], store.ubs[v])
        return lo <= hi and store.ubs[top] >= lo + 1

    def wake(self, store: Store, var: Optional[int], events: Event) -> Wake:
        x, y, z = self.x, self.y, self.z
        lbs, ubs = store.lbs, store.ubs
        feas = [
            self._tie_feasible(store, x, y, z),
            self._tie_feasible(store, y, x, z),
            self._tie_feasible(store, z, x, y),
            max(lbs[x], lbs[y], lbs[z]) <= min(ubs[x], ubs[y], ubs[z]),
        ]
        alive = feas.count(True)
        if alive == 0:
            store.fail()
            return Wake.PROGRESS
        if alive > 1:
            return Wake.PROGRESS
        if feas[3]:
            lo = max(lbs[x], lbs[y], lbs[z])
            hi = min(ubs[x], ubs[y], ubs[z])
            for v in (x, y, z):
                store.tighten_lb(v, lo)
                store.tighten_ub(v, hi)
                if store.failed:
                    return Wake.PROGRESS
        else:
            top, u, v = ((x, y, z), (y, x, z), (z, x, y))[feas.index(True)]
            lo = max(lbs[u], lbs[v])
            hi = min(ubs[u], ubs[v], ubs[top] - 1)
            for w in (u, v):
                store.tighten_lb(w, lo)
                store.tighten_ub(w, hi)
                if store.failed:
                    return Wake.PROGRESS
            store.tighten_lb(top, lo + 1)
        return Wake.PROGRESS


def post_delayed_disjunction_um3(engine: Engine, x: int, y: int, z: int) -> DelayedDisjunctionUm3:
    p = DelayedDisjunctionUm3(x, y, z)
    engine.register(p)
    return p
