import itertools
import random

import pytest

import umtree.ultrametric as um
from umtree import (
    Engine,
    Event,
    PropagateResult,
    Store,
    post_delayed_disjunction_um3,
    post_um3,
    post_um_matrix,
)
from umtree.engine import Wake
from umtree.relations import post_atom
from umtree.phylo import Fan, Triple
from umtree.ultrametric import MrcaMatrix, UltrametricMatrix, lb_fix, ub_fix, um3_wake

from oracles import all_boxes, bcz_box_oracle, ultrametric_tuples, um3_fixpoint


def _vars(store, *boxes):
    return [store.new_var(lo, hi) for lo, hi in boxes]


# -- lb_fix -------------------------------------------------------------------


def test_lb_fix_raises_smallest_to_middle():
    s = Store()
    x, y, z = _vars(s, (1, 3), (2, 3), (3, 3))
    lb_fix(s, x, y, z)
    assert [s.lbs[v] for v in (x, y, z)] == [2, 2, 3]


def test_lb_fix_noop_when_already_tied():
    s = Store()
    x, y, z = _vars(s, (2, 9), (2, 9), (5, 9))
    lb_fix(s, x, y, z)
    assert [s.lbs[v] for v in (x, y, z)] == [2, 2, 5]


def test_lb_fix_failure_when_raise_crosses_ub():
    s = Store()
    x, y, z = _vars(s, (1, 2), (3, 9), (3, 9))
    lb_fix(s, x, y, z)
    assert s.failed


# -- ub_fix -------------------------------------------------------------------


def test_ub_fix_drops_middle_when_small_large_disjoint():
    s = Store()
    x, y, z = _vars(s, (1, 2), (1, 5), (3, 6))
    ub_fix(s, x, y, z)
    assert s.domain(y) == (1, 2)
    assert s.domain(z) == (3, 6)


def test_ub_fix_noop_when_intersections_nonempty():
    s = Store()
    x, y, z = _vars(s, (1, 2), (1, 5), (2, 6))
    ub_fix(s, x, y, z)
    assert [s.domain(v) for v in (x, y, z)] == [(1, 2), (1, 5), (2, 6)]


def test_ub_fix_drops_largest_two_distinct_singletons():
    s = Store()
    x, y, z = _vars(s, (5, 5), (7, 7), (1, 9))
    ub_fix(s, x, y, z)
    assert s.domain(z) == (1, 5)
    # combined with lb_fix at the engine fixpoint, z pins to 5
    e = Engine(s)
    post_um3(e, x, y, z)
    assert e.propagate() is PropagateResult.FIXPOINT
    assert s.domain(z) == (5, 5)


# -- um3_wake -----------------------------------------------------------------


def test_um3_wake_min_event_example():
    s = Store()
    x, y, z = _vars(s, (1, 3), (2, 3), (3, 3))
    um3_wake(s, x, y, z, Event.MIN)
    assert s.domain(x) == (2, 3)
    assert s.domain(y) == (2, 3) and s.domain(z) == (3, 3)


def test_um3_wake_two_equal_singletons_entailed():
    s = Store()
    x, y, z = _vars(s, (5, 5), (5, 5), (3, 9))
    assert um3_wake(s, x, y, z, Event.FIX) is Wake.ENTAILED
    assert s.domain(z) == (5, 9)


def test_um3_wake_two_distinct_singletons_entailed():
    s = Store()
    x, y, z = _vars(s, (3, 3), (7, 7), (1, 9))
    assert um3_wake(s, x, y, z, Event.FIX) is Wake.ENTAILED
    assert s.domain(z) == (3, 3)


def test_fix_single_passes_are_idempotent():
    rng = random.Random(3)
    for _ in range(200):
        s = Store()
        vs = _vars(s, *((rng.randint(0, 4), rng.randint(4, 9)) for _ in range(3)))
        lb_fix(s, *vs)
        if s.failed:
            continue
        snap = (list(s.lbs), list(s.ubs))
        lb_fix(s, *vs)
        assert (list(s.lbs), list(s.ubs)) == snap
        ub_fix(s, *vs)
        if s.failed:
            continue
        snap = (list(s.lbs), list(s.ubs))
        ub_fix(s, *vs)
        assert (list(s.lbs), list(s.ubs)) == snap


# -- BC(Z) vs oracle ----------------------------------------------------------


def test_bcz_matches_oracle_small_sweep():
    tuples = ultrametric_tuples(3)
    for boxes in itertools.product(all_boxes(3), repeat=3):
        assert um3_fixpoint(boxes) == bcz_box_oracle(boxes, tuples), boxes


def test_lower_bounds_mutually_supportive_at_fixpoint():
    tuples = ultrametric_tuples(3)
    for boxes in itertools.product(all_boxes(3), repeat=3):
        got = um3_fixpoint(boxes)
        if got is not None:
            lbs = tuple(lo for lo, _ in got)
            assert lbs.count(min(lbs)) >= 2, (boxes, got)


def test_upper_bounds_need_not_be_supportive():
    # a genuine fixpoint whose ubs (3,2,1) do not tie for the minimum
    assert um3_fixpoint(((1, 3), (1, 2), (1, 1))) == ((1, 3), (1, 2), (1, 1))


def test_entailment_is_safe():
    # after ENTAILED, no narrowing of the free variable enables pruning
    s = Store()
    x, y, z = _vars(s, (5, 5), (5, 5), (3, 9))
    assert um3_wake(s, x, y, z, Event.FIX) is Wake.ENTAILED
    zl, zu = s.domain(z)
    for lo in range(zl, zu + 1):
        for hi in range(lo, zu + 1):
            s2 = Store()
            xs = _vars(s2, (5, 5), (5, 5), (lo, hi))
            e = Engine(s2)
            post_um3(e, *xs)
            assert e.propagate() is PropagateResult.FIXPOINT
            assert [s2.domain(v) for v in xs] == [(5, 5), (5, 5), (lo, hi)]


def test_um3_wake_constant_bound_writes(monkeypatch):
    # each wake performs at most a bounded number of tighten calls
    s = Store()
    calls = {"n": 0}
    orig_lb, orig_ub = Store.tighten_lb, Store.tighten_ub

    def lb_counted(self, v, val):
        calls["n"] += 1
        return orig_lb(self, v, val)

    def ub_counted(self, v, val):
        calls["n"] += 1
        return orig_ub(self, v, val)

    monkeypatch.setattr(Store, "tighten_lb", lb_counted)
    monkeypatch.setattr(Store, "tighten_ub", ub_counted)
    x, y, z = _vars(s, (1, 9), (4, 9), (6, 8))
    um3_wake(s, x, y, z, Event.MIN | Event.MAX)
    assert calls["n"] <= 2  # one possible raise in lb_fix, one drop in ub_fix


# -- matrix propagator ---------------------------------------------------------


def _matrix_engine(n, rng=None):
    s = Store()
    e = Engine(s, rng=rng)
    labels = [f"s{i}" for i in range(n)]
    m = MrcaMatrix(s, labels)
    return s, e, m


def test_matrix_triple_post_minimal_completion():
    s, e, m = _matrix_engine(3)
    post_um_matrix(e, m)
    post_atom(e, m, Triple.of("s0", "s1", "s2"))
    assert e.propagate() is PropagateResult.FIXPOINT
    assert s.lbs[m.cell(0, 1)] == 2
    assert s.lbs[m.cell(0, 2)] == 1 and s.lbs[m.cell(1, 2)] == 1


def test_matrix_unconstrained_stays_at_one():
    s, e, m = _matrix_engine(3)
    post_um_matrix(e, m)
    assert e.propagate() is PropagateResult.FIXPOINT
    assert all(s.lbs[v] == 1 for v in m.cell_vars)


def test_matrix_initial_domains():
    s, _, m = _matrix_engine(5)
    assert all(s.domain(v) == (1, 4) for v in m.cell_vars)
    assert m.cell(1, 3) == m.cell(3, 1)


def _decomposed(e, m):
    n = m.n
    for i, j, k in itertools.combinations(range(n), 3):
        post_um3(e, m.cell(i, j), m.cell(i, k), m.cell(j, k))


def _random_atoms(labels, rng, count):
    atoms = []
    for _ in range(count):
        a, b, c = rng.sample(labels, 3)
        atoms.append(Triple.of(a, b, c) if rng.random() < 0.7 else Fan.of(a, b, c))
    return atoms


@pytest.mark.parametrize("seed", range(25))
def test_matrix_equals_decomposition(seed):
    rng = random.Random(seed)
    n = rng.randint(3, 8)
    labels = [f"s{i}" for i in range(n)]
    atoms = _random_atoms(labels, rng, rng.randint(0, 8))

    def run(decomposed):
        s, e, m = _matrix_engine(n)
        if decomposed:
            _decomposed(e, m)
        else:
            post_um_matrix(e, m)
        for a in atoms:
            post_atom(e, m, a)
        if e.propagate() is PropagateResult.FAILURE:
            return None
        return [s.domain(v) for v in m.cell_vars]

    assert run(True) == run(False)


def test_matrix_four_species_pair_of_triples():
    atoms = [Triple.of("a", "b", "c"), Triple.of("c", "d", "a")]

    def run(decomposed):
        s = Store()
        e = Engine(s)
        m = MrcaMatrix(s, ["a", "b", "c", "d"])
        if decomposed:
            _decomposed(e, m)
        else:
            post_um_matrix(e, m)
        for a in atoms:
            post_atom(e, m, a)
        assert e.propagate() is PropagateResult.FIXPOINT
        return [s.domain(v) for v in m.cell_vars]

    assert run(True) == run(False)


def test_matrix_propagator_is_single_and_subscriptions_quadratic():
    s, e, m = _matrix_engine(10)
    post_um_matrix(e, m)
    assert len(e.propagators) == 1
    assert isinstance(e.propagators[0], UltrametricMatrix)
    total_subs = sum(len(lst) for lst in e._subs)
    assert total_subs == 10 * 9 // 2  # one subscription per cell, no triple list


def test_matrix_wake_cost_linear(monkeypatch):
    # one event at one cell applies the triple filters to exactly n-2 triples
    counts = {"lb": 0}
    orig = um.lb_fix

    def counted(store, x, y, z):
        counts["lb"] += 1
        return orig(store, x, y, z)

    monkeypatch.setattr(um, "lb_fix", counted)
    s, e, m = _matrix_engine(12)
    p = post_um_matrix(e, m)
    e.propagate()
    counts["lb"] = 0
    p.wake(s, m.cell(2, 5), Event.MIN)
    assert counts["lb"] == 12 - 2


# -- delayed disjunction demonstrator -------------------------------------------


def test_delayed_disjunction_does_not_prune_lower_bound():
    s = Store()
    e = Engine(s)
    x, y, z = _vars(s, (1, 3), (2, 3), (3, 3))
    post_delayed_disjunction_um3(e, x, y, z)
    assert e.propagate() is PropagateResult.FIXPOINT
    assert s.domain(x) == (1, 3)  # the specialised propagator would give (2, 3)


def test_delayed_disjunction_fails_when_no_disjunct_feasible():
    s = Store()
    e = Engine(s)
    x, y, z = _vars(s, (5, 5), (5, 5), (1, 4))
    post_delayed_disjunction_um3(e, x, y, z)
    assert e.propagate() is PropagateResult.FAILURE


def test_delayed_disjunction_no_pruning_when_all_feasible():
    s = Store()
    e = Engine(s)
    x, y, z = _vars(s, (1, 9), (1, 9), (1, 9))
    post_delayed_disjunction_um3(e, x, y, z)
    assert e.propagate() is PropagateResult.FIXPOINT
    assert [s.domain(v) for v in (x, y, z)] == [(1, 9), (1, 9), (1, 9)]


def test_delayed_disjunction_enforces_last_disjunct():
    s = Store()
    e = Engine(s)
    x, y, z = _vars(s, (3, 9), (1, 2), (1, 2))
    post_delayed_disjunction_um3(e, x, y, z)
    assert e.propagate() is PropagateResult.FIXPOINT
    # only x > y = z is feasible; it is enforced to bounds consistency
    assert s.domain(x) == (3, 9)
    assert s.domain(y) == (1, 2) and s.domain(z) == (1, 2)
