import math
import random

import pytest

from conftest import random_ops
from wsmap.core import (
    CmpCounter, DELETE, INSERT, Key, SEARCH, UPDATE, oracle_replay,
    working_set_bound,
)
from wsmap.seqmap import SeqWorkingSetMap, segment_capacity


def _keys(values, ctr=None):
    ctr = ctr or CmpCounter()
    return {v: Key(v, ctr) for v in values}


def _fill(m, values):
    ks = _keys(values)
    for v in values:
        m.insert(ks[v], f"v{v}")
    return ks


def test_capacities():
    assert [segment_capacity(k) for k in range(5)] == [2, 4, 16, 256, 65536]


def test_singleton_search():
    m = SeqWorkingSetMap()
    ks = _fill(m, ["a"])
    found, val = m.search(ks["a"])
    assert found and val == "va"
    assert m.rank_of(ks["a"]) == 1
    m.audit()


def test_search_promotion_trace():
    # 7 items: S[0]=[a,b] S[1]=[c,d,e,f] S[2]=[g]; searching g moves it to
    # the front of S[1] and demotes S[1]'s least recent item f into S[2]
    m = SeqWorkingSetMap()
    ks = _fill(m, list("abcdefg"))
    assert [[k.value for k in seg] for seg in m.dump()] == \
        [["a", "b"], ["c", "d", "e", "f"], ["g"]]
    found, val = m.search(ks["g"])
    assert found and val == "vg"
    assert [[k.value for k in seg] for seg in m.dump()] == \
        [["a", "b"], ["g", "c", "d", "e"], ["f"]]
    m.audit()


def test_search_inside_s0_moves_to_front():
    m = SeqWorkingSetMap()
    ks = _fill(m, ["a", "b"])
    m.search(ks["b"])
    assert [[k.value for k in seg] for seg in m.dump()] == [["b", "a"]]
    m.audit()


def test_delete_cascade_trace():
    m = SeqWorkingSetMap()
    ks = _fill(m, list("abcdefg"))
    found, _ = m.delete(ks["a"])
    assert found
    assert [[k.value for k in seg] for seg in m.dump()] == \
        [["b", "c"], ["d", "e", "f", "g"]]
    m.audit()


def test_delete_last_and_absent():
    m = SeqWorkingSetMap()
    ks = _fill(m, ["a"])
    assert m.delete(ks["a"]) == (True, "va")
    assert m.n == 0 and m.segments == []
    assert m.delete(Key("zz")) == (False, None)


def test_duplicate_insert_updates_and_promotes():
    m = SeqWorkingSetMap()
    ks = _fill(m, list("abcdefg"))
    found, prior = m.insert(ks["g"], "new")
    assert found and prior == "vg"
    assert m.dump()[1][0].value == "g"
    assert m.search(ks["g"]) == (True, "new")
    m.audit()


def test_update_miss_is_unsuccessful():
    m = SeqWorkingSetMap()
    _fill(m, ["a"])
    assert m.update(Key("q"), 1) == (False, None)
    assert m.n == 1


def test_rank_of_back_of_s1():
    m = SeqWorkingSetMap()
    ks = _fill(m, list("abcdef"))
    assert m.rank_of(ks["f"]) == 6  # |S0| + |S1|


def test_oracle_equivalence_random():
    for seed in (1, 2, 3):
        ops = random_ops(2000, 48, seed)
        expected = oracle_replay(ops)
        m = SeqWorkingSetMap()
        for op, exp in zip(ops, expected):
            if op.kind == SEARCH:
                got = m.search(op.key)
            elif op.kind == INSERT:
                got = m.insert(op.key, op.payload)
            elif op.kind == UPDATE:
                got = m.update(op.key, op.payload)
            else:
                got = m.delete(op.key)
            assert got == (exp.found, exp.value)
        m.audit()


def test_promotion_bound_every_access():
    # after every hit: new rank <= 2 * sqrt(old rank)
    rnd = random.Random(17)
    ctr = CmpCounter()
    ks = {v: Key(v, ctr) for v in range(400)}
    m = SeqWorkingSetMap()
    for v in range(400):
        m.insert(ks[v], v)
    for _ in range(2500):
        v = rnd.randrange(400)
        q = m.rank_of(ks[v])
        found, _ = m.search(ks[v])
        assert found
        q2 = m.rank_of(ks[v])
        assert q2 <= 2 * math.sqrt(q), f"rank {q} promoted only to {q2}"
    m.audit()


def test_found_segment_implies_deep_rank():
    # finding x in S[k], k > 0 implies its pre-rank exceeded 2^(2^(k-1))
    rnd = random.Random(23)
    ctr = CmpCounter()
    ks = {v: Key(v, ctr) for v in range(300)}
    m = SeqWorkingSetMap()
    for v in range(300):
        m.insert(ks[v], v)
    for _ in range(1500):
        v = rnd.randrange(300)
        q = m.rank_of(ks[v])
        before = [seg.size for seg in m.segments]
        k = next(i for i, seg in enumerate(m.segments)
                 if seg.keys.search(ks[v]) is not None)
        m.search(ks[v])
        if k > 0:
            assert q > 2 ** (2 ** (k - 1)), (q, k, before)


def test_instrumented_cost_tracks_working_set_bound():
    ctr = CmpCounter()
    ops = random_ops(4000, 64, 77, ctr=ctr)
    m = SeqWorkingSetMap()
    c0 = ctr.count
    for op in ops:
        if op.kind == SEARCH:
            m.search(op.key)
        elif op.kind == INSERT:
            m.insert(op.key, op.payload)
        elif op.kind == UPDATE:
            m.update(op.key, op.payload)
        else:
            m.delete(op.key)
    steps = m.steps + (ctr.count - c0)
    w = working_set_bound(ops).w_l
    assert steps <= 25 * w, f"steps {steps} vs W_L {w}"


def test_miss_cost_logarithmic():
    ctr = CmpCounter()
    m = SeqWorkingSetMap()
    for v in range(22):
        m.insert(Key(v, ctr), v)
    before_steps, before_cmp = m.steps, ctr.count
    found, _ = m.search(Key(10 ** 9, ctr))
    assert not found
    cost = (m.steps - before_steps) + (ctr.count - before_cmp)
    assert cost <= 40 * (math.log2(23) + 1)
