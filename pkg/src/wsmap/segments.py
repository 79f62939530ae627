"""Paired key-map/recency-map segments for the batched maps.

Each segment holds its items twice: in a key-ordered 2-3 tree and in a
recency-ordered 2-3 tree (front = most recent), with cross-handles between
the paired leaves. Batch finds go through the key tree; recency-edge blocks
move between segments through reverse-indexing, exactly so every composite
stays within batched-tree work/span.
"""

from __future__ import annotations

from .runtime import merge_sort_task
from .seqmap import segment_capacity
from .tree23 import (
    Tree23, batch_delete_keys_task, batch_delete_pos_task, batch_insert_task,
    batch_search_task, pop_extreme_task, push_edge_task, reverse_index_task,
)


class PairedSegment:
    __slots__ = ("index", "cap", "keys", "rec")

    def __init__(self, index, meter):
        self.index = index
        self.cap = segment_capacity(index)
        self.keys = Tree23(meter)
        self.rec = Tree23(meter)

    @property
    def size(self):
        return len(self.keys)

    def items_by_recency(self):
        return [(lf.key, lf.val) for lf in self.rec.leaves()]

    def audit(self):
        assert len(self.keys) == len(self.rec)
        self.keys.audit(sorted_keys=True)
        self.rec.audit()
        for lf in self.keys.leaves():
            assert lf.twin is not None and lf.twin.twin is lf
            assert lf.twin.key.value == lf.key.value


def preload_segment(seg, pairs):
    """Directly construct a segment's contents (most recent first); bench
    warm-start that skips simulating the insert traffic."""
    rec_tree, rec_leaves = Tree23.build(pairs, seg.rec.meter)
    seg.rec.adopt(rec_tree)
    by_key = sorted(pairs, key=lambda kv: kv[0].value)
    key_tree, key_leaves = Tree23.build(by_key, seg.keys.meter)
    seg.keys.adopt(key_tree)
    twin = {kv[0].value: rl for kv, rl in zip(pairs, rec_leaves)}
    for kl in key_leaves:
        rl = twin[kl.key.value]
        kl.twin = rl
        rl.twin = kl


def seg_find_task(seg, keys):
    """Key-tree lookup only; no mutation. Returns leaves aligned with keys."""
    leaves = yield from batch_search_task(seg.keys, keys)
    return leaves


def seg_remove_found_task(seg, key_leaves):
    """Remove the given (live, key-tree) leaves from both trees."""
    if not key_leaves:
        yield 1
        return
    located = yield from reverse_index_task(seg.rec,
                                            [lf.twin for lf in key_leaves])
    positions = [pos for pos, _lf in located]
    yield from batch_delete_pos_task(seg.rec, positions)
    yield from batch_delete_keys_task(seg.keys, [lf.key for lf in key_leaves])


def seg_insert_block_task(seg, pairs, end):
    """Insert new items with the block's order as their recency order at the
    chosen end; pairs need not be key-sorted."""
    if not pairs:
        yield 1
        return
    rec_leaves = yield from push_edge_task(seg.rec, pairs, end)
    by_key = yield from merge_sort_task(pairs, key=lambda kv: kv[0])
    key_leaves = yield from batch_insert_task(seg.keys, by_key)
    twin = {id(kv[0]): rl for kv, rl in zip(pairs, rec_leaves)}
    for kl in key_leaves:
        rl = twin[id(kl.key)]
        kl.twin = rl
        rl.twin = kl


def seg_pop_block_task(seg, count, end):
    """Remove the count most/least recent items; returns (key, val) pairs in
    recency order (front to back)."""
    if count == 0:
        yield 1
        return []
    rec_leaves = yield from pop_extreme_task(seg.rec, count, end)
    pairs = [(lf.key, lf.val) for lf in rec_leaves]
    by_key = yield from merge_sort_task(pairs, key=lambda kv: kv[0])
    yield from batch_delete_keys_task(seg.keys, [kv[0] for kv in by_key])
    return pairs


def seg_move_block_task(src, dst, count, src_end, dst_end):
    pairs = yield from seg_pop_block_task(src, count, src_end)
    yield from seg_insert_block_task(dst, pairs, dst_end)
    return pairs


def restore_prefix_task(segments, k):
    """Re-establish the exact-prefix capacity rule after processing segment
    k: walking boundaries outward-in, move items between the back of S[i-1]
    and the front of S[i] until S[0..i-1] is exactly full or S[i] is empty."""
    for i in range(min(k, len(segments) - 1), 0, -1):
        target = sum(segments[j].cap for j in range(i))
        cur = sum(segments[j].size for j in range(i))
        if cur > target:
            yield from seg_move_block_task(segments[i - 1], segments[i],
                                           cur - target, "back", "front")
        elif cur < target:
            pull = min(target - cur, segments[i].size)
            if pull:
                yield from seg_move_block_task(segments[i], segments[i - 1],
                                               pull, "front", "back")
    yield 1
