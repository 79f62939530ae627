"""Leaf-based 2-3 trees with stable leaf handles, split/join primitives, and
batched operations that execute as fork/join task DAGs.

One tree class serves both roles the maps need: key-sorted dictionaries
(route by max-key) and recency sequences (route by position). Leaves survive
every restructuring, so a handle obtained from a batch stays valid until its
item is deleted; cross-handles between a key tree and its paired recency
tree live in ``Leaf.twin``.

Structural work is charged to a shared StepMeter (one count per node touch);
batch tasks convert meter deltas into simulator cost, so measured work/span
reflect what the split/apply/rejoin recursion actually touched.
"""

from __future__ import annotations

from .runtime import Par, par_map, concat_tree, merge_sort_task


class TreeUsageError(RuntimeError):
    pass


class StepMeter:
    __slots__ = ("count",)

    def __init__(self):
        self.count = 0


class Leaf:
    __slots__ = ("key", "val", "parent", "alive", "twin")

    def __init__(self, key, val=None):
        self.key = key
        self.val = val
        self.parent = None
        self.alive = True
        self.twin = None

    def __repr__(self):
        return f"Leaf({self.key!r})"


class Inner:
    __slots__ = ("kids", "parent", "size", "hi")

    def __init__(self, kids):
        self.kids = kids
        self.parent = None
        self.size = 0
        self.hi = None
        for kid in kids:
            kid.parent = self


def _size(node):
    return 1 if type(node) is Leaf else node.size


def _hi(node):
    return node.key if type(node) is Leaf else node.hi


class Tree23:
    """A 2-3 tree over leaves; empty tree has root None and height -1."""

    __slots__ = ("root", "height", "meter")

    def __init__(self, meter=None):
        self.root = None
        self.height = -1
        self.meter = meter if meter is not None else StepMeter()

    # -- basics ---------------------------------------------------------------

    def __len__(self):
        return 0 if self.root is None else _size(self.root)

    def leaves(self):
        if self.root is None:
            return
        stack = [self.root]
        while stack:
            node = stack.pop()
            if type(node) is Leaf:
                yield node
            else:
                stack.extend(reversed(node.kids))

    def items(self):
        return [(lf.key, lf.val) for lf in self.leaves()]

    def _refresh(self, node):
        self.meter.count += 1
        node.size = sum(_size(k) for k in node.kids)
        node.hi = _hi(node.kids[-1])

    def _refresh_up(self, node):
        while node is not None:
            self._refresh(node)
            node = node.parent

    def adopt(self, other):
        """Take over another tree's contents (used after split/rejoin)."""
        self.root = other.root
        self.height = other.height
        other.root = None
        other.height = -1
        return self

    # -- sequential key operations ---------------------------------------------

    def search(self, key):
        node = self.root
        if node is None:
            return None
        while type(node) is Inner:
            self.meter.count += 1
            for kid in node.kids[:-1]:
                if not _hi(kid) < key:
                    node = kid
                    break
            else:
                node = node.kids[-1]
        self.meter.count += 1
        return node if node.key == key else None

    def insert(self, key, val=None):
        """Insert an absent key; returns the new leaf."""
        leaf = Leaf(key, val)
        self.meter.count += 1
        if self.root is None:
            self.root = leaf
            self.height = 0
            return leaf
        if type(self.root) is Leaf:
            old = self.root
            kids = [leaf, old] if key < old.key else [old, leaf]
            self.root = Inner(kids)
            self._refresh(self.root)
            self.height = 1
            return leaf
        node = self.root
        while type(node.kids[0]) is Inner:
            self.meter.count += 1
            for kid in node.kids[:-1]:
                if not _hi(kid) < key:
                    node = kid
                    break
            else:
                node = node.kids[-1]
        pos = len(node.kids)
        for i, kid in enumerate(node.kids):
            if key < kid.key:
                pos = i
                break
        node.kids.insert(pos, leaf)
        leaf.parent = node
        self._split_up(node)
        return leaf

    def _split_up(self, node, lazy=False):
        while len(node.kids) > 3:
            self.meter.count += 1
            right = Inner(node.kids[2:])
            node.kids = node.kids[:2]
            self._refresh(node)
            self._refresh(right)
            parent = node.parent
            if parent is None:
                root = Inner([node, right])
                self._refresh(root)
                self.root = root
                self.height += 1
                return
            parent.kids.insert(parent.kids.index(node) + 1, right)
            right.parent = parent
            node = parent
        if not lazy:
            self._refresh_up(node)

    def _respine(self):
        """Recompute size/hi along both side spines bottom-up; this is where
        lazy joins left stale counters."""
        for side in (0, -1):
            path = []
            node = self.root
            while type(node) is Inner:
                path.append(node)
                node = node.kids[side]
            for n in reversed(path):
                self._refresh(n)

    def delete_leaf(self, leaf):
        """Unlink a leaf and rebalance; marks the handle dead."""
        if not leaf.alive:
            raise TreeUsageError("delete of a dead handle")
        leaf.alive = False
        self.meter.count += 1
        parent = leaf.parent
        if parent is None:
            self.root = None
            self.height = -1
            return
        parent.kids.remove(leaf)
        leaf.parent = None
        self._fix_underflow(parent)

    def _fix_underflow(self, node):
        while len(node.kids) < 2:
            self.meter.count += 1
            parent = node.parent
            if parent is None:
                # root with a single child collapses
                if len(node.kids) == 1:
                    self.root = node.kids[0]
                    self.root.parent = None
                    self.height -= 1
                    if type(self.root) is Inner:
                        self._refresh(self.root)
                else:
                    self.root = None
                    self.height = -1
                return
            idx = parent.kids.index(node)
            sib_idx = idx - 1 if idx > 0 else idx + 1
            sib = parent.kids[sib_idx]
            if len(sib.kids) == 3:
                if sib_idx < idx:
                    moved = sib.kids.pop()
                    node.kids.insert(0, moved)
                else:
                    moved = sib.kids.pop(0)
                    node.kids.append(moved)
                moved.parent = node
                self._refresh(sib)
                self._refresh(node)
                self._refresh_up(parent)
                return
            # merge with the 2-kid sibling
            if sib_idx < idx:
                sib.kids.extend(node.kids)
            else:
                sib.kids[0:0] = node.kids
            for kid in node.kids:
                kid.parent = sib
            node.kids = []
            parent.kids.remove(node)
            self._refresh(sib)
            node = parent
        self._refresh_up(node)

    def delete_key(self, key):
        leaf = self.search(key)
        if leaf is None:
            return None
        self.delete_leaf(leaf)
        return leaf

    # -- positional operations ---------------------------------------------------

    def leaf_at(self, pos):
        if not 0 <= pos < len(self):
            raise TreeUsageError(f"position {pos} out of range")
        node = self.root
        while type(node) is Inner:
            self.meter.count += 1
            for kid in node.kids:
                s = _size(kid)
                if pos < s:
                    node = kid
                    break
                pos -= s
        return node

    def index_of(self, leaf):
        if not leaf.alive:
            raise TreeUsageError("index_of a dead handle")
        pos = 0
        node = leaf
        while node.parent is not None:
            self.meter.count += 1
            parent = node.parent
            for kid in parent.kids:
                if kid is node:
                    break
                pos += _size(kid)
            node = parent
        return pos

    # -- split / join -------------------------------------------------------------

    def _detach(self, node, height):
        node.parent = None
        t = Tree23(self.meter)
        t.root = node
        t.height = height
        return t

    def join(self, other, lazy=False):
        """Append other (to the right); both inputs are consumed. A lazy
        join skips the root-path refresh; callers must _respine afterwards."""
        self.meter.count += 1
        if other.root is None:
            return self
        if self.root is None:
            self.root, self.height = other.root, other.height
            other.root, other.height = None, -1
            return self
        ra, ha = self.root, self.height
        rb, hb = other.root, other.height
        other.root, other.height = None, -1
        if ha == hb:
            root = Inner([ra, rb])
            self._refresh(root)
            self.root = root
            self.height = ha + 1
            return self
        if ha > hb:
            node = ra
            for _ in range(ha - hb - 1):
                self.meter.count += 1
                node = node.kids[-1]
            node.kids.append(rb)
            rb.parent = node
            self.root, self.height = ra, ha
            self._split_up(node, lazy)
        else:
            node = rb
            for _ in range(hb - ha - 1):
                self.meter.count += 1
                node = node.kids[0]
            node.kids.insert(0, ra)
            ra.parent = node
            self.root, self.height = rb, hb
            self._split_up(node, lazy)
        return self

    def _split(self, route):
        """Generic split; route(node) returns the kid index where the cut
        descends (kids before it go left, after it go right)."""
        if self.root is None:
            return Tree23(self.meter), Tree23(self.meter)
        left_pieces = []
        right_groups = []   # per-level, outermost first
        node = self.root
        h = self.height
        self.root = None
        self.height = -1
        while type(node) is Inner:
            self.meter.count += 1
            idx = route(node)
            for kid in node.kids[:idx]:
                left_pieces.append(self._detach(kid, h - 1))
            group = [self._detach(kid, h - 1) for kid in node.kids[idx + 1:]]
            if group:
                right_groups.append(group)
            nxt = node.kids[idx]
            node.kids = []
            node = nxt
            h -= 1
        boundary = self._detach(node, 0)
        left = Tree23(self.meter)
        for piece in left_pieces:
            left.join(piece, lazy=True)
        left._respine()
        right = Tree23(self.meter)
        for group in reversed(right_groups):
            # deepest pieces sit closest to the cut, so folding groups
            # inner-to-outer appends strictly increasing key ranges
            for piece in group:
                right.join(piece, lazy=True)
        right._respine()
        return left, right, boundary

    def split_lt(self, key):
        """Split into (keys < key, keys >= key)."""
        if self.root is None:
            return Tree23(self.meter), Tree23(self.meter)

        def route(node):
            for i, kid in enumerate(node.kids[:-1]):
                if not _hi(kid) < key:
                    return i
            return len(node.kids) - 1

        left, right, boundary = self._split(route)
        if boundary.root.key < key:
            left.join(boundary)
        else:
            boundary.join(right)
            right.adopt(boundary)
        return left, right

    def split_pos(self, count):
        """Split into (first count leaves, rest)."""
        n = len(self)
        if count <= 0:
            rest = Tree23(self.meter).adopt(self)
            return Tree23(self.meter), rest
        if count >= n:
            taken = Tree23(self.meter).adopt(self)
            return taken, Tree23(self.meter)
        state = {"skip": count}

        def route(node):
            skip = state["skip"]
            for i, kid in enumerate(node.kids):
                s = _size(kid)
                if skip < s:
                    state["skip"] = skip
                    return i
                skip -= s
            state["skip"] = skip
            return len(node.kids) - 1

        left, right, boundary = self._split(route)
        if state["skip"] > 0:
            left.join(boundary)
        else:
            boundary.join(right)
            right.adopt(boundary)
        return left, right

    # -- bulk construction ---------------------------------------------------------

    @staticmethod
    def build(pairs, meter=None):
        """Build a tree over the given (key, val) pairs in order, O(n)."""
        t = Tree23(meter)
        leaves = []
        for k, v in pairs:
            leaf = Leaf(k, v)
            leaves.append(leaf)
        t.meter.count += max(1, len(leaves))
        if not leaves:
            return t, []
        level = leaves
        height = 0
        while len(level) > 1:
            nxt = []
            i = 0
            n = len(level)
            while i < n:
                take = 2
                # avoid leaving a lone child at the end
                if n - i == 3 or n - i == 1:
                    take = 3 if n - i == 3 else take
                if n - i == 1:
                    # fold the straggler into the previous group
                    prev = nxt.pop()
                    kids = prev.kids + [level[i]]
                    if len(kids) > 3:
                        a, b = Inner(kids[:2]), Inner(kids[2:])
                        t._refresh(a)
                        t._refresh(b)
                        nxt.extend([a, b])
                    else:
                        merged = Inner(kids)
                        t._refresh(merged)
                        nxt.append(merged)
                    i += 1
                    continue
                node = Inner(level[i:i + take])
                t._refresh(node)
                nxt.append(node)
                i += take
            level = nxt
            height += 1
        t.root = level[0]
        t.height = height
        return t, leaves

    # -- debug / audits (test instrumentation; not metered) ----------------------------

    def dump(self):
        """Nested-list shape of the tree, leaves as their keys."""
        def walk(node):
            if type(node) is Leaf:
                return node.key
            return [walk(kid) for kid in node.kids]
        return None if self.root is None else walk(self.root)

    def audit(self, sorted_keys=False):
        if self.root is None:
            assert self.height == -1
            return
        depths = set()

        def walk(node, depth):
            if type(node) is Leaf:
                depths.add(depth)
                return 1, node.key
            assert 2 <= len(node.kids) <= 3, f"arity {len(node.kids)}"
            size = 0
            hi = None
            for kid in node.kids:
                assert kid.parent is node
                s, h = walk(kid, depth + 1)
                size += s
                hi = h
            assert node.size == size, "stale size"
            assert node.hi == hi, "stale hi"
            return size, hi

        walk(self.root, 0)
        assert self.root.parent is None
        assert depths == {self.height}, f"leaf depths {depths} != {self.height}"
        if sorted_keys:
            keys = [lf.key for lf in self.leaves()]
            assert all(keys[i] < keys[i + 1] for i in range(len(keys) - 1)), \
                "keys not strictly increasing"


# -- batched task operations ----------------------------------------------------------


def _charge(meter, start):
    return max(1, meter.count - start)


def _check_sorted_distinct(keys):
    for a, b in zip(keys, keys[1:]):
        if not a < b:
            raise TreeUsageError("batch keys must be sorted and distinct")


def batch_op_task(tree, ops):
    """Apply an item-sorted batch of (kind, key, val) triples with kinds in
    {'search','insert','delete'}; returns one result per op in batch order:
    the live leaf handle for search/insert hits and inserts, the dead handle
    for deletes that removed something, None for misses.

    Runs as a split/apply/rejoin task DAG: Theta(b log n)-style work, with the
    split recursion depth O(log b).
    """
    if not ops:
        yield 1
        return []
    _check_sorted_distinct([op[1] for op in ops])
    piece = Tree23(tree.meter).adopt(tree)
    results = yield from _batch_rec(piece, ops)
    tree.adopt(piece)
    return results


def _apply_one(t, op):
    kind, key, val = op
    if kind == "search":
        return t.search(key)
    if kind == "insert":
        leaf = t.search(key)
        if leaf is not None:
            leaf.val = val
            return leaf
        return t.insert(key, val)
    if kind == "delete":
        return t.delete_key(key)
    raise TreeUsageError(f"unknown batch op kind {kind!r}")


def _batch_rec(t, ops):
    meter = t.meter
    if len(ops) == 1:
        start = meter.count
        res = _apply_one(t, ops[0])
        yield _charge(meter, start)
        return [res]
    mid = len(ops) // 2
    start = meter.count
    left_t, right_t = t.split_lt(ops[mid][1])
    yield _charge(meter, start)
    lres, rres = yield Par(_batch_rec(left_t, ops[:mid]),
                           _batch_rec(right_t, ops[mid:]))
    start = meter.count
    left_t.join(right_t)
    t.adopt(left_t)
    yield _charge(meter, start)
    return lres + rres


def batch_search_task(tree, keys):
    ops = [("search", k, None) for k in keys]
    return (yield from batch_op_task(tree, ops))


def batch_insert_task(tree, pairs):
    ops = [("insert", k, v) for k, v in pairs]
    return (yield from batch_op_task(tree, ops))


def batch_delete_keys_task(tree, keys):
    ops = [("delete", k, None) for k in keys]
    return (yield from batch_op_task(tree, ops))


def reverse_index_task(tree, handles, by="pos"):
    """From live leaf handles to the item-sorted batch (leaf, position) list;
    the tree is not modified."""
    for h in handles:
        if not h.alive:
            raise TreeUsageError("reverse_index of a dead handle")
    meter = tree.meter

    def locate(leaf):
        start = meter.count
        pos = tree.index_of(leaf)
        yield _charge(meter, start)
        return (pos, leaf)

    located = yield from par_map(list(handles), locate)
    if by == "key":
        ordered = yield from merge_sort_task(located, key=lambda pl: pl[1].key)
    else:
        ordered = yield from merge_sort_task(located, key=lambda pl: pl[0])
    return ordered


def batch_delete_pos_task(tree, positions):
    """Delete the leaves at the given sorted positions; returns them in
    tree order."""
    if not positions:
        yield 1
        return []
    for a, b in zip(positions, positions[1:]):
        if not a < b:
            raise TreeUsageError("positions must be sorted and distinct")
    piece = Tree23(tree.meter).adopt(tree)
    removed = yield from _del_pos_rec(piece, list(positions))
    tree.adopt(piece)
    return removed


def _del_pos_rec(t, positions):
    meter = t.meter
    if len(positions) == 1:
        start = meter.count
        leaf = t.leaf_at(positions[0])
        t.delete_leaf(leaf)
        yield _charge(meter, start)
        return [leaf]
    mid = len(positions) // 2
    cut = positions[mid]
    start = meter.count
    left_t, right_t = t.split_pos(cut)
    yield _charge(meter, start)
    right_pos = [p - cut for p in positions[mid:]]
    lres, rres = yield Par(_del_pos_rec(left_t, positions[:mid]),
                           _del_pos_rec(right_t, right_pos))
    start = meter.count
    left_t.join(right_t)
    t.adopt(left_t)
    yield _charge(meter, start)
    return lres + rres


def push_edge_task(tree, pairs, end):
    """Attach a block of new leaves at the front or back, preserving the
    block's order; returns the new leaves."""
    meter = tree.meter
    start = meter.count
    block, leaves = Tree23.build(pairs, meter)
    if end == "front":
        block.join(Tree23(meter).adopt(tree))
        tree.adopt(block)
    else:
        rest = Tree23(meter).adopt(tree)
        rest.join(block)
        tree.adopt(rest)
    yield _charge(meter, start)
    return leaves


def pop_extreme_task(tree, count, end, sort_by_key=False):
    """Remove the count front/back leaves (by tree order); returned in tree
    order, optionally re-sorted by key."""
    if count > len(tree):
        raise TreeUsageError("pop_extreme count exceeds size")
    meter = tree.meter
    start = meter.count
    if count == 0:
        yield 1
        return []
    if end == "front":
        taken, rest = Tree23(meter).adopt(tree).split_pos(count)
    else:
        whole = Tree23(meter).adopt(tree)
        taken_at = len(whole) - count
        rest, taken = whole.split_pos(taken_at)
    tree.adopt(rest)
    leaves = list(taken.leaves())
    for lf in leaves:
        lf.alive = False
        lf.parent = None
    yield _charge(meter, start)
    if sort_by_key:
        leaves = yield from merge_sort_task(leaves, key=lambda lf: lf.key)
    return leaves


class Bunch:
    """O(1)-append container of batches, convertible to one batch with a
    balanced concatenation tree (O(log total) span)."""

    __slots__ = ("batches", "size")

    def __init__(self):
        self.batches = []
        self.size = 0

    def add(self, batch):
        self.batches.append(batch)
        self.size += len(batch)

    def to_batch_task(self):
        out = yield from concat_tree(self.batches)
        return out
