"""Keys, operations, linearizations and working-set accounting.

Everything here is value-level and single-threaded: the counting comparator,
the rank/bound computations of the cost model, and the sequential reference
map used as ground truth for semantic equivalence.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

SEARCH = "search"
INSERT = "insert"
DELETE = "delete"
UPDATE = "update"

KINDS = (SEARCH, INSERT, DELETE, UPDATE)

LOG_BASE = 2.0


class CmpCounter:
    """Shared comparison counter; one increment per invoked comparison."""

    __slots__ = ("count",)

    def __init__(self):
        self.count = 0


class Key:
    """Totally ordered opaque key; every comparison is counted."""

    __slots__ = ("value", "ctr")

    def __init__(self, value, ctr=None):
        self.value = value
        self.ctr = ctr if ctr is not None else _default_ctr

    def __lt__(self, other):
        self.ctr.count += 1
        return self.value < other.value

    def __le__(self, other):
        self.ctr.count += 1
        return self.value <= other.value

    def __gt__(self, other):
        self.ctr.count += 1
        return self.value > other.value

    def __ge__(self, other):
        self.ctr.count += 1
        return self.value >= other.value

    def __eq__(self, other):
        if not isinstance(other, Key):
            return NotImplemented
        self.ctr.count += 1
        return self.value == other.value

    def __ne__(self, other):
        if not isinstance(other, Key):
            return NotImplemented
        self.ctr.count += 1
        return self.value != other.value

    def __hash__(self):
        return hash(self.value)

    def __repr__(self):
        return f"Key({self.value!r})"


_default_ctr = CmpCounter()


@dataclass
class Operation:
    op_id: int
    kind: str
    key: Key
    payload: object = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown op kind {self.kind!r}")


@dataclass(frozen=True)
class OpResult:
    """What an operation observed: presence and prior value at its key."""

    found: bool
    value: object = None

    @property
    def tuple(self):
        return (self.found, self.value)


def op_success(kind, found):
    """Insertions always succeed; the rest succeed iff the key was present."""
    return True if kind == INSERT else found


@dataclass
class BoundReport:
    w_l: float
    iw_l: float
    e_l: int
    n_ops: int
    log_base: float = LOG_BASE

    def to_json(self):
        return json.dumps({"W_L": self.w_l, "IW_L": self.iw_l, "e_L": self.e_l,
                           "N": self.n_ops, "log_base": self.log_base})

    @staticmethod
    def from_json(text):
        d = json.loads(text)
        return BoundReport(d["W_L"], d["IW_L"], d["e_L"], d["N"], d["log_base"])


@dataclass
class Linearization:
    """An operation order plus the per-op annotations of the cost model."""

    ops: list
    ranks: list = field(default_factory=list)
    sizes: list = field(default_factory=list)      # map size just before each op
    results: list = field(default_factory=list)

    def annotate(self):
        self.ranks = access_ranks(self.ops)
        self.results, self.sizes = oracle_replay(self.ops, with_sizes=True)
        return self

    def to_text(self):
        lines = []
        for op in self.ops:
            parts = [str(op.op_id), op.kind, str(op.key.value)]
            if op.payload is not None:
                parts.append(str(op.payload))
            lines.append(" ".join(parts))
        return "\n".join(lines) + ("\n" if lines else "")

    @staticmethod
    def from_text(text, ctr=None):
        ops = []
        for line in text.splitlines():
            if not line.strip():
                continue
            parts = line.split()
            payload = int(parts[3]) if len(parts) > 3 else None
            ops.append(Operation(int(parts[0]), parts[1],
                                 Key(int(parts[2]), ctr), payload))
        return Linearization(ops)


class _Fenwick:
    __slots__ = ("n", "tree")

    def __init__(self, n):
        self.n = n
        self.tree = [0] * (n + 1)

    def add(self, i, delta):
        while i <= self.n:
            self.tree[i] += delta
            i += i & (-i)

    def prefix(self, i):
        s = 0
        while i > 0:
            s += self.tree[i]
            i -= i & (-i)
        return s


def effective_kinds(ops):
    """Resolve each op against presence: an insert on a present key acts as
    an update, an update on an absent key as an unsuccessful search."""
    present = set()
    out = []
    for op in ops:
        k = op.key.value
        found = k in present
        if op.kind == INSERT:
            out.append((UPDATE, True) if found else (INSERT, False))
            present.add(k)
        elif op.kind == DELETE:
            present.discard(k)
            out.append((DELETE, found))
        elif op.kind == UPDATE:
            out.append((UPDATE, found))
        else:
            out.append((SEARCH, found))
    return out


def access_ranks(ops):
    """Access rank of every operation when ops run on an empty map.

    A successful search/update counts the distinct members accessed since
    the last operation naming the same key (that key included); inserts,
    deletes and misses rank n+1. A deletion (or any other op naming x)
    resets x's recency window.
    """
    n = len(ops)
    fen = _Fenwick(n)
    last_access = {}   # member key -> 1-based op index of last access mark
    last_op = {}
    present = set()
    ranks = []
    for i, op in enumerate(ops):
        idx = i + 1
        k = op.key.value
        found = k in present
        size = len(present)
        if op.kind in (SEARCH, UPDATE) and found:
            since = last_op.get(k, 0)
            rank = 1 + (fen.prefix(n) - fen.prefix(since))
            # x's own point is at last_access[x] <= last_op[x], never counted
            ranks.append(rank)
            fen.add(last_access[k], -1)
            fen.add(idx, 1)
            last_access[k] = idx
        elif op.kind == INSERT and found:
            since = last_op.get(k, 0)
            ranks.append(1 + (fen.prefix(n) - fen.prefix(since)))
            fen.add(last_access[k], -1)
            fen.add(idx, 1)
            last_access[k] = idx
        elif op.kind == INSERT:
            ranks.append(size + 1)
            present.add(k)
            fen.add(idx, 1)
            last_access[k] = idx
        elif op.kind == DELETE and found:
            ranks.append(size + 1)
            present.discard(k)
            fen.add(last_access[k], -1)
            del last_access[k]
        else:
            ranks.append(size + 1)
        last_op[k] = idx
    return ranks


def access_rank(ops, index):
    """Rank of the op at index within the prefix ops[:index+1]."""
    if not 0 <= index < len(ops):
        raise IndexError(f"op index {index} out of range")
    return access_ranks(ops[:index + 1])[index]


def working_set_bound(ops, p=None):
    """W_L = sum(log2(r_i) + 1); e_L counts ops run while the map has fewer
    than p members (0 when p is None)."""
    ranks = access_ranks(ops)
    w = 0.0
    for r in ranks:
        w += math.log2(r) + 1.0
    e = 0
    if p is not None:
        present = set()
        for op in ops:
            if len(present) < p:
                e += 1
            k = op.key.value
            if op.kind == INSERT:
                present.add(k)
            elif op.kind == DELETE:
                present.discard(k)
    iw = insert_working_set_bound(ops)
    return BoundReport(w, iw, e, len(ops))


def insert_working_set_bound(ops_or_keys):
    """W of searching then inserting-iff-absent each item, in order, into an
    initially empty map."""
    derived = []
    seen = set()
    nid = 0
    for item in ops_or_keys:
        key = item.key if isinstance(item, Operation) else item
        derived.append(Operation(nid, SEARCH, key))
        nid += 1
        if key.value not in seen:
            derived.append(Operation(nid, INSERT, key))
            nid += 1
            seen.add(key.value)
    ranks = access_ranks(derived)
    return sum(math.log2(r) + 1.0 for r in ranks)


def oracle_replay(ops, with_sizes=False):
    """Run ops on the reference sequential map; ground truth for equivalence.

    Returns one OpResult per op: presence at the key and the value stored
    there just before the op took effect.
    """
    store = {}
    results = []
    sizes = []
    for op in ops:
        k = op.key.value
        sizes.append(len(store))
        found = k in store
        prior = store.get(k)
        if op.kind == SEARCH:
            results.append(OpResult(found, prior))
        elif op.kind == INSERT:
            results.append(OpResult(found, prior))
            store[k] = op.payload
        elif op.kind == UPDATE:
            results.append(OpResult(found, prior))
            if found:
                store[k] = op.payload
        else:
            results.append(OpResult(found, prior))
            if found:
                del store[k]
    if with_sizes:
        return results, sizes
    return results


class ListMap:
    """Independently coded second map (sorted association list) used to
    cross-check the dict-based oracle."""

    def __init__(self):
        self.items = []

    def _locate(self, k):
        lo, hi = 0, len(self.items)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.items[mid][0] < k:
                lo = mid + 1
            else:
                hi = mid
        return lo

    def apply(self, op):
        k = op.key.value
        i = self._locate(k)
        hit = i < len(self.items) and self.items[i][0] == k
        prior = self.items[i][1] if hit else None
        if op.kind == INSERT:
            if hit:
                self.items[i] = (k, op.payload)
            else:
                self.items.insert(i, (k, op.payload))
        elif op.kind == UPDATE and hit:
            self.items[i] = (k, op.payload)
        elif op.kind == DELETE and hit:
            del self.items[i]
        return OpResult(hit, prior)


def validate_batch_preserving(batches, lin):
    """True iff lin keeps batch order and, within each batch, the relative
    order of operations on the same item."""
    expected = [op.op_id for batch in batches for op in batch]
    got = [op.op_id for op in lin.ops] if isinstance(lin, Linearization) else \
        [op.op_id for op in lin]
    if len(set(expected)) != len(expected):
        raise ValueError("duplicate op_id across batches")
    if sorted(expected) != sorted(got):
        raise ValueError("linearization is not a permutation of the batches")
    pos = {oid: i for i, oid in enumerate(got)}
    hi = -1
    for batch in batches:
        if not batch:
            continue
        lo = min(pos[op.op_id] for op in batch)
        if lo <= hi:
            return False
        hi = max(pos[op.op_id] for op in batch)
        per_key = {}
        for op in batch:
            per_key.setdefault(op.key.value, []).append(pos[op.op_id])
        for positions in per_key.values():
            if positions != sorted(positions):
                return False
    return True
