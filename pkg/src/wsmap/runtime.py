"""Deterministic step-synchronous fork/join task simulator.

Every advance of a task generator costs exactly one unit-time node; the
scheduler executes a bounded number of ready nodes per step (greedy or
weak-priority with two queues) with ties broken by node id, so identical
inputs always produce identical traces and metrics.

A task yields one of:

* an ``int`` c >= 1 -- this code segment costs c unit nodes (c-1 stall ticks),
* ``Par(a, b)``     -- binary fork; resumes with the pair of branch results
  through a join node that has both branch-final nodes as parents,
* ``Call(g, ...)``  -- run g as a single child task (possibly with a
  different owner/queue) and resume with its result,
* ``Detach(g, ...)``-- fire-and-forget child task,
* ``Acquire(lock, key)`` -- blocking acquire of a dedicated lock,
* ``Park(fn)``      -- suspend this task; ``fn(handle)`` stores the handle
  somewhere; another node later calls ``rt.resume(handle, value)``.

Plain Python executed between yields runs atomically within one node, which
is the serialization granularity of the whole model (simultaneous memory
operations are ordered by node id).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

Q1 = 1
Q2 = 2

PROGRAM = "program"
BUFFER = "buffer"
DS = "ds"
DS_FINAL = "ds_final"

_PATH_SLOT = {PROGRAM: 0, BUFFER: 1, DS: 2, DS_FINAL: 2}


class SimDeadlock(RuntimeError):
    """No ready nodes remain but suspended work exists."""

    def __init__(self, msg, blocked=()):
        super().__init__(msg)
        self.blocked = list(blocked)


class LockUsageError(RuntimeError):
    pass


class Sub:
    """Child-task spec; owner/queue default to the parent's."""

    __slots__ = ("gen", "owner", "queue")

    def __init__(self, gen, owner=None, queue=None):
        self.gen = gen
        self.owner = owner
        self.queue = queue


class Call(Sub):
    __slots__ = ()


class Detach(Sub):
    __slots__ = ()


class Par:
    __slots__ = ("left", "right")

    def __init__(self, left, right):
        self.left = left if isinstance(left, Sub) else Sub(left)
        self.right = right if isinstance(right, Sub) else Sub(right)


class Acquire:
    __slots__ = ("lock", "key")

    def __init__(self, lock, key):
        self.lock = lock
        self.key = key


class Park:
    __slots__ = ("register",)

    def __init__(self, register):
        self.register = register


class _Join:
    __slots__ = ("task", "need", "single", "results", "paths")

    def __init__(self, task, single=False):
        self.task = task
        self.single = single
        self.need = 1 if single else 2
        self.results = [None, None]
        self.paths = [None, None]


class _Task:
    __slots__ = ("gen", "owner", "queue", "join", "ticks")

    def __init__(self, gen, owner, queue):
        self.gen = gen
        self.owner = owner
        self.queue = queue
        self.join = None   # (_Join, branch index) set when a Par/Call waits on us
        self.ticks = 0


class ParkHandle:
    """A suspended task plus the path metrics of its suspension node."""

    __slots__ = ("task", "path", "node_id", "done", "where")

    def __init__(self, task, path, node_id, where=""):
        self.task = task
        self.path = path
        self.node_id = node_id
        self.done = False
        self.where = where


class NonBlockingFlag:
    """Test-and-set lock; atomic at node granularity."""

    __slots__ = ("held",)

    def __init__(self):
        self.held = False

    def try_lock(self):
        if self.held:
            return False
        self.held = True
        return True

    def unlock(self):
        if not self.held:
            raise LockUsageError("unlock of unheld flag")
        self.held = False


class DedicatedLock:
    """Blocking lock with keys 1..k; concurrent acquirers must use distinct
    keys and a release resumes the cyclically next parked waiter."""

    __slots__ = ("k", "count", "holder", "slots", "name")

    def __init__(self, k, name=""):
        self.k = k
        self.count = 0
        self.holder = 0
        self.slots = [None] * (k + 1)
        self.name = name

    def waiters(self):
        return [i for i in range(1, self.k + 1) if self.slots[i] is not None]


@dataclass
class ExecutionMetrics:
    p: int
    scheduler: str
    steps: int = 0
    work: dict = field(default_factory=dict)
    t1: int = 0
    t_inf: int = 0
    buffer_work: int = 0
    buffer_span: int = 0
    ds_work: int = 0
    ds_span: int = 0
    high_busy_steps: int = 0
    high_idle_steps: int = 0
    filter_full_steps: int = 0
    filter_empty_steps: int = 0

    def to_dict(self):
        return {
            "T1": self.t1,
            "T_inf": self.t_inf,
            "per_structure": {
                "ds": {"work": self.ds_work, "span": self.ds_span},
                "buffer": {"work": self.buffer_work, "span": self.buffer_span},
            },
            "steps": {
                "total": self.steps,
                "high_busy": self.high_busy_steps,
                "high_idle": self.high_idle_steps,
                "filter_full": self.filter_full_steps,
                "filter_empty": self.filter_empty_steps,
            },
            "p": self.p,
            "scheduler": self.scheduler,
        }


class Runtime:
    """Single-threaded deterministic simulator of a p-processor machine."""

    def __init__(self, p, scheduler="greedy", trace=False, filter_probe=None):
        if p < 4:
            raise ValueError("p must be at least 4")
        if scheduler not in ("greedy", "weak_priority"):
            raise ValueError(f"unknown scheduler {scheduler!r}")
        if scheduler == "weak_priority" and p % 2:
            raise ValueError("weak_priority requires even p")
        self.p = p
        self.scheduler = scheduler
        self.metrics = ExecutionMetrics(p=p, scheduler=scheduler)
        self.trace = [] if trace else None
        self.step_stats = [] if trace else None
        self.filter_probe = filter_probe
        self.step_hooks = []
        self.now = 0
        self.current_slot = 0
        self._locks = []
        self._next_id = 0
        self._ready1 = []   # heaps of (node_id, task, send, path, throw)
        self._ready2 = []
        self._staged = []
        self._parked = 0
        self._spans = [0, 0, 0]
        self._cur_path = (0, 0, 0)
        self._cur_task = None

    # -- task creation -------------------------------------------------------

    def spawn_root(self, gen, owner=PROGRAM, queue=Q2):
        task = _Task(gen, owner, queue)
        self._stage(task, None, (0, 0, 0))
        return task

    def register_lock(self, lock):
        self._locks.append(lock)
        return lock

    @property
    def current_path(self):
        """(program, buffer, ds) node counts along the executing node's
        longest incoming path; task code may sample it between yields."""
        return self._cur_path

    def export_trace(self, path):
        """Write the execution trace as '<step> <node_id> <owner> <queue>'
        lines; requires trace=True."""
        if self.trace is None:
            raise ValueError("runtime was created without trace=True")
        with open(path, "w") as fh:
            for step, node_id, owner, queue in self.trace:
                fh.write(f"{step} {node_id} {owner} {queue}\n")

    def _stage(self, task, send, path, throw=None):
        nid = self._next_id
        self._next_id += 1
        self._staged.append((nid, task, send, path, throw))

    def _spawn_sub(self, sub, parent, path):
        task = _Task(sub.gen, sub.owner or parent.owner, sub.queue or parent.queue)
        self._stage(task, None, path)
        return task

    # -- in-node operations (called from task code between yields) ------------

    def resume(self, handle, value):
        """Resume a parked task; the resumption node is a child of both the
        current node and the suspension node."""
        if handle.done:
            raise LockUsageError("double resume of a parked task")
        handle.done = True
        self._parked -= 1
        merged = tuple(map(max, handle.path, self._cur_path))
        self._stage(handle.task, value, merged)

    def release(self, lock):
        """Dedicated-lock release with cyclic scan from the holder's key."""
        if lock.count <= 0:
            raise LockUsageError(f"release of unheld lock {lock.name}")
        lock.count -= 1
        if lock.count == 0:
            lock.holder = 0
            return
        j = lock.holder
        while True:
            j = j % lock.k + 1
            if lock.slots[j] is not None:
                handle = lock.slots[j]
                lock.slots[j] = None
                break
        lock.holder = j
        self.resume(handle, None)

    def detach(self, gen, owner=None, queue=None):
        """Spawn a fire-and-forget child of the current node."""
        self._spawn_sub(Sub(gen, owner, queue), self._cur_task, self._cur_path)

    # -- main loop -------------------------------------------------------------

    def run(self):
        self._flush_staged()
        m = self.metrics
        half = self.p // 2
        while self._ready1 or self._ready2:
            if len(self._ready1) >= half:
                m.high_busy_steps += 1
            else:
                m.high_idle_steps += 1
            if self.filter_probe is not None:
                if self.filter_probe() >= self.p:
                    m.filter_full_steps += 1
                else:
                    m.filter_empty_steps += 1
            for hook in self.step_hooks:
                hook(self.now)
            q1_ready, q2_ready = len(self._ready1), len(self._ready2)
            if self.scheduler == "greedy":
                batch = self._pick_greedy(self.p)
            else:
                batch = self._pick_quota(half, half)
            if self.step_stats is not None:
                q1_exec = sum(1 for e in batch if e[1].queue == Q1)
                self.step_stats.append(
                    (q1_ready, q2_ready, q1_exec, len(batch) - q1_exec))
            for slot, entry in enumerate(batch):
                self.current_slot = slot
                self._exec(entry)
            m.steps += 1
            self.now += 1
            self._flush_staged()
        if self._parked:
            blocked = [(lk.name, lk.waiters()) for lk in self._locks if lk.waiters()]
            raise SimDeadlock(
                f"{self._parked} suspended task(s) with no ready nodes; "
                f"blocked locks: {blocked}",
                blocked=blocked,
            )
        m.t1 = m.work.get(PROGRAM, 0)
        m.t_inf = self._spans[0]
        m.buffer_work = m.work.get(BUFFER, 0)
        m.buffer_span = self._spans[1]
        m.ds_work = m.work.get(DS, 0) + m.work.get(DS_FINAL, 0)
        m.ds_span = self._spans[2]
        return m

    def _flush_staged(self):
        for entry in self._staged:
            if entry[1].queue == Q1:
                heapq.heappush(self._ready1, entry)
            else:
                heapq.heappush(self._ready2, entry)
        self._staged.clear()

    def _pick_greedy(self, quota):
        batch = []
        r1, r2 = self._ready1, self._ready2
        while quota and (r1 or r2):
            if r1 and (not r2 or r1[0][0] < r2[0][0]):
                batch.append(heapq.heappop(r1))
            else:
                batch.append(heapq.heappop(r2))
            quota -= 1
        return batch

    def _pick_quota(self, quota1, quota2):
        take1 = [heapq.heappop(self._ready1)
                 for _ in range(min(quota1, len(self._ready1)))]
        take2 = [heapq.heappop(self._ready2)
                 for _ in range(min(quota2, len(self._ready2)))]
        batch = take1 + take2
        batch.sort(key=lambda e: e[0])
        return batch

    def _exec(self, entry):
        nid, task, send, path, throw = entry
        slot = _PATH_SLOT[task.owner]
        if slot == 0:
            here = (path[0] + 1, path[1], path[2])
        elif slot == 1:
            here = (path[0], path[1] + 1, path[2])
        else:
            here = (path[0], path[1], path[2] + 1)
        self._cur_path = here
        self._cur_task = task
        m = self.metrics
        m.work[task.owner] = m.work.get(task.owner, 0) + 1
        if here[slot] > self._spans[slot]:
            self._spans[slot] = here[slot]
        if self.trace is not None:
            self.trace.append((self.now, nid, task.owner, task.queue))
        if task.ticks:
            task.ticks -= 1
            self._stage(task, None, here)
            return
        self._advance(task, send, here, throw)

    def _advance(self, task, send, here, throw=None):
        try:
            if throw is not None:
                effect = task.gen.throw(throw)
            else:
                effect = task.gen.send(send)
        except StopIteration as stop:
            self._finish(task, stop.value, here)
            return
        if type(effect) is int:
            if effect > 1:
                task.ticks = effect - 1
            self._stage(task, None, here)
        elif isinstance(effect, Par):
            join = _Join(task)
            lt = self._spawn_sub(effect.left, task, here)
            rt_ = self._spawn_sub(effect.right, task, here)
            lt.join = (join, 0)
            rt_.join = (join, 1)
        elif isinstance(effect, Call):
            join = _Join(task, single=True)
            child = self._spawn_sub(effect, task, here)
            child.join = (join, 0)
        elif isinstance(effect, Detach):
            self._spawn_sub(effect, task, here)
            self._stage(task, None, here)
        elif isinstance(effect, Acquire):
            lock, key = effect.lock, effect.key
            if not 1 <= key <= lock.k:
                raise LockUsageError(f"key {key} out of range for lock {lock.name}")
            lock.count += 1
            if lock.count == 1:
                lock.holder = key
                self._stage(task, None, here)
            else:
                if lock.slots[key] is not None:
                    raise LockUsageError(
                        f"duplicate key {key} among concurrent acquirers of {lock.name}")
                lock.slots[key] = ParkHandle(task, here, self._next_id,
                                             where=lock.name)
                self._parked += 1
        elif isinstance(effect, Park):
            handle = ParkHandle(task, here, self._next_id)
            self._parked += 1
            effect.register(handle)
        else:
            raise TypeError(f"task yielded unsupported effect {effect!r}")

    def _finish(self, task, value, here):
        if task.join is None:
            return
        join, idx = task.join
        join.results[idx] = value
        join.paths[idx] = here
        join.need -= 1
        if join.need == 0:
            if join.single:
                self._stage(join.task, join.results[0], join.paths[0])
            else:
                merged = tuple(map(max, join.paths[0], join.paths[1]))
                self._stage(join.task, tuple(join.results), merged)


# -- task-code combinators -----------------------------------------------------


def par_map(items, fn):
    """Binary fan-out over items applying task factory fn; returns the list
    of results. Span is O(log n) plus the deepest leaf."""
    n = len(items)
    if n == 0:
        return []
    if n == 1:
        result = yield from fn(items[0])
        return [result]
    mid = n // 2
    left, right = yield Par(par_map(items[:mid], fn), par_map(items[mid:], fn))
    return left + right


def par_chunks(items, chunk, fn):
    """Like par_map but leaves process contiguous chunks of the given size."""
    chunk = max(1, chunk)
    pieces = [items[i:i + chunk] for i in range(0, len(items), chunk)]
    if not pieces:
        pieces = [items]
    return (yield from par_map(pieces, fn))


def concat_tree(pieces):
    """Concatenate list pieces with a balanced binary join tree."""
    n = len(pieces)
    if n == 0:
        return []
    if n == 1:
        yield 1
        return list(pieces[0])
    mid = n // 2
    left, right = yield Par(concat_tree(pieces[:mid]), concat_tree(pieces[mid:]))
    yield 1
    return left + right


def merge_sort_task(items, key):
    """Balanced merge-sort task DAG; O(n log n) work, O((log n)^2) span."""
    n = len(items)
    if n <= 1:
        yield 1
        return list(items)
    mid = n // 2
    left, right = yield Par(merge_sort_task(items[:mid], key),
                            merge_sort_task(items[mid:], key))
    yield max(1, n)
    out = []
    i = j = 0
    while i < len(left) and j < len(right):
        if key(right[j]) < key(left[i]):
            out.append(right[j])
            j += 1
        else:
            out.append(left[i])
            i += 1
    out.extend(left[i:])
    out.extend(right[j:])
    return out


def execute_inline(gen):
    """Run a task generator to completion without the scheduler, executing
    Par branches sequentially; valid only when branches touch disjoint
    state. Returns the task's value; costs are discarded."""
    send = None
    while True:
        try:
            effect = gen.send(send)
        except StopIteration as stop:
            return stop.value
        if type(effect) is int:
            send = None
        elif isinstance(effect, Par):
            send = (execute_inline(effect.left.gen),
                    execute_inline(effect.right.gen))
        elif isinstance(effect, Call):
            send = execute_inline(effect.gen)
        elif isinstance(effect, Detach):
            execute_inline(effect.gen)
            send = None
        else:
            raise TypeError(f"inline execution cannot handle {effect!r}")


class ActivationGate:
    """Non-blocking-lock guard that runs a process iff it is not already
    running and its readiness predicate holds; honors self-reactivation.

    The try-lock, the readiness check, and (on a negative check) the unlock
    all happen inside one node, so an activator that first makes the
    predicate true can never be lost.
    """

    __slots__ = ("flag", "ready", "process", "name")

    def __init__(self, ready, process, name=""):
        self.flag = NonBlockingFlag()
        self.ready = ready
        self.process = process
        self.name = name

    def activate(self):
        while True:
            if not self.flag.try_lock():
                return
            if not self.ready():
                self.flag.unlock()
                return
            reactivate = yield from self.process()
            self.flag.unlock()
            if not reactivate:
                return
            # retry happens in the same node as the unlock: no lost wakeups
