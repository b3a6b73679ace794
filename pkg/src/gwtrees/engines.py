"""Generation engines: naive, iterative, threshold-parallel, and hybrid.

The sequential engines drive the compiled kernels directly. The parallel
engine runs Algorithm-style tasks on a pool of worker threads: every task
exclusively owns its pending structures, its slab, and its bit source, and
hands full batches (plus a split-off source) to the pool. In
``split_deterministic`` mode the produced tree is a pure function of
(seed, threshold, cap), independent of worker count and scheduling.

Shared state is limited to the exact node budget and the append-only slab
registry. The budget hands out prepaid grants and gets unspent grant back
when a task exits, so a generation completes if and only if the finished
tree would have at most ``max_nodes`` nodes - the same cap semantics as the
sequential engines.
"""

import os
import threading
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .bits import (BITS_CONSUMED, WORD_WIDTH, WORDS_DRAWN, aligned_state,
                   fill_state_record)
from .errors import InvalidSize, RejectionBudgetExceeded
from .prng import lineage_key
from .store import DEFAULT_SLAB_CAPACITY, NodeHandle, NodeStore, Tree, _even

ALGOS = ("naive", "iterative", "parallel", "hybrid")
RNG_MODES = ("split_deterministic", "per_worker")
DEFAULT_MAX_NODES = 1 << 31
NEVER = 1 << 62  # hybrid switch size that never triggers

_C = K  # counter slot aliases live in the kernel module


@dataclass
class GenParams:
    algo: str = "iterative"
    threshold: int = 64
    hybrid_switch: int | None = None  # defaults to threshold
    max_nodes: int = DEFAULT_MAX_NODES
    workers: int = 1
    seed: int | None = None  # None: OS entropy
    rng_mode: str = "split_deterministic"
    slab_capacity: int = DEFAULT_SLAB_CAPACITY
    rejection_budget: int = 10_000_000  # attempts per conditioned sample

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValueError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if self.rng_mode not in RNG_MODES:
            raise ValueError(f"rng_mode must be one of {RNG_MODES}")
        if self.threshold < 1:
            raise ValueError("threshold must be >= 1")
        if self.hybrid_switch is None:
            self.hybrid_switch = max(self.threshold, 1)
        if self.hybrid_switch < self.threshold:
            raise ValueError("hybrid_switch must be >= threshold")
        if self.max_nodes < 1:
            raise ValueError("max_nodes must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.seed is None:
            self.seed = int.from_bytes(os.urandom(8), "little")


@dataclass
class GenOutcome:
    tree: Tree | None
    overflow: bool
    nodes_generated: int
    tasks_spawned: int = 0
    bits_consumed: int = 0
    words_drawn: int = 0
    task_loads: list = field(default_factory=list)
    handoff_nodes: int = 0
    max_source_waste: int = 0

    @property
    def result(self):
        return "overflow" if self.overflow else self.tree


class _Budget:
    """Exact shared node budget with prepaid grants.

    ``request`` blocks while other tasks may still return unspent grant;
    when every active task is blocked the tree provably needs more than the
    cap and the run flips to overflow.
    """

    def __init__(self, cap):
        self._cond = threading.Condition()
        self.remaining = cap - 1  # the root is pre-counted
        self.active = 0
        self.waiting = 0
        self.overflow = False
        self.nodes = 1

    def task_started(self):
        with self._cond:
            self.active += 1

    def task_finished(self, made, unspent):
        with self._cond:
            self.nodes += made
            self.remaining += unspent
            self.active -= 1
            if self.waiting:
                self._cond.notify_all()

    def try_request(self, want):
        """Non-blocking grab; never declares overflow (may return 0)."""
        with self._cond:
            got = min(want, self.remaining)
            self.remaining -= got
            return got

    def request(self, want):
        with self._cond:
            while True:
                if self.overflow:
                    return 0
                if self.remaining > 0:
                    got = min(want, self.remaining)
                    self.remaining -= got
                    return got
                if self.waiting + 1 == self.active:
                    self.overflow = True
                    self._cond.notify_all()
                    return 0
                self.waiting += 1
                self._cond.wait()
                self.waiting -= 1


@dataclass
class _Task:
    batch: np.ndarray  # packed handles, oldest first
    key: int | None = None  # split lineage key (fresh source)
    state: np.ndarray | None = None  # root task: carried source state


class _Run:
    """Mutable state of one parallel generation."""

    def __init__(self, params, pool):
        self.params = params
        self.pool = pool
        self.threshold = params.threshold
        self.budget = _Budget(params.max_nodes)
        self.split_mode = params.rng_mode == "split_deterministic"
        self.pending = 0
        self.done = threading.Event()
        self.error = None
        self.lock = threading.Lock()
        self.bits = 0
        self.words = 0
        self.loads = []
        self.handoff = 0
        self.max_waste = 0
        self.chunk = max(params.threshold + 2,
                         min(1 << 16, params.max_nodes // (2 * pool.workers) + 2))
        self.task_delay = None  # test hook: callable, sleeps before task start
        self.driver_ident = threading.get_ident()

    def note_spawn(self, n_tasks):
        with self.lock:
            self.pending += n_tasks

    def note_done(self, bits, words, load, batch_len, waste):
        with self.lock:
            self.bits += bits
            self.words += words
            self.loads.append(load)
            self.handoff += batch_len
            if waste > self.max_waste:
                self.max_waste = waste
            self.pending -= 1
            finished = self.pending == 0
        if finished:
            self.done.set()
            if threading.get_ident() != self.driver_ident:
                with self.pool._cond:  # wake the inline worker
                    self.pool._cond.notify_all()

    def fail(self, exc):
        self.error = exc
        self.budget.overflow = True
        self.done.set()


class TaskPool:
    """Work-stealing pool: the submitting thread acts as worker 0.

    Worker *i* allocates into arena *i* of the shared store; spawned batches
    are pushed to the spawning worker's deque and stolen (oldest first) by
    idle workers, so batches may execute anywhere, which is safe because a
    task's output depends only on its own batch and source lineage. Running
    the driver inline as worker 0 keeps small generations free of any
    cross-thread hand-off. One generation job runs at a time.
    """

    def __init__(self, store: NodeStore, workers: int):
        self.store = store
        self.workers = workers
        self._cond = threading.Condition()
        self._deques = [deque() for _ in range(workers)]
        self._run = None
        self._shutdown = False
        self._busy = 0
        self._scratch = [None] * workers
        self._threads = []
        for w in range(1, workers):
            t = threading.Thread(target=self._worker_loop, args=(w,),
                                 name=f"gwtrees-worker-{w}", daemon=True)
            t.start()
            self._threads.append(t)

    def close(self):
        with self._cond:
            self._shutdown = True
            self._cond.notify_all()
        for t in self._threads:
            t.join()

    # -- per-run scratch -----------------------------------------------------

    def _prepare(self, run, lds1_cap):
        t = run.threshold
        if self._scratch[0] is None or self._scratch[0].lds1.shape[0] < lds1_cap \
                or self._scratch[0].lds2.shape[0] != t + 2:
            rows = max(8, min(512, 16384 // (t + 3)))
            for w in range(self.workers):
                self._scratch[w] = _Scratch(lds1_cap, t, rows)
        if not run.split_mode:
            for w in range(self.workers):
                fill_state_record(self._scratch[w].worker_rec,
                                  lineage_key(run.params.seed, (w,)))
        self._run = run

    def run_to_completion(self, run, root_task):
        self._prepare(run, max(len(root_task.batch) + 2, run.threshold + 2))
        run.note_spawn(1)
        # taken inline first; background workers wake on the first spawn
        self._deques[0].append(root_task)
        self._work_inline(run)
        run.done.wait()
        with self._cond:  # quiesce before the next run reuses scratch
            while self._busy > 0:
                self._cond.wait(0.001)
        self._run = None
        if run.error is not None:
            raise run.error

    def _work_inline(self, run):
        """Execute tasks on the calling thread (as worker 0) until the run ends."""
        while True:
            with self._cond:
                task = self._next_task(0)
                while task is None and not run.done.is_set():
                    self._cond.wait()
                    task = self._next_task(0)
                if task is None:
                    return
            try:
                if run.task_delay is not None:
                    run.task_delay()
                self._execute(0, run, task)
            except BaseException as exc:  # noqa: BLE001
                run.fail(exc)
                return

    # -- worker side -----------------------------------------------------

    def _next_task(self, worker_id):
        dq = self._deques[worker_id]
        if dq:
            return dq.pop()  # own tasks LIFO: depth-first, cache-warm
        for other in range(self.workers):
            odq = self._deques[other]
            if odq:
                try:
                    return odq.popleft()  # steal oldest
                except IndexError:
                    continue
        return None

    def _worker_loop(self, worker_id):
        while True:
            with self._cond:
                task = self._next_task(worker_id)
                while task is None and not self._shutdown:
                    self._cond.wait()
                    task = self._next_task(worker_id)
                if self._shutdown and task is None:
                    return
                self._busy += 1
            run = self._run
            try:
                if run.task_delay is not None:
                    run.task_delay()
                self._execute(worker_id, run, task)
            except BaseException as exc:  # noqa: BLE001 - reported to caller
                run.fail(exc)
            finally:
                with self._cond:
                    self._busy -= 1
                    self._cond.notify_all()

    def _execute(self, worker_id, run, task):
        scratch = self._scratch[worker_id]
        budget = run.budget
        budget.task_started()
        if run.split_mode:
            rec = scratch.task_rec
            if task.state is not None:
                rec[:] = task.state
                bits0 = int(rec[BITS_CONSUMED])
                words0 = int(rec[WORDS_DRAWN])
            else:
                K.fill_state(rec, np.uint64(task.key))
                bits0 = words0 = 0
        else:
            rec = scratch.worker_rec
            bits0, words0 = int(rec[BITS_CONSUMED]), int(rec[WORDS_DRAWN])
        ctr = scratch.ctr
        ctr[:] = 0
        n = len(task.batch)
        scratch.lds1[:n] = task.batch
        ctr[K.C_N1] = n
        made = 0
        try:
            if not budget.overflow:
                # opportunistic first grant; a blocking request happens only
                # when the kernel truly needs to allocate, so a batch of
                # leaves still completes on a zero grant
                ctr[K.C_GRANT] = budget.try_request(run.chunk)
                made = self._drive(worker_id, run, scratch, rec, ctr)
        finally:
            budget.task_finished(made, int(ctr[K.C_GRANT]))
            bits = int(rec[BITS_CONSUMED]) - bits0
            words = int(rec[WORDS_DRAWN]) - words0
            waste = int(rec[WORDS_DRAWN]) * WORD_WIDTH - int(rec[BITS_CONSUMED])
            run.note_done(bits, words, bits, n, waste)

    def _drive(self, worker_id, run, scratch, rec, ctr):
        """Kernel re-entry loop for one task; returns nodes made."""
        store = self.store
        budget = run.budget
        slab = store.current_slab(worker_id, 2)
        data = store.slab_data(slab.global_index)
        ctr[K.C_USED] = slab.used
        while True:
            status = K.run_task(rec, ctr, scratch.lds1, scratch.lds2, data,
                                slab.global_index, scratch.defer,
                                scratch.spawn, run.threshold)
            slab.used = int(ctr[K.C_USED])
            dn = int(ctr[K.C_DEFER])
            if dn:
                store.apply_deferred(scratch.defer, dn)
                ctr[K.C_DEFER] = 0
            nsp = int(ctr[K.C_SPAWN])
            if nsp:
                ctr[K.C_SPAWN] = 0
                run.note_spawn(nsp)
                with self._cond:
                    for i in range(nsp):
                        cnt = int(scratch.spawn[i, 1])
                        self._deques[worker_id].append(_Task(
                            batch=scratch.spawn[i, 2:2 + cnt].copy(),
                            key=int(np.uint64(scratch.spawn[i, 0]))))
                    self._cond.notify_all()
            if status == K.DONE:
                return int(ctr[K.C_MADE])
            if status == K.SLAB_FULL:
                slab = store.current_slab(worker_id, 2)
                data = store.slab_data(slab.global_index)
                ctr[K.C_USED] = slab.used
            elif status == K.GRANT_EMPTY:
                got = budget.request(run.chunk)
                if got == 0:
                    return int(ctr[K.C_MADE])  # overflow declared
                ctr[K.C_GRANT] += got
            # SPAWN_FULL: flushed above, just re-enter


class _Scratch:
    """Per-worker task workspace (128-byte padded source records)."""

    def __init__(self, lds1_cap, threshold, spawn_rows):
        recs = aligned_state(2)
        self.task_rec = recs[0]
        self.worker_rec = recs[1]
        self.ctr = np.zeros(K.CTR_SLOTS, dtype=np.int64)
        self.lds1 = np.empty(lds1_cap, dtype=np.int64)
        self.lds2 = np.empty(threshold + 2, dtype=np.int64)
        self.defer = np.empty(2 * (lds1_cap + threshold + 2), dtype=np.int64)
        self.spawn = np.empty((spawn_rows, threshold + 3), dtype=np.int64)


class EngineRuntime:
    """Reusable generation context: one store plus (for parallel runs) one
    worker pool. Re-running on the same runtime recycles every slab, so a
    previously returned tree is only valid until the next generate call."""

    def __init__(self, params: GenParams):
        workers = params.workers if params.algo in ("parallel", "hybrid") else 1
        self.workers = workers
        self.store = NodeStore(workers=workers, slab_capacity=params.slab_capacity)
        self._pool = None
        self.seq_rec = aligned_state(1)[0]
        self.ctr = np.zeros(K.CTR_SLOTS, dtype=np.int64)
        self._stack = np.empty(8192, dtype=np.int64)
        self._defer = np.empty(2 * 8192, dtype=np.int64)

    @property
    def pool(self) -> TaskPool:
        if self._pool is None:
            self._pool = TaskPool(self.store, self.workers)
        return self._pool

    def grow_stack(self):
        old = self._stack
        self._stack = np.empty(old.shape[0] * 2, dtype=np.int64)
        self._stack[:old.shape[0]] = old
        self._defer = np.empty(2 * self._stack.shape[0], dtype=np.int64)

    def close(self):
        if self._pool is not None:
            self._pool.close()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _alloc_root(store, worker_id=0):
    root, _ = store.alloc_pair(worker_id)  # partner slot stays idle
    return store.pack(root), root


def _outcome_seq(store, root, rec, ctr, overflow):
    nodes = int(ctr[K.C_MADE]) + 1
    bits = int(rec[BITS_CONSUMED])
    words = int(rec[WORDS_DRAWN])
    return GenOutcome(
        tree=None if overflow else Tree(store, root, nodes),
        overflow=overflow, nodes_generated=nodes, tasks_spawned=0,
        bits_consumed=bits, words_drawn=words, task_loads=[bits],
        max_source_waste=words * WORD_WIDTH - bits)


def _drive_iterative(rt, params, rec, switch_size=0):
    """Shared by the iterative engine and the hybrid prefix.

    Returns (status, root_handle, root_packed); pending nodes stay in
    rt._stack with their count in rt.ctr when the switch size is reached.
    """
    store = rt.store
    packed, root = _alloc_root(store, 0)
    ctr = rt.ctr
    ctr[:] = 0
    ctr[K.C_GRANT] = params.max_nodes - 1
    rt._stack[0] = packed
    ctr[K.C_N1] = 1
    while True:
        slab = store.current_slab(0, 2)
        data = store.slab_data(slab.global_index)
        ctr[K.C_USED] = slab.used
        status = K.run_iterative(rec, ctr, rt._stack, data, slab.global_index,
                                 rt._defer, switch_size)
        slab.used = int(ctr[K.C_USED])
        if ctr[K.C_DEFER]:
            store.apply_deferred(rt._defer, int(ctr[K.C_DEFER]))
            ctr[K.C_DEFER] = 0
        if status == K.STACK_FULL:
            rt.grow_stack()
        elif status == K.SLAB_FULL:
            continue
        else:
            return status, root, packed


def _generate_iterative(rt, params):
    rt.store.reset()
    rec = rt.seq_rec
    fill_state_record(rec, lineage_key(params.seed))
    status, root, _ = _drive_iterative(rt, params, rec, switch_size=0)
    return _outcome_seq(rt.store, root, rec, rt.ctr, status == K.GRANT_EMPTY)


_NAIVE_STACK_BYTES = 512 << 20


def _generate_naive(rt, params):
    """Recursive engine; runs on a dedicated large-stack thread.

    Recursion cannot pause at slab boundaries, so the tree must fit one
    slab: when it fills, the whole attempt is replayed (same seed, same
    tree) into a slab twice the size.
    """
    store = rt.store
    store.reset()
    rec = rt.seq_rec
    ctr = rt.ctr
    need = _even(min(params.max_nodes + 2, max(1 << 22, store.slab_capacity)))
    result = {}

    def attempt():
        cap = need
        while True:
            slab = _fresh_slab(store, 0, cap)
            data = store.slab_data(slab.global_index)
            fill_state_record(rec, lineage_key(params.seed))
            ctr[:] = 0
            ctr[K.C_GRANT] = params.max_nodes - 1
            ctr[K.C_USED] = 2  # root pair
            data[0] = K.LEAF
            data[1] = K.LEAF
            status = K.run_naive(rec, ctr, data, slab.global_index, 0)
            slab.used = int(ctr[K.C_USED])
            if status == K.SLAB_FULL and cap < params.max_nodes + 2:
                cap = _even(min(cap * 2, params.max_nodes + 2))
                continue
            root = NodeHandle(0, slab.index, 0)
            result["out"] = _outcome_seq(store, root, rec, ctr,
                                         status == K.GRANT_EMPTY)
            if status == K.DEPTH_LIMIT:
                result["err"] = RuntimeError(
                    "naive engine exceeded its recursion depth guard")
            return

    old = threading.stack_size()
    size = _NAIVE_STACK_BYTES
    while True:
        try:
            threading.stack_size(size)
            break
        except (ValueError, OverflowError):
            size //= 2
            if size < 1 << 22:
                threading.stack_size(old)
                break
    t = threading.Thread(target=attempt, name="gwtrees-naive")
    t.start()
    t.join()
    threading.stack_size(old)
    if "err" in result:
        raise result["err"]
    return result["out"]


def _fresh_slab(store, worker_id, need):
    """An unused slab of capacity >= need (recycled if possible)."""
    arena = store._arena(worker_id)
    for pos, gidx in enumerate(arena.slab_globals):
        slab = store.slabs[gidx]
        if slab.used == 0 and slab.capacity >= need:
            arena.current_pos = pos
            return slab
    return store.open_slab(worker_id, capacity=_even(need))


def _run_pool(rt, params, root_task, preconsumed=0, task_delay=None):
    run = _Run(params, rt.pool)
    run.task_delay = task_delay
    run.budget.nodes += preconsumed
    run.budget.remaining -= preconsumed
    rt.pool.run_to_completion(run, root_task)
    return run


def _pool_outcome(rt, run, root, root_batch_len=1, extra_bits=0, extra_words=0):
    budget = run.budget
    overflow = budget.overflow
    nodes = budget.nodes
    return GenOutcome(
        tree=None if overflow else Tree(rt.store, root, nodes),
        overflow=overflow, nodes_generated=nodes,
        tasks_spawned=len(run.loads) - 1 if run.loads else 0,
        bits_consumed=run.bits + extra_bits,
        words_drawn=run.words + extra_words, task_loads=run.loads,
        handoff_nodes=run.handoff - root_batch_len,
        max_source_waste=run.max_waste)


def _generate_parallel(rt, params, task_delay=None):
    rt.store.reset()
    packed, root = _alloc_root(rt.store, 0)
    root_task = _Task(batch=np.array([packed], dtype=np.int64),
                      key=lineage_key(params.seed))
    run = _run_pool(rt, params, root_task, task_delay=task_delay)
    return _pool_outcome(rt, run, root)


def _generate_hybrid(rt, params, task_delay=None):
    rt.store.reset()
    rec = rt.seq_rec
    fill_state_record(rec, lineage_key(params.seed))
    switch = min(params.hybrid_switch, NEVER)
    status, root, _ = _drive_iterative(rt, params, rec, switch_size=switch)
    if status != K.SWITCHED:
        return _outcome_seq(rt.store, root, rec, rt.ctr, status == K.GRANT_EMPTY)
    pending = int(rt.ctr[K.C_N1])
    batch = rt._stack[:pending].copy()
    made = int(rt.ctr[K.C_MADE])
    root_task = _Task(batch=batch, state=rec.copy())
    run = _run_pool(rt, params, root_task, preconsumed=made,
                    task_delay=task_delay)
    return _pool_outcome(rt, run, root, root_batch_len=pending,
                         extra_bits=int(rec[BITS_CONSUMED]),
                         extra_words=int(rec[WORDS_DRAWN]))


def generate(params: GenParams, runtime: EngineRuntime | None = None,
             task_delay=None) -> GenOutcome:
    """Run one generation; overflow is an outcome, not an exception."""
    rt = runtime or EngineRuntime(params)
    try:
        if params.algo == "naive":
            return _generate_naive(rt, params)
        if params.algo == "iterative":
            return _generate_iterative(rt, params)
        if params.algo == "parallel":
            return _generate_parallel(rt, params, task_delay)
        return _generate_hybrid(rt, params, task_delay)
    finally:
        if runtime is None:
            rt.close()


# ---------------------------------------------------------------------------
# size-conditioned sampling


SAMPLE_METHODS = ("cycle_lemma", "rejection")


@dataclass
class SamplerStats:
    """Aggregate source accounting for a sampling stream."""

    samples: int = 0
    attempts: int = 0
    tasks: int = 0
    bits_consumed: int = 0
    words_drawn: int = 0
    max_source_waste: int = 0

    def absorb_ctr(self, ctr):
        self.tasks += int(ctr[K.C_TASKS])
        self.bits_consumed += int(ctr[K.C_BITS])
        self.words_drawn += int(ctr[K.C_WORDS])
        self.max_source_waste = max(self.max_source_waste, int(ctr[K.C_MAXWASTE]))


def _check_size(n):
    if n < 1 or n % 2 == 0:
        raise InvalidSize(f"tree size must be a positive odd integer, got {n}")


def sample_conditioned(params: GenParams, n: int, method: str = "cycle_lemma") -> Tree:
    """One uniform binary tree with exactly ``n`` nodes (own store)."""
    return next(sample_stream(params, n, 1, method=method))


def sample_stream(params: GenParams, n: int, count: int,
                  method: str = "cycle_lemma", stats: SamplerStats | None = None):
    """Yield ``count`` uniform trees of exactly ``n`` nodes.

    Trees share one scratch store per stream and stay valid only until the
    next iteration; encode or measure them before advancing.

    ``cycle_lemma`` runs in Theta(n) per sample. ``rejection`` runs the
    engine selected by ``params.algo`` with cap ``n`` and retries; its
    success probability decays like n^-3/2, so it is only usable for small
    sizes.
    """
    _check_size(n)
    if method in ("cycle", "cycle_lemma"):
        return _cycle_stream(params, n, count, stats)
    if method == "rejection":
        if params.algo in ("parallel", "hybrid"):
            return _rejection_stream_parallel(params, n, count, stats)
        return _rejection_stream_seq(params, n, count, stats)
    raise ValueError(f"method must be one of {SAMPLE_METHODS}, got {method!r}")


def _scratch_tree_store(n):
    store = NodeStore(workers=1, slab_capacity=_even(max(n + 1, 2)))
    slab = store.current_slab(0, n + 1)
    return store, slab, store.slab_data(slab.global_index)


def _cycle_stream(params, n, count, stats):
    store, slab, data = _scratch_tree_store(n)
    rec = aligned_state(1)[0]
    K.fill_state(rec, np.uint64(lineage_key(params.seed)))
    word = np.empty(n, dtype=np.uint8)
    rotated = np.empty(n, dtype=np.uint8)
    stack = np.empty(n + 2, dtype=np.int64)
    root = NodeHandle(0, 0, 0)
    for _ in range(count):
        K.cycle_sample(rec, word, rotated)
        used = K.decode_into(rotated, data, slab.global_index, 0, stack)
        slab.used = int(used)
        yield Tree(store, root, n)
    if stats is not None:
        stats.samples += count
        stats.attempts += count
        stats.tasks += count
        stats.bits_consumed += int(rec[BITS_CONSUMED])
        stats.words_drawn += int(rec[WORDS_DRAWN])
        waste = int(rec[WORDS_DRAWN]) * WORD_WIDTH - int(rec[BITS_CONSUMED])
        stats.max_source_waste = max(stats.max_source_waste, waste)


def _rejection_stream_seq(params, n, count, stats):
    """Rejection with a sequential engine, one task per attempt."""
    run_key = lineage_key(params.seed)
    store, slab, data = _scratch_tree_store(n)
    gidx = slab.global_index
    rec = aligned_state(1)[0]
    ctr = np.zeros(K.CTR_SLOTS, dtype=np.int64)
    stack = np.empty(n + 2, dtype=np.int64)
    defer = np.empty(2 * (n + 2), dtype=np.int64)
    root = NodeHandle(0, 0, 0)
    budget = params.rejection_budget
    naive = params.algo == "naive"
    lo = 0
    produced = 0
    while produced < count:
        hi = lo + 4096
        if naive:
            a, code = K.rejection_attempts_naive(rec, ctr, data, gidx,
                                                 np.uint64(run_key), lo, hi, n)
        else:
            a, code = K.rejection_attempts_seq(rec, ctr, stack, data, gidx,
                                               defer, np.uint64(run_key),
                                               lo, hi, n)
        if code < 0:
            raise AssertionError(f"rejection kernel error {code}")
        if code == 1:
            slab.used = 2 + int(ctr[K.C_MADE])
            produced += 1
            yield Tree(store, root, n)
        lo = int(a) + 1
        if lo > budget * count:
            raise RejectionBudgetExceeded(
                f"{lo} attempts for {produced}/{count} samples of size {n}")
    if stats is not None:
        stats.samples += produced
        stats.attempts += lo
        stats.absorb_ctr(ctr)


class _RejectionShared:
    """Attempt-range dispenser and ordered success buffer."""

    def __init__(self, need, budget):
        self.lock = threading.Lock()
        self.next_lo = 0
        self.need = need
        self.budget = budget
        self.ready = {}  # range_lo -> list of (attempt, encoding)
        self.done_ranges = set()
        self.emit_lo = 0
        self.emitted = 0
        self.buffered = 0
        self.attempts = 0
        self.error = None

    def claim(self, width):
        with self.lock:
            if self.error is not None or self.emitted + self.buffered >= self.need:
                return None
            if self.next_lo > self.budget * self.need:
                self.error = RejectionBudgetExceeded(
                    f"{self.next_lo} attempts for {self.emitted}/{self.need} samples")
                return None
            lo = self.next_lo
            self.next_lo = lo + width
            return lo, lo + width

    def complete(self, lo, successes, attempts_used):
        with self.lock:
            self.ready[lo] = successes
            self.done_ranges.add(lo)
            self.buffered += len(successes)
            self.attempts += attempts_used


def _rejection_stream_parallel(params, n, count, stats):
    """Rejection with the threshold-parallel engine.

    ``params.workers`` sampler threads claim disjoint attempt ranges; each
    attempt's spawned tasks run LIFO on their claiming worker, exactly the
    order a pool worker's own deque yields, and scheduler independence makes
    the resulting trees identical to any other execution (pinned by tests).
    Successes are emitted in attempt order, so the stream is a pure function
    of the seed.
    """
    run_key = lineage_key(params.seed)
    width = 2048
    shared = _RejectionShared(count, params.rejection_budget)
    agg = SamplerStats()

    hybrid = params.algo == "hybrid"
    switch = min(params.hybrid_switch, NEVER)

    def worker():
        store, slab, data = _scratch_tree_store(n)
        gidx = slab.global_index
        nb = store.nb_slabs()
        rec = aligned_state(1)[0]
        ctr = np.zeros(K.CTR_SLOTS, dtype=np.int64)
        t = params.threshold
        lds1_cap = max(t, min(switch, n + 2)) + 3 if hybrid else t + 2
        lds1 = np.empty(lds1_cap, dtype=np.int64)
        lds2 = np.empty(t + 2, dtype=np.int64)
        stack = np.empty(n + 2, dtype=np.int64)
        defer = np.empty(2 * (lds1_cap + t + n + 4), dtype=np.int64)
        spawn = np.empty((8, t + 3), dtype=np.int64)
        task_keys = np.empty(n + 2, dtype=np.uint64)
        task_batches = np.empty((n + 2, t + 1), dtype=np.int64)
        task_counts = np.empty(n + 2, dtype=np.int64)
        enc_out = np.empty(n, dtype=np.uint8)
        enc_stack = np.empty(n + 2, dtype=np.int64)
        try:
            while True:
                claim = shared.claim(width)
                if claim is None:
                    break
                lo, hi = claim
                pos = lo
                successes = []
                while pos < hi:
                    if hybrid:
                        a, code = K.rejection_attempts_hybrid(
                            rec, ctr, lds1, lds2, data, gidx, defer, spawn,
                            task_keys, task_batches, task_counts, stack,
                            t, switch, np.uint64(run_key), pos, hi, n)
                    else:
                        a, code = K.rejection_attempts(
                            rec, ctr, lds1, lds2, data, gidx, defer, spawn,
                            task_keys, task_batches, task_counts,
                            t, np.uint64(run_key), pos, hi, n)
                    if code < 0:
                        raise AssertionError(f"rejection kernel error {code}")
                    if code == 1:
                        k = K.encode_into(nb, gidx << K.OFF_BITS, enc_out, enc_stack)
                        successes.append((int(a), enc_out[:k].tobytes()))
                    pos = int(a) + 1
                shared.complete(lo, successes, hi - lo)
        except BaseException as exc:  # noqa: BLE001
            with shared.lock:
                shared.error = exc
        finally:
            with shared.lock:
                agg.absorb_ctr(ctr)

    threads = [threading.Thread(target=worker, name=f"gwtrees-reject-{i}")
               for i in range(params.workers)]
    for th in threads:
        th.start()

    store, slab, data = _scratch_tree_store(n)
    stack = np.empty(n + 2, dtype=np.int64)
    root = NodeHandle(0, 0, 0)
    produced = 0
    try:
        while produced < count:
            with shared.lock:
                err = shared.error
                batch = None
                if shared.emit_lo in shared.done_ranges:
                    batch = shared.ready.pop(shared.emit_lo)
                    shared.done_ranges.discard(shared.emit_lo)
                    shared.emit_lo += width
            if err is not None:
                raise err
            if batch is None:
                _sleep_briefly()
                continue
            for _a, enc in batch:
                if produced >= count:
                    break
                bits = np.frombuffer(enc, dtype=np.uint8) - ord("0")
                used = K.decode_into(bits, data, slab.global_index, 0, stack)
                slab.used = int(used)
                with shared.lock:
                    shared.emitted += 1
                    shared.buffered -= 1
                produced += 1
                yield Tree(store, root, n)
    finally:
        with shared.lock:
            shared.emitted = count  # stop claims
        for th in threads:
            th.join()
    if stats is not None:
        stats.samples += produced
        stats.attempts += shared.attempts
        stats.tasks += agg.tasks
        stats.bits_consumed += agg.bits_consumed
        stats.words_drawn += agg.words_drawn
        stats.max_source_waste = max(stats.max_source_waste, agg.max_source_waste)


def _sleep_briefly():
    threading.Event().wait(0.0005)
