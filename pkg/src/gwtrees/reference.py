"""Readable one-node-at-a-time implementations of the generation engines.

These are the behavioral reference for the compiled kernels: same
algorithms, same bit-consumption order, no batching. The test suite pins
the kernel engines against them over many seeds. :func:`algorithm3` is
also reused by :mod:`gwtrees.replay` to re-run the threshold-parallel
control flow on an already generated tree.
"""

import sys
from collections import deque
from dataclasses import dataclass, field

from .bits import BitSource
from .store import NodeStore, Tree


class OverflowSignal(Exception):
    """Node cap reached; generation must abort."""


@dataclass
class RefOutcome:
    tree: Tree | None
    overflow: bool
    nodes_generated: int
    bits_consumed: int
    tasks_spawned: int = 0
    task_loads: list = field(default_factory=list)


class _Run:
    """Shared growth state: store, node cap, and every source in play."""

    __slots__ = ("store", "cap", "nodes", "sources")

    def __init__(self, store, cap, source):
        self.store = store
        self.cap = cap
        self.nodes = 1  # the root
        self.sources = [source]

    def alloc_root(self):
        # the root takes the first slot of a pair; its partner stays idle
        root, _ = self.store.alloc_pair(0)
        return self.store.pack(root), root

    def grow(self, source, node):
        """Treat one node: draw its bit; allocate and link children if internal."""
        if source.next_bit() == 0:
            return None
        if self.nodes + 2 > self.cap:
            raise OverflowSignal()
        self.nodes += 2
        first, _second = self.store.alloc_pair(0)
        left = self.store.pack(first)
        self.store.set_record(node, left)
        return left, left + 1

    def split(self, source):
        child = source.split()
        self.sources.append(child)
        return child

    def bits_consumed(self):
        return sum(s.bits_consumed for s in self.sources)

    def outcome(self, root=None, **extra):
        if root is None:
            return RefOutcome(None, True, self.nodes, self.bits_consumed())
        return RefOutcome(Tree(self.store, root, self.nodes), False,
                          self.nodes, self.bits_consumed(), **extra)


def naive(source: BitSource, cap: int, store: NodeStore | None = None) -> RefOutcome:
    """Doubly recursive process, bits consumed in preorder.

    Interpreter recursion bounds this oracle to modest caps; the compiled
    naive engine covers large runs.
    """
    run = _Run(store or NodeStore(workers=1), cap, source)
    packed, root = run.alloc_root()

    def rec(node):
        children = run.grow(source, node)
        if children:
            rec(children[0])
            rec(children[1])

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, min((cap + 1) // 2 + 2000, 50_000)))
    try:
        rec(packed)
    except OverflowSignal:
        return run.outcome()
    finally:
        sys.setrecursionlimit(limit)
    return run.outcome(root)


def iterative(source: BitSource, cap: int, store: NodeStore | None = None) -> RefOutcome:
    """Explicit stack, left child popped first; equals naive bit for bit."""
    run = _Run(store or NodeStore(workers=1), cap, source)
    packed, root = run.alloc_root()
    try:
        _sequential(run, source, [packed], switch_size=0)
    except OverflowSignal:
        return run.outcome()
    return run.outcome(root)


def _sequential(run, source, stack, switch_size):
    """Stack loop shared by the iterative engine and the hybrid prefix.

    Returns the pending stack, which is non-empty only when ``switch_size``
    was reached (hybrid hand-over point).
    """
    while stack:
        node = stack.pop()
        children = run.grow(source, node)
        if children:
            stack.append(children[1])
            stack.append(children[0])
            if switch_size and len(stack) >= switch_size:
                return stack
    return stack


@dataclass
class _Task:
    source: object  # BitSource for generation, None for replay
    batch: list


def algorithm3(root_batch, threshold, treat, split, first_source=None):
    """Threshold-parallel control flow, tasks executed one after another.

    ``treat(task, node) -> (left, right) | None`` performs one node's work;
    ``split(task)`` yields the source handed to a spawned task. Returns the
    per-task loads in spawn order (first entry = first task's lifetime).
    """
    pending = deque([_Task(first_source, list(root_batch))])
    loads = []
    while pending:
        task = pending.popleft()
        lds1 = task.batch
        lds2 = []
        load = 0
        while lds1 or lds2:
            node = lds2.pop() if lds2 else lds1.pop()
            load += 1
            children = treat(task, node)
            if children is not None:
                left, right = children
                if len(lds1) < threshold:
                    lds1.append(right)
                    lds1.append(left)
                else:
                    lds2.append(right)
                    lds2.append(left)
                    if len(lds2) >= threshold:
                        pending.append(_Task(split(task), lds2))
                        lds2 = []
        loads.append(load)
    return loads


def _run_parallel(run, source, root_batch, threshold):
    def treat(task, node):
        return run.grow(task.source, node)

    def split(task):
        return run.split(task.source)

    return algorithm3(root_batch, threshold, treat, split, first_source=source)


def parallel(source: BitSource, cap: int, threshold: int,
             store: NodeStore | None = None) -> RefOutcome:
    """Threshold-parallel engine with deterministic lineage splitting."""
    run = _Run(store or NodeStore(workers=1), cap, source)
    packed, root = run.alloc_root()
    try:
        loads = _run_parallel(run, source, [packed], threshold)
    except OverflowSignal:
        return run.outcome()
    return run.outcome(root, tasks_spawned=len(loads) - 1, task_loads=loads)


def hybrid(source: BitSource, cap: int, threshold: int, switch_size: int,
           store: NodeStore | None = None) -> RefOutcome:
    """Iterative prefix until ``switch_size`` pending nodes, then parallel."""
    run = _Run(store or NodeStore(workers=1), cap, source)
    packed, root = run.alloc_root()
    try:
        stack = _sequential(run, source, [packed], switch_size)
        if not stack:  # finished below the switch point: purely sequential
            return run.outcome(root)
        loads = _run_parallel(run, source, stack, threshold)
    except OverflowSignal:
        return run.outcome()
    return run.outcome(root, tasks_spawned=len(loads) - 1, task_loads=loads)
