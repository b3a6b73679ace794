"""Deterministic analyses of a generated tree.

All functions are pure: they re-walk an existing tree (no randomness) to
answer how the generation process would have treated it - which nodes the
first task marks, how Algorithm-style task hand-off partitions the work,
how many steps an unbounded-worker schedule needs, and how large the
pending structure gets.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import UnsupportedThreshold
from .reference import algorithm3
from .store import LEAF, Tree, height_nodes, left_spine


@dataclass(frozen=True)
class LifetimeRecord:
    lifetime: int
    model: str  # "marking" or "engine"
    threshold: int


@dataclass(frozen=True)
class RunMetrics:
    peak_load: int
    parallel_time: int | None
    tasks_spawned: int
    per_task_loads: tuple


def mark_lifetime(tree: Tree, threshold: int) -> int:
    """Nodes marked for the first task under the marking model.

    Threshold 1 marks the left spine. Threshold 2 marks, per internal node
    of the chain, the node itself plus either its leaf child or the right
    child's root, descending into the remaining subtree (both children of
    the deepest chain node are marked when both are leaves).
    """
    if threshold == 1:
        return left_spine(tree)
    if threshold == 2:
        return int(K.mark_lifetime2_of(tree.store.nb_slabs(), tree.root_packed))
    raise UnsupportedThreshold(f"marking model defined for thresholds 1 and 2, got {threshold}")


def engine_lifetime(tree: Tree, threshold: int) -> tuple[LifetimeRecord, RunMetrics]:
    """Literal replay of the threshold-parallel control flow on ``tree``.

    Re-runs the push/pop/hand-off logic with the tree's known branching,
    consuming no randomness, and reports the per-task node loads.
    """
    if threshold < 1:
        raise UnsupportedThreshold("threshold must be >= 1")
    store = tree.store

    def treat(task, node):
        child = store.record(node)
        return None if child == LEAF else (child, child + 1)

    loads = algorithm3([tree.root_packed], threshold, treat, lambda task: None)
    record = LifetimeRecord(lifetime=loads[0], model="engine", threshold=threshold)
    metrics = RunMetrics(
        peak_load=peak_load(tree, "bfs"),
        parallel_time=parallel_time(tree, threshold) if threshold in (1, 2) else None,
        tasks_spawned=len(loads) - 1,
        per_task_loads=tuple(loads))
    return record, metrics


def parallel_time(tree: Tree, threshold: int) -> int:
    """Completion step of the last node under unbounded workers.

    Threshold 1: every node is treated one step after its parent, so the
    answer is the height in nodes. Threshold 2: simulates the marking-model
    schedule (one marked node per task per step; root -> companion mark ->
    descent; spawned tasks start one step after their hand-off).
    """
    if threshold == 1:
        return height_nodes(tree)
    if threshold == 2:
        return schedule_details(tree).time
    raise UnsupportedThreshold(f"schedule defined for thresholds 1 and 2, got {threshold}")


@dataclass(frozen=True)
class ScheduleStats:
    time: int
    nodes_checked: int
    outside_window: int
    max_slack: int

    @property
    def violation_rate(self) -> float:
        return self.outside_window / self.nodes_checked if self.nodes_checked else 0.0


def schedule_details(tree: Tree) -> ScheduleStats:
    """Threshold-2 schedule plus per-node timing-window accounting.

    For every non-root node at level h the completion step is compared with
    the {2h-1, 2h} window; the root completes at step 1 by convention.
    ``max_slack`` is the largest completion - 2*level over non-root nodes.
    """
    n = tree.node_count
    stack = np.empty(n + 2, dtype=np.int64)
    steps = np.empty(n + 2, dtype=np.int64)
    levels = np.empty(n + 2, dtype=np.int64)
    t, checked, outside, slack = K.schedule_time2(
        tree.store.nb_slabs(), tree.root_packed, stack, steps, levels)
    return ScheduleStats(int(t), int(checked), int(outside), int(slack))


def peak_load(tree: Tree, order: str = "bfs") -> int:
    """Maximum pending-node count of the single-structure replay.

    The pending count starts at 1 (the root) and is recorded after every
    pop-and-push step; ``bfs`` replays a queue, ``dfs`` the left-first stack.
    """
    n = tree.node_count
    scratch = np.empty(n + 2, dtype=np.int64)
    slabs = tree.store.nb_slabs()
    if order == "bfs":
        return int(K.peak_bfs(slabs, tree.root_packed, scratch))
    if order == "dfs":
        return int(K.peak_dfs(slabs, tree.root_packed, scratch))
    raise ValueError(f"order must be 'bfs' or 'dfs', got {order!r}")
