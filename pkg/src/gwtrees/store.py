"""Slab-backed binary tree storage with pairwise-adjacent children.

Nodes live in per-worker chains of fixed-capacity slabs (mass allocation:
one numpy block per slab, opened only at slab boundaries). A node record is
a single int64: -1 for a leaf, otherwise the packed handle of its first
child; the second child is implicitly at the next offset, so children are
always adjacent in their creator's slab. After generation a store is
read-only and safe to traverse concurrently; ``reset`` recycles all slabs
for the next run and invalidates previous trees.
"""

import threading
from dataclasses import dataclass, field

import numpy as np
from numba.typed import List as NumbaList

from . import _kernels as K
from .errors import MalformedEncoding

DEFAULT_SLAB_CAPACITY = 1 << 16
LEAF = K.LEAF
OFF_BITS = K.OFF_BITS
OFF_MASK = K.OFF_MASK


@dataclass(frozen=True, order=True)
class NodeHandle:
    """Composite node address (value-comparable, relocatable)."""

    worker_id: int
    slab_index: int
    offset: int


@dataclass
class Slab:
    """Bookkeeping for one pre-allocated block; data lives in the store."""

    owner_worker: int
    index: int
    global_index: int
    capacity: int
    used: int = 0
    next_global: int | None = None


class _Arena:
    """Per-worker slab chain; single-writer during generation."""

    __slots__ = ("worker_id", "slab_globals", "current_pos")

    def __init__(self, worker_id):
        self.worker_id = worker_id
        self.slab_globals = []
        self.current_pos = -1


class NodeStore:
    def __init__(self, workers: int = 1, slab_capacity: int = DEFAULT_SLAB_CAPACITY):
        if slab_capacity < 2 or slab_capacity % 2:
            raise ValueError("slab capacity must be even and >= 2")
        self.slab_capacity = slab_capacity
        self.slabs: list[Slab] = []
        self._data: list[np.ndarray] = []
        self._arenas: list[_Arena] = []
        self._nb_list = None
        self._nb_len = 0
        self.deferred_writes = 0
        # guards registry appends (workers open slabs concurrently)
        self._registry_lock = threading.Lock()
        for _ in range(workers):
            self.add_worker()

    # -- workers and slabs

    @property
    def worker_count(self) -> int:
        return len(self._arenas)

    def add_worker(self) -> int:
        arena = _Arena(len(self._arenas))
        self._arenas.append(arena)
        return arena.worker_id

    def _arena(self, worker_id) -> _Arena:
        try:
            return self._arenas[worker_id]
        except IndexError:
            raise ValueError(f"worker {worker_id} not registered") from None

    def open_slab(self, worker_id: int, capacity: int | None = None) -> Slab:
        """Append a fresh block to the worker's chain and make it current."""
        arena = self._arena(worker_id)
        cap = self.slab_capacity if capacity is None else capacity
        if cap < 2 or cap % 2:
            raise ValueError("slab capacity must be even and >= 2")
        data = np.empty(cap, dtype=np.int64)
        with self._registry_lock:
            gidx = len(self.slabs)
            slab = Slab(owner_worker=worker_id, index=len(arena.slab_globals),
                        global_index=gidx, capacity=cap)
            if arena.slab_globals:
                self.slabs[arena.slab_globals[-1]].next_global = gidx
            self.slabs.append(slab)
            self._data.append(data)
            arena.slab_globals.append(gidx)
            arena.current_pos = len(arena.slab_globals) - 1
        return slab

    def current_slab(self, worker_id: int, need: int = 2) -> Slab:
        """Current block with room for ``need`` slots, opening one if full."""
        arena = self._arena(worker_id)
        if arena.current_pos >= 0:
            slab = self.slabs[arena.slab_globals[arena.current_pos]]
            if slab.used + need <= slab.capacity:
                return slab
            if arena.current_pos + 1 < len(arena.slab_globals):
                # recycled chain from a previous run
                arena.current_pos += 1
                slab = self.slabs[arena.slab_globals[arena.current_pos]]
                if slab.used + need <= slab.capacity:
                    return slab
        return self.open_slab(worker_id, capacity=max(self.slab_capacity,
                                                      _even(need)))

    def alloc_pair(self, worker_id: int) -> tuple[NodeHandle, NodeHandle]:
        """Two adjacent leaf records in the worker's current slab."""
        slab = self.current_slab(worker_id, 2)
        data = self._data[slab.global_index]
        off = slab.used
        data[off] = LEAF
        data[off + 1] = LEAF
        slab.used = off + 2
        first = NodeHandle(worker_id, slab.index, off)
        return first, NodeHandle(worker_id, slab.index, off + 1)

    def reset(self) -> None:
        """Recycle every slab; previously returned trees become invalid."""
        for slab in self.slabs:
            slab.used = 0
        for arena in self._arenas:
            arena.current_pos = 0 if arena.slab_globals else -1

    def slab_count(self, worker_id: int | None = None) -> int:
        if worker_id is None:
            return len(self.slabs)
        return len(self._arena(worker_id).slab_globals)

    # -- handle packing

    def pack(self, handle: NodeHandle) -> int:
        gidx = self._arena(handle.worker_id).slab_globals[handle.slab_index]
        return (gidx << OFF_BITS) | handle.offset

    def unpack(self, packed: int) -> NodeHandle:
        slab = self.slabs[packed >> OFF_BITS]
        return NodeHandle(slab.owner_worker, slab.index, packed & OFF_MASK)

    def record(self, packed: int) -> int:
        """Raw node record: LEAF or the packed handle of the first child."""
        return int(self._data[packed >> OFF_BITS][packed & OFF_MASK])

    def set_record(self, packed: int, value: int) -> None:
        self._data[packed >> OFF_BITS][packed & OFF_MASK] = value

    def first_child(self, handle: NodeHandle) -> NodeHandle | None:
        rec = self.record(self.pack(handle))
        return None if rec == LEAF else self.unpack(rec)

    # -- kernel plumbing

    def slab_data(self, global_index: int) -> np.ndarray:
        return self._data[global_index]

    def nb_slabs(self):
        """Typed list of slab arrays for the traversal kernels (cached).

        Callers traverse only after generation has quiesced; the lock just
        keeps the cache append itself orderly.
        """
        with self._registry_lock:
            if self._nb_list is None:
                self._nb_list = NumbaList.empty_list(K.i64_1d)
            while self._nb_len < len(self._data):
                self._nb_list.append(self._data[self._nb_len])
                self._nb_len += 1
            return self._nb_list

    def apply_deferred(self, defer: np.ndarray, count: int) -> None:
        """Apply parked cross-slab child links (handed-off batch records).

        Runs under the GIL on behalf of the task that owns those nodes, so
        slab arrays are never written concurrently.
        """
        for i in range(0, count, 2):
            node = int(defer[i])
            self._data[node >> OFF_BITS][node & OFF_MASK] = defer[i + 1]
        self.deferred_writes += count // 2


def _even(n: int) -> int:
    return n if n % 2 == 0 else n + 1


@dataclass
class Tree:
    """Immutable generated tree; ``node_count`` is maintained by builders."""

    store: NodeStore
    root: NodeHandle
    node_count: int
    _root_packed: int = field(default=-1, repr=False)

    @property
    def root_packed(self) -> int:
        if self._root_packed < 0:
            self._root_packed = self.store.pack(self.root)
        return self._root_packed


# ---------------------------------------------------------------------------
# encodings


def encode_bits(tree: Tree) -> str:
    """Depth-first preorder word: '1' per internal node, '0' per leaf."""
    out = np.empty(tree.node_count, dtype=np.uint8)
    depth = 4096
    slabs = tree.store.nb_slabs()
    while True:
        stack = np.empty(depth, dtype=np.int64)
        n = K.encode_into(slabs, tree.root_packed, out, stack)
        if n >= 0:
            break
        depth *= 4
    if n != tree.node_count:
        raise AssertionError(f"tree claims {tree.node_count} nodes, walked {n}")
    return out.tobytes().decode("ascii")


def bits_to_array(s: str) -> np.ndarray:
    """0/1 uint8 array of a preorder word, validating the prefix rule."""
    raw = np.frombuffer(s.encode("ascii"), dtype=np.uint8) - ord("0")
    bad = np.nonzero(raw > 1)[0]
    if bad.size:
        raise MalformedEncoding(int(bad[0]), f"invalid character at {bad[0]}")
    n = raw.shape[0]
    if n == 0:
        raise MalformedEncoding(0, "empty encoding")
    pending = 1 + np.cumsum(raw.astype(np.int64) * 2 - 1)
    exhausted = np.nonzero(pending == 0)[0]
    if exhausted.size == 0 or exhausted[0] != n - 1:
        index = int(exhausted[0]) + 1 if exhausted.size else n
        raise MalformedEncoding(index)
    return raw


def decode_bits(s: str, store: NodeStore | None = None, worker_id: int = 0) -> Tree:
    """Inverse of :func:`encode_bits`; raises MalformedEncoding otherwise."""
    bits = bits_to_array(s)
    n = bits.shape[0]
    if store is None:
        store = NodeStore(workers=1, slab_capacity=max(2, _even(n + 1)))
    slab = store.current_slab(worker_id, n + 1)
    stack = np.empty(n + 2, dtype=np.int64)
    used = K.decode_into(bits, store.slab_data(slab.global_index),
                         slab.global_index, slab.used, stack)
    if used < 0:  # unreachable after validation; kept as a hard check
        raise MalformedEncoding(-used - 1)
    root = NodeHandle(worker_id, slab.index, slab.used)
    slab.used = int(used)
    return Tree(store=store, root=root, node_count=n)


# ---------------------------------------------------------------------------
# structural measures


def size(tree: Tree) -> int:
    return tree.node_count


def height_nodes(tree: Tree) -> int:
    """Number of nodes on the longest root-to-leaf path."""
    n = tree.node_count
    stack = np.empty(n + 2, dtype=np.int64)
    depths = np.empty(n + 2, dtype=np.int64)
    return int(K.height_of(tree.store.nb_slabs(), tree.root_packed, stack, depths))


def left_spine(tree: Tree) -> int:
    """Nodes on the always-left path, including the terminating leaf."""
    return int(K.left_spine_of(tree.store.nb_slabs(), tree.root_packed))


def to_dot(tree: Tree) -> str:
    """DOT digraph with one line per node and one edge per parent-child link."""
    lines = ["digraph tree {"]
    store = tree.store
    counter = 0
    stack = [tree.root_packed]
    names = {}
    while stack:
        node = stack.pop()
        name = f"n{counter}"
        names[node] = name
        counter += 1
        child = store.record(node)
        shape = "circle" if child != LEAF else "point"
        lines.append(f"  {name} [shape={shape}];")
        if child != LEAF:
            stack.append(child + 1)
            stack.append(child)
    # second pass for edges, in the same preorder numbering
    stack = [tree.root_packed]
    while stack:
        node = stack.pop()
        child = store.record(node)
        if child != LEAF:
            lines.append(f"  {names[node]} -> {names[child]};")
            lines.append(f"  {names[node]} -> {names[child + 1]};")
            stack.append(child + 1)
            stack.append(child)
    lines.append("}")
    return "\n".join(lines) + "\n"
