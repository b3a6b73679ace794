"""Compiled kernels for generation, encoding, and tree measures.

Everything here operates on flat numpy views of the slab store:

* node records are int64 slots; ``-1`` means leaf, otherwise the packed
  handle of the first (left) child, whose pair partner sits at the next
  offset;
* a packed handle is ``(global_slab_index << OFF_BITS) | offset``;
* source state records are uint64 rows laid out per ``bits`` slot
  constants, padded to 128 bytes against false sharing.

The RNG routines are bit-exact twins of :mod:`gwtrees.prng`; the twin
contract is pinned by tests. Kernels never allocate and never touch
shared mutable state: a task kernel writes only its own current slab,
its own scratch arrays, and a deferred-write list that the caller
applies under the GIL (cross-slab child links of handed-off nodes).
"""

import numpy as np
from numba import int64, njit, uint64
from numba.types import Array, Tuple, UniTuple

# packed-handle layout
OFF_BITS = 36
OFF_MASK = (1 << OFF_BITS) - 1
LEAF = -1

# uint64 slots of a source state record (see bits.py)
_S1, _BUF, _LEFT, _KEY, _SPLITS = 1, 4, 5, 6, 7
_BITS, _WORDS, _PEND = 8, 9, 10

# int64 slots of a task counter block
C_N1, C_N2, C_MADE, C_GRANT, C_DEFER, C_SPAWN, C_USED = 0, 1, 2, 3, 4, 5, 6
C_BITS, C_WORDS, C_MAXWASTE, C_TASKS = 7, 8, 9, 10
CTR_SLOTS = 12

# kernel exit statuses
DONE = 0
SLAB_FULL = 1
GRANT_EMPTY = 2
SPAWN_FULL = 3
STACK_FULL = 4
SWITCHED = 5
DEPTH_LIMIT = 6

_MASK64 = uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = uint64(0x9E3779B97F4A7C15)
_STATE_SALT = uint64(0x1BD11BDAA9FC1A22)

u64_1d = Array(uint64, 1, "C")
i64_1d = Array(int64, 1, "C")
i64_2d = Array(int64, 2, "C")
u8_1d = Array(np.uint8, 1, "C")


@njit(uint64(uint64), cache=True, nogil=True)
def _mix64(z):
    z = (z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB)
    return z ^ (z >> uint64(31))


@njit(uint64(uint64, uint64), cache=True, nogil=True)
def child_key(key, index):
    return _mix64(key + _GOLDEN * (index + uint64(1)))


@njit(cache=True, nogil=True)
def fill_state(rec, key):
    """Fresh-source state for lineage ``key`` (twin of bits.fill_state_record)."""
    for i in range(rec.shape[0]):
        rec[i] = uint64(0)
    base = _mix64(key ^ _STATE_SALT)
    for j in range(4):
        rec[j] = _mix64(base + _GOLDEN * uint64(j + 1))
    if rec[0] | rec[1] | rec[2] | rec[3] == uint64(0):
        rec[0] = _GOLDEN
    rec[_KEY] = key


@njit(uint64(u64_1d), cache=True, nogil=True)
def next_word(rec):
    """xoshiro256** step on the state record; counts the drawn word."""
    s1 = rec[1]
    x = s1 * uint64(5)
    result = ((x << uint64(7)) | (x >> uint64(57))) * uint64(9)
    t = s1 << uint64(17)
    rec[2] ^= rec[0]
    rec[3] ^= s1
    rec[1] ^= rec[2]
    rec[0] ^= rec[3]
    rec[2] ^= t
    s3 = rec[3]
    rec[3] = (s3 << uint64(45)) | (s3 >> uint64(19))
    rec[_WORDS] += uint64(1)
    return result


@njit(int64(u64_1d), cache=True, nogil=True)
def next_bit(rec):
    if rec[_LEFT] == uint64(0):
        rec[_BUF] = next_word(rec)
        rec[_LEFT] = uint64(64)
    bit = int64(rec[_BUF] & uint64(1))
    rec[_BUF] >>= uint64(1)
    rec[_LEFT] -= uint64(1)
    rec[_BITS] += uint64(1)
    return bit


@njit(int64(u64_1d, int64), cache=True, nogil=True)
def next_below(rec, bound):
    """Uniform int in [0, bound) by bit rejection, low bit first."""
    if bound <= 1:
        return 0
    nbits = 0
    b = bound - 1
    while b > 0:
        nbits += 1
        b >>= 1
    while True:
        value = int64(0)
        for i in range(nbits):
            value |= next_bit(rec) << i
        if value < bound:
            return value


# ---------------------------------------------------------------------------
# generation kernels


@njit(cache=True, nogil=True)
def run_task(rec, ctr, lds1, lds2, slab, slab_gidx, defer, spawn_out, threshold):
    """One resumable execution slice of a threshold-parallel task.

    Pops from lds2 when non-empty, else lds1; an internal node's children go
    to lds1 while it holds fewer than ``threshold`` nodes, otherwise to lds2;
    a full lds2 is emitted as a spawn row (child lineage key, batch handles)
    and replaced by an empty one. Exits with a status whenever it needs the
    caller: new slab, more node budget, or room for spawn rows.
    """
    n1 = ctr[C_N1]
    n2 = ctr[C_N2]
    made = ctr[C_MADE]
    grant = ctr[C_GRANT]
    dn = ctr[C_DEFER]
    sp = ctr[C_SPAWN]
    used = ctr[C_USED]
    slab_cap = slab.shape[0]
    spawn_cap = spawn_out.shape[0]
    base = slab_gidx << OFF_BITS
    status = DONE

    while True:
        if n2 >= threshold:
            # hand lds2 off to a new task
            if sp >= spawn_cap:
                status = SPAWN_FULL
                break
            ck = child_key(rec[_KEY], rec[_SPLITS])
            rec[_SPLITS] += uint64(1)
            spawn_out[sp, 0] = int64(ck)
            spawn_out[sp, 1] = n2
            for i in range(n2):
                spawn_out[sp, 2 + i] = lds2[i]
            sp += 1
            n2 = 0
        if n1 + n2 == 0:
            status = DONE
            break
        if n2 > 0:
            n2 -= 1
            node = lds2[n2]
            from2 = True
        else:
            n1 -= 1
            node = lds1[n1]
            from2 = False
        if rec[_PEND] != uint64(0):
            bit = int64(1)
            rec[_PEND] = uint64(0)
        else:
            bit = next_bit(rec)
        if bit == 0:
            continue  # leaf: record already -1
        if grant < 2 or used + 2 > slab_cap:
            # park the drawn bit and the node, hand control back
            rec[_PEND] = uint64(1)
            if from2:
                lds2[n2] = node
                n2 += 1
            else:
                lds1[n1] = node
                n1 += 1
            status = GRANT_EMPTY if grant < 2 else SLAB_FULL
            break
        c = base | used
        slab[used] = LEAF
        slab[used + 1] = LEAF
        used += 2
        grant -= 2
        made += 2
        if (node >> OFF_BITS) == slab_gidx:
            slab[node & OFF_MASK] = c
        else:
            defer[dn] = node
            defer[dn + 1] = c
            dn += 2
        if n1 < threshold:
            lds1[n1] = c + 1
            lds1[n1 + 1] = c
            n1 += 2
        else:
            lds2[n2] = c + 1
            lds2[n2 + 1] = c
            n2 += 2

    ctr[C_N1] = n1
    ctr[C_N2] = n2
    ctr[C_MADE] = made
    ctr[C_GRANT] = grant
    ctr[C_DEFER] = dn
    ctr[C_SPAWN] = sp
    ctr[C_USED] = used
    return status


@njit(cache=True, nogil=True)
def run_iterative(rec, ctr, stack, slab, slab_gidx, defer, switch_size):
    """Explicit-stack sequential engine slice; bit order matches recursion.

    Children are pushed right-then-left so the left child is popped first.
    With ``switch_size > 0`` the kernel exits as soon as the pending stack
    holds at least that many nodes (hybrid hand-over point).
    """
    n1 = ctr[C_N1]
    made = ctr[C_MADE]
    grant = ctr[C_GRANT]
    dn = ctr[C_DEFER]
    used = ctr[C_USED]
    slab_cap = slab.shape[0]
    stack_cap = stack.shape[0]
    base = slab_gidx << OFF_BITS
    status = DONE

    while n1 > 0:
        n1 -= 1
        node = stack[n1]
        if rec[_PEND] != uint64(0):
            bit = int64(1)
            rec[_PEND] = uint64(0)
        else:
            bit = next_bit(rec)
        if bit == 0:
            continue
        if grant < 2 or used + 2 > slab_cap or n1 + 2 > stack_cap:
            rec[_PEND] = uint64(1)
            stack[n1] = node
            n1 += 1
            if grant < 2:
                status = GRANT_EMPTY
            elif used + 2 > slab_cap:
                status = SLAB_FULL
            else:
                status = STACK_FULL
            break
        c = base | used
        slab[used] = LEAF
        slab[used + 1] = LEAF
        used += 2
        grant -= 2
        made += 2
        if (node >> OFF_BITS) == slab_gidx:
            slab[node & OFF_MASK] = c
        else:
            defer[dn] = node
            defer[dn + 1] = c
            dn += 2
        stack[n1] = c + 1
        stack[n1 + 1] = c
        n1 += 2
        if switch_size > 0 and n1 >= switch_size:
            status = SWITCHED
            break

    ctr[C_N1] = n1
    ctr[C_MADE] = made
    ctr[C_GRANT] = grant
    ctr[C_DEFER] = dn
    ctr[C_USED] = used
    return status


@njit(int64(u64_1d, i64_1d, i64_1d, int64, int64, int64), cache=True, nogil=True)
def _naive_rec(rec, ctr, slab, base, node_off, depth):
    bit = next_bit(rec)
    if bit == 0:
        return DONE
    if ctr[C_GRANT] < 2:
        return GRANT_EMPTY
    used = ctr[C_USED]
    if used + 2 > slab.shape[0]:
        return SLAB_FULL
    if depth >= 1_000_000:
        return DEPTH_LIMIT
    slab[used] = LEAF
    slab[used + 1] = LEAF
    slab[node_off] = base | used
    ctr[C_USED] = used + 2
    ctr[C_GRANT] -= 2
    ctr[C_MADE] += 2
    st = _naive_rec(rec, ctr, slab, base, used, depth + 1)
    if st != DONE:
        return st
    return _naive_rec(rec, ctr, slab, base, used + 1, depth + 1)


@njit(cache=True, nogil=True)
def run_naive(rec, ctr, slab, slab_gidx, root_off):
    """Doubly recursive engine; single slab, not resumable (retry on full)."""
    return _naive_rec(rec, ctr, slab, slab_gidx << OFF_BITS, root_off, 0)


@njit(cache=True, nogil=True)
def _note_task_end(rec, ctr):
    bits = int64(rec[_BITS])
    words = int64(rec[_WORDS])
    ctr[C_BITS] += bits
    ctr[C_WORDS] += words
    waste = words * 64 - bits
    if waste > ctr[C_MAXWASTE]:
        ctr[C_MAXWASTE] = waste
    ctr[C_TASKS] += 1


@njit(cache=True, nogil=True)
def _reset_attempt_ctr(ctr):
    bits_acc = ctr[C_BITS]
    words_acc = ctr[C_WORDS]
    waste_acc = ctr[C_MAXWASTE]
    tasks_acc = ctr[C_TASKS]
    for i in range(CTR_SLOTS):
        ctr[i] = 0
    ctr[C_BITS] = bits_acc
    ctr[C_WORDS] = words_acc
    ctr[C_MAXWASTE] = waste_acc
    ctr[C_TASKS] = tasks_acc


@njit(cache=True, nogil=True)
def _attempt_task_loop(rec, ctr, lds1, lds2, slab, slab_gidx, defer, spawn_out,
                       task_keys, task_batches, task_counts, threshold):
    """Drain the current task plus everything it spawns, LIFO.

    LIFO is the order a pool worker's own deque would use; by the
    scheduler-independence contract the tree does not depend on it. Returns
    0 on completion, GRANT_EMPTY when the budget in ctr would be exceeded,
    negative on internal errors.
    """
    n_stack = 0
    while True:
        status = run_task(rec, ctr, lds1, lds2, slab, slab_gidx, defer,
                          spawn_out, threshold)
        nsp = ctr[C_SPAWN]
        if nsp > 0:
            for i in range(nsp):
                if n_stack >= task_keys.shape[0]:
                    return -2
                task_keys[n_stack] = uint64(spawn_out[i, 0])
                cnt = spawn_out[i, 1]
                task_counts[n_stack] = cnt
                for j in range(cnt):
                    task_batches[n_stack, j] = spawn_out[i, 2 + j]
                n_stack += 1
            ctr[C_SPAWN] = 0
        if status == SPAWN_FULL:
            continue
        if status == GRANT_EMPTY:
            _note_task_end(rec, ctr)
            return GRANT_EMPTY
        if status == DONE:
            _note_task_end(rec, ctr)
            if n_stack == 0:
                return 0
            n_stack -= 1
            fill_state(rec, task_keys[n_stack])
            cnt = task_counts[n_stack]
            for j in range(cnt):
                lds1[j] = task_batches[n_stack, j]
            ctr[C_N1] = cnt
            ctr[C_N2] = 0
            continue
        return -1  # SLAB_FULL cannot happen: the slab covers the budget


@njit(cache=True, nogil=True)
def rejection_attempts(rec, ctr, lds1, lds2, slab, slab_gidx, defer, spawn_out,
                       task_keys, task_batches, task_counts,
                       threshold, run_key, attempt_lo, attempt_hi, target_n):
    """Size-conditioned rejection attempts of the threshold-parallel engine.

    Attempt ``a`` uses the fresh root source ``child_key(run_key, a)`` and a
    node budget of exactly ``target_n``. Returns ``(attempt, code)``: code
    1 = success with the tree rooted at slab offset 0; 0 = range exhausted;
    negative = internal error. The whole attempt lives in one slab, so
    cross-slab deferred writes never occur. Cumulative bits/words/waste
    counters accumulate in ``ctr``.
    """
    for a in range(attempt_lo, attempt_hi):
        fill_state(rec, child_key(run_key, uint64(a)))
        _reset_attempt_ctr(ctr)
        slab[0] = LEAF
        slab[1] = LEAF
        ctr[C_USED] = 2
        lds1[0] = slab_gidx << OFF_BITS
        ctr[C_N1] = 1
        ctr[C_GRANT] = target_n - 1
        code = _attempt_task_loop(rec, ctr, lds1, lds2, slab, slab_gidx, defer,
                                  spawn_out, task_keys, task_batches,
                                  task_counts, threshold)
        if code < 0:
            return a, code
        if code == 0 and ctr[C_MADE] + 1 == target_n:
            return a, 1
    return attempt_hi, 0


@njit(cache=True, nogil=True)
def rejection_attempts_hybrid(rec, ctr, lds1, lds2, slab, slab_gidx, defer,
                              spawn_out, task_keys, task_batches, task_counts,
                              stack, threshold, switch_size, run_key,
                              attempt_lo, attempt_hi, target_n):
    """Rejection attempts of the hybrid engine (iterative prefix, then tasks)."""
    for a in range(attempt_lo, attempt_hi):
        fill_state(rec, child_key(run_key, uint64(a)))
        _reset_attempt_ctr(ctr)
        slab[0] = LEAF
        slab[1] = LEAF
        ctr[C_USED] = 2
        stack[0] = slab_gidx << OFF_BITS
        ctr[C_N1] = 1
        ctr[C_GRANT] = target_n - 1
        status = run_iterative(rec, ctr, stack, slab, slab_gidx, defer,
                               switch_size)
        if status == SWITCHED:
            n1 = ctr[C_N1]
            for j in range(n1):
                lds1[j] = stack[j]
            code = _attempt_task_loop(rec, ctr, lds1, lds2, slab, slab_gidx,
                                      defer, spawn_out, task_keys,
                                      task_batches, task_counts, threshold)
            if code < 0:
                return a, code
            if code != 0:
                continue  # budget exceeded: reject
        elif status == GRANT_EMPTY:
            _note_task_end(rec, ctr)
            continue
        elif status == DONE:
            _note_task_end(rec, ctr)
        else:
            return a, -1
        if ctr[C_MADE] + 1 == target_n:
            return a, 1
    return attempt_hi, 0


@njit(cache=True, nogil=True)
def rejection_attempts_naive(rec, ctr, slab, slab_gidx, run_key,
                             attempt_lo, attempt_hi, target_n):
    """Rejection attempts of the doubly recursive engine."""
    for a in range(attempt_lo, attempt_hi):
        fill_state(rec, child_key(run_key, uint64(a)))
        _reset_attempt_ctr(ctr)
        slab[0] = LEAF
        slab[1] = LEAF
        ctr[C_USED] = 2
        ctr[C_GRANT] = target_n - 1
        status = run_naive(rec, ctr, slab, slab_gidx, 0)
        _note_task_end(rec, ctr)
        if status == DONE and ctr[C_MADE] + 1 == target_n:
            return a, 1
        if status != DONE and status != GRANT_EMPTY:
            return a, -1
    return attempt_hi, 0


@njit(cache=True, nogil=True)
def rejection_attempts_seq(rec, ctr, stack, slab, slab_gidx, defer,
                           run_key, attempt_lo, attempt_hi, target_n):
    """Rejection attempts of the iterative engine (single task per attempt)."""
    for a in range(attempt_lo, attempt_hi):
        bits_acc = ctr[C_BITS]
        words_acc = ctr[C_WORDS]
        waste_acc = ctr[C_MAXWASTE]
        tasks_acc = ctr[C_TASKS]
        fill_state(rec, child_key(run_key, uint64(a)))
        for i in range(CTR_SLOTS):
            ctr[i] = 0
        ctr[C_BITS] = bits_acc
        ctr[C_WORDS] = words_acc
        ctr[C_MAXWASTE] = waste_acc
        ctr[C_TASKS] = tasks_acc
        slab[0] = LEAF
        slab[1] = LEAF
        ctr[C_USED] = 2
        stack[0] = slab_gidx << OFF_BITS
        ctr[C_N1] = 1
        ctr[C_GRANT] = target_n - 1
        status = run_iterative(rec, ctr, stack, slab, slab_gidx, defer, 0)
        _note_task_end(rec, ctr)
        if status == DONE and ctr[C_MADE] + 1 == target_n:
            return a, 1
        if status != DONE and status != GRANT_EMPTY:
            return a, -1
    return attempt_hi, 0


# ---------------------------------------------------------------------------
# encoding / decoding


@njit(cache=True, nogil=True)
def decode_into(bits, slab, slab_gidx, scratch_base, stack):
    """Build the tree of a 0/1 preorder word inside one slab.

    Returns the new ``used`` on success, ``-(i + 1)`` when the prefix rule
    first fails at position ``i`` (with ``i == len`` for a word that ends
    with pending nodes).
    """
    n = bits.shape[0]
    base = slab_gidx << OFF_BITS
    used = scratch_base
    slab[used] = LEAF
    slab[used + 1] = LEAF
    root = base | used
    used += 2
    stack[0] = root
    sp = 1
    for i in range(n):
        if sp == 0:
            return -(i + 1)
        sp -= 1
        node = stack[sp]
        if bits[i] == 1:
            c = base | used
            slab[used] = LEAF
            slab[used + 1] = LEAF
            used += 2
            slab[node & OFF_MASK] = c
            stack[sp] = c + 1
            stack[sp + 1] = c
            sp += 2
    if sp != 0:
        return -(n + 1)
    return used


@njit(cache=True, nogil=True)
def encode_into(slabs, root, out, stack):
    """Preorder '1'/'0' bytes of the tree at ``root``; -1 if stack too small."""
    stack[0] = root
    sp = 1
    k = 0
    cap = stack.shape[0]
    while sp > 0:
        sp -= 1
        node = stack[sp]
        child = slabs[node >> OFF_BITS][node & OFF_MASK]
        if child == LEAF:
            out[k] = 48
        else:
            out[k] = 49
            if sp + 2 > cap:
                return -1
            stack[sp] = child + 1
            stack[sp + 1] = child
            sp += 2
        k += 1
    return k


# ---------------------------------------------------------------------------
# conditioned sampling (cycle lemma)


@njit(cache=True, nogil=True)
def cycle_sample(rec, word, rotated):
    """Uniform preorder word of size n into ``rotated`` (0/1 uint8).

    Shuffles (n-1)/2 ones and (n+1)/2 zeros by Fisher-Yates, then applies
    the unique rotation starting right after the first position achieving
    the minimum +-1 prefix sum.
    """
    n = word.shape[0]
    m = (n - 1) // 2
    for i in range(m):
        word[i] = 1
    for i in range(m, n):
        word[i] = 0
    for i in range(n - 1, 0, -1):
        j = next_below(rec, i + 1)
        tmp = word[i]
        word[i] = word[j]
        word[j] = tmp
    run = 0
    best = 1
    cut = 0
    for i in range(n):
        run += 1 if word[i] == 1 else -1
        if run < best:
            best = run
            cut = i + 1
    for i in range(n):
        j = cut + i
        if j >= n:
            j -= n
        rotated[i] = word[j]
    return cut


# ---------------------------------------------------------------------------
# tree measures (read-only, post-generation)


@njit(cache=True, nogil=True)
def size_of(slabs, root, stack):
    stack[0] = root
    sp = 1
    count = 0
    while sp > 0:
        sp -= 1
        node = stack[sp]
        count += 1
        child = slabs[node >> OFF_BITS][node & OFF_MASK]
        if child != LEAF:
            stack[sp] = child + 1
            stack[sp + 1] = child
            sp += 2
    return count


@njit(cache=True, nogil=True)
def height_of(slabs, root, stack, depths):
    stack[0] = root
    depths[0] = 1
    sp = 1
    best = 0
    while sp > 0:
        sp -= 1
        node = stack[sp]
        d = depths[sp]
        if d > best:
            best = d
        child = slabs[node >> OFF_BITS][node & OFF_MASK]
        if child != LEAF:
            stack[sp] = child + 1
            depths[sp] = d + 1
            stack[sp + 1] = child
            depths[sp + 1] = d + 1
            sp += 2
    return best


@njit(cache=True, nogil=True)
def left_spine_of(slabs, root):
    node = root
    count = 1
    while True:
        child = slabs[node >> OFF_BITS][node & OFF_MASK]
        if child == LEAF:
            return count
        node = child
        count += 1


@njit(cache=True, nogil=True)
def mark_lifetime2_of(slabs, root):
    """Threshold-2 first-task mark count (see replay.mark_lifetime)."""
    node = root
    k = 0
    while True:
        child = slabs[node >> OFF_BITS][node & OFF_MASK]
        if child == LEAF:
            return k + 1
        lc = slabs[child >> OFF_BITS][child & OFF_MASK]
        rc = slabs[(child + 1) >> OFF_BITS][(child + 1) & OFF_MASK]
        if lc == LEAF and rc == LEAF:
            return k + 3
        k += 2
        if lc == LEAF:
            node = child + 1
        else:
            node = child  # right leaf or both internal: descend left


@njit(cache=True, nogil=True)
def peak_bfs(slabs, root, queue):
    """Max pending count of the queue-discipline replay; queue sized >= size."""
    queue[0] = root
    tail = 1
    head = 0
    pending = 1
    peak = 1
    while head < tail:
        node = queue[head]
        head += 1
        pending -= 1
        child = slabs[node >> OFF_BITS][node & OFF_MASK]
        if child != LEAF:
            queue[tail] = child
            queue[tail + 1] = child + 1
            tail += 2
            pending += 2
        if pending > peak:
            peak = pending
    return peak


@njit(cache=True, nogil=True)
def peak_dfs(slabs, root, stack):
    """Max pending count of the stack-left-first replay."""
    stack[0] = root
    sp = 1
    peak = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        child = slabs[node >> OFF_BITS][node & OFF_MASK]
        if child != LEAF:
            stack[sp] = child + 1
            stack[sp + 1] = child
            sp += 2
        if sp > peak:
            peak = sp
    return peak


@njit(cache=True, nogil=True)
def schedule_time2(slabs, root, stack, steps, levels):
    """Threshold-2 marking-model schedule simulation.

    Returns (max completion step, nodes checked at level >= 1, count outside
    the 2h-1/2h window, max of completion - 2*level). Scratch arrays must
    hold at least size+2 entries.
    """
    stack[0] = root
    steps[0] = 1
    levels[0] = 0
    sp = 1
    max_step = 0
    checked = 0
    outside = 0
    max_slack = -(1 << 60)
    while sp > 0:
        sp -= 1
        v = stack[sp]
        s = steps[sp]
        lvl = levels[sp]
        while True:
            if s > max_step:
                max_step = s
            if lvl >= 1:
                checked += 1
                if s != 2 * lvl - 1 and s != 2 * lvl:
                    outside += 1
                if s - 2 * lvl > max_slack:
                    max_slack = s - 2 * lvl
            c = slabs[v >> OFF_BITS][v & OFF_MASK]
            if c == LEAF:
                break
            lc = slabs[c >> OFF_BITS][c & OFF_MASK]
            rc = slabs[(c + 1) >> OFF_BITS][(c + 1) & OFF_MASK]
            if lc == LEAF and rc == LEAF:
                # both leaves processed in-task at s+1, s+2
                for d in range(1, 3):
                    if s + d > max_step:
                        max_step = s + d
                    checked += 1
                    if s + d != 2 * (lvl + 1) - 1 and s + d != 2 * (lvl + 1):
                        outside += 1
                    if s + d - 2 * (lvl + 1) > max_slack:
                        max_slack = s + d - 2 * (lvl + 1)
                break
            if lc == LEAF or rc == LEAF:
                # the leaf child is processed in-task at s+1, then descend
                if s + 1 > max_step:
                    max_step = s + 1
                checked += 1
                if s + 1 != 2 * (lvl + 1) - 1 and s + 1 != 2 * (lvl + 1):
                    outside += 1
                if s + 1 - 2 * (lvl + 1) > max_slack:
                    max_slack = s + 1 - 2 * (lvl + 1)
                v = c + 1 if lc == LEAF else c
                s += 2
                lvl += 1
                continue
            # both internal: the right child's root is this task's extra
            # mark at s+1; the right child's subtrees are handed off and
            # start one step later; descend left in-task
            if s + 1 > max_step:
                max_step = s + 1
            checked += 1
            if s + 1 != 2 * (lvl + 1) - 1 and s + 1 != 2 * (lvl + 1):
                outside += 1
            if s + 1 - 2 * (lvl + 1) > max_slack:
                max_slack = s + 1 - 2 * (lvl + 1)
            stack[sp] = rc
            steps[sp] = s + 2
            levels[sp] = lvl + 2
            stack[sp + 1] = rc + 1
            steps[sp + 1] = s + 2
            levels[sp + 1] = lvl + 2
            sp += 2
            v = c
            s += 2
            lvl += 1
    return max_step, checked, outside, max_slack
