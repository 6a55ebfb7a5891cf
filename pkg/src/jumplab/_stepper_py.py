"""Pure-NumPy stepping kernel, semantics-identical to the compiled one.

Both backends consume the pre-drawn random byte matrix positionally:
``rnd[k, i]`` belongs to walker ``i``'s k-th round of this chunk, whether or
not the walker is still active, so results are bit-identical across
backends and across any thread-level partitioning done by the caller.
"""

import numpy as np

STATUS_ACTIVE = 0
STATUS_DONE = 1
STATUS_KILLED = 2


def step_walkers_chunk(pos, steps_done, next_k, targets, snaps, rnd, indptr, indices, degmask, killmask, status):
    """Advance walkers through one chunk of pre-drawn random rounds.

    pos, steps_done, next_k, status : int64 [n], updated in place
    targets : int64 [K, n] non-decreasing step counts per walker
    snaps   : int64 [K, n] recorded vertex per target, -1 while pending
    rnd     : uint8 [rounds, n]
    degmask : uint8 [V] = degree-1 (degrees must be powers of two)
    killmask: uint8 [V] nonzero marks absorbing vertices
    """
    K = targets.shape[0]
    n = pos.shape[0]
    ids = np.arange(n)
    active = status == STATUS_ACTIVE
    for r in range(rnd.shape[0]):
        # record snapshots due at the current step count (ties need a loop)
        while True:
            pending = active & (next_k < K)
            if not pending.any():
                break
            kk = np.where(pending, np.minimum(next_k, K - 1), 0)
            due = pending & (targets[kk, ids] == steps_done)
            if not due.any():
                break
            snaps[kk[due], ids[due]] = pos[due]
            next_k[due] += 1
        finished = active & (next_k >= K)
        if finished.any():
            status[finished] = STATUS_DONE
            active &= ~finished
        if not active.any():
            break
        ai = np.flatnonzero(active)
        p = pos[ai]
        p = indices[indptr[p] + (rnd[r, ai] & degmask[p])]
        pos[ai] = p
        steps_done[ai] += 1
        dead = killmask[p] != 0
        if dead.any():
            ki = ai[dead]
            status[ki] = STATUS_KILLED
            active[ki] = False
