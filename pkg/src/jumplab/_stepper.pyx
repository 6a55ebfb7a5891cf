# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled stepping kernel for random walks through CSR adjacency.

Must stay observably identical to ``_stepper_py.step_walkers_chunk``: the
random byte ``rnd[k, i]`` drives walker i's k-th round of the chunk, and a
walker that finishes or dies simply stops reading its column.
"""

import numpy as np

cimport numpy as cnp

STATUS_ACTIVE = 0
STATUS_DONE = 1
STATUS_KILLED = 2


def step_walkers_chunk(
    cnp.int64_t[::1] pos,
    cnp.int64_t[::1] steps_done,
    cnp.int64_t[::1] next_k,
    cnp.int64_t[:, ::1] targets,
    cnp.int64_t[:, ::1] snaps,
    const cnp.uint8_t[:, ::1] rnd,
    cnp.int64_t[::1] indptr,
    cnp.int64_t[::1] indices,
    const cnp.uint8_t[::1] degmask,
    const cnp.uint8_t[::1] killmask,
    cnp.int64_t[::1] status,
):
    cdef Py_ssize_t n = pos.shape[0]
    cdef Py_ssize_t rounds = rnd.shape[0]
    cdef Py_ssize_t K = targets.shape[0]
    cdef Py_ssize_t i, r
    cdef cnp.int64_t p, k, sd

    for i in range(n):
        if status[i] != STATUS_ACTIVE:
            continue
        p = pos[i]
        sd = steps_done[i]
        k = next_k[i]
        for r in range(rounds):
            while k < K and targets[k, i] == sd:
                snaps[k, i] = p
                k += 1
            if k >= K:
                status[i] = STATUS_DONE
                break
            p = indices[indptr[p] + (rnd[r, i] & degmask[p])]
            sd += 1
            if killmask[p] != 0:
                status[i] = STATUS_KILLED
                break
        pos[i] = p
        steps_done[i] = sd
        next_k[i] = k
