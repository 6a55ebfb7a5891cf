"""Stepping-kernel backend selection.

The compiled extension is preferred when importable; set
``JUMPLAB_BACKEND=python`` (or ``c``) to force a choice.  Both backends
consume identical pre-drawn randomness, so estimates are bit-identical
whichever one runs.
"""

from __future__ import annotations

import os
import time

import numpy as np

from . import _stepper_py

try:
    from . import _stepper as _stepper_c
except ImportError:  # extension not built; the fallback carries the suite
    _stepper_c = None


def available_backends() -> list[str]:
    return ["python"] + (["c"] if _stepper_c is not None else [])


def select_backend(name: str | None = None):
    """Returns (module, name).  ``name=None`` honours JUMPLAB_BACKEND, then
    prefers the compiled kernel."""
    if name is None:
        name = os.environ.get("JUMPLAB_BACKEND", "auto")
    if name in ("auto", ""):
        name = "c" if _stepper_c is not None else "python"
    if name == "c":
        if _stepper_c is None:
            raise RuntimeError("compiled stepping kernel not available; rebuild or use python backend")
        return _stepper_c, "c"
    if name == "python":
        return _stepper_py, "python"
    raise ValueError(f"unknown backend {name!r}")


def benchmark(n_walkers: int = 20_000, n_steps: int = 400, seed: int = 7) -> dict:
    """Walker-steps per second for each available backend on a small gasket.

    Identical inputs feed both kernels; the result dict also records that
    their outputs matched exactly.
    """
    from .fractal import build_gasket

    g = build_gasket(6)
    rng = np.random.default_rng(seed)
    start = int(np.argmin((g.coords[:, 0] - g.coords[:, 0].mean()) ** 2 + (g.coords[:, 1] - g.coords[:, 1].mean()) ** 2))
    degmask = (np.diff(g.indptr) - 1).astype(np.uint8)
    killmask = np.zeros(g.n_vertices, dtype=np.uint8)
    targets = np.full((1, n_walkers), n_steps, dtype=np.int64)
    rnd = rng.integers(0, 256, size=(n_steps + 1, n_walkers), dtype=np.uint8)

    results = {}
    outputs = {}
    for name in available_backends():
        mod, _ = select_backend(name)
        pos = np.full(n_walkers, start, dtype=np.int64)
        steps = np.zeros(n_walkers, dtype=np.int64)
        next_k = np.zeros(n_walkers, dtype=np.int64)
        snaps = np.full((1, n_walkers), -1, dtype=np.int64)
        status = np.zeros(n_walkers, dtype=np.int64)
        t0 = time.perf_counter()
        mod.step_walkers_chunk(pos, steps, next_k, targets, snaps, rnd, g.indptr, g.indices, degmask, killmask, status)
        dt = time.perf_counter() - t0
        results[name] = n_walkers * n_steps / dt
        outputs[name] = snaps.copy()
    agree = True
    if len(outputs) == 2:
        agree = bool(np.array_equal(outputs["python"], outputs["c"]))
    return {"steps_per_second": results, "outputs_identical": agree}
