"""Seeded, chunked Monte Carlo over independent instances.

Sample ``k`` of a run always uses ``derive_seed(master, 0, k)``.  Work is
cut into fixed index chunks and merged in index order, so results do not
depend on the number of workers.  A sample that hits a degenerate instance
or a solver failure is skipped and reported, never silently dropped.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .. import _parallel
from ..ensemble import INSTANCE_STREAM, ModelParams, derive_seed, sample_instance, spectrum
from ..errors import LandscapeError
from ..stationary import SecularSystem, smallest_multipliers

log = logging.getLogger(__name__)


@dataclass
class SampleBatch:
    """Per-sample results in index order plus the indices that were skipped."""

    values: list = field(default_factory=list)
    indices: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def extend(self, other: "SampleBatch") -> None:
        self.values.extend(other.values)
        self.indices.extend(other.indices)
        self.skipped.extend(other.skipped)


def instance_seed(master: int, k: int) -> int:
    return derive_seed(master, INSTANCE_STREAM, k)


def _spectrum_for(params, master, k):
    return spectrum(sample_instance(params, instance_seed(master, k)))


def _task_counts(spec, sigma2s):
    return SecularSystem(spec).count(np.asarray(sigma2s, dtype=float))


def _task_roots(spec, sigma2s):
    system = SecularSystem(spec)
    return [system.solve(s2)[0] for s2 in sigma2s]


_TASKS = {"counts": _task_counts, "roots": _task_roots}


def _run_chunk(lo, hi, task, params, master, arg):
    out = SampleBatch()
    fn = _TASKS[task]
    for k in range(lo, hi):
        try:
            value = fn(_spectrum_for(params, master, k), arg)
        except LandscapeError as exc:
            out.skipped.append((k, type(exc).__name__))
            continue
        out.values.append(value)
        out.indices.append(k)
    return out


def _min_chunk(lo, hi, params, master, sigma2s):
    specs, idx = [], []
    for k in range(lo, hi):
        specs.append(_spectrum_for(params, master, k))
        idx.append(k)
    out = SampleBatch()
    lam = np.empty((len(specs), len(sigma2s)))
    emin = np.empty_like(lam)
    try:
        for j, s2 in enumerate(sigma2s):
            lam[:, j], emin[:, j] = smallest_multipliers(specs, s2)
    except LandscapeError:
        # fall back to one sample at a time to isolate the bad one
        for r, (k, sp_) in enumerate(zip(idx, specs)):
            try:
                for j, s2 in enumerate(sigma2s):
                    l_, e_ = smallest_multipliers([sp_], s2)
                    lam[r, j], emin[r, j] = l_[0], e_[0]
            except LandscapeError as exc:
                lam[r] = np.nan
                out.skipped.append((k, type(exc).__name__))
    keep = ~np.isnan(lam[:, 0])
    out.values = [(lam[r], emin[r]) for r in np.flatnonzero(keep)]
    out.indices = [idx[r] for r in np.flatnonzero(keep)]
    return out


def run_samples(task: str, params: ModelParams, samples: int, seed: int, arg, workers: int = 1,
                chunk_size: int = _parallel.DEFAULT_CHUNK) -> SampleBatch:
    """Run a per-instance task (``counts``, ``roots`` or ``min``) over ``samples`` instances."""
    if task == "min":
        parts = _parallel.chunked_map(_min_chunk, samples, (params, seed, tuple(arg)), workers, chunk_size)
    elif task in _TASKS:
        parts = _parallel.chunked_map(_run_chunk, samples, (task, params, seed, arg), workers, chunk_size)
    else:
        raise ValueError(f"unknown task {task!r}")
    total = SampleBatch()
    for p in parts:
        total.extend(p)
    if total.skipped:
        log.warning("skipped %d of %d samples", len(total.skipped), samples)
    return total


def mean_and_stderr(values) -> tuple:
    """Sample mean and its standard error along axis 0."""
    x = np.asarray(values, dtype=float)
    n = x.shape[0]
    mean = x.mean(axis=0)
    if n < 2:
        return mean, np.zeros_like(mean) if np.ndim(mean) else 0.0
    sd = x.std(axis=0, ddof=1)
    return mean, sd / math.sqrt(n)
