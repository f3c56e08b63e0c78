"""Fast invariant checks run by ``extremal-range selftest``."""

from __future__ import annotations

import itertools
import math
import tempfile
import time
from pathlib import Path

import numpy as np

from . import numerics, theory
from .experiments import ExperimentConfig, run_fig3
from .geometry import squared_edt


def brute_squared_edt(seeds):
    """O(n^4) reference: squared distance to the nearest seed, window ring included."""
    seeds = np.pad(np.asarray(seeds, bool), 1, constant_values=True)
    pts = np.argwhere(seeds)
    n0, n1 = seeds.shape
    out = np.empty((n0 - 2, n1 - 2))
    for i, j in itertools.product(range(1, n0 - 1), range(1, n1 - 1)):
        out[i - 1, j - 1] = ((pts - (i, j)) ** 2).sum(axis=1).min()
    return out


def _check_edt():
    rng = np.random.default_rng(11)
    for k in range(10):
        seeds = rng.random((16, 16)) < rng.uniform(0.01, 0.5)
        if not np.array_equal(squared_edt(seeds), brute_squared_edt(seeds)):
            return False, f"mismatch on random mask {k}"
    return True, "10 random 16x16 masks match brute force"


def _check_formulas():
    if abs(theory.beta_d(2) - math.pi) > 1e-12 or abs(theory.beta_d(1) - 2.0) > 1e-12:
        return False, "beta constants"
    lam = numerics.second_spectral_moment(numerics.MaternParams(2.5, 0.1))
    if abs(theory.gaussian_slope(0.0, lam) - math.sqrt(lam)) > 1e-9:
        return False, "gaussian slope at u = 0"
    p = np.linspace(0.01, 0.99, 25)
    worst = max(
        np.max(np.abs(numerics.std_normal_cdf(numerics.std_normal_quantile(p)) - p)),
        np.max(np.abs(numerics.student_cdf_k3(numerics.student_quantile_k3(p)) - p)),
        np.max(np.abs(numerics.chisq_cdf_k3(numerics.chisq_quantile_k3(p)) - p)),
    )
    if worst > 1e-8:
        return False, f"quantile round trip error {worst:.2e}"
    return True, "constants, slope at zero and quantile round trips"


def _check_determinism():
    cfg = ExperimentConfig(n_side=21, thresholds=(0.5,), n_replicates=50, n_bootstrap=50,
                           radii_max=6 / 60.0, seed=3)
    with tempfile.TemporaryDirectory() as tmp:
        texts = []
        for k, threads in enumerate((1, 2)):
            cfg_k = ExperimentConfig(**{**cfg.__dict__, "threads": threads})
            paths = run_fig3(cfg_k).write(Path(tmp) / str(k))
            texts.append([p.read_bytes() for p in paths if p.suffix == ".csv"])
    if texts[0] != texts[1]:
        return False, "tables differ between runs"
    return True, "repeated run gives identical tables"


CHECKS = (("edt", _check_edt), ("formulas", _check_formulas), ("determinism", _check_determinism))


def run_selftest(stream=None):
    """Run all checks, printing one line each; returns True when all pass."""
    ok_all = True
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # report and keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        ok_all &= ok
        line = f"{'PASS' if ok else 'FAIL'} {name:12s} {time.perf_counter() - t0:6.2f}s  {detail}"
        print(line, file=stream)
    return ok_all
