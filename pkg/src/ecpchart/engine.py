"""Monte Carlo run-length engine, ARL estimation and L calibration.

Each period the simulator draws one subgroup count and maps it to the
variant's monitored proportion:

* ``true``: count of truly non-conforming items, drawn at the process
  proportion ``p``.
* ``naive``: count of items recorded non-conforming, drawn at
  ``p* = mix_proportion(p)``, used raw.
* ``corrected``: the same surrogate count passed through the error
  correction.

The ``stream`` option only affects the corrected chart. ``"surrogate"``
(the default) is the setting described above. ``"latent"`` feeds the
corrected chart the error-free proportion while keeping the corrected
center and limits. That is how the published reference tables were
produced; see the README for why the two differ.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import binom

from . import _kernels
from .chart import ChartConfig, Variant, center, make_limits, sigma_at
from .errors import CalibrationError, ValidationError
from .misclass import MisclassMatrix, correct_proportion, mix_proportion

STREAMS = ("surrogate", "latent")
MAX_BISECTIONS = 60


@dataclass(frozen=True)
class ArlEstimate:
    mean_rl: float
    replicates: int
    std_error: float
    censored: int

    @classmethod
    def from_run_lengths(cls, rl, censored) -> ArlEstimate:
        rl = np.asarray(rl)
        m = rl.size
        mean = math.fsum(rl.tolist()) / m
        if m > 1:
            sd = math.sqrt(math.fsum(((rl - mean) ** 2).tolist()) / (m - 1))
        else:
            sd = 0.0
        return cls(mean_rl=mean, replicates=m, std_error=sd / math.sqrt(m), censored=int(np.sum(censored)))

    def to_dict(self) -> dict:
        return {"mean_rl": self.mean_rl, "replicates": self.replicates, "std_error": self.std_error, "censored": self.censored}


@dataclass(frozen=True)
class CalibrationResult:
    variant: Variant
    l_star: float
    arl0_hat: float
    iterations: int
    converged: bool
    estimate: ArlEstimate = None

    def to_dict(self) -> dict:
        out = {
            "variant": self.variant.value,
            "L": self.l_star,
            "arl0_hat": self.arl0_hat,
            "iterations": self.iterations,
            "converged": self.converged,
        }
        if self.estimate is not None:
            out["std_error"] = self.estimate.std_error
            out["censored"] = self.estimate.censored
        return out


@dataclass(frozen=True)
class ShiftSpec:
    delta: float
    p1: float
    p1_star: float
    p1_star_star: float


def make_shift(p0: float, delta: float, pi: MisclassMatrix) -> ShiftSpec:
    """Upward shift ``p1 = (1 + delta) * p0`` and its surrogate/corrected images."""
    if delta < 0:
        raise ValidationError("delta must be nonnegative")
    p1 = (1.0 + delta) * p0
    if p1 > 1.0:
        raise ValidationError(f"shifted proportion (1 + {delta}) * {p0} exceeds 1")
    p1_star = mix_proportion(p1, pi)
    return ShiftSpec(delta, p1, p1_star, correct_proportion(p1_star, pi))


@lru_cache(maxsize=256)
def _binom_cdf(n: int, p: float) -> np.ndarray:
    cdf = binom.cdf(np.arange(n + 1), n, p)
    cdf[-1] = 1.0
    cdf.setflags(write=False)
    return cdf


@dataclass(frozen=True)
class _Design:
    cdf: np.ndarray
    values: np.ndarray
    center: float
    sigma: np.ndarray  # UCL half-width per unit L, periods 1..max_run_length


def _design(variant, cfg: ChartConfig, pi: MisclassMatrix, p: float, stream: str) -> _Design:
    variant = Variant.parse(variant)
    if stream not in STREAMS:
        raise ValidationError(f"stream must be one of {STREAMS}, got {stream!r}")
    if not (0.0 <= p <= 1.0):
        raise ValidationError(f"process proportion must lie in [0, 1], got {p!r}")
    n = cfg.fixed_n
    raw = np.arange(n + 1) / n
    if variant is Variant.TRUE or (variant is Variant.CORRECTED and stream == "latent"):
        p_draw, values = p, raw
    elif variant is Variant.NAIVE:
        p_draw, values = mix_proportion(p, pi), raw
    else:
        p_draw, values = mix_proportion(p, pi), (raw - pi.pi10) / pi.determinant
    t = np.arange(1, cfg.max_run_length + 1)
    sigma = sigma_at(t, variant, cfg, pi)
    return _Design(_binom_cdf(n, float(p_draw)), np.ascontiguousarray(values, dtype=np.float64),
                   center(variant, cfg.p0, pi), np.ascontiguousarray(sigma, dtype=np.float64))


def _chunks(lo, hi, threads):
    threads = max(1, min(int(threads or 1), hi - lo))
    edges = np.linspace(lo, hi, threads + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _run_lengths(design: _Design, l, cfg, m_lo, m_hi, threads=1, budget=-1):
    """Run lengths of replicates ``m_lo..m_hi-1``, or None once their sum reaches ``budget``."""
    ucl = design.center + l * design.sigma
    parts = _chunks(m_lo, m_hi, threads)

    def work(part):
        return _kernels.run_lengths(cfg.seed, part[0], part[1], design.cdf, design.values, design.center, cfg.lam,
                                    ucl, budget)

    if len(parts) == 1:
        results = [work(parts[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(parts)) as pool:
            results = list(pool.map(work, parts))
    if not all(r[2] for r in results):
        return None
    rl = np.concatenate([r[0] for r in results])
    if budget >= 0 and int(rl.sum()) >= budget:
        return None
    return rl, np.concatenate([r[1] for r in results])


def simulate_run_length(variant, l, cfg: ChartConfig, pi: MisclassMatrix, p=None, replicate_index=1,
                        stream="surrogate"):
    """Run length of one replicate and whether it was censored at ``max_run_length``.

    ``p`` is the true process proportion (``cfg.p0`` when omitted). The
    result depends only on ``(cfg.seed, replicate_index)`` and the inputs.
    """
    design = _design(variant, cfg, pi, cfg.p0 if p is None else p, stream)
    rl, cens = _run_lengths(design, l, cfg, replicate_index, replicate_index + 1)
    return int(rl[0]), bool(cens[0])


def simulate_run_lengths(variant, l, cfg, pi, p=None, stream="surrogate", threads=1):
    """Run lengths and censoring flags of replicates ``1..cfg.replicates``."""
    design = _design(variant, cfg, pi, cfg.p0 if p is None else p, stream)
    return _run_lengths(design, l, cfg, 1, cfg.replicates + 1, threads)


def estimate_arl(variant, l, cfg: ChartConfig, pi: MisclassMatrix, p=None, stream="surrogate",
                 threads=1) -> ArlEstimate:
    """Mean run length over ``cfg.replicates`` replicates.

    The EWMA always starts at the in-control center, so passing a shifted
    ``p`` estimates ARL1 and ``p = cfg.p0`` estimates ARL0.
    """
    rl, cens = simulate_run_lengths(variant, l, cfg, pi, p, stream, threads)
    return ArlEstimate.from_run_lengths(rl, cens)


def ewma_paths(variant, cfg: ChartConfig, pi: MisclassMatrix, periods: int, p=None, stream="surrogate"):
    """EWMA trajectories of shape ``(replicates, periods)`` without stopping at signals."""
    design = _design(variant, cfg, pi, cfg.p0 if p is None else p, stream)
    return _kernels.ewma_paths(cfg.seed, 1, cfg.replicates + 1, design.cdf, design.values, design.center,
                               cfg.lam, int(periods))


def calibrate_l(variant, cfg: ChartConfig, pi: MisclassMatrix, stream="surrogate", threads=1,
                raise_on_failure=True) -> CalibrationResult:
    """Find L in ``cfg.l_bounds`` whose estimated ARL0 is within 1 of the target.

    Every candidate reuses the same replicate streams, which makes the
    estimated ARL0 a deterministic nondecreasing step function of L, so
    plain bisection applies. A failed bracket, or a step that jumps over the
    target window, raises :class:`CalibrationError` (the best result found
    is attached) unless ``raise_on_failure`` is false.
    """
    variant = Variant.parse(variant)
    design = _design(variant, cfg, pi, cfg.p0, stream)
    target = cfg.arl0_target

    # candidates whose summed run lengths provably reach (target + 1) * M are cut short
    budget = int(math.ceil((target + 1.0) * cfg.replicates))

    def arl(l, limit=budget):
        out = _run_lengths(design, l, cfg, 1, cfg.replicates + 1, threads, limit)
        return None if out is None else ArlEstimate.from_run_lengths(*out)

    lo, hi = cfg.l_bounds
    iterations = 0
    best = None

    def consider(l, est):
        nonlocal best
        if est is None:
            return
        if best is None or abs(est.mean_rl - target) < abs(best[1].mean_rl - target):
            best = (l, est)

    est_hi = arl(hi)
    iterations += 1
    consider(hi, est_hi)
    if est_hi is not None and est_hi.mean_rl < target - 1:
        return _fail(variant, best, iterations,
                     f"ARL0 at L={hi} is {est_hi.mean_rl:.1f} < target {target}; raise max_run_length or the upper bound",
                     raise_on_failure)
    est_lo = arl(lo)
    iterations += 1
    consider(lo, est_lo)
    if est_lo is None:
        best = (lo, arl(lo, -1))
        return _fail(variant, best, iterations,
                     f"ARL0 at L={lo} is {best[1].mean_rl:.1f} > target {target}; lower the bound", raise_on_failure)
    for l, est in ((lo, est_lo), (hi, est_hi)):
        if est is not None and abs(est.mean_rl - target) < 1:
            return CalibrationResult(variant, l, est.mean_rl, iterations, True, est)
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        est = arl(mid)
        iterations += 1
        consider(mid, est)
        if est is not None and abs(est.mean_rl - target) < 1:
            return CalibrationResult(variant, mid, est.mean_rl, iterations, True, est)
        if est is not None and est.mean_rl < target:
            lo = mid
        else:
            hi = mid
    return _fail(variant, best, iterations, f"bisection did not reach |ARL0 - {target}| < 1", raise_on_failure)


def _fail(variant, best, iterations, message, raise_on_failure):
    result = CalibrationResult(variant, best[0], best[1].mean_rl, iterations, False, best[1])
    if raise_on_failure:
        raise CalibrationError(message, result)
    return result


def calibrated_limits(variant, cfg, pi, stream="surrogate", threads=1):
    """Calibrate and return ``(ChartLimits, CalibrationResult)``."""
    result = calibrate_l(variant, cfg, pi, stream=stream, threads=threads)
    return make_limits(variant, result.l_star, cfg, pi), result


def arl1_table(cfg: ChartConfig, pi: MisclassMatrix, p0_grid, n_grid, deltas, variants=tuple(Variant),
               stream="surrogate", threads=1, progress=None):
    """ARL1 for every ``(n, p0, delta, variant)`` cell, recalibrating L per ``(n, p0, variant)``.

    Returns a list of row dicts. A cell whose calibration or shift is
    invalid is reported with ``status`` set to the error text and the run
    continues.
    """
    rows = []
    for n in n_grid:
        for p0 in p0_grid:
            cell_cfg = _replace_cfg(cfg, p0=p0, n=n)
            for variant in variants:
                variant = Variant.parse(variant)
                try:
                    cal = calibrate_l(variant, cell_cfg, pi, stream=stream, threads=threads)
                except (CalibrationError, ValidationError) as exc:
                    for delta in deltas:
                        rows.append(_row(n, p0, delta, variant, None, None, None, str(exc)))
                    continue
                for delta in deltas:
                    try:
                        shift = make_shift(p0, delta, pi)
                        est = estimate_arl(variant, cal.l_star, cell_cfg, pi, p=shift.p1, stream=stream,
                                           threads=threads)
                        rows.append(_row(n, p0, delta, variant, cal, shift, est, "ok"))
                    except ValidationError as exc:
                        rows.append(_row(n, p0, delta, variant, cal, None, None, str(exc)))
                    if progress:
                        progress(rows[-1])
    return rows


def _row(n, p0, delta, variant, cal, shift, est, status):
    return {
        "n": n,
        "p0": p0,
        "delta": delta,
        "variant": variant.value,
        "L": None if cal is None else cal.l_star,
        "arl0_hat": None if cal is None else cal.arl0_hat,
        "p1": None if shift is None else shift.p1,
        "p1_star": None if shift is None else shift.p1_star,
        "arl1": None if est is None else est.mean_rl,
        "std_error": None if est is None else est.std_error,
        "censored": None if est is None else est.censored,
        "status": status,
    }


def _replace_cfg(cfg: ChartConfig, **changes) -> ChartConfig:
    values = {
        "p0": cfg.p0, "lam": cfg.lam, "n": cfg.n, "arl0_target": cfg.arl0_target, "l_bounds": cfg.l_bounds,
        "max_run_length": cfg.max_run_length, "replicates": cfg.replicates, "seed": cfg.seed,
    }
    values.update(changes)
    return ChartConfig(**values)
