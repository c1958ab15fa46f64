"""EWMA recursions, in-control moments and control limits for the three charts.

``true`` monitors the error-free status, ``naive`` monitors the surrogate
status as if it were error-free, and ``corrected`` monitors the
misclassification-corrected proportion.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence, Union

import numpy as np

from .errors import ValidationError
from .misclass import MisclassMatrix, correct_proportion, mix_proportion

DEFAULT_SEED = 20240370
DEFAULT_REPLICATES = 10001
DEFAULT_L_BOUNDS = (0.01, 10.0)


class Variant(str, enum.Enum):
    TRUE = "true"
    NAIVE = "naive"
    CORRECTED = "corrected"

    @classmethod
    def parse(cls, value) -> Variant:
        try:
            return cls(value.value if isinstance(value, cls) else str(value).lower())
        except ValueError:
            raise ValidationError(f"unknown chart variant {value!r}; expected true, naive or corrected") from None


def default_max_run_length(arl0_target: float) -> int:
    return int(max(100 * arl0_target, 5000))


@dataclass(frozen=True)
class ChartConfig:
    """Design parameters of one chart cell.

    ``n`` is either a fixed subgroup size or a per-period sequence; a
    sequence is consulted only by the limit formulas and the monitoring
    pipeline, the run-length simulator needs a fixed size.
    """

    p0: float
    lam: float
    n: Union[int, Sequence[int]]
    arl0_target: float = 370.0
    l_bounds: tuple = DEFAULT_L_BOUNDS
    max_run_length: int = None
    replicates: int = DEFAULT_REPLICATES
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if not (0.0 <= self.p0 <= 1.0):
            raise ValidationError(f"p0 must lie in [0, 1], got {self.p0!r}")
        if not (0.0 < self.lam <= 1.0):
            raise ValidationError(f"lambda must lie in (0, 1], got {self.lam!r}")
        if isinstance(self.n, (list, tuple, np.ndarray)):
            sizes = tuple(int(k) for k in self.n)
            if not sizes or min(sizes) < 1:
                raise ValidationError("subgroup sizes must be positive integers")
            object.__setattr__(self, "n", sizes)
        else:
            if int(self.n) != self.n or self.n < 1:
                raise ValidationError(f"n must be a positive integer, got {self.n!r}")
            object.__setattr__(self, "n", int(self.n))
        if not self.arl0_target > 0:
            raise ValidationError("arl0_target must be positive")
        a, b = (float(x) for x in self.l_bounds)
        if not (0 < a < b):
            raise ValidationError(f"l_bounds must satisfy 0 < a < b, got {self.l_bounds!r}")
        object.__setattr__(self, "l_bounds", (a, b))
        if self.max_run_length is None:
            object.__setattr__(self, "max_run_length", default_max_run_length(self.arl0_target))
        if int(self.max_run_length) < 1:
            raise ValidationError("max_run_length must be >= 1")
        if int(self.replicates) < 1:
            raise ValidationError("replicates must be >= 1")
        object.__setattr__(self, "seed", int(self.seed) & 0xFFFFFFFFFFFFFFFF)

    @property
    def fixed_n(self) -> int:
        if isinstance(self.n, tuple):
            if len(set(self.n)) != 1:
                raise ValidationError("this operation needs a constant subgroup size")
            return self.n[0]
        return self.n

    def n_at(self, t):
        """Subgroup size at 1-based period ``t``; a sequence repeats its last size."""
        if isinstance(self.n, int):
            return np.full(np.shape(t), self.n) if np.ndim(t) else self.n
        sizes = np.asarray(self.n)
        idx = np.minimum(np.asarray(t, dtype=np.int64), len(sizes)) - 1
        return sizes[idx] if np.ndim(t) else int(sizes[idx])

    def to_dict(self) -> dict:
        return {
            "p0": self.p0,
            "lambda": self.lam,
            "n": list(self.n) if isinstance(self.n, tuple) else self.n,
            "arl0_target": self.arl0_target,
            "l_bounds": list(self.l_bounds),
            "max_run_length": self.max_run_length,
            "replicates": self.replicates,
            "seed": self.seed,
        }


class EwmaState(NamedTuple):
    t: int
    value: float


def ewma_update(prev: EwmaState, p_hat: float, lam: float) -> EwmaState:
    if not (0.0 < lam <= 1.0):
        raise ValidationError(f"lambda must lie in (0, 1], got {lam!r}")
    return EwmaState(prev.t + 1, lam * p_hat + (1.0 - lam) * prev.value)


def _time_factor(t, lam):
    # 1 - (1 - lam)^(2t); t = inf gives the asymptotic value
    t = np.asarray(t, dtype=float)
    if np.any(t < 1):
        raise ValidationError("period index must be >= 1")
    out = 1.0 - (1.0 - lam) ** (2.0 * t)
    return float(out) if out.ndim == 0 else out


def centers(p0: float, pi: MisclassMatrix) -> dict:
    p_star = mix_proportion(p0, pi)
    return {"p0": p0, "p0_star": p_star, "p0_star_star": correct_proportion(p_star, pi)}


def center(variant, p0: float, pi: MisclassMatrix) -> float:
    """Starting value and centerline of the variant's EWMA statistic."""
    variant = Variant.parse(variant)
    c = centers(p0, pi)
    return {Variant.TRUE: c["p0"], Variant.NAIVE: c["p0_star"], Variant.CORRECTED: c["p0_star_star"]}[variant]


def _base_variance(variant, p0, pi):
    # per-item variance of the monitored observation, before the EWMA factor
    variant = Variant.parse(variant)
    if variant is Variant.TRUE:
        return p0 * (1.0 - p0)
    p_star = mix_proportion(p0, pi)
    v = p_star * (1.0 - p_star)
    if variant is Variant.CORRECTED:
        v /= pi.determinant ** 2
    return v


def theorem1_moments(t, cfg: ChartConfig, pi: MisclassMatrix):
    """In-control mean and variance of the corrected EWMA statistic at period ``t``."""
    p_star = mix_proportion(cfg.p0, pi)
    n_t = cfg.n_at(t) if not np.all(np.isinf(t)) else cfg.fixed_n
    var = (
        p_star * (1.0 - p_star) * cfg.lam * _time_factor(t, cfg.lam)
        / (n_t * pi.determinant ** 2 * (2.0 - cfg.lam))
    )
    return cfg.p0, var


def sigma_at(t, variant, cfg: ChartConfig, pi: MisclassMatrix):
    """Standard deviation term under the square root of the variant's UCL."""
    n_t = cfg.n_at(t) if not np.all(np.isinf(t)) else cfg.fixed_n
    return np.sqrt(_base_variance(variant, cfg.p0, pi) * cfg.lam * _time_factor(t, cfg.lam) / (n_t * (2.0 - cfg.lam)))


def ucl_at(t, variant, l: float, cfg: ChartConfig, pi: MisclassMatrix):
    """Time-varying upper control limit; ``t = math.inf`` gives the asymptote."""
    if not l > 0:
        raise ValidationError(f"L must be positive, got {l!r}")
    out = center(variant, cfg.p0, pi) + l * sigma_at(t, variant, cfg, pi)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ChartLimits:
    """Calibrated limits of one chart. ``scale`` is 1 for p charts and n for np charts."""

    variant: Variant
    l_coefficient: float
    ucl_asymptotic: float
    cfg: ChartConfig = field(repr=False)
    pi: MisclassMatrix = field(repr=False)
    lcl: float = 0.0
    scale: float = 1.0

    @property
    def center(self) -> float:
        return self.scale * center(self.variant, self.cfg.p0, self.pi)

    def ucl_at(self, t):
        return self.scale * ucl_at(t, self.variant, self.l_coefficient, self.cfg, self.pi)

    def to_dict(self) -> dict:
        c = centers(self.cfg.p0, self.pi)
        out = {
            "variant": self.variant.value,
            "L": self.l_coefficient,
            "ucl_asymptotic": self.ucl_asymptotic,
            "lcl": self.lcl,
            "lambda": self.cfg.lam,
            "n": list(self.cfg.n) if isinstance(self.cfg.n, tuple) else self.cfg.n,
            "p0": c["p0"],
            "p0_star": c["p0_star"],
            "p0_star_star": c["p0_star_star"],
            "pi": self.pi.to_dict(),
        }
        if self.scale != 1.0:
            out["scale"] = self.scale
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def make_limits(variant, l: float, cfg: ChartConfig, pi: MisclassMatrix) -> ChartLimits:
    variant = Variant.parse(variant)
    return ChartLimits(
        variant=variant,
        l_coefficient=float(l),
        ucl_asymptotic=ucl_at(math.inf, variant, l, cfg, pi),
        cfg=cfg,
        pi=pi,
    )


def np_limits(limits: ChartLimits, n: int) -> ChartLimits:
    """Counts (np) chart limits: every center and limit multiplied by ``n``."""
    return replace(limits, ucl_asymptotic=limits.ucl_asymptotic * n, lcl=limits.lcl * n, scale=limits.scale * n)
