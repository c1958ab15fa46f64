"""Misclassification model for a binary (conforming / non-conforming) status.

``pi_kl`` is ``P(observed = k | true = l)``. The surrogate proportion is
``p* = pi11 * p + pi10 * (1 - p)`` and the inverse map
``p** = (p* - pi10) / (1 - pi10 - pi01)`` removes the misclassification bias
in expectation.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, SingularMatrixError, ValidationError

_SUM_TOL = 1e-9
_DET_TOL = 1e-12


def _check_probability(name, value):
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise ValidationError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class MisclassMatrix:
    """The 2x2 (mis)classification matrix.

    Each conditional distribution of the observed status given the true
    status must sum to one (``pi11 + pi01 == 1`` and ``pi00 + pi10 == 1``),
    and the matrix must be invertible. Both are checked on construction.
    """

    pi11: float
    pi10: float
    pi01: float
    pi00: float

    def __post_init__(self):
        for name in ("pi11", "pi10", "pi01", "pi00"):
            value = float(getattr(self, name))
            object.__setattr__(self, name, value)
            _check_probability(name, value)
        if abs(self.pi11 + self.pi01 - 1.0) > _SUM_TOL:
            raise ValidationError(
                f"pi11 + pi01 must equal 1 (P(X*|X=1) is a distribution), got {self.pi11 + self.pi01!r}"
            )
        if abs(self.pi00 + self.pi10 - 1.0) > _SUM_TOL:
            raise ValidationError(
                f"pi00 + pi10 must equal 1 (P(X*|X=0) is a distribution), got {self.pi00 + self.pi10!r}"
            )
        if abs(self.determinant) < _DET_TOL:
            raise SingularMatrixError(
                f"misclassification matrix is singular (1 - pi10 - pi01 = {self.determinant!r}); "
                "the correction is undefined"
            )

    @property
    def determinant(self) -> float:
        """``pi11*pi00 - pi10*pi01``, which equals ``1 - pi10 - pi01`` here."""
        return 1.0 - self.pi10 - self.pi01

    @classmethod
    def identity(cls) -> MisclassMatrix:
        return cls(1.0, 0.0, 0.0, 1.0)

    @classmethod
    def symmetric(cls, pi: float) -> MisclassMatrix:
        """``pi11 = pi00 = pi`` and both misclassification rates ``1 - pi``."""
        return cls(pi, 1.0 - pi, 1.0 - pi, pi)

    @classmethod
    def from_diagonal(cls, pi11: float, pi00: float) -> MisclassMatrix:
        return cls(pi11, 1.0 - pi00, 1.0 - pi11, pi00)

    @classmethod
    def from_mapping(cls, spec) -> MisclassMatrix:
        """Build from a config mapping.

        Accepted shapes: all four entries; ``pi11`` and ``pi00`` only;
        ``rr1`` and ``rr0``; or a single symmetric ``pi``.
        """
        keys = set(spec)
        full = {"pi11", "pi10", "pi01", "pi00"}
        if full <= keys:
            return cls(*(float(spec[k]) for k in ("pi11", "pi10", "pi01", "pi00")))
        if {"pi11", "pi00"} <= keys and not keys & {"pi10", "pi01"}:
            return cls.from_diagonal(float(spec["pi11"]), float(spec["pi00"]))
        if {"rr1", "rr0"} <= keys:
            return pi_from_rr(float(spec["rr1"]), float(spec["rr0"]))
        if "pi" in keys:
            return cls.symmetric(float(spec["pi"]))
        raise ValidationError(
            "misclassification matrix needs {pi11, pi10, pi01, pi00}, {pi11, pi00}, {rr1, rr0} or {pi}; "
            f"got keys {sorted(keys)}"
        )

    def as_array(self) -> np.ndarray:
        """Matrix mapping ``(p, q)`` to ``(p*, q*)``."""
        return np.array([[self.pi11, self.pi10], [self.pi01, self.pi00]])

    def to_dict(self) -> dict:
        return {"pi11": self.pi11, "pi10": self.pi10, "pi01": self.pi01, "pi00": self.pi00}

    @property
    def is_identity(self) -> bool:
        return self.pi10 == 0.0 and self.pi01 == 0.0


def mix_proportion(p0: float, pi: MisclassMatrix) -> float:
    """Surrogate non-conforming proportion observed when the true one is ``p0``."""
    _check_probability("p0", p0)
    return pi.pi11 * p0 + pi.pi10 * (1.0 - p0)


def correct_proportion(p_star: float, pi: MisclassMatrix) -> float:
    """Error-corrected proportion. Not clamped: finite samples can leave [0, 1]."""
    return (p_star - pi.pi10) / pi.determinant


def correct_observation(x_star, pi: MisclassMatrix):
    """Corrected version of a single 0/1 observation (works elementwise on arrays)."""
    x = np.asarray(x_star)
    if not np.isin(x, (0, 1)).all():
        raise ValidationError("observations must be 0 or 1")
    out = (x - pi.pi10) / pi.determinant
    return float(out) if out.ndim == 0 else out


def rr_from_pi(pi_kk: float) -> float:
    """Relative ratio ``pi / (1 - pi)`` of a classification probability."""
    _check_probability("pi", pi_kk)
    if pi_kk == 1.0:
        return math.inf
    return pi_kk / (1.0 - pi_kk)


def pi_from_rr(rr1: float, rr0: float) -> MisclassMatrix:
    """Matrix from the relative ratios under ``X = 1`` and ``X = 0``.

    ``rr1 = rr0 = 1`` gives a singular matrix and raises
    :class:`SingularMatrixError`.
    """
    for name, rr in (("rr1", rr1), ("rr0", rr0)):
        if not rr >= 0:
            raise ValidationError(f"{name} must be a nonnegative real, got {rr!r}")
    if math.isinf(rr1):
        pi11, pi01 = 1.0, 0.0
    else:
        pi11, pi01 = rr1 / (1.0 + rr1), 1.0 / (1.0 + rr1)
    if math.isinf(rr0):
        pi00, pi10 = 1.0, 0.0
    else:
        pi00, pi10 = rr0 / (1.0 + rr0), 1.0 / (1.0 + rr0)
    return MisclassMatrix(pi11, pi10, pi01, pi00)


@dataclass(frozen=True)
class ValidationCounts:
    """Confusion table from a validation sample; ``n_kl`` counts (observed k, true l)."""

    n11: int
    n10: int
    n01: int
    n00: int

    def __post_init__(self):
        for name in ("n11", "n10", "n01", "n00"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ValidationError(f"{name} must be a nonnegative integer, got {value!r}")
            object.__setattr__(self, name, int(value))

    @classmethod
    def from_pairs(cls, true_status, observed_status) -> ValidationCounts:
        x = np.asarray(true_status).astype(int)
        xs = np.asarray(observed_status).astype(int)
        if x.shape != xs.shape:
            raise ValidationError("true and observed arrays differ in shape")
        return cls(
            n11=int(np.sum((xs == 1) & (x == 1))),
            n10=int(np.sum((xs == 1) & (x == 0))),
            n01=int(np.sum((xs == 0) & (x == 1))),
            n00=int(np.sum((xs == 0) & (x == 0))),
        )

    @classmethod
    def read_csv(cls, source) -> ValidationCounts:
        """Read a ``true,observed,count`` table. Repeated cells are summed."""
        if isinstance(source, (str, Path)):
            text = Path(source).read_text(encoding="utf-8")
        else:
            text = source.read()
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None:
            raise DataError("validation table is empty")
        if [h.strip().lower() for h in header] != ["true", "observed", "count"]:
            raise DataError(f"expected header true,observed,count, got {','.join(header)}", line=1)
        cells = {(1, 1): 0, (1, 0): 0, (0, 1): 0, (0, 0): 0}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DataError(f"expected 3 fields, got {len(row)}", line=lineno)
            try:
                true, obs, count = (int(c) for c in row)
            except ValueError:
                raise DataError(f"non-integer field in {row!r}", line=lineno) from None
            if true not in (0, 1) or obs not in (0, 1):
                raise DataError("true/observed must be 0 or 1", line=lineno)
            if count < 0:
                raise DataError("count must be nonnegative", line=lineno)
            cells[(obs, true)] += count
        return cls(n11=cells[(1, 1)], n10=cells[(1, 0)], n01=cells[(0, 1)], n00=cells[(0, 0)])


def estimate_pi(v: ValidationCounts) -> MisclassMatrix:
    """Ratio estimator ``pi_kl = n_kl / (n_0l + n_1l)`` from a confusion table."""
    total_1 = v.n01 + v.n11
    total_0 = v.n00 + v.n10
    if total_1 == 0 or total_0 == 0:
        missing = "1" if total_1 == 0 else "0"
        raise ValidationError(f"no validation items with true status {missing}; pi cannot be estimated")
    return MisclassMatrix(
        pi11=v.n11 / total_1,
        pi10=v.n10 / total_0,
        pi01=v.n01 / total_1,
        pi00=v.n00 / total_0,
    )
