"""Entrywise transform f(x) = log(1 + |x|) and the concatenated transform g.

Streams carry integer entries; a real entry is ``eta * raw``.  The transform
is always evaluated on real values, so sketches convert with
:meth:`TransformSpec.real` before calling :meth:`TransformSpec.apply`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy import integrate

__all__ = [
    "TransformSpec",
    "ConcatVector",
    "apply",
    "apply_vector",
    "squared_f_norm",
    "apply_concat",
    "light_noise_constant",
]


def _check_finite(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("transform input must be finite")
    return arr


@dataclass(frozen=True)
class TransformSpec:
    """f(x) = log_base(1 + |x|) together with the stream entry scale eta."""

    log_base: float = 2.0
    eta: Fraction = Fraction(1)

    def __post_init__(self):
        if not self.log_base > 1:
            raise ValueError(f"log_base must exceed 1, got {self.log_base}")
        eta = Fraction(self.eta)
        if eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        object.__setattr__(self, "eta", eta)

    @property
    def scale(self) -> float:
        """Factor converting natural-log values to this base."""
        return 1.0 / math.log(self.log_base)

    def real(self, raw):
        """Convert integer stream units to real entries."""
        return np.asarray(raw, dtype=float) * float(self.eta)

    def apply(self, x):
        x = _check_finite(x)
        return np.log1p(np.abs(x)) * self.scale

    def apply_raw(self, raw):
        return np.log1p(np.abs(self.real(raw))) * self.scale

    def squared_norm(self, x, axis=-1):
        fx = self.apply(x)
        return np.sum(fx * fx, axis=axis)


DEFAULT = TransformSpec()


class ConcatVector(NamedTuple):
    head: np.ndarray
    tail: float

    def squared_norm(self) -> float:
        return float(self.head @ self.head + self.tail * self.tail)

    def as_array(self) -> np.ndarray:
        return np.append(self.head, self.tail)


def apply(x: float, spec: TransformSpec = DEFAULT) -> float:
    """f(x) for a scalar; rejects non-finite input."""
    return float(spec.apply(x))


def apply_vector(x, spec: TransformSpec = DEFAULT) -> np.ndarray:
    return spec.apply(x)


def squared_f_norm(x, spec: TransformSpec = DEFAULT) -> float:
    return float(spec.squared_norm(np.ravel(x)))


def apply_concat(x, spec: TransformSpec = DEFAULT) -> ConcatVector:
    """g(x): f on all but the last coordinate, identity on the last."""
    x = _check_finite(x).ravel()
    if x.size < 2:
        raise ValueError("concatenated vector needs at least 2 coordinates")
    return ConcatVector(spec.apply(x[:-1]), float(x[-1]))


def light_noise_constant() -> tuple[float, float]:
    """Return (C1, C2) for the 4-wise-sign light-noise bound, natural log.

    C1 = int_0^1 ln(1+t) dt + 3 int_1^inf ln(1+t)/t^4 dt and
    C2 = 2 (1 + C1 (e-1)^2) bounds E f(sum eps_i a_i)^2 / sum f(a_i)^2.
    """
    head, _ = integrate.quad(math.log1p, 0.0, 1.0)
    tail, _ = integrate.quad(lambda t: math.log1p(t) / t**4, 1.0, math.inf)
    c1 = head + 3.0 * tail
    return c1, 2.0 * (1.0 + c1 * (math.e - 1.0) ** 2)
