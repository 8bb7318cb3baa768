"""Scalar edge penalties ``r(t)``, their derivatives and diffusivities.

The diffusivity ``c(t) = r'(t) / t`` is the coefficient of the
inhomogeneous diffusion operator that the penalty induces. All functions
accept scalars or arrays of nonnegative gradient magnitudes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = ["PenaltyKind", "PenaltySpec", "r_value", "r_deriv", "diffusivity"]

_TINY = np.finfo(float).tiny


class PenaltyKind(str, Enum):
    TIKHONOV = "tikhonov"
    TV_SMOOTHED = "tv_smoothed"
    PM_LOG = "pm_log"
    PM_EXP = "pm_exp"


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty choice with threshold ``T`` and prior strength ``tau``.

    ``T`` is ignored for Tikhonov.
    """

    kind: PenaltyKind = PenaltyKind.TIKHONOV
    T: float = 1.0
    tau: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PenaltyKind(self.kind))
        if self.kind is not PenaltyKind.TIKHONOV and not self.T > 0:
            raise ValueError(f"threshold T must be positive for {self.kind.value}")
        if not self.tau >= 0:
            raise ValueError("tau must be nonnegative")


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise ValueError("gradient magnitude t must be nonnegative")
    return t


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def r_value(spec: PenaltySpec, t):
    t = _check_t(t)
    kind, T = spec.kind, spec.T
    if kind is PenaltyKind.TIKHONOV:
        r = 0.5 * t**2
    elif kind is PenaltyKind.TV_SMOOTHED:
        r = T * np.hypot(1.0, t / T)
    elif kind is PenaltyKind.PM_LOG:
        r = 0.5 * T**2 * np.log1p((t / T) ** 2)
    else:
        r = 0.5 * T**2 * -np.expm1(-((t / T) ** 2))
    return _out(r)


def diffusivity(spec: PenaltySpec, t):
    """``r'(t)/t`` with its removable limit at ``t = 0``; always positive."""
    t = _check_t(t)
    kind, T = spec.kind, spec.T
    if kind is PenaltyKind.TIKHONOV:
        c = np.ones_like(t)
    elif kind is PenaltyKind.TV_SMOOTHED:
        c = 1.0 / (T * np.hypot(1.0, t / T))
    elif kind is PenaltyKind.PM_LOG:
        s = t / T
        with np.errstate(over="ignore"):
            c = 1.0 / (1.0 + s * s)
    else:
        with np.errstate(over="ignore"):
            c = np.exp(-((t / T) ** 2))
    # keep the operator elliptic where the exact value underflows
    c = np.maximum(c, _TINY)
    return _out(c)


def r_deriv(spec: PenaltySpec, t):
    t = _check_t(t)
    return _out(t * np.asarray(diffusivity(spec, t)))
