"""Decay-rate fitting and envelope certification for order-parameter paths.

Two model classes, matching the two regimes the solver certifies:
exponential R(t) ~ C e^{-rate t} (fit: log R against t) and polynomial
R(t) ~ C <t>^{-rate} (fit: log R against log <t>).  Fits are plain least
squares on a window, with residual reported as the sup of |log data -
log model| so an exact-model input is recognizable at rounding level.

Envelope certification turns a fitted model into the global statement
R(t) <= C w(t)^{-1}: C_min is the maximum of R * w over the whole grid,
and the certificate passes when that maximum is set by early times --
concretely, when extending the grid's last quarter moves the constant by
at most 5%.  A wrong decay class makes the product climb toward the end
of the grid and the certificate fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "InsufficientDataError",
    "NonPositiveValuesError",
    "DecayModel",
    "EnvelopeCertificate",
    "fit_decay",
    "certify_envelope",
]

_KINDS = ("exponential", "polynomial")
DEFAULT_FLOOR = 1e-12
DEFAULT_BURN_IN = 2.0


class InsufficientDataError(ValueError):
    """Fewer than the required usable points in the fit window."""


class NonPositiveValuesError(ValueError):
    """Negative data in the fit window; a decay fit is meaningless."""


@dataclass(frozen=True)
class DecayModel:
    kind: str
    rate: float
    amplitude: float
    window: tuple
    residual: float
    n_points: int

    def weight_values(self, t):
        """w(t) with model decay normalized out: e^{rate t} or <t>^rate."""
        t = np.asarray(t, dtype=float)
        if self.kind == "exponential":
            return np.exp(self.rate * t)
        return (1.0 + t * t) ** (0.5 * self.rate)

    def predict(self, t):
        return self.amplitude / self.weight_values(t)


@dataclass(frozen=True)
class EnvelopeCertificate:
    constant: float
    attained_at: float
    early_constant: float
    stabilization_ratio: float
    passed: bool


def fit_decay(
    times,
    values,
    kind: str,
    window: tuple | None = None,
    floor: float = DEFAULT_FLOOR,
    min_points: int = 10,
) -> DecayModel:
    """Least-squares decay fit of a positive path on a time window.

    The default window starts after the burn-in (t = 2), where envelope
    constants rather than rates dominate.  Points at or below ``floor``
    are dropped; negative points in the window are an error.
    """
    if kind not in _KINDS:
        raise ValueError(f"unknown decay kind {kind!r}")
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape or times.ndim != 1:
        raise ValueError("times and values must be matching 1-d arrays")
    if window is None:
        window = (min(DEFAULT_BURN_IN, 0.5 * times[-1]), float(times[-1]))
    lo, hi = float(window[0]), float(window[1])
    if not (times[0] <= lo < hi <= times[-1] + 1e-12):
        raise ValueError(f"window {window} not inside the grid [{times[0]}, {times[-1]}]")
    mask = (times >= lo) & (times <= hi)
    if np.any(values[mask] < 0.0):
        raise NonPositiveValuesError(
            f"{int(np.sum(values[mask] < 0))} negative values in window"
        )
    usable = mask & (values > floor)
    n = int(np.sum(usable))
    if n < min_points:
        raise InsufficientDataError(
            f"only {n} usable points in window {window} (need {min_points})"
        )
    t = times[usable]
    y = np.log(values[usable])
    x = t if kind == "exponential" else 0.5 * np.log1p(t * t)
    slope, intercept = np.polyfit(x, y, 1)
    rate = -float(slope)
    if rate <= 0.0:
        raise ValueError(f"fitted rate {rate:.3g} is not positive; path does not decay")
    residual = float(np.max(np.abs(y - (intercept + slope * x))))
    return DecayModel(
        kind=kind,
        rate=rate,
        amplitude=float(math.exp(intercept)),
        window=(lo, hi),
        residual=residual,
        n_points=n,
    )


def certify_envelope(
    times,
    values,
    model: DecayModel,
    early_fraction: float = 0.75,
    slack: float = 1.05,
) -> EnvelopeCertificate:
    """Certify values(t) <= C / w_model(t) on the full grid.

    C is the grid maximum of |values| * w_model.  The certificate passes
    when C is finite and within ``slack`` of the maximum over the early
    ``early_fraction`` of the grid: the envelope constant is then set by
    small times and stable under extending the horizon.  Shrinking the
    claimed rate only shifts weight toward early times, so a passing
    certificate cannot fail for any smaller rate.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    prods = np.abs(values) * model.weight_values(times)
    i_max = int(np.argmax(prods))
    c_full = float(prods[i_max])
    early = times <= early_fraction * times[-1]
    c_early = float(np.max(prods[early]))
    if c_full == 0.0:
        ratio = 1.0
    elif c_early == 0.0:
        ratio = math.inf
    else:
        ratio = c_full / c_early
    passed = bool(math.isfinite(c_full) and ratio <= slack)
    return EnvelopeCertificate(
        constant=c_full,
        attained_at=float(times[i_max]),
        early_constant=c_early,
        stabilization_ratio=ratio,
        passed=passed,
    )
