"""Power-law fits on positive data.

Every empirical rate in the package (model decay rates, error-norm sweeps,
mode-residual decay) is measured the same way: ordinary least squares of
log y against log x. Keeping this in one place guarantees the exponent a
figure annotates later is byte-for-byte the exponent written to CSV.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError

__all__ = ["PowerLawFit", "RateReport", "fit_power_law"]


@dataclass
class PowerLawFit:
    exponent: float    # slope of log y vs log x
    amplitude: float   # e^{intercept}
    stderr: float      # standard error of the slope
    r2: float
    npoints: int

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.amplitude * np.asarray(x) ** self.exponent


@dataclass
class RateReport:
    """A fitted asymptotic rate, or the flag that the data sat at zero.

    exact=True means the quantity vanished to floating-point floor over the
    whole fit window, so there is no slope to measure and exponent is None.
    """

    exponent: float | None
    fit: PowerLawFit | None
    exact: bool
    window: tuple[float, float]
    quantity: str = ""


def fit_power_law(x: np.ndarray, y: np.ndarray, min_points: int = 3) -> PowerLawFit:
    """OLS fit of y ~ A x^p through log-log coordinates.

    Raises InsufficientDataError when fewer than min_points strictly positive
    samples remain.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    good = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if good.sum() < min_points:
        raise InsufficientDataError(
            f"power-law fit needs >= {min_points} positive samples, got {int(good.sum())}")
    lx, ly = np.log(x[good]), np.log(y[good])
    k = len(lx)
    mx, my = lx.mean(), ly.mean()
    sxx = float(((lx - mx) ** 2).sum())
    if sxx == 0.0:
        raise InsufficientDataError("all abscissae coincide; cannot fit a slope")
    slope = float(((lx - mx) * (ly - my)).sum() / sxx)
    intercept = my - slope * mx
    resid = ly - (intercept + slope * lx)
    if k > 2:
        s2 = float((resid**2).sum() / (k - 2))
        stderr = (s2 / sxx) ** 0.5
    else:
        stderr = 0.0
    tot = float(((ly - my) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / tot if tot > 0 else 1.0
    return PowerLawFit(exponent=slope, amplitude=float(np.exp(intercept)),
                       stderr=float(stderr), r2=float(r2), npoints=k)
