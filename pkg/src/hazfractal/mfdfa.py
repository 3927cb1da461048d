"""Multifractal detrended fluctuation analysis and its sigmoid-plane variant.

The pipeline is profile -> bidirectional windows -> polynomial trend per
window -> residuals -> local variances -> q-order fluctuation function ->
log-log slope, evaluated for every ``q`` on a grid.  Two residual rules are
available:

``standard``
    plain difference between the profile window and its trend.
``hmf``
    both curves are mapped through ``sigmoid(alpha * x)``, differenced there,
    and mapped back through the inverse sigmoid.  The difference is centred
    at 1/2 before inversion so that negative differences stay inside the
    inverse's domain; values that still fall outside ``(eps, 1 - eps)`` are
    clamped and counted.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegenerateVariance,
    DomainError,
    InsufficientScales,
    InvalidInput,
    SeriesTooShort,
)
from .series import (
    LocalTrend,
    TimeSeries,
    as_series,
    fit_windows,
    profile,
    segment_bidirectional,
)

CLAMP_EPS = 1e-12
DEFAULT_ALPHA = 0.4
MIN_SCALE = 16
SCALE_COUNT = 16


class Variant(str, enum.Enum):
    STANDARD = "standard"
    HMF = "hmf"


def default_q_grid() -> tuple[float, ...]:
    """-5 to 5 in steps of 0.25 (41 points, includes 0 and 2)."""
    return tuple(float(k) * 0.25 for k in range(-20, 21))


def default_s_grid(length: int, m: int = 2) -> tuple[int, ...]:
    """Geometric grid of up to 16 integer scales from 16 to ``length // 4``."""
    top = length // 4
    low = max(MIN_SCALE, m + 2)
    if top < low:
        raise SeriesTooShort(
            f"series of length {length} too short for the default scale grid "
            f"(needs at least {4 * low} points)"
        )
    grid = np.unique(np.round(np.geomspace(low, top, SCALE_COUNT)).astype(int))
    return tuple(int(s) for s in grid)


@dataclass(frozen=True)
class DfaConfig:
    q_grid: tuple[float, ...] = field(default_factory=default_q_grid)
    s_grid: tuple[int, ...] | None = None  # None: derived from the series length
    m: int = 2
    alpha: float = DEFAULT_ALPHA
    variant: Variant = Variant.STANDARD

    def __post_init__(self):
        object.__setattr__(self, "q_grid", tuple(float(q) for q in self.q_grid))
        object.__setattr__(self, "variant", Variant(self.variant))
        if not self.q_grid or not all(math.isfinite(q) for q in self.q_grid):
            raise InvalidInput("q_grid must be a non-empty list of finite values")
        if self.m < 1:
            raise InvalidInput("polynomial order m must be >= 1")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise InvalidInput("alpha must be a positive finite number")
        if self.s_grid is not None:
            s_grid = tuple(int(s) for s in self.s_grid)
            object.__setattr__(self, "s_grid", s_grid)
            if any(b <= a for a, b in zip(s_grid, s_grid[1:])):
                raise InvalidInput("s_grid must be strictly increasing")
            if any(s < self.m + 2 for s in s_grid):
                raise InvalidInput(f"every window length must be >= m + 2 = {self.m + 2}")

    def scales_for(self, length: int) -> tuple[int, ...]:
        if self.s_grid is None:
            return default_s_grid(length, self.m)
        if length < 4 * max(self.s_grid):
            raise SeriesTooShort(
                f"series length {length} < 4 * max(s_grid) = {4 * max(self.s_grid)}"
            )
        return self.s_grid

    def to_dict(self) -> dict:
        return {
            "q_grid": list(self.q_grid),
            "s_grid": None if self.s_grid is None else list(self.s_grid),
            "m": self.m,
            "alpha": self.alpha,
            "variant": self.variant.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DfaConfig":
        s_grid = data.get("s_grid")
        return cls(
            q_grid=tuple(data.get("q_grid") or default_q_grid()),
            s_grid=None if s_grid is None else tuple(s_grid),
            m=int(data.get("m", 2)),
            alpha=float(data.get("alpha", DEFAULT_ALPHA)),
            variant=Variant(data.get("variant", "standard")),
        )


@dataclass(frozen=True)
class FluctuationSurface:
    """``values[i, j]`` is F_q(s) for ``q_grid[i]`` and ``s_grid[j]``."""

    q_grid: tuple[float, ...]
    s_grid: tuple[int, ...]
    values: np.ndarray
    clamp_count: int = 0


@dataclass(frozen=True)
class FractalSeries:
    """Generalized Hurst exponents H(q) over a q-grid."""

    q_grid: tuple[float, ...]
    h: np.ndarray
    fit_r2: np.ndarray
    clamp_count: int = 0

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.float64)
        r2 = np.asarray(self.fit_r2, dtype=np.float64)
        if h.shape != (len(self.q_grid),) or r2.shape != h.shape:
            raise InvalidInput("h and fit_r2 must have one entry per grid point")
        if not np.all(np.isfinite(h)):
            raise InvalidInput("H(q) values must be finite")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "fit_r2", r2)

    def value_at(self, q: float) -> float:
        return float(self.h[self.q_grid.index(float(q))])

    @property
    def width(self) -> float:
        return float(self.h.max() - self.h.min())

    def to_csv(self, fh=None) -> str | None:
        """Write ``q,h,r2`` rows with 17 significant digits.

        Returns the text when no file handle is given.
        """
        out = fh if fh is not None else io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["q", "h", "r2"])
        for q, h, r2 in zip(self.q_grid, self.h, self.fit_r2):
            writer.writerow([fmt_float(q), fmt_float(h), fmt_float(r2)])
        if fh is None:
            return out.getvalue()
        return None

    @classmethod
    def from_csv(cls, text: str) -> "FractalSeries":
        rows = [r for r in csv.DictReader(
            line for line in io.StringIO(text) if not line.startswith("#"))]
        return cls(
            q_grid=tuple(float(r["q"]) for r in rows),
            h=np.array([float(r["h"]) for r in rows]),
            fit_r2=np.array([float(r["r2"]) for r in rows]),
        )


def fmt_float(x: float) -> str:
    return f"{float(x):.17g}"


def _trend_values(trend) -> np.ndarray:
    if isinstance(trend, LocalTrend):
        return trend.fitted
    return np.asarray(trend, dtype=np.float64)


def detrend_standard(window, trend) -> np.ndarray:
    phi = np.asarray(window, dtype=np.float64)
    psi = _trend_values(trend)
    if phi.shape != psi.shape:
        raise InvalidInput(f"window shape {phi.shape} != trend shape {psi.shape}")
    return phi - psi


def sigmoid_project(alpha: float, x):
    """``1 / (1 + exp(-alpha * x))``."""
    if alpha <= 0:
        raise DomainError("alpha must be positive")
    z = alpha * np.asarray(x, dtype=np.float64)
    out = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                   np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    return float(out) if out.ndim == 0 else out


def sigmoid_unproject(alpha: float, y):
    """Inverse of :func:`sigmoid_project`: ``ln(y / (1 - y)) / alpha``."""
    if alpha <= 0:
        raise DomainError("alpha must be positive")
    y = np.asarray(y, dtype=np.float64)
    if np.any((y <= 0) | (y >= 1)) or not np.all(np.isfinite(y)):
        raise DomainError("sigmoid_unproject is defined on the open interval (0, 1)")
    out = (np.log(y) - np.log1p(-y)) / alpha
    return float(out) if out.ndim == 0 else out


def _sigmoid_gap(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # sigmoid(a) - sigmoid(b) without cancellation, via
    # (tanh(a/2) - tanh(b/2)) / 2 = sinh((a-b)/2) / (2 cosh(a/2) cosh(b/2)).
    # cosh overflows past ~710; beyond that the tanh form is exact enough.
    ha, hb = a / 2.0, b / 2.0
    big = np.maximum(np.abs(ha), np.abs(hb)) > 300.0
    with np.errstate(over="ignore", invalid="ignore"):
        gap = np.sinh(ha - hb) / (2.0 * np.cosh(ha) * np.cosh(hb))
    if np.any(big):
        gap = np.where(big, 0.5 * (np.tanh(ha) - np.tanh(hb)), gap)
    return gap


def _hmf_residuals(alpha: float, phi: np.ndarray, psi: np.ndarray) -> tuple[np.ndarray, int]:
    gap = _sigmoid_gap(alpha * phi, alpha * psi)
    # y = gap + 1/2 is clamped to [eps, 1 - eps]; equivalently |2*gap| <= 1 - 2*eps.
    limit = 1.0 - 2.0 * CLAMP_EPS
    two_gap = 2.0 * gap
    clamped = np.abs(two_gap) > limit
    two_gap = np.clip(two_gap, -limit, limit)
    # logit(1/2 + g) = log1p(2g) - log1p(-2g) = 2 * atanh(2g)
    return 2.0 * np.arctanh(two_gap) / alpha, int(np.count_nonzero(clamped))


def detrend_hmf(alpha: float, window, trend, *, return_clamps: bool = False):
    """Residuals measured on the sigmoid plane and mapped back.

    Equal to ``sigmoid_unproject(alpha, clamp(s(phi) - s(psi) + 1/2))`` with
    ``s = sigmoid_project(alpha, .)``; computed through tanh/atanh so that
    the small-alpha limit reproduces ``phi - psi`` without cancellation.
    """
    if alpha <= 0:
        raise DomainError("alpha must be positive")
    phi = np.asarray(window, dtype=np.float64)
    psi = _trend_values(trend)
    if phi.shape != psi.shape:
        raise InvalidInput(f"window shape {phi.shape} != trend shape {psi.shape}")
    delta, clamps = _hmf_residuals(alpha, phi, psi)
    return (delta, clamps) if return_clamps else delta


def local_variance(detrended) -> float:
    d = np.asarray(detrended, dtype=np.float64)
    if d.size == 0:
        raise InvalidInput("cannot take the variance of an empty window")
    return float(np.mean(d * d))


def _log_fluctuations(log_var: np.ndarray, q_grid: Sequence[float]) -> np.ndarray:
    # log F_q for every q at once, from the log local variances of one scale
    q = np.asarray(q_grid, dtype=np.float64)
    nonzero = q != 0
    safe_q = np.where(nonzero, q, 1.0)
    terms = 0.5 * safe_q[:, None] * log_var[None, :]
    top = terms.max(axis=1, keepdims=True)
    lse = np.log(np.exp(terms - top).sum(axis=1)) + top[:, 0]
    out = (lse - math.log(log_var.size)) / safe_q
    if not nonzero.all():
        out[~nonzero] = 0.5 * log_var.mean()
    return out


def fluctuation(variances, q: float) -> float:
    """q-order fluctuation function of a set of local variances.

    ``(mean(var ** (q/2))) ** (1/q)`` for ``q != 0`` and
    ``exp(mean(ln var) / 2)`` for ``q == 0``; evaluated in log space.
    """
    var = np.asarray(variances, dtype=np.float64).reshape(-1)
    if var.size == 0 or np.any(var < 0) or not np.all(np.isfinite(var)):
        raise InvalidInput("variances must be a non-empty list of finite non-negative values")
    _check_variances(var, [q])
    with np.errstate(divide="ignore"):
        log_var = np.log(var)
    return float(np.exp(_log_fluctuations(log_var, [q])[0]))


def _check_variances(var: np.ndarray, q_grid: Sequence[float], scale: int | None = None) -> None:
    where = "" if scale is None else f" at window length {scale}"
    if not np.any(var > 0):
        raise DegenerateVariance(f"all local variances are zero{where}")
    if np.any(var == 0) and min(q_grid) <= 0:
        raise DegenerateVariance(
            f"{int(np.count_nonzero(var == 0))} zero local variance(s){where} "
            "cannot be raised to a non-positive order"
        )


def ols_loglog(log_s: np.ndarray, log_f: np.ndarray) -> tuple[float, float]:
    """Slope and coefficient of determination of an ordinary least-squares line."""
    x = log_s - log_s.mean()
    y = log_f - log_f.mean()
    sxx = float(x @ x)
    slope = float(x @ y) / sxx
    ss_res = float(np.sum((y - slope * x) ** 2))
    ss_tot = float(y @ y)
    if ss_tot == 0.0:
        return slope, 1.0
    return slope, 1.0 - ss_res / ss_tot


HURST_ESTIMATORS: dict[str, Callable[[np.ndarray, np.ndarray], tuple[float, float]]] = {
    "ols": ols_loglog,
}


def hurst_fit(s_grid, f_values, q: float | None = None, estimator: str = "ols") -> tuple[float, float]:
    """Fit ``F(s) ~ s**H`` and return ``(H, r2)``.

    ``q`` is accepted for symmetry with the fluctuation surface and does not
    change the fit.  Further estimators can be registered in
    ``HURST_ESTIMATORS`` as ``f(log_s, log_f) -> (slope, r2)``.
    """
    s = np.asarray(s_grid, dtype=np.float64)
    f = np.asarray(f_values, dtype=np.float64)
    if s.size < 3:
        raise InsufficientScales(f"need at least 3 scales, got {s.size}")
    if s.shape != f.shape:
        raise InvalidInput("s_grid and f_values differ in length")
    if np.any(f <= 0) or np.any(s <= 0):
        raise InvalidInput("scales and fluctuation values must be positive")
    return HURST_ESTIMATORS[estimator](np.log(s), np.log(f))


def boltzmann(q, a1: float, a2: float, q0: float, dq: float):
    """Boltzmann sigmoid ``(a1 - a2) / (1 + exp((q - q0) / dq)) + a2``."""
    return (a1 - a2) / (1.0 + np.exp((np.asarray(q) - q0) / dq)) + a2


def boltzmann_fit(q_grid, h) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares Boltzmann sigmoid through an H(q) curve.

    Optional smoothing of an estimated curve; returns ``(params, fitted)``.
    """
    from scipy.optimize import curve_fit

    q = np.asarray(q_grid, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    p0 = [h[0], h[-1], float(np.median(q)), max(float(np.ptp(q)) / 8.0, 1e-3)]
    params, _ = curve_fit(boltzmann, q, h, p0=p0, maxfev=20000)
    return params, boltzmann(q, *params)


def fluctuation_surface(series, config: DfaConfig | None = None) -> FluctuationSurface:
    config = config or DfaConfig()
    ts = as_series(series)
    scales = config.scales_for(len(ts))
    prof = profile(ts).values
    values = np.empty((len(config.q_grid), len(scales)))
    clamps = 0
    for j, s in enumerate(scales):
        grid = segment_bidirectional(prof, s)
        windows = grid.take(prof)
        trend = fit_windows(windows, config.m)
        if config.variant is Variant.HMF:
            delta, c = _hmf_residuals(config.alpha, windows, trend)
            clamps += c
        else:
            delta = windows - trend
        var = np.mean(delta * delta, axis=1)
        _check_variances(var, config.q_grid, s)
        with np.errstate(divide="ignore"):
            log_var = np.log(var)
        values[:, j] = np.exp(_log_fluctuations(log_var, config.q_grid))
    return FluctuationSurface(config.q_grid, scales, values, clamps)


def compute_hfs(series, config: DfaConfig | None = None, estimator: str = "ols") -> FractalSeries:
    """Generalized Hurst exponent curve H(q) of ``series``."""
    config = config or DfaConfig()
    surface = fluctuation_surface(series, config)
    h = np.empty(len(surface.q_grid))
    r2 = np.empty_like(h)
    for i, q in enumerate(surface.q_grid):
        h[i], r2[i] = hurst_fit(surface.s_grid, surface.values[i], q, estimator)
    return FractalSeries(surface.q_grid, h, r2, surface.clamp_count)


__all__ = [
    "DfaConfig",
    "FluctuationSurface",
    "FractalSeries",
    "TimeSeries",
    "Variant",
    "boltzmann_fit",
    "compute_hfs",
    "default_q_grid",
    "default_s_grid",
    "detrend_hmf",
    "detrend_standard",
    "fluctuation",
    "fluctuation_surface",
    "hurst_fit",
    "local_variance",
    "sigmoid_project",
    "sigmoid_unproject",
]
