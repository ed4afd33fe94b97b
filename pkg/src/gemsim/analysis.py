"""Fringe visibility, diffusion-limited channel density and run metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit
from scipy.special import erf as _erf
from scipy.special import erfinv as _erfinv


class UndefinedVisibility(ZeroDivisionError):
    pass


def erf(x):
    """Error function (scipy's Cephes-based implementation, ~1e-16 absolute)."""
    out = _erf(np.asarray(x, dtype=float))
    return out if out.ndim else float(out)


def erf_inv(y, newton_steps: int = 2):
    """Inverse error function on (-1, 1).

    scipy's estimate is polished with Newton steps against :func:`erf`, so
    ``erf(erf_inv(y)) == y`` to rounding.
    """
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(y) >= 1) or np.any(np.isnan(y)):
        raise ValueError("erf_inv is defined on the open interval (-1, 1)")
    x = _erfinv(y)
    for _ in range(newton_steps):
        x = x - (_erf(x) - y) * (math.sqrt(math.pi) / 2.0) * np.exp(x * x)
    return x if x.ndim else float(x)


@dataclass(frozen=True)
class ChannelGeometry:
    """Channels of width ``b`` separated by gaps of width ``a`` (mm).

    The origin sits at the centre of a gap, so channel centres are at
    odd multiples of ``(a + b) / 2``.
    """

    b: float
    a: float

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("channel width and separation must be positive")

    @property
    def period(self) -> float:
        return self.a + self.b

    @classmethod
    def from_line_pairs(cls, line_pairs_per_mm: float, duty: float = 0.5) -> "ChannelGeometry":
        period = 1.0 / line_pairs_per_mm
        return cls(b=duty * period, a=(1.0 - duty) * period)


@dataclass(frozen=True)
class VisibilityResult:
    V: float
    I_peak: float
    I_valley: float
    background: float


def visibility(x, intensity, geometry: ChannelGeometry, background: float = 0.0,
               origin: float = 0.0) -> VisibilityResult:
    """Michelson visibility between a channel centre and the neighbouring gap centre.

    The profile is sampled by linear interpolation at ``origin`` (gap centre)
    and ``origin + (a + b)/2`` (channel centre).  ``background`` is subtracted
    from both samples first; pass a negative value to add a floor instead.
    """
    x = np.asarray(x, dtype=float)
    intensity = np.asarray(intensity, dtype=float)
    x_gap = origin
    x_peak = origin + geometry.period / 2.0
    if not (x[0] <= min(x_gap, x_peak) and max(x_gap, x_peak) <= x[-1]):
        raise ValueError("profile does not cover both the gap and the channel centre")
    i_peak = float(np.interp(x_peak, x, intensity)) - background
    i_valley = float(np.interp(x_gap, x, intensity)) - background
    denom = i_peak + i_valley
    if denom == 0:
        raise UndefinedVisibility("peak and valley both vanish after background subtraction")
    return VisibilityResult((i_peak - i_valley) / denom, i_peak, i_valley, background)


def visibility_approx(a: float, D: float, t: float, background: float = 0.0) -> float:
    """Nearest-neighbour diffusion estimate of the gap visibility.

    Valid for narrow gaps (a << b) and short times (sqrt(D t) << b).  With a
    normalised ``background`` added to the channel intensity (1) and to the
    gap intensity, the expression becomes erf(u) / (2 - erf(u) + 2 bg).
    """
    if a < 0 or D < 0 or t < 0:
        raise ValueError("a, D and t must be non-negative")
    if a == 0:
        return 0.0
    if D * t == 0:
        e = 1.0
    else:
        e = erf(a / (4.0 * math.sqrt(D * t)))
    return e / (2.0 - e + 2.0 * background)


def channel_density(V_lim: float, D: float, t: float, b: float) -> float:
    """Largest linear channel density (1/mm) keeping the visibility above ``V_lim``."""
    if not 0.0 < V_lim < 1.0:
        raise ValueError("V_lim must lie in (0, 1)")
    if D <= 0 or t <= 0 or b <= 0:
        raise ValueError("D, t and b must be positive")
    return 1.0 / (4.0 * math.sqrt(D * t) * erf_inv(2.0 * V_lim / (1.0 + V_lim)) + b)


def buffer_width(V_lim: float, D: float, t: float) -> float:
    """Gap width a that the density formula reserves between channels."""
    return 4.0 * math.sqrt(D * t) * erf_inv(2.0 * V_lim / (1.0 + V_lim))


def square_channel_profile(x, geometry: ChannelGeometry, n_channels: int, h: float | None = None) -> np.ndarray:
    """``n_channels`` unit channels centred around the gap at x = 0 (zero elsewhere).

    With a sample spacing ``h`` each sample holds the fraction of its cell
    covered by a channel, so channel areas are exact on any grid.
    """
    x = np.asarray(x, dtype=float)
    P = geometry.period
    half = n_channels // 2
    centres = (np.arange(-half, n_channels - half) + 0.5) * P
    prof = np.zeros_like(x)
    for c in centres:
        if h is None:
            prof[np.abs(x - c) <= geometry.b / 2.0] = 1.0
        else:
            prof += np.clip((geometry.b / 2.0 - np.abs(x - c)) / h + 0.5, 0.0, 1.0)
    return prof


def brute_force_visibility(geometry: ChannelGeometry, D: float, t: float, n_channels: int = 21,
                           background: float = 0.0, points_per_a: int = 200,
                           max_points: int = 4_000_000) -> float:
    """Gap visibility from a direct numerical heat-kernel blur of the channel profile.

    A dense 1D grid carries ``n_channels`` square channels; the profile is
    convolved with a sampled Gaussian of variance 2 D t and the visibility
    is read at the central gap.  ``background`` is a normalised floor added
    to the blurred intensity.
    """
    if n_channels < 3:
        raise ValueError("need at least three channels")
    if points_per_a < 50:
        raise ValueError("under-resolved grid: need >= 50 points across the gap")
    if D < 0 or t < 0:
        raise ValueError("D and t must be non-negative")
    sig = math.sqrt(2.0 * D * t)
    h = min(geometry.a, geometry.b) / points_per_a
    if sig > 0:
        h = min(h, sig / 8.0)
    P = geometry.period
    pad = 8.0 * sig
    half_len = (n_channels / 2.0 + 1.0) * P + pad
    n = 2 * int(math.ceil(half_len / h)) + 1
    if n > max_points:
        raise ValueError(f"under-resolved grid: {n} points requested, limit {max_points}")
    x = (np.arange(n) - n // 2) * h
    prof = square_channel_profile(x, geometry, n_channels, h)
    if sig > 0:
        r = int(math.ceil(8.0 * sig / h))
        xk = np.arange(-r, r + 1) * h
        kernel = np.exp(-0.5 * (xk / sig) ** 2)
        kernel /= kernel.sum()
        prof = np.convolve(prof, kernel, mode="same")
    return visibility(x, prof, geometry, background=-background).V


def extract_profile(frame, row_range) -> np.ndarray:
    """Average a (nx, ny) frame over y rows ``row_range`` and normalise to its maximum."""
    frame = np.asarray(frame, dtype=float)
    start, stop = row_range
    if not 0 <= start < stop <= frame.shape[1]:
        raise ValueError(f"row range {row_range} is empty or outside the frame")
    prof = frame[:, start:stop].mean(axis=1)
    peak = prof.max()
    return prof / peak if peak > 0 else prof


def edge_width_10_90(x, profile, falling: bool = True, level_lo: float = 0.1,
                     level_hi: float = 0.9) -> float:
    """Distance between the 90 % and 10 % crossings of a monotone edge (linear interpolation)."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(profile, dtype=float)
    if falling:
        x, p = -x[::-1], p[::-1]

    def crossing(level):
        idx = np.nonzero((p[:-1] < level) & (p[1:] >= level))[0]
        if len(idx) == 0:
            raise ValueError(f"profile never crosses {level}")
        i = idx[0]
        return x[i] + (level - p[i]) * (x[i + 1] - x[i]) / (p[i + 1] - p[i])

    return float(crossing(level_hi) - crossing(level_lo))


def retrieval_efficiency(run, t_start: float | None = None) -> float:
    """Output energy after ``t_start`` over total input energy.

    ``t_start`` defaults to the end of the last write pulse, so light that
    leaks straight through during writing is not counted as echo.
    """
    if t_start is None:
        t_start = max((b for _, b in run.write_windows), default=0.0)
    e_in = float(run.input_power().sum() * run.dt)
    if e_in <= 0:
        raise ValueError("run has zero input energy")
    sel = run.times >= t_start
    return float(run.output_power()[sel].sum() * run.dt / e_in)


def transmitted_fraction(run, t_end: float | None = None) -> float:
    """Output energy before ``t_end`` (default: end of writing) over input energy."""
    if t_end is None:
        t_end = max((b for _, b in run.write_windows), default=run.grid.t_max)
    e_in = float(run.input_power().sum() * run.dt)
    if e_in <= 0:
        raise ValueError("run has zero input energy")
    sel = run.times < t_end
    return float(run.output_power()[sel].sum() * run.dt / e_in)


def fit_exponential(x, y):
    """Least-squares fit of y = A exp(-x / tau); returns (A, tau)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pos = y > 0
    slope, icpt = np.polyfit(x[pos], np.log(y[pos]), 1)
    p0 = (math.exp(icpt), -1.0 / slope if slope < 0 else 1.0)
    (A, tau), _ = curve_fit(lambda t, A, tau: A * np.exp(-t / tau), x, y, p0=p0)
    return float(A), float(tau)
