"""Transverse-plane physics: masks, read zones, atomic diffusion and the eraser.

Masks are real arrays of shape ``(nx, ny)`` holding a *normalised intensity*
profile in [0, 1].  A read or write beam with mask ``m`` couples a pixel with
Rabi frequency ``rabi * sqrt(m)``, and an eraser with mask ``m`` illuminates
it at saturation ratio ``s_peak * m``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import erf, erfinv, ive

from ._kernels import correlate_axis0, correlate_axis1
from .units import DELTA_E, GAMMA, SimulationGrid

# 10-90 % width of a Gaussian-blurred step, in units of the blur's standard deviation.
EDGE_10_90_PER_SIGMA = 2.0 * math.sqrt(2.0) * float(erfinv(0.8))


class DomainError(ValueError):
    pass


def clamp_mask(values) -> np.ndarray:
    return np.clip(np.asarray(values, dtype=float), 0.0, 1.0)


def uniform_mask(grid: SimulationGrid, value: float = 1.0) -> np.ndarray:
    return np.full(grid.shape2d, float(value))


def _smooth_step(x, edge_width):
    """Rising erf edge at x=0 whose 10-90 % width equals ``edge_width``."""
    if edge_width <= 0:
        return (np.asarray(x) >= 0).astype(float)
    s = edge_width / EDGE_10_90_PER_SIGMA
    return 0.5 * (1.0 + erf(np.asarray(x) / (math.sqrt(2.0) * s)))


def rectangle_mask(grid, x_range, y_range=None, edge_width=0.0) -> np.ndarray:
    """Top-hat rectangle with erf-shaped edges (separable in x and y)."""
    x0, x1 = x_range
    mx = _smooth_step(grid.x - x0, edge_width) - _smooth_step(grid.x - x1, edge_width)
    if y_range is None:
        my = np.ones(grid.ny)
    else:
        y0, y1 = y_range
        my = _smooth_step(grid.y - y0, edge_width) - _smooth_step(grid.y - y1, edge_width)
    return clamp_mask(np.outer(mx, my))


def gaussian_envelope(grid: SimulationGrid, waist: float) -> np.ndarray:
    """Gaussian intensity envelope exp(-2 r^2 / w^2) centred on the axis."""
    r2 = grid.x[:, None] ** 2 + grid.y[None, :] ** 2
    return np.exp(-2.0 * r2 / waist**2)


def make_resolution_target(grid: SimulationGrid, line_pairs_per_mm: float, duty: float = 0.5,
                           center: float = 0.0) -> np.ndarray:
    """Binary vertical-stripe target; ``duty`` is the bright fraction of a period.

    A bright stripe is centred on ``x = center``.  Pixels are assigned by
    their centre coordinate.
    """
    if line_pairs_per_mm <= 0:
        raise DomainError("line_pairs_per_mm must be positive")
    if not 0.0 < duty <= 1.0:
        raise DomainError(f"duty must lie in (0, 1], got {duty}")
    period = 1.0 / line_pairs_per_mm
    if period < 4 * grid.dx:
        raise DomainError(
            f"period {period:.4g} mm is below 4 pixels ({4 * grid.dx:.4g} mm); unresolvable"
        )
    if duty == 1.0:
        return uniform_mask(grid)
    phase = np.mod(grid.x - center + period / 2.0, period) - period / 2.0
    stripes = (np.abs(phase) < duty * period / 2.0).astype(float)
    return np.repeat(stripes[:, None], grid.ny, axis=1)


@dataclass
class ZoneMaskSet:
    masks: list[np.ndarray]
    windows: list[tuple[float, float]]
    boundaries: list[float]
    edge_width: float = 0.9


def make_zone_masks(grid: SimulationGrid, boundaries_x, edge_width: float = 0.9,
                    windows=None) -> ZoneMaskSet:
    """Complementary read-zone masks split along x at ``boundaries_x``.

    Zone k covers the interval between boundary k-1 and boundary k.  The
    masks telescope, so they sum to one at every pixel.
    """
    boundaries = [float(b) for b in boundaries_x]
    if sorted(boundaries) != boundaries:
        raise DomainError("zone boundaries must be sorted")
    if edge_width <= 0:
        raise DomainError("edge_width must be positive")
    lo, hi = grid.x[0] - grid.dx / 2, grid.x[-1] + grid.dx / 2
    for b in boundaries:
        if not lo < b < hi:
            raise DomainError(f"boundary {b} mm lies outside the domain [{lo}, {hi}]")
    if windows is None:
        windows = [(0.0, grid.t_max)] * (len(boundaries) + 1)
    windows = [(float(a), float(b)) for a, b in windows]
    if len(windows) != len(boundaries) + 1:
        raise DomainError("need exactly one time window per zone")

    steps = [_smooth_step(grid.x - b, edge_width) for b in boundaries]
    edges = [np.ones(grid.nx)] + steps + [np.zeros(grid.nx)]
    masks = []
    for k in range(len(boundaries) + 1):
        profile = edges[k] - edges[k + 1] if k > 0 else 1.0 - edges[1]
        masks.append(np.repeat(profile[:, None], grid.ny, axis=1))
    return ZoneMaskSet(masks=masks, windows=windows, boundaries=boundaries, edge_width=edge_width)


# --- diffusion -------------------------------------------------------------

@lru_cache(maxsize=64)
def discrete_gaussian_kernel(variance: float, tol: float = 1e-13) -> np.ndarray:
    """Discrete analogue of the Gaussian, T(n) = exp(-v) I_n(v).

    Its variance is exactly ``variance`` (in pixel^2) and kernels compose
    exactly under convolution, which a sampled Gaussian does not do once
    the width drops below a pixel.
    """
    if variance <= 0:
        return np.ones(1)
    n_max = int(math.ceil(12.0 * math.sqrt(variance) + 12))
    half = ive(np.arange(n_max + 1), variance)
    tail = np.cumsum(half[::-1])[::-1]
    # Smallest radius whose two-sided tail mass is below tol.
    radius = int(np.argmax(2.0 * tail < tol)) if np.any(2.0 * tail < tol) else n_max
    radius = max(radius, 1)
    kernel = np.concatenate([half[radius:0:-1], half[: radius + 1]])
    return kernel / kernel.sum()


def diffusion_kernels(grid: SimulationGrid, D: float, dt: float):
    """Per-axis discrete kernels for one diffusion step (None for skipped axes)."""
    if D < 0 or dt <= 0:
        raise DomainError("diffusion needs D >= 0 and dt > 0")
    kernels = []
    for n, h in ((grid.nx, grid.dx), (grid.ny, grid.dy)):
        if D == 0 or n == 1:
            # A single-pixel axis stands for a transversely uniform field.
            kernels.append(None)
            continue
        var = 2.0 * D * dt / h**2
        # Nominal kernel width is 5 sigma; the stored kernel is cut by tail mass instead.
        reach = 5.0 * math.sqrt(var)
        if reach > n / 2:
            raise DomainError(
                f"diffusion kernel (5 sigma = {reach:.3g} px) is wider than half the domain ({n} px)"
            )
        k = discrete_gaussian_kernel(var)
        kernels.append(k)
    return kernels


def apply_diffusion(sigma: np.ndarray, kernels) -> np.ndarray:
    """Convolve every z-slice of ``sigma`` with precomputed per-axis kernels."""
    kx, ky = kernels
    if kx is None and ky is None:
        return sigma
    is_complex = np.iscomplexobj(sigma)
    src = np.ascontiguousarray(sigma, dtype=complex if is_complex else float)
    # Complex (nx, ny, nz) viewed as real (nx, ny, 2 nz); axes 0 and 1 unchanged.
    work = src.view(np.float64) if is_complex else src
    if work.ndim == 2:
        work = work[:, :, None]
    if kx is not None:
        out = np.empty_like(work)
        correlate_axis0(work, kx, out)
        work = out
    if ky is not None:
        out = np.empty_like(work)
        correlate_axis1(work, ky, out)
        work = out
    work = work.reshape(src.view(np.float64).shape if is_complex else src.shape)
    return work.view(complex) if is_complex else work


def diffuse(sigma: np.ndarray, grid: SimulationGrid, D: float, dt: float) -> np.ndarray:
    """Transverse heat-kernel blur of a spin wave over ``dt`` (variance 2 D dt per axis).

    Real and imaginary parts are blurred independently; outside the grid the
    field is taken to be zero, so coherence that leaves the imaged region is
    lost.
    """
    if dt <= 0:
        raise DomainError("dt must be positive")
    if D == 0:
        return np.array(sigma, copy=True)
    return apply_diffusion(sigma, diffusion_kernels(grid, D, dt))


# --- eraser ----------------------------------------------------------------

def scattering_rate(s, Delta_e=DELTA_E, Gamma=GAMMA):
    """Photon scattering rate of a driven two-level atom (1/us)."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise DomainError("saturation ratio must be non-negative")
    rate = 0.5 * Gamma * s / (1.0 + 4.0 * (Delta_e / Gamma) ** 2 + s)
    return rate if rate.ndim else float(rate)


def saturation_for_rate(rate: float, Delta_e=DELTA_E, Gamma=GAMMA) -> float:
    """Inverse of :func:`scattering_rate` in ``s``."""
    if not 0 <= rate < Gamma / 2:
        raise DomainError(f"rate must lie in [0, Gamma/2), got {rate}")
    return rate * (1.0 + 4.0 * (Delta_e / Gamma) ** 2) / (0.5 * Gamma - rate)


def calibrate_eraser(tau: float, Delta_e=DELTA_E, Gamma=GAMMA, kappa: float = 1.0) -> float:
    """Peak saturation ratio giving a retrieved-intensity decay time ``tau`` (us).

    The coherence decays at ``kappa * R_sc``; the retrieved intensity goes
    as ``|sigma|^2`` and so decays at twice that rate.  We therefore ask for
    ``kappa * R_sc = 1 / (2 tau)``.
    """
    if tau <= 0 or kappa <= 0:
        raise DomainError("tau and kappa must be positive")
    return saturation_for_rate(1.0 / (2.0 * tau * kappa), Delta_e, Gamma)


@dataclass
class EraserPulse:
    mask: np.ndarray
    s_peak: float
    t_on: float
    t_off: float
    Delta_e: float = DELTA_E
    Gamma: float = GAMMA
    _rate_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.mask = clamp_mask(self.mask)
        if self.s_peak < 0:
            raise DomainError("s_peak must be non-negative")
        if not self.t_off > self.t_on:
            raise DomainError("eraser pulse needs t_off > t_on")

    def rate_field(self, kappa: float = 1.0) -> np.ndarray:
        """Decoherence rate (1/us) while the pulse is on."""
        if kappa not in self._rate_cache:
            self._rate_cache[kappa] = kappa * scattering_rate(
                self.s_peak * self.mask, self.Delta_e, self.Gamma
            )
        return self._rate_cache[kappa]

    def overlap(self, t0: float, t1: float) -> float:
        """Length of the intersection of [t0, t1] with the pulse window."""
        return max(0.0, min(t1, self.t_off) - max(t0, self.t_on))


def eraser_gamma_field(pulse: EraserPulse, t: float, kappa: float = 1.0) -> np.ndarray:
    if kappa <= 0:
        raise DomainError("kappa must be positive")
    if pulse.t_on <= t <= pulse.t_off:
        return pulse.rate_field(kappa)
    return np.zeros_like(pulse.mask)
