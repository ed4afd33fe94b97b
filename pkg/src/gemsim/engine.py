"""Gradient echo memory engine.

Each transverse pixel carries an independent z-line of spin wave ``sigma``
driven by the probe envelope ``E``:

    d_t sigma = -(gamma + i eta (z - L/2)) sigma + i (g Omega / Delta_w) E
    d_z E     =  i (N Omega / Delta_w) sigma

The field equation is solved as a z-integral at every time step (the cell
transit time is far below ``dt``).  Time stepping is a Strang split: the
decay/dephasing factor is applied exactly over two half steps around an RK2
midpoint update of the Raman source term.  Transverse diffusion is a
separate split step after every engine step.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._kernels import advance_block
from .optics import EraserPulse, apply_diffusion, clamp_mask, diffusion_kernels
from .units import DELTA_W, D_VAPOR, TWO_PI, SimulationGrid, check_field

log = logging.getLogger(__name__)

# dt * max(beta L, |eta| L) must not exceed this.
STABILITY_CONSTANT = 0.1


class NumericalError(FloatingPointError):
    pass


@dataclass(frozen=True)
class MediumParams:
    """Raman coupling g, linear density N_lin, detuning, decoherence, diffusion.

    The engine only ever uses ``g * Omega / Delta_w`` and
    ``N_lin * Omega / Delta_w``; :meth:`from_coupling` builds a medium from
    the single product ``beta = g N Omega^2 / Delta_w^2`` with g = N_lin,
    which makes ``int |sigma|^2 dz`` and the photon flux share one scale.
    """

    g: float
    N_lin: float
    Delta_w: float = DELTA_W
    gamma0: float = 0.0
    D: float = D_VAPOR

    def __post_init__(self):
        if self.g < 0 or self.N_lin < 0:
            raise ValueError("g and N_lin must be non-negative")
        if self.gamma0 < 0 or self.D < 0:
            raise ValueError("gamma0 and D must be non-negative")
        if self.Delta_w == 0:
            raise ValueError("Delta_w must be non-zero")

    @classmethod
    def from_coupling(cls, beta: float, rabi_ref: float, Delta_w: float = DELTA_W,
                      gamma0: float = 0.0, D: float = D_VAPOR) -> "MediumParams":
        if beta < 0 or rabi_ref <= 0:
            raise ValueError("beta must be >= 0 and rabi_ref > 0")
        gn = math.sqrt(beta) * abs(Delta_w) / rabi_ref
        return cls(g=gn, N_lin=gn, Delta_w=Delta_w, gamma0=gamma0, D=D)

    def coupling(self, rabi: float) -> float:
        """Effective beta (1/(us mm)) at control Rabi frequency ``rabi``."""
        return self.g * self.N_lin * rabi**2 / self.Delta_w**2


@dataclass(frozen=True)
class GradientSchedule:
    """Gradient slope eta0 (rad/us/mm) whose sign flips at ``flip_times``."""

    eta0: float
    flip_times: tuple[float, ...] = ()

    def __post_init__(self):
        flips = tuple(float(t) for t in self.flip_times)
        if any(b <= a for a, b in zip(flips, flips[1:])):
            raise ValueError("flip_times must be strictly increasing")
        object.__setattr__(self, "flip_times", flips)

    @classmethod
    def from_broadening(cls, broadening_hz: float, cell_length: float, flip_times=()):
        """Slope giving a Zeeman-broadened Raman line ``broadening_hz`` wide across the cell."""
        eta0 = TWO_PI * broadening_hz * 1e-6 / cell_length
        return cls(eta0=eta0, flip_times=tuple(flip_times))

    def eta(self, t: float) -> float:
        n = sum(1 for tf in self.flip_times if tf <= t)
        return self.eta0 * (-1) ** n

    def phase_integral(self, t0: float, t1: float) -> float:
        """Exact integral of eta(t) over [t0, t1]."""
        total, t = 0.0, t0
        for tf in self.flip_times:
            if tf <= t:
                continue
            if tf >= t1:
                break
            total += self.eta(t) * (tf - t)
            t = tf
        return total + self.eta(t) * (t1 - t)

    def broadening_hz(self, cell_length: float) -> float:
        return abs(self.eta0) * cell_length / TWO_PI * 1e6


def multi_flip_schedule(base: GradientSchedule, n_rephasings: int, period: float) -> GradientSchedule:
    """Schedule with ``n_rephasings`` sign flips, ``period`` apart, from base's first flip."""
    if n_rephasings < 1 or period <= 0:
        raise ValueError("need n_rephasings >= 1 and period > 0")
    t0 = base.flip_times[0] if base.flip_times else 0.0
    return GradientSchedule(base.eta0, tuple(t0 + k * period for k in range(n_rephasings)))


@dataclass
class BeamPulse:
    """Top-hat control pulse; ``mask`` is the normalised intensity profile."""

    mask: np.ndarray
    rabi: float
    t_on: float
    t_off: float
    kind: str = "read"

    def __post_init__(self):
        self.mask = clamp_mask(self.mask)
        if self.kind not in ("write", "read"):
            raise ValueError(f"unknown control pulse kind {self.kind!r}")
        if not self.t_off > self.t_on:
            raise ValueError("pulse needs t_off > t_on")
        if self.rabi < 0:
            raise ValueError("rabi must be non-negative")

    def overlap(self, t0: float, t1: float) -> float:
        return max(0.0, min(t1, self.t_off) - max(t0, self.t_on))


@dataclass
class BeamSchedule:
    pulses: list[BeamPulse] = field(default_factory=list)
    erasers: list[EraserPulse] = field(default_factory=list)

    def windows(self, kind: str):
        return [(p.t_on, p.t_off) for p in self.pulses if p.kind == kind]

    @property
    def max_rabi(self) -> float:
        return max((p.rabi for p in self.pulses), default=0.0)

    def overlap_warnings(self) -> list[str]:
        """Eraser pulses that overlap a read pulse in both time and space."""
        out = []
        for i, e in enumerate(self.erasers):
            for j, p in enumerate(self.pulses):
                if p.kind != "read":
                    continue
                if min(e.t_off, p.t_off) > max(e.t_on, p.t_on) and np.any(e.mask * p.mask > 0):
                    out.append(
                        f"eraser {i} overlaps read pulse {j} on a shared pixel region;"
                        " it only adds decoherence there"
                    )
        return out


@dataclass
class ProbePulse:
    """Probe input at z = 0: sqrt(mask) * amplitude * envelope(t) * exp(-i detuning t).

    With ``width`` set the envelope is Gaussian, its intensity falling to
    1/e^2 at ``center +- width/2``.  With ``width=None`` the envelope is
    flat over [t_on, t_off] (a monochromatic probe).
    """

    mask: np.ndarray
    amplitude: float = 1.0
    center: float = 2.0
    width: float | None = 2.0
    detuning: float = 0.0
    t_on: float = -math.inf
    t_off: float = math.inf

    def __post_init__(self):
        self.mask = clamp_mask(self.mask)
        self._root_mask = np.sqrt(self.mask)

    def envelope(self, t: float) -> complex:
        if not self.t_on <= t <= self.t_off:
            return 0j
        env = 1.0
        if self.width is not None:
            w = self.width / 2.0
            env = math.exp(-((t - self.center) / w) ** 2)
        return self.amplitude * env * complex(math.cos(self.detuning * t), -math.sin(self.detuning * t))

    def field(self, t: float) -> np.ndarray:
        return self._root_mask * self.envelope(t)


def stability_dt(medium: MediumParams, beams: BeamSchedule, gradient: GradientSchedule,
                 cell_length: float) -> float:
    """Largest dt allowed by the engine's stability rule."""
    rate = max(medium.coupling(beams.max_rabi) * cell_length, abs(gradient.eta0) * cell_length)
    return math.inf if rate == 0 else STABILITY_CONSTANT / rate


@dataclass
class EngineState:
    sigma: np.ndarray
    t_now: float = 0.0
    echo_out: list = field(default_factory=list)


@dataclass
class Protocol:
    """Everything ``run_protocol`` needs: grid, medium, gradient, beams, probe."""

    grid: SimulationGrid
    medium: MediumParams
    gradient: GradientSchedule
    beams: BeamSchedule
    probe: ProbePulse | None = None
    kappa: float = 1.0
    frame_cadence: float = 0.1
    snapshot_times: tuple[float, ...] = ()
    debug: bool = False
    workers: int = 1
    check_stability: bool = True


@dataclass
class RunResult:
    """Output of :func:`run_protocol`.

    ``echo`` holds the complex output envelope E(x, y, z=L) at every step
    midpoint ``times``; ``probe_envelope`` is the scalar input envelope at
    the same instants, so the input field is ``sqrt(probe_mask) * envelope``.
    """

    grid: SimulationGrid
    times: np.ndarray
    echo: np.ndarray
    probe_envelope: np.ndarray
    probe_mask: np.ndarray
    frame_edges: np.ndarray
    frames: np.ndarray
    snapshots: dict
    sigma_final: np.ndarray
    write_windows: list
    read_windows: list
    metrics: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def dt(self) -> float:
        return self.grid.dt

    @property
    def frame_times(self) -> np.ndarray:
        return 0.5 * (self.frame_edges[1:] + self.frame_edges[:-1])

    def output_intensity(self) -> np.ndarray:
        return self.echo.real**2 + self.echo.imag**2

    def input_energy(self) -> np.ndarray:
        """Per-pixel input energy, integral of |E_in|^2 dt."""
        return self.probe_mask * float(np.sum(np.abs(self.probe_envelope) ** 2) * self.dt)

    def window_energy(self, t0: float, t1: float) -> np.ndarray:
        """Per-pixel output energy with step midpoints inside [t0, t1)."""
        sel = (self.times >= t0) & (self.times < t1)
        out = self.echo[sel]
        return np.sum(out.real**2 + out.imag**2, axis=0) * self.dt

    def output_power(self) -> np.ndarray:
        """Output power summed over the transverse plane (per unit area weights)."""
        return self.output_intensity().sum(axis=(1, 2)) * self.grid.dx * self.grid.dy

    def input_power(self) -> np.ndarray:
        return np.abs(self.probe_envelope) ** 2 * float(self.probe_mask.sum()) * self.grid.dx * self.grid.dy


class Engine:
    """Time stepper with the per-run caches (phase ramps, control fields)."""

    def __init__(self, protocol: Protocol):
        p = protocol
        self.protocol = p
        self.grid = grid = p.grid
        self.medium = p.medium
        self.zrel = grid.z - grid.cell_length / 2.0
        self._phase_cache: dict = {}
        self._control_cache: dict = {}
        self.kernels = diffusion_kernels(grid, p.medium.D, grid.dt) if p.medium.D > 0 else None
        for pulse in p.beams.pulses:
            check_field(pulse.mask, grid)
        for er in p.beams.erasers:
            check_field(er.mask, grid)
        if p.probe is not None:
            check_field(p.probe.mask, grid)
        self.workers = max(1, int(p.workers))
        n = grid.nx
        bounds = np.linspace(0, n, min(self.workers, n) + 1).round().astype(int)
        self.slabs = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        self._zeros2d = np.zeros(grid.shape2d)
        self._zeros2c = np.zeros(grid.shape2d, dtype=complex)

    # -- cached pieces --------------------------------------------------
    def phase_ramp(self, phi: float) -> np.ndarray:
        key = round(phi, 15)
        ramp = self._phase_cache.get(key)
        if ramp is None:
            ramp = np.exp(-1j * phi * self.zrel)
            if len(self._phase_cache) > 64:
                self._phase_cache.clear()
            self._phase_cache[key] = ramp
        return ramp

    def control(self, t0: float, t1: float):
        """Per-pixel (a, b) coefficients averaged over [t0, t1], or None if dark."""
        fracs = tuple(round(pl.overlap(t0, t1) / (t1 - t0), 12) for pl in self.protocol.beams.pulses)
        if not any(fracs):
            return None
        cached = self._control_cache.get(fracs)
        if cached is None:
            rabi_sq = np.zeros(self.grid.shape2d)
            for pl, f in zip(self.protocol.beams.pulses, fracs):
                if f:
                    rabi_sq += f * pl.rabi**2 * pl.mask
            rabi = np.sqrt(rabi_sq)
            m = self.medium
            cached = (m.g * rabi / m.Delta_w, m.N_lin * rabi / m.Delta_w)
            self._control_cache[fracs] = cached
        return cached

    def decay_exponent(self, t0: float, t1: float):
        """Integral of gamma over [t0, t1]: scalar, 2D array or 0."""
        total = self.medium.gamma0 * (t1 - t0)
        for er in self.protocol.beams.erasers:
            ov = er.overlap(t0, t1)
            if ov > 0:
                total = total + ov * er.rate_field(self.protocol.kappa)
        return total

    # -- stepping -------------------------------------------------------
    def decay_factor(self, t0: float, t1: float) -> np.ndarray:
        ex = self.decay_exponent(t0, t1)
        if np.ndim(ex) == 0:
            key = ("decay", round(float(ex), 15))
            fac = self._control_cache.get(key)
            if fac is None:
                fac = np.full(self.grid.shape2d, math.exp(-float(ex)))
                self._control_cache[key] = fac
            return fac
        return np.exp(-ex)

    def step(self, sigma: np.ndarray, t0: float, probe_mid: np.ndarray | None):
        """Advance ``sigma`` in place from t0 to t0 + dt; return outlet field at the midpoint."""
        grid = self.grid
        dt = grid.dt
        tm, t1 = t0 + 0.5 * dt, t0 + dt
        g = self.protocol.gradient
        ramp1 = self.phase_ramp(g.phase_integral(t0, tm))
        ramp2 = self.phase_ramp(g.phase_integral(tm, t1))
        dec1 = self.decay_factor(t0, tm)
        dec2 = self.decay_factor(tm, t1)
        ctrl = self.control(t0, t1)
        active = ctrl is not None
        a, b = ctrl if active else (self._zeros2d, self._zeros2d)
        e_in = self._zeros2c if probe_mid is None else np.ascontiguousarray(probe_mid, dtype=complex)
        e_out = np.empty(grid.shape2d, dtype=complex)

        def work(sl):
            advance_block(sigma[sl], ramp1, ramp2, dec1[sl], dec2[sl], a[sl], b[sl], e_in[sl],
                          dt, grid.dz, active, e_out[sl])

        if len(self.slabs) == 1:
            work(self.slabs[0])
        else:
            with ThreadPoolExecutor(max_workers=len(self.slabs)) as ex:
                list(ex.map(work, self.slabs))
        return e_out


def _outlet_and_field(sigma, b, e_in, dz):
    """Trapezoid z-integral of the field equation (vectorised reference form)."""
    csum = np.cumsum(sigma, axis=-1)
    inner = (csum - 0.5 * sigma) * dz
    e_field = e_in[..., None] + 1j * b[..., None] * inner
    e_out = e_in + 1j * b * csum[..., -1] * dz
    return e_field, e_out


def solve_field_slice(sigma_z: np.ndarray, omega: float, params: MediumParams, probe_bc: complex,
                      dz: float) -> np.ndarray:
    """Field along one pixel's z-line at the sigma sample points z_k = (k + 1/2) dz."""
    if omega < 0:
        raise ValueError("omega must be non-negative")
    sigma_z = np.asarray(sigma_z, dtype=complex)
    b = np.asarray(params.N_lin * omega / params.Delta_w)
    e_field, _ = _outlet_and_field(sigma_z, b, np.asarray(probe_bc, dtype=complex), dz)
    return e_field


def outlet_field(sigma_z: np.ndarray, omega: float, params: MediumParams, probe_bc: complex,
                 dz: float) -> complex:
    """Field leaving the cell at z = L for one pixel."""
    b = params.N_lin * omega / params.Delta_w
    return complex(probe_bc + 1j * b * np.sum(sigma_z) * dz)


def step_spinwave(state: EngineState, grid: SimulationGrid, medium: MediumParams,
                  gradient: GradientSchedule, beams: BeamSchedule, gamma_field=None,
                  probe: ProbePulse | None = None, dt: float | None = None,
                  debug: bool = True) -> EngineState:
    """One engine step from ``state.t_now``.

    ``gamma_field`` is the local decoherence rate (scalar or (nx, ny) array)
    held fixed over the step; when omitted it is gamma0 plus any active
    eraser pulses.
    """
    if dt is not None and dt != grid.dt:
        grid = replace(grid, dt=dt)
    proto = Protocol(grid=grid, medium=medium, gradient=gradient, beams=beams, probe=probe)
    eng = Engine(proto)
    if gamma_field is not None:
        gf = np.asarray(gamma_field, dtype=float)
        if np.any(gf < 0):
            raise ValueError("gamma_field must be non-negative")
        eng.decay_exponent = lambda t0, t1: gf * (t1 - t0) if gf.ndim else float(gf) * (t1 - t0)
    sigma = np.array(state.sigma, dtype=complex, copy=True)
    tm = state.t_now + 0.5 * grid.dt
    probe_mid = probe.field(tm) if probe is not None else None
    e_out = eng.step(sigma, state.t_now, probe_mid)
    if eng.kernels is not None:
        sigma = apply_diffusion(sigma, eng.kernels)
    if debug and not np.all(np.isfinite(sigma)):
        raise NumericalError(f"non-finite spin wave at t = {state.t_now + grid.dt:.6g} us")
    return EngineState(sigma=sigma, t_now=state.t_now + grid.dt, echo_out=state.echo_out + [e_out])


def _frame_edges(t_max: float, cadence: float, windows) -> np.ndarray:
    edges = set(np.round(np.arange(0.0, t_max + 1e-9, cadence), 9).tolist())
    edges.add(round(t_max, 9))
    for a, b in windows:
        for t in (a, b):
            if 0 < t < t_max:
                edges.add(round(t, 9))
    return np.array(sorted(edges))


def run_protocol(protocol: Protocol, sigma0: np.ndarray | None = None) -> RunResult:
    """Integrate write, storage, erasure, flips and reads over [0, t_max]."""
    grid = protocol.grid
    if protocol.check_stability:
        bound = stability_dt(protocol.medium, protocol.beams, protocol.gradient, grid.cell_length)
        if grid.dt > bound * (1 + 1e-9):
            raise ValueError(f"dt = {grid.dt} us exceeds the stability bound {bound:.4g} us")
    eng = Engine(protocol)
    sigma = grid.zeros() if sigma0 is None else np.array(sigma0, dtype=complex, copy=True)
    check_field(sigma, grid)
    n_steps = grid.n_steps
    times = (np.arange(n_steps) + 0.5) * grid.dt
    echo = np.empty((n_steps, grid.nx, grid.ny), dtype=complex)
    probe = protocol.probe
    env = np.zeros(n_steps, dtype=complex)
    snaps_wanted = sorted(protocol.snapshot_times)
    snapshots = {}

    for n in range(n_steps):
        t0 = n * grid.dt
        if probe is not None:
            env[n] = probe.envelope(times[n])
            probe_mid = probe._root_mask * env[n] if env[n] != 0 else None
        else:
            probe_mid = None
        echo[n] = eng.step(sigma, t0, probe_mid)
        if eng.kernels is not None:
            sigma = apply_diffusion(sigma, eng.kernels)
        t1 = (n + 1) * grid.dt
        while snaps_wanted and snaps_wanted[0] <= t1 + 1e-12:
            snapshots[snaps_wanted.pop(0)] = sigma.copy()
        if protocol.debug and not (np.all(np.isfinite(sigma)) and np.all(np.isfinite(echo[n]))):
            raise NumericalError(f"non-finite values after step {n} (t = {t1:.6g} us)")
    if not np.all(np.isfinite(sigma)):
        raise NumericalError("non-finite spin wave at the end of the run")

    write_w = protocol.beams.windows("write")
    read_w = protocol.beams.windows("read")
    edges = _frame_edges(grid.t_max, protocol.frame_cadence, write_w + read_w)
    intensity = echo.real**2 + echo.imag**2
    idx = np.searchsorted(edges, times, side="right") - 1
    frames = np.zeros((len(edges) - 1, grid.nx, grid.ny))
    np.add.at(frames, np.clip(idx, 0, len(edges) - 2), intensity * grid.dt)

    result = RunResult(
        grid=grid,
        times=times,
        echo=echo,
        probe_envelope=env,
        probe_mask=probe.mask if probe is not None else np.zeros(grid.shape2d),
        frame_edges=edges,
        frames=frames,
        snapshots=snapshots,
        sigma_final=sigma,
        write_windows=write_w,
        read_windows=read_w,
        warnings=protocol.beams.overlap_warnings(),
    )
    for w in result.warnings:
        log.warning(w)
    return result
