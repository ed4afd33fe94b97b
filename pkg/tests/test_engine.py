import math
from dataclasses import replace

import numpy as np
import pytest

from gemsim import analysis, optics
from gemsim.engine import (BeamPulse, BeamSchedule, EngineState, GradientSchedule, MediumParams,
                           NumericalError, ProbePulse, Protocol, multi_flip_schedule, outlet_field,
                           run_protocol, solve_field_slice, stability_dt, step_spinwave)

from conftest import RABI, gem_efficiency_theory, pixel_grid, pixel_protocol


def random_sigma(grid, rng):
    return rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)


def dark_setup(nx=2, ny=2, flips=()):
    grid = pixel_grid(nx=nx, ny=ny)
    grad = GradientSchedule.from_broadening(1e6, grid.cell_length, flips)
    medium = MediumParams.from_coupling(0.5 * grad.eta0, RABI, D=0.0)
    return grid, grad, medium, BeamSchedule()


# --- field equation --------------------------------------------------------

def test_field_slice_free_propagation():
    grid = pixel_grid()
    m = MediumParams.from_coupling(0.01, RABI)
    e = solve_field_slice(np.zeros(grid.nz), RABI, m, 1.0, grid.dz)
    np.testing.assert_array_equal(e, 1.0)
    e = solve_field_slice(np.ones(grid.nz), 0.0, m, 0.3 + 0.1j, grid.dz)
    np.testing.assert_array_equal(e, 0.3 + 0.1j)


def test_field_slice_linear_ramp():
    grid = pixel_grid()
    m = MediumParams.from_coupling(0.01, RABI)
    c = 0.7 - 0.2j
    e = solve_field_slice(np.full(grid.nz, c), RABI, m, 0.5, grid.dz)
    b = m.N_lin * RABI / m.Delta_w
    np.testing.assert_allclose(e, 0.5 + 1j * b * c * grid.z, rtol=1e-14, atol=1e-15)
    out = outlet_field(np.full(grid.nz, c), RABI, m, 0.5, grid.dz)
    assert out == pytest.approx(0.5 + 1j * b * c * grid.cell_length, rel=1e-13)


def test_field_slice_rejects_negative_omega():
    with pytest.raises(ValueError):
        solve_field_slice(np.zeros(4), -1.0, MediumParams.from_coupling(0.01, RABI), 1.0, 1.0)


# --- spin-wave step --------------------------------------------------------

def test_pure_dephasing(rng):
    grid, grad, medium, beams = dark_setup()
    s0 = random_sigma(grid, rng)
    st = step_spinwave(EngineState(s0), grid, medium, grad, beams)
    np.testing.assert_allclose(np.abs(st.sigma), np.abs(s0), rtol=1e-13)
    zrel = grid.z - grid.cell_length / 2
    np.testing.assert_allclose(st.sigma, s0 * np.exp(-1j * grad.eta0 * zrel * grid.dt), rtol=1e-12)
    assert st.t_now == pytest.approx(grid.dt)
    assert len(st.echo_out) == 1


def test_decay_halves(rng):
    grid, grad, medium, beams = dark_setup()
    s0 = random_sigma(grid, rng)
    st = step_spinwave(EngineState(s0), grid, medium, grad, beams, gamma_field=math.log(2) / grid.dt)
    np.testing.assert_allclose(np.abs(st.sigma), 0.5 * np.abs(s0), rtol=1e-13)


def test_gamma_field_must_be_non_negative(rng):
    grid, grad, medium, beams = dark_setup()
    with pytest.raises(ValueError):
        step_spinwave(EngineState(grid.zeros()), grid, medium, grad, beams, gamma_field=-1.0)


def test_dephase_rephase_identity(rng):
    n = 40
    grid, grad, medium, beams = dark_setup(flips=(n * 0.0125,))
    s0 = random_sigma(grid, rng)
    st = EngineState(s0)
    for _ in range(2 * n):
        st = step_spinwave(st, grid, medium, grad, beams)
    assert np.abs(st.sigma - s0).max() / np.abs(s0).max() < 1e-9


def test_excitation_conserved_per_step(rng):
    grid, grad, medium, beams = dark_setup()
    st = EngineState(random_sigma(grid, rng))
    before = np.sum(np.abs(st.sigma) ** 2, axis=-1)
    for _ in range(20):
        st = step_spinwave(st, grid, medium, grad, beams)
        after = np.sum(np.abs(st.sigma) ** 2, axis=-1)
        assert np.max(np.abs(after / before - 1)) <= 1e-9
        before = after


@pytest.mark.parametrize("offset_mm", [-60.0, -30.0, 0.0, 30.0, 60.0])
def test_frequency_to_position(offset_mm):
    grid = pixel_grid(t_max=6.0)
    grad = GradientSchedule.from_broadening(1e6, grid.cell_length)
    delta = grad.eta0 * offset_mm
    medium = MediumParams.from_coupling(0.02 * grad.eta0, RABI, D=0.0)
    beams = BeamSchedule([BeamPulse(np.ones((1, 1)), RABI, 0.0, 6.0, "write")])
    probe = ProbePulse(np.ones((1, 1)), width=None, detuning=delta, t_on=0.0, t_off=6.0)
    run = run_protocol(Protocol(grid, medium, grad, beams, probe))
    peak_z = grid.z[np.argmax(np.abs(run.sigma_final[0, 0]))]
    assert abs(peak_z - (grid.cell_length / 2 + offset_mm)) <= grid.dz


# --- full protocols --------------------------------------------------------

def test_echo_shape_and_efficiency():
    run = run_protocol(pixel_protocol())
    eff = analysis.retrieval_efficiency(run)
    assert eff == pytest.approx(gem_efficiency_theory(0.5), abs=0.01)
    assert analysis.transmitted_fraction(run) == pytest.approx(math.exp(-math.pi), abs=0.01)
    p = run.output_power()
    after = run.times > 4.25
    centre = np.sum(run.times[after] * p[after]) / p[after].sum()
    # Mirror time of the probe centre (2 us) about the flip (4.25 us).
    assert centre == pytest.approx(6.5, abs=0.1)
    pk = np.argmax(np.where(after, p, 0.0))
    assert run.times[pk] == pytest.approx(6.5, abs=0.15)
    assert p[pk] > 20 * max(p[after][0], p[-1])


def test_linearity():
    r1 = run_protocol(pixel_protocol(amplitude=1.0))
    r2 = run_protocol(pixel_protocol(amplitude=3.7))
    err = np.abs(r2.echo - 3.7 * r1.echo).max() / np.abs(3.7 * r1.echo).max()
    assert err < 1e-10


def test_no_probe_no_echo():
    run = run_protocol(pixel_protocol(amplitude=0.0))
    assert np.all(run.frames == 0)
    with pytest.raises(ValueError):
        analysis.retrieval_efficiency(run)


def test_zero_coupling():
    run = run_protocol(pixel_protocol(ratio=0.0, probe_window=(0.0, 4.0)))
    assert analysis.retrieval_efficiency(run) == 0.0
    np.testing.assert_allclose(run.output_power(), run.input_power(), rtol=1e-12)
    assert analysis.transmitted_fraction(run) == pytest.approx(1.0, rel=1e-12)


def test_efficiency_grows_with_optical_depth():
    assert (analysis.retrieval_efficiency(run_protocol(pixel_protocol(ratio=0.5)))
            > analysis.retrieval_efficiency(run_protocol(pixel_protocol(ratio=0.25))))


def test_efficiency_falls_with_decoherence():
    effs = [analysis.retrieval_efficiency(run_protocol(pixel_protocol(gamma0=g)))
            for g in (0.0, 0.05, 0.2)]
    assert effs[0] >= effs[1] >= effs[2]
    strong = pixel_protocol(gamma0=20.0, probe_window=(0.0, 4.0))
    assert analysis.retrieval_efficiency(run_protocol(strong)) < 1e-6


def test_full_erasure_kills_echo():
    grid = pixel_grid()
    er = optics.EraserPulse(np.ones((1, 1)), optics.calibrate_eraser(0.05), 4.0, 4.5)
    run = run_protocol(pixel_protocol(grid=grid, erasers=[er], read=(4.5, 8.0), probe_window=(0.0, 4.0)))
    assert analysis.retrieval_efficiency(run) < 1e-3
    assert not run.warnings


def test_eraser_during_read_is_flagged():
    er = optics.EraserPulse(np.ones((1, 1)), 1.0, 5.0, 5.5)
    run = run_protocol(pixel_protocol(erasers=[er]))
    assert run.warnings and "overlaps" in run.warnings[0]


def test_multi_flip_schedule_construction():
    base = GradientSchedule(0.03, (4.0,))
    assert multi_flip_schedule(base, 1, 5.0).flip_times == (4.0,)
    assert multi_flip_schedule(base, 3, 5.0).flip_times == (4.0, 9.0, 14.0)
    with pytest.raises(ValueError):
        multi_flip_schedule(base, 0, 5.0)
    g = GradientSchedule(1.0, (1.0, 2.0))
    assert g.eta(0.5) == 1.0 and g.eta(1.5) == -1.0 and g.eta(2.5) == 1.0
    assert g.phase_integral(0.0, 3.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        GradientSchedule(1.0, (2.0, 1.0))


def test_second_rephasing_returns_unread_regions():
    grid = pixel_grid(nx=16, t_max=13.0)
    grad = multi_flip_schedule(GradientSchedule.from_broadening(1e6, grid.cell_length, (4.25,)), 2, 4.5)
    medium = MediumParams.from_coupling(0.5 * grad.eta0, RABI, D=0.0)
    ones = np.ones(grid.shape2d)
    left = optics.rectangle_mask(grid, (-10.0, 0.0))
    beams = BeamSchedule([BeamPulse(ones, RABI, 0.0, 4.0, "write"),
                          BeamPulse(left, RABI, 4.25, 8.75, "read"),
                          BeamPulse(ones, RABI, 8.75, 13.0, "read")])
    probe = ProbePulse(ones, center=2.0, width=2.0)
    run = run_protocol(Protocol(grid, medium, grad, beams, probe))
    second = run.window_energy(8.75, 13.0)[:, 0]
    unread, read = second[grid.x > 0].mean(), second[grid.x < 0].mean()
    assert unread > 5 * read


def test_piecewise_reads_reconstruct_single_read():
    grid = pixel_grid(nx=32)
    weak = 0.1 * RABI  # weak read keeps retrieval linear in the read intensity
    zones = optics.make_zone_masks(grid, [-2.0, 2.0], 0.9)
    full = run_protocol(pixel_protocol(grid=grid, read_rabi=weak)).window_energy(4.25, 8.0)
    pieces = sum(run_protocol(pixel_protocol(grid=grid, read_rabi=weak, read_mask=m)).window_energy(4.25, 8.0)
                 for m in zones.masks)
    assert np.max(np.abs(pieces / full - 1)) < 0.02


def test_worker_count_does_not_change_results():
    grid = pixel_grid(nx=23, ny=12, width=2.0, height=1.0)
    mask = np.random.default_rng(5).uniform(size=grid.shape2d)
    runs = [run_protocol(pixel_protocol(grid=grid, D=3.5e-3, probe_mask=mask, workers=w))
            for w in (1, 4)]
    assert np.array_equal(runs[0].echo, runs[1].echo)
    assert np.array_equal(runs[0].sigma_final, runs[1].sigma_final)


def test_frames_and_snapshots():
    proto = replace(pixel_protocol(), snapshot_times=(4.0,), frame_cadence=0.5)
    run = run_protocol(proto)
    assert np.all(np.diff(run.frame_edges) > 0)
    assert 4.25 in run.frame_edges.tolist()
    assert np.all(run.frames >= 0)
    assert run.frames.sum() == pytest.approx(run.output_intensity().sum() * run.dt)
    assert 4.0 in run.snapshots


def test_stability_bound_enforced():
    proto = pixel_protocol()
    bound = stability_dt(proto.medium, proto.beams, proto.gradient, proto.grid.cell_length)
    bad = replace(proto, grid=pixel_grid(dt=2 * bound, t_max=8.0))
    with pytest.raises(ValueError):
        run_protocol(bad)


def test_blow_up_is_reported():
    proto = pixel_protocol(ratio=5e4, grid=pixel_grid(dt=0.05, t_max=4.0))
    proto = replace(proto, check_stability=False, debug=True)
    with pytest.raises(NumericalError):
        run_protocol(proto)
