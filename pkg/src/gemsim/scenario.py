"""Scenario files, bundled presets and run outputs.

A scenario is an INI file with one section per concern; every dimensional
key carries its unit in the name (``t_on_us``, ``edge_width_mm``...).
The grammar is documented in ``CONFIG.md`` at the repository root.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import analysis, optics
from .engine import (BeamPulse, BeamSchedule, GradientSchedule, MediumParams, ProbePulse,
                     Protocol, run_protocol, stability_dt)
from .pgm import load_mask, save_frame
from .units import (CELL_LENGTH_MM, GridConfig, diffusion_cm2_s_to_mm2_us, hz_to_rad_per_us,
                    make_grid)

PRESETS = ("fig2", "fig3", "fig4")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, path=None):
        where = f"{path or '<config>'}" + (f":{line}" if line else "")
        super().__init__(f"{where}: {message}")
        self.line = line


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _windows(text: str) -> tuple[tuple[float, float], ...]:
    out = []
    for part in text.replace(";", ",").split(","):
        if not part.strip():
            continue
        a, b = part.split(":")
        out.append((float(a), float(b)))
    return tuple(out)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _auto_float(text: str):
    return "auto" if text.strip().lower() == "auto" else float(text)


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none") else float(text)


# section -> key -> (parser, default).  A default of ``...`` marks a required key.
SCHEMA: dict[str, dict] = {
    "scenario": {
        "name": (str, "scenario"),
        "kind": (str, "echo"),
    },
    "grid": {
        "nx": (int, 128), "ny": (int, 48), "nz": (int, 256),
        "width_mm": (float, 12.0), "height_mm": (float, 4.0),
        "cell_length_mm": (float, CELL_LENGTH_MM),
        "dt_us": (_auto_float, "auto"), "t_max_us": (float, ...),
    },
    "medium": {
        "coupling_ratio": (float, 0.5),
        "gamma0_per_us": (float, 0.0),
        "diffusion_cm2_per_s": (float, 35.0),
        "write_detuning_ghz": (float, 2.0),
        "eraser_detuning_ghz": (float, 1.5),
        "linewidth_mhz": (float, 5.75),
        "kappa": (float, 1.0),
    },
    "gradient": {
        "broadening_mhz": (float, 1.0),
        "flip_times_us": (_floats, ...),
        "n_rephasings": (int, 0),
        "rephasing_period_us": (float, 0.0),
    },
    "probe": {
        "mask": (str, "uniform"),
        "mask_width_mm": (float, 8.0), "mask_height_mm": (float, 2.0),
        "magnification": (float, 1.0),
        "target_lp_per_mm": (float, 1.0), "target_duty": (float, 0.5),
        "center_us": (float, 2.0), "width_us": (_opt_float, 2.0),
        "amplitude": (float, 1.0), "detuning_mhz": (float, 0.0),
        "t_on_us": (_opt_float, None), "t_off_us": (_opt_float, None),
        "illumination_waist_mm": (_opt_float, None),
    },
    "write": {
        "rabi_mhz": (float, 50.0),
        "t_on_us": (float, 0.0), "t_off_us": (float, ...),
    },
    "read": {
        "mode": (str, "full"),
        "rabi_mhz": (float, 50.0),
        "t_on_us": (float, 0.0), "t_off_us": (float, 0.0),
        "boundaries_mm": (_floats, ()),
        "edge_width_mm": (float, 0.9),
        "windows_us": (_windows, ()),
        "mask_rect_mm": (_floats, ()),
    },
    "eraser": {
        "x_range_mm": (_floats, ...), "y_range_mm": (_floats, ()),
        "edge_width_mm": (float, 0.2),
        "tau_us": (_opt_float, 0.498), "s_peak": (_opt_float, None),
        "t_on_us": (float, ...), "width_us": (float, ...),
    },
    "sweep": {
        "eraser_widths_us": (_floats, (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)),
        "fringe_center_mm": (float, 0.0),
        "reference_center_mm": (float, ...),
        "profile_y_range_mm": (_floats, ()),
        "background": (float, 0.0),
    },
    "deletion": {
        "x_range_mm": (_floats, ...),
        "edge_width_mm": (float, 0.15),
        "width_us": (float, 1.0),
        "fringe_center_mm": (float, 0.0),
    },
    "decay": {
        "lp_per_mm": (float, 1.0), "duty": (float, 0.5),
        "diffusion_cm2_per_s": (float, 35.0),
        "t_list_us": (_floats, ...),
        "background": (float, 0.1),
        "n_channels": (int, 21),
    },
    "analysis": {
        "profile_y_range_mm": (_floats, ()),
    },
    "output": {
        "frame_cadence_us": (float, 0.1),
        "snapshot_times_us": (_floats, ()),
        "debug": (_bool, False),
        "write_frames": (_bool, True),
    },
}

REQUIRED_SECTIONS = {
    "echo": ("grid", "gradient", "write"),
    "erase-decay": ("grid", "gradient", "write", "sweep"),
    "visibility-decay": ("decay",),
}


# Sections that are always present after parsing, filled with defaults when absent.
OPTIONAL_SECTIONS = ("medium", "probe", "analysis", "output")


def _base_section(name: str) -> str:
    return name.split(".", 1)[0]


@dataclass
class ScenarioConfig:
    """Parsed, typed scenario; ``sections`` maps section name -> {key: value}."""

    sections: dict
    path: Path | None = None
    lines: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.sections["scenario"]["name"]

    @property
    def kind(self) -> str:
        return self.sections["scenario"]["kind"]

    def get(self, section: str) -> dict | None:
        return self.sections.get(section)

    def eraser_sections(self) -> list[dict]:
        return [v for k, v in sorted(self.sections.items()) if _base_section(k) == "eraser"]

    def base_dir(self) -> Path:
        return self.path.parent if self.path is not None else Path.cwd()


def _line_index(text: str) -> dict:
    """(section, key) -> 1-based line number, plus (section, None) for headers."""
    idx, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            idx[(section, None)] = no
            continue
        m = re.match(r"^([A-Za-z0-9_.\-]+)\s*[=:]", line)
        if m and section is not None:
            idx[(section, m.group(1).lower())] = no
    return idx


def parse_config(text: str, path=None) -> ScenarioConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string(text, source=str(path or "<config>"))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(str(exc).splitlines()[0], line, path) from exc
    lines = _line_index(text)
    sections: dict = {"scenario": {}}
    for sec in parser.sections():
        base = _base_section(sec)
        if base not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", lines.get((sec, None)), path)
        values = {}
        for key, raw in parser.items(sec):
            if key not in SCHEMA[base]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", lines.get((sec, key)), path)
            conv = SCHEMA[base][key][0]
            try:
                values[key] = conv(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})",
                                  lines.get((sec, key)), path) from exc
        sections[sec] = values
    for sec, values in sections.items():
        for key, (_, default) in SCHEMA[_base_section(sec)].items():
            if key not in values:
                if default is ...:
                    raise ConfigError(f"missing required key {key!r} in [{sec}]",
                                      lines.get((sec, None)), path)
                values[key] = default
    for sec in OPTIONAL_SECTIONS:
        sections.setdefault(sec, {k: d for k, (_, d) in SCHEMA[sec].items()})
    kind = sections["scenario"]["kind"]
    if kind not in REQUIRED_SECTIONS:
        raise ConfigError(f"unknown scenario kind {kind!r}", lines.get(("scenario", "kind")), path)
    for sec in REQUIRED_SECTIONS[kind]:
        if sec not in sections:
            raise ConfigError(f"scenario kind {kind!r} needs a [{sec}] section", None, path)
    return ScenarioConfig(sections=sections, path=Path(path) if path else None, lines=lines)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", None, path) from exc
    return parse_config(text, path)


def preset_path(name: str) -> Path:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {PRESETS}")
    return Path(str(resources.files("gemsim") / "data" / f"{name}.ini"))


def load_preset(name: str) -> ScenarioConfig:
    return load_config(preset_path(name))


def resolve_config(spec: str) -> ScenarioConfig:
    """A preset name or a path to a config file."""
    if spec in PRESETS and not Path(spec).exists():
        return load_preset(spec)
    return load_config(spec)


# --- protocol construction ------------------------------------------------

def _mhz(v: float) -> float:
    return hz_to_rad_per_us(v * 1e6)


def build_grid(cfg: ScenarioConfig, medium=None, gradient=None, max_rabi: float = 0.0):
    g = cfg.sections["grid"]
    nx, ny, nz = g["nx"], g["ny"], g["nz"]
    dt = g["dt_us"]
    dt_max = None
    if medium is not None:
        probe_beams = BeamSchedule([BeamPulse(np.ones((1, 1)), max_rabi, 0.0, 1.0)])
        dt_max = stability_dt(medium, probe_beams, gradient, g["cell_length_mm"])
    if dt == "auto":
        if dt_max is None:
            raise ConfigError("dt_us = auto needs the medium and beams", cfg.lines.get(("grid", "dt_us")), cfg.path)
        # Largest dt under the bound that divides 50 ns, so pulse edges fall on steps.
        dt = 0.05 / math.ceil(0.05 / dt_max - 1e-12)
    try:
        return make_grid(GridConfig(
            nx=nx, ny=ny, nz=nz,
            dx=g["width_mm"] / nx, dy=g["height_mm"] / ny,
            dz=g["cell_length_mm"] / nz, dt=dt, t_max=g["t_max_us"],
            cell_length=g["cell_length_mm"], dt_max=dt_max,
        ))
    except ValueError as exc:
        raise ConfigError(str(exc), cfg.lines.get(("grid", None)), cfg.path) from exc


def build_gradient(cfg: ScenarioConfig) -> GradientSchedule:
    gsec = cfg.sections["gradient"]
    length = cfg.sections["grid"]["cell_length_mm"]
    base = GradientSchedule.from_broadening(gsec["broadening_mhz"] * 1e6, length, gsec["flip_times_us"])
    if gsec["n_rephasings"] > 0:
        from .engine import multi_flip_schedule
        base = multi_flip_schedule(base, gsec["n_rephasings"], gsec["rephasing_period_us"])
    return base


def build_medium(cfg: ScenarioConfig, gradient: GradientSchedule) -> MediumParams:
    m = cfg.sections["medium"]
    write_rabi = _mhz(cfg.sections["write"]["rabi_mhz"])
    beta = m["coupling_ratio"] * abs(gradient.eta0)
    return MediumParams.from_coupling(
        beta, write_rabi,
        Delta_w=hz_to_rad_per_us(m["write_detuning_ghz"] * 1e9),
        gamma0=m["gamma0_per_us"],
        D=diffusion_cm2_s_to_mm2_us(m["diffusion_cm2_per_s"]),
    )


def build_probe_mask(cfg: ScenarioConfig, grid) -> np.ndarray:
    p = cfg.sections["probe"]
    kind = p["mask"]
    if kind == "uniform":
        mask = optics.uniform_mask(grid)
    elif kind == "target":
        mask = optics.make_resolution_target(grid, p["target_lp_per_mm"], p["target_duty"])
    elif kind == "none":
        mask = np.zeros(grid.shape2d)
    else:
        path = Path(kind)
        if not path.is_absolute():
            local = cfg.base_dir() / path
            path = local if local.exists() else Path(str(resources.files("gemsim") / "data" / kind))
        if not path.exists():
            raise ConfigError(f"probe mask file not found: {kind}", cfg.lines.get(("probe", "mask")), cfg.path)
        mask = load_mask(path, grid, extent_mm=(p["mask_width_mm"], p["mask_height_mm"]),
                         magnification=p["magnification"])
    if p["illumination_waist_mm"]:
        mask = mask * optics.gaussian_envelope(grid, p["illumination_waist_mm"])
    return mask


def build_probe(cfg: ScenarioConfig, grid) -> ProbePulse:
    p = cfg.sections["probe"]
    return ProbePulse(
        mask=build_probe_mask(cfg, grid),
        amplitude=p["amplitude"],
        center=p["center_us"],
        width=p["width_us"],
        detuning=_mhz(p["detuning_mhz"]),
        t_on=-math.inf if p["t_on_us"] is None else p["t_on_us"],
        t_off=math.inf if p["t_off_us"] is None else p["t_off_us"],
    )


def build_read_pulses(cfg: ScenarioConfig, grid):
    r = cfg.sections.get("read")
    if r is None:
        return [], None
    rabi = _mhz(r["rabi_mhz"])
    if r["mode"] == "zones":
        zones = optics.make_zone_masks(grid, r["boundaries_mm"], r["edge_width_mm"], r["windows_us"])
        pulses = [BeamPulse(m, rabi, a, b, "read") for m, (a, b) in zip(zones.masks, zones.windows)]
        return pulses, zones
    if r["mode"] == "full":
        mask = optics.uniform_mask(grid)
        if r["mask_rect_mm"]:
            x0, x1, y0, y1 = r["mask_rect_mm"]
            mask = optics.rectangle_mask(grid, (x0, x1), (y0, y1), r["edge_width_mm"])
        return [BeamPulse(mask, rabi, r["t_on_us"], r["t_off_us"], "read")], None
    raise ConfigError(f"unknown read mode {r['mode']!r}", cfg.lines.get(("read", "mode")), cfg.path)


def _eraser_strength(cfg: ScenarioConfig, sec: dict) -> float:
    m = cfg.sections["medium"]
    delta_e = hz_to_rad_per_us(m["eraser_detuning_ghz"] * 1e9)
    gamma = _mhz(m["linewidth_mhz"])
    if sec.get("s_peak") is not None:
        return sec["s_peak"]
    return optics.calibrate_eraser(sec["tau_us"], delta_e, gamma, m["kappa"])


def build_eraser(cfg: ScenarioConfig, grid, sec: dict, width_us: float | None = None,
                 x_range=None, edge_width=None) -> optics.EraserPulse | None:
    width = sec["width_us"] if width_us is None else width_us
    if width <= 0:
        return None
    m = cfg.sections["medium"]
    xr = x_range if x_range is not None else sec["x_range_mm"]
    yr = sec.get("y_range_mm") or None
    ew = sec["edge_width_mm"] if edge_width is None else edge_width
    return optics.EraserPulse(
        mask=optics.rectangle_mask(grid, xr, tuple(yr) if yr else None, ew),
        s_peak=_eraser_strength(cfg, sec),
        t_on=sec["t_on_us"], t_off=sec["t_on_us"] + width,
        Delta_e=hz_to_rad_per_us(m["eraser_detuning_ghz"] * 1e9),
        Gamma=_mhz(m["linewidth_mhz"]),
    )


@dataclass
class BuiltScenario:
    protocol: Protocol
    zones: optics.ZoneMaskSet | None


def build_protocol(cfg: ScenarioConfig, workers: int = 1, erasers=None) -> BuiltScenario:
    """Translate a scenario into an engine :class:`Protocol`.

    ``erasers`` overrides the eraser pulses declared in the file.
    """
    gradient = build_gradient(cfg)
    medium = build_medium(cfg, gradient)
    w = cfg.sections["write"]
    write_rabi = _mhz(w["rabi_mhz"])
    rabis = [write_rabi] + ([_mhz(cfg.sections["read"]["rabi_mhz"])] if cfg.get("read") else [])
    grid = build_grid(cfg, medium, gradient, max(rabis))
    write = BeamPulse(optics.uniform_mask(grid), write_rabi, w["t_on_us"], w["t_off_us"], "write")
    reads, zones = build_read_pulses(cfg, grid)
    if erasers is None:
        erasers = [e for e in (build_eraser(cfg, grid, sec) for sec in cfg.eraser_sections()) if e]
    beams = BeamSchedule([write] + reads, list(erasers))
    out = cfg.sections["output"]
    proto = Protocol(
        grid=grid, medium=medium, gradient=gradient, beams=beams,
        probe=build_probe(cfg, grid),
        kappa=cfg.sections["medium"]["kappa"],
        frame_cadence=out["frame_cadence_us"],
        snapshot_times=tuple(out["snapshot_times_us"]),
        debug=out["debug"], workers=workers,
    )
    return BuiltScenario(proto, zones)


# --- analysis of runs ------------------------------------------------------

def zone_analysis(run, zones: optics.ZoneMaskSet, y_range_mm=()):
    """Per-zone window energies, leakage ratios and boundary edge widths."""
    grid = run.grid
    x = grid.x
    ysel = np.ones(grid.ny, dtype=bool)
    if y_range_mm:
        ysel = (grid.y >= y_range_mm[0]) & (grid.y <= y_range_mm[1])
    bounds = [-math.inf] + list(zones.boundaries) + [math.inf]
    ew = zones.edge_width
    rows = []
    frames = []
    for k, (t0, t1) in enumerate(zones.windows):
        frame = run.window_energy(t0, t1)
        frames.append(frame)
        lo, hi = bounds[k], bounds[k + 1]
        inside = (x >= lo) & (x <= hi)
        outside = (x < lo - ew) | (x > hi + ew)
        e_in = float(frame[inside].sum())
        e_out = float(frame[outside].sum())
        rows.append({"zone": k, "t_on_us": t0, "t_off_us": t1, "energy_in": e_in,
                     "energy_out": e_out, "leak_ratio": e_out / e_in if e_in > 0 else math.inf})
    profiles = []
    for frame in frames:
        prof = frame[:, ysel].mean(axis=1)
        profiles.append(prof / prof.max() if prof.max() > 0 else prof)
    widths = []
    for k, b in enumerate(zones.boundaries):
        # Falling edge of zone k and rising edge of zone k+1 around boundary b.
        near = np.abs(x - b) <= 3.0 * ew
        wl = analysis.edge_width_10_90(x[near], _edge_norm(profiles[k][near], x[near], b, ew, True), falling=True)
        wr = analysis.edge_width_10_90(x[near], _edge_norm(profiles[k + 1][near], x[near], b, ew, False), falling=False)
        widths.append((b, wl, wr))
    return rows, frames, profiles, widths


def _edge_norm(prof, x, b, ew, falling):
    """Normalise an edge segment to its plateau on the bright side."""
    bright = (x <= b - ew) if falling else (x >= b + ew)
    plateau = prof[bright].mean() if np.any(bright) else prof.max()
    return prof / plateau


def fringe_peak(x, profile, center, period):
    sel = np.abs(x - center) <= period / 4.0 + 1e-12
    return float(profile[sel].max())


def fringe_valley(x, profile, center, period):
    sel = np.abs(x - center) <= period / 4.0 + 1e-12
    return float(profile[sel].min())


def referenced_visibility(x, profile, fringe_center, reference_center, period, background=0.0):
    """Fringe contrast normalised to an undeleted reference fringe.

    Numerator: peak minus adjacent valley around ``fringe_center``;
    denominator: peak plus valley of the reference fringe.  Background is
    subtracted first.  This tracks the erased fringe's absolute contrast
    and goes to zero as the region is wiped.
    """
    p = np.asarray(profile, dtype=float) - background
    i_p = fringe_peak(x, p, fringe_center, period)
    i_v = fringe_valley(x, p, fringe_center + period / 2.0, period)
    r_p = fringe_peak(x, p, reference_center, period)
    r_v = fringe_valley(x, p, reference_center - period / 2.0, period)
    denom = r_p + r_v
    if denom <= 0:
        raise analysis.UndefinedVisibility("reference fringe is dark")
    return (i_p - i_v) / denom


def _read_window(proto):
    reads = proto.beams.windows("read")
    return min(a for a, _ in reads), max(b for _, b in reads)


def _profile_rows(grid, y_range_mm):
    if not y_range_mm:
        return np.ones(grid.ny, dtype=bool)
    return (grid.y >= y_range_mm[0]) & (grid.y <= y_range_mm[1])


def erase_sweep(cfg: ScenarioConfig, workers: int = 1, widths=None):
    """Eraser-width sweep plus single-fringe deletion for an ``erase-decay`` scenario."""
    sw = cfg.sections["sweep"]
    widths = tuple(sw["eraser_widths_us"] if widths is None else widths)
    esec = cfg.eraser_sections()[0]
    built = build_protocol(cfg, workers, erasers=[])
    grid = built.protocol.grid
    period = 1.0 / cfg.sections["probe"]["target_lp_per_mm"]
    t0, t1 = _read_window(built.protocol)
    rows_sel = _profile_rows(grid, sw["profile_y_range_mm"])
    x = grid.x

    def profile_for(erasers):
        proto = build_protocol(cfg, workers, erasers=erasers).protocol
        run = run_protocol(proto)
        prof = run.window_energy(t0, t1)[:, rows_sel].mean(axis=1)
        return prof, run

    sweep = []
    profiles = {}
    for w in widths:
        er = build_eraser(cfg, grid, esec, width_us=w)
        prof, run = profile_for([er] if er else [])
        profiles[w] = prof
        V = referenced_visibility(x, prof, sw["fringe_center_mm"], sw["reference_center_mm"], period,
                                  sw["background"])
        sweep.append({"width_us": w, "V": V,
                      "efficiency": analysis.retrieval_efficiency(run)})
    ws = np.array([r["width_us"] for r in sweep])
    vs = np.array([r["V"] for r in sweep])
    A, tau_fit = analysis.fit_exponential(ws, vs)
    result = {"sweep": sweep, "profiles": profiles, "fit_amplitude": A, "fit_tau_us": tau_fit,
              "tau_input_us": esec["tau_us"], "x": x, "period": period}

    dsec = cfg.get("deletion")
    if dsec is not None:
        base = profiles.get(0.0)
        if base is None:
            base, _ = profile_for([])
        er = build_eraser(cfg, grid, esec, width_us=dsec["width_us"], x_range=dsec["x_range_mm"],
                          edge_width=dsec["edge_width_mm"])
        er.mask = optics.rectangle_mask(grid, dsec["x_range_mm"], None, dsec["edge_width_mm"])
        erased, _ = profile_for([er])
        c = dsec["fringe_center_mm"]
        target_ratio = fringe_peak(x, erased, c, period) / fringe_peak(x, base, c, period)
        neighbours = []
        for nc in (c - period, c + period):
            before = fringe_peak(x, base, nc, period)
            after = fringe_peak(x, erased, nc, period)
            neighbours.append(abs(after - before) / before)
        result["deletion"] = {"unerased": base, "erased": erased, "target_ratio": target_ratio,
                              "neighbour_changes": neighbours, "width_us": dsec["width_us"]}
    return result


def visibility_decay(lp_per_mm: float, D_mm2_us: float, t_list, background: float = 0.1,
                     duty: float = 0.5, n_channels: int = 21):
    """Rows of (t, model visibility, brute-force visibility) with an added background."""
    geom = analysis.ChannelGeometry.from_line_pairs(lp_per_mm, duty)
    rows = []
    for t in t_list:
        model = analysis.visibility_approx(geom.a, D_mm2_us, t, background)
        brute = analysis.brute_force_visibility(geom, D_mm2_us, t, n_channels, background)
        rows.append((float(t), model, brute))
    return rows


# --- output writers --------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    Path(path).write_text(buf.getvalue())


def write_summary(path, items: dict) -> None:
    lines = [f"{k}: {_fmt(v)}" for k, v in items.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def _write_run_outputs(run, out: Path, write_frames: bool) -> dict:
    write_csv(out / "echo_trace.csv", ["t_us", "input_power", "output_power"],
              zip(run.times.tolist(), run.input_power().tolist(), run.output_power().tolist()))
    if write_frames:
        fdir = out / "frames"
        fdir.mkdir(exist_ok=True)
        scale = float(run.frames.max())
        for i, (t, frame) in enumerate(zip(run.frame_times, run.frames)):
            save_frame(frame, fdir / f"frame_{i:04d}_{t:08.4f}us.pgm", scale if scale > 0 else None)
        np.savez(out / "frames_raw.npz", edges=run.frame_edges, frames=run.frames)
    metrics = {
        "efficiency": analysis.retrieval_efficiency(run) if run.input_power().sum() > 0 else 0.0,
        "transmitted_fraction": analysis.transmitted_fraction(run) if run.input_power().sum() > 0 else 0.0,
        "n_frames": len(run.frames),
        "warnings": len(run.warnings),
    }
    return metrics


def run_scenario(cfg: ScenarioConfig, outdir, workers: int = 1) -> dict:
    """Run a scenario and write its outputs into ``outdir``; returns the summary."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"scenario": cfg.name, "kind": cfg.kind}
    if cfg.kind == "visibility-decay":
        d = cfg.sections["decay"]
        rows = visibility_decay(d["lp_per_mm"], diffusion_cm2_s_to_mm2_us(d["diffusion_cm2_per_s"]),
                                d["t_list_us"], d["background"], d["duty"], d["n_channels"])
        write_csv(out / "visibility_decay.csv", ["t_us", "V_model", "V_bruteforce"], rows)
        summary["max_abs_difference"] = max(abs(m - b) for _, m, b in rows)
    elif cfg.kind == "erase-decay":
        res = erase_sweep(cfg, workers)
        write_csv(out / "erase_decay.csv", ["eraser_width_us", "V", "efficiency"],
                  [(r["width_us"], r["V"], r["efficiency"]) for r in res["sweep"]])
        summary["fit_tau_us"] = res["fit_tau_us"]
        summary["tau_input_us"] = res["tau_input_us"]
        summary["fit_amplitude"] = res["fit_amplitude"]
        if "deletion" in res:
            dl = res["deletion"]
            write_csv(out / "deletion_profile.csv", ["x_mm", "unerased", "erased"],
                      zip(res["x"].tolist(), dl["unerased"].tolist(), dl["erased"].tolist()))
            summary["deletion_width_us"] = dl["width_us"]
            summary["deletion_target_ratio"] = dl["target_ratio"]
            summary["deletion_neighbour_change_max"] = max(dl["neighbour_changes"])
    else:
        built = build_protocol(cfg, workers)
        run = run_protocol(built.protocol)
        summary.update(_write_run_outputs(run, out, cfg.sections["output"]["write_frames"]))
        summary["dt_us"] = run.grid.dt
        summary["steps"] = run.grid.n_steps
        for w in run.warnings:
            summary.setdefault("warning", w)
        if built.zones is not None:
            rows, frames, profiles, widths = zone_analysis(
                run, built.zones, cfg.sections["analysis"]["profile_y_range_mm"])
            write_csv(out / "zones.csv", list(rows[0].keys()), [list(r.values()) for r in rows])
            write_csv(out / "zone_profiles.csv", ["x_mm"] + [f"zone{k}" for k in range(len(profiles))],
                      zip(run.grid.x.tolist(), *[p.tolist() for p in profiles]))
            scale = max(float(f.max()) for f in frames)
            for k, f in enumerate(frames):
                save_frame(f, out / f"zone{k}_raw.pgm", scale)
                save_frame(f, out / f"zone{k}_norm.pgm", float(f.max()) or None)
            for b, wl, wr in widths:
                summary[f"edge_width_at_{b:+.3f}mm_falling"] = wl
                summary[f"edge_width_at_{b:+.3f}mm_rising"] = wr
            summary["max_leak_ratio"] = max(r["leak_ratio"] for r in rows)
    write_summary(out / "summary.txt", summary)
    write_csv(out / "metrics.csv", ["metric", "value"], summary.items())
    return summary
