"""Command line entry point: ``gemsim <subcommand> ...``.

Exit status is 0 on success, 1 for bad input (config, arguments, files)
and 2 when the integration produces non-finite numbers.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, scenario
from .engine import NumericalError
from .optics import DomainError
from .pgm import PGMError, read_pgm
from .units import diffusion_cm2_s_to_mm2_us

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would collide with the numeric code.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _row_range(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected START:STOP") from exc
    return a, b


def _print_summary(summary: dict) -> None:
    for k, v in summary.items():
        print(f"{k}: {v}")


def cmd_run(args) -> int:
    cfg = scenario.resolve_config(args.config)
    out = Path(args.output or Path("runs") / cfg.name)
    summary = scenario.run_scenario(cfg, out, workers=args.workers)
    _print_summary(summary)
    print(f"outputs written to {out}")
    return EXIT_OK


def cmd_capacity(args) -> int:
    D = diffusion_cm2_s_to_mm2_us(args.D)
    rows = [(b, analysis.channel_density(args.vlim, D, args.t, b)) for b in args.b]
    buf = analysis.buffer_width(args.vlim, D, args.t)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["b_mm", "buffer_mm", "lambda_per_mm", "lambda_per_cm"])
    for b, lam in rows:
        writer.writerow([repr(b), repr(buf), repr(lam), repr(10.0 * lam)])
    return EXIT_OK


def cmd_visibility_decay(args) -> int:
    rows = scenario.visibility_decay(args.lppm, diffusion_cm2_s_to_mm2_us(args.D), args.t_list,
                                     args.background, args.duty, args.n_channels)
    if args.output:
        scenario.write_csv(args.output, ["t_us", "V_model", "V_bruteforce"], rows)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["t_us", "V_model", "V_bruteforce"])
    for r in rows:
        writer.writerow([repr(v) for v in r])
    return EXIT_OK


def cmd_erase_decay(args) -> int:
    cfg = scenario.resolve_config(args.config)
    if cfg.kind != "erase-decay":
        raise scenario.ConfigError(f"scenario kind is {cfg.kind!r}, expected 'erase-decay'",
                                   cfg.lines.get(("scenario", "kind")), cfg.path)
    if args.widths is not None:
        cfg.sections["sweep"]["eraser_widths_us"] = tuple(args.widths)
    out = Path(args.output or Path("runs") / cfg.name)
    summary = scenario.run_scenario(cfg, out, workers=args.workers)
    print((out / "erase_decay.csv").read_text(), end="")
    _print_summary(summary)
    return EXIT_OK


def cmd_profile(args) -> int:
    img = read_pgm(args.frame).astype(float) / 255.0
    prof = analysis.extract_profile(img.T, args.rows)
    width = args.width_mm if args.width_mm else img.shape[1]
    x = (np.arange(img.shape[1]) + 0.5) / img.shape[1] * width - width / 2.0
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["x", "intensity"])
    for xi, pi in zip(x, prof):
        writer.writerow([repr(float(xi)), repr(float(pi))])
    if args.edge_at is not None:
        near = np.abs(x - args.edge_at) <= args.edge_window
        falling = prof[near][0] > prof[near][-1]
        w = analysis.edge_width_10_90(x[near], prof[near] / prof[near].max(), falling=falling)
        print(f"# edge_width_10_90: {w!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gemsim", description="Spatially multiplexed gradient echo memory simulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a scenario file or bundled preset (fig2, fig3, fig4)")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output directory (default runs/<name>)")
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("capacity", help="diffusion-limited linear channel density")
    c.add_argument("--D", type=float, required=True, help="diffusion coefficient, cm^2/s")
    c.add_argument("--t", type=float, required=True, help="storage time, us")
    c.add_argument("--vlim", type=float, required=True, help="visibility threshold in (0, 1)")
    c.add_argument("--b", type=_float_list, required=True, help="channel width(s), mm, comma separated")
    c.set_defaults(func=cmd_capacity)

    v = sub.add_parser("visibility-decay", help="erf model versus brute-force diffusion")
    v.add_argument("--lppm", type=float, required=True, help="line pairs per mm")
    v.add_argument("--D", type=float, required=True, help="diffusion coefficient, cm^2/s")
    v.add_argument("--t-list", type=_float_list, required=True, help="storage times, us")
    v.add_argument("--background", type=float, default=0.0, help="normalised background")
    v.add_argument("--duty", type=float, default=0.5)
    v.add_argument("--n-channels", type=int, default=21)
    v.add_argument("-o", "--output", help="also write the CSV here")
    v.set_defaults(func=cmd_visibility_decay)

    e = sub.add_parser("erase-decay", help="eraser pulse-width sweep with exponential fit")
    e.add_argument("config", nargs="?", default="fig4")
    e.add_argument("--widths", type=_float_list, help="override eraser widths, us")
    e.add_argument("-o", "--output")
    e.add_argument("--workers", type=int, default=1)
    e.set_defaults(func=cmd_erase_decay)

    f = sub.add_parser("profile", help="row-averaged line profile of a PGM frame")
    f.add_argument("--frame", required=True)
    f.add_argument("--rows", type=_row_range, required=True, help="image rows START:STOP (top = 0)")
    f.add_argument("--width-mm", type=float, help="physical frame width for the x axis")
    f.add_argument("--edge-at", type=float, help="report the 10-90%% width of the edge near this x")
    f.add_argument("--edge-window", type=float, default=2.0, help="half window around --edge-at")
    f.set_defaults(func=cmd_profile)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (scenario.ConfigError, PGMError, DomainError, KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
