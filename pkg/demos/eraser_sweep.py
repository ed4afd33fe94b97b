"""Erase part of a stored bar target with an off-resonant beam.

Runs the ``fig4`` preset with a shortened width list so it finishes in
about a minute, then fits the visibility decay constant.
"""

import numpy as np

from gemsim import load_preset
from gemsim.scenario import erase_sweep

if __name__ == "__main__":
    cfg = load_preset("fig4")
    cfg.sections.pop("deletion")
    res = erase_sweep(cfg, widths=(0.0, 0.25, 0.5, 1.0))
    for row in res["sweep"]:
        print(f"width {row['width_us']:.2f} us  V = {row['V']:.4f}")
    print(f"fitted tau {res['fit_tau_us']:.4f} us (input {res['tau_input_us']:.4f} us)")
