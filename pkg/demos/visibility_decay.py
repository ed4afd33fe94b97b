"""Fringe visibility of a 1 lp/mm pattern as atoms diffuse.

The nearest-neighbour erf model is printed beside a direct blur of 21
channels.  The two split apart once the blur reaches the next channel.
"""

import sys
import tempfile
from pathlib import Path

from gemsim import load_preset, run_scenario

if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
    run_scenario(load_preset("fig3"), out)
    print((out / "visibility_decay.csv").read_text())
