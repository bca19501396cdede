"""
Three pictures of one fit
=========================

Each view plots the risk across smoking, with one line per asbestos group. The
lines diverge on the risk scale and are close to parallel on the log-risk and
log-odds scales. The CSV holds the plotted numbers and the SVG is a static
rendering of them.
"""

import sys
import tempfile
from pathlib import Path

from biointeract import generate_hammond_dataset
from biointeract.figures import FIGURES, figure_series, render_svg, write_csv

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="biointeract-"))
out.mkdir(parents=True, exist_ok=True)
table = generate_hammond_dataset()

for which in FIGURES:
    fig = figure_series(table, which)
    z0, z1 = fig.series
    print(f"{which:10s} slope z=0 {z0.slope:10.4f}   z=1 {z1.slope:10.4f}")
    with open(out / f"{which}.csv", "w", newline="") as fh:
        write_csv(fig, fh)
    (out / f"{which}.svg").write_text(render_svg(fig))

print("written to", out)
