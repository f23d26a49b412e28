"""Watch the p-value bound fall round by round in a single run.

The curve is a diagnostic: the test itself must use the n fixed in advance.

    python3 demos/running_pvalue.py [--seed 0] [--out running.svg]
"""

import argparse

import numpy as np

from witnesscert import experiment_preset, running_p_bounds, simulate

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--out", default="running.svg")
args = parser.parse_args()

cfg = experiment_preset("ghz-paper", seed=args.seed)
game = cfg.build_game()
run = simulate(cfg)
p = running_p_bounds(run.scores, game.c, cfg.gamma(game), game.s_min, game.delta_s)

for i in (0, 9, 49, 99, 199, 299, 399, 499, 599):
    print(f"after {i + 1:4d} rounds  p_bound = {p[i]:.3e}")
first = int(np.argmax(p <= cfg.alpha)) + 1 if np.any(p <= cfg.alpha) else None
print(f"bound first drops below alpha = {cfg.alpha} after {first} rounds")

# log10 p against round number as a small SVG polyline
w, h, m = 640, 320, 40
y = np.log10(np.maximum(p, 1e-300))
lo = min(y.min(), np.log10(cfg.alpha)) - 0.5
hi = max(y.max(), 0.5)
xs = m + np.arange(p.size) / (p.size - 1) * (w - 2 * m)
ys = m + (hi - y) / (hi - lo) * (h - 2 * m)
ya = m + (hi - np.log10(cfg.alpha)) / (hi - lo) * (h - 2 * m)
pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(xs, ys))
svg = (
    f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-size="12" font-family="sans-serif">'
    f'<rect width="{w}" height="{h}" fill="white"/>'
    f'<polyline points="{pts}" fill="none" stroke="#4a7ab5"/>'
    f'<line x1="{m}" y1="{ya:.1f}" x2="{w - m}" y2="{ya:.1f}" stroke="red"/>'
    f'<text x="{w / 2}" y="20" text-anchor="middle">log10 p-value bound vs round</text></svg>\n'
)
with open(args.out, "w", encoding="utf-8") as fh:
    fh.write(svg)
print(f"wrote {args.out}")
