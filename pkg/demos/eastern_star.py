"""Eastern Star capsizing at 1/10 scale.

Runs the CI preset, prints the incident pixel's per-step count around the
capsize, and saves a plot if matplotlib is installed.

    python3 demos/eastern_star.py [preset]
"""

import sys

from lostsilence.geo import GeoPixel
from lostsilence.simulator import load_config, run_scenario

preset = sys.argv[1] if len(sys.argv) > 1 else "eastern_star_ci"
cfg = load_config(preset)
ship = GeoPixel(329863, 246792)
print(f"{preset}: {cfg.total_pixels()} pixels, {cfg.total_phones()} resident phones, step {cfg.step_ms} ms")

result = run_scenario(cfg)
print(result.metrics.summary())

start = cfg.incidents[0].start_time
for t, count in result.series(ship):
    if start - 4 * cfg.step_ms <= t <= start + 4 * cfg.step_ms:
        marker = "  <- alert" if count > 10 else ""
        print(f"  t={t / 1000:7.1f} s  lost phones {count:4d}{marker}")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit(0)

times, counts = zip(*result.series(ship))
fig, ax = plt.subplots(figsize=(7, 3))
ax.plot([t / 1000 for t in times], counts, ".", ms=3)
ax.axhline(10, color="grey", lw=0.8, ls="--")
ax.set_xlabel("simulated time (s)")
ax.set_ylabel("lost phones in window")
ax.set_title(f"pixel {ship}, step {cfg.step_ms // 1000}s")
fig.tight_layout()
fig.savefig(f"{preset}_series.png", dpi=120)
print(f"plot saved to {preset}_series.png")
