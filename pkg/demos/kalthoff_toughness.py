"""Edge-cracked plate under impact at two fracture toughnesses.

A lower G_c starts the crack earlier and drives it faster. Each run takes
several minutes; pass ``--steps N`` to shorten them.
"""

import argparse

import numpy as np

from phasefrac import apply_overrides, build_problem, builtin_scenario, run
from phasefrac.postprocess import crack_angle

ap = argparse.ArgumentParser()
ap.add_argument("--steps", type=int, default=None)
args = ap.parse_args()

for G_c in (1e4, 2.213e4):
    cfg = apply_overrides(builtin_scenario("kalthoff", "desk"), [f"fracture.G_c={G_c}"])
    problem, controls, outputs = build_problem(cfg)
    res = run(problem, controls, outputs, max_steps=args.steps)
    tr = res.tracker
    speeds = [r[4] for r in res.tips if np.isfinite(r[4])]
    v_R = tr.v_R
    print(f"G_c = {G_c:.4g} J/m^2: initiation {tr.initiation_time() * 1e6:.1f} us, "
          f"max speed {max(speeds, default=0.0) / v_R:.2f} v_R, "
          f"angle {crack_angle(tr.track(0)):.1f} deg, {res.wall_time:.0f} s")
