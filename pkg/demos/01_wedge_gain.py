"""Free-space gain of a camera wedge, checked against a brute-force lattice count.

A 6 x 6 x 2 m box world is scanned from a few random poses; then a fresh pose
asks how much still-unknown volume its view wedge would reveal.
"""

import math

import numpy as np

from nbvplan import Aabb, CameraModel, OccupancyMap, RayMarchSpec, Scene, ViewPose, free_space_gain, render_depth
from nbvplan.gain import best_yaw
from nbvplan.oracles import frustum_unknown_volume_oracle, wedge_volume

bounds = Aabb((0, 0, 0), (6, 6, 2))
model = CameraModel()
spec = RayMarchSpec.default_for(0.1, model.r_max)
scene = Scene((Aabb((2.0, 2.0, 0.0), (2.6, 3.4, 1.2)), Aabb((4.0, 1.0, 0.0), (4.5, 1.5, 1.6))))
occ = OccupancyMap.for_bounds(bounds, 0.1, 0.0)

# %% an empty map: the gain is the whole wedge
pose = ViewPose((1.2, 2.7, 1.0), 0.0, 0.0)
print("empty map gain      ", round(free_space_gain(occ, pose, model, spec, bounds), 4))
print("closed-form wedge   ", round(wedge_volume(model.r_max, model.h_fov, model.v_fov), 4))

# %% scan a few views, then compare with the lattice oracle
for yaw in (0.0, 0.8, -0.8):
    cam = ViewPose((1.0, 2.7, 1.0), yaw, 0.0)
    occ.integrate_depth(cam, model, render_depth(scene, cam, model))
probe = ViewPose((1.5, 3.5, 1.0), -0.4, 0.1)
g = free_space_gain(occ, probe, model, spec, bounds)
o = frustum_unknown_volume_oracle(occ, probe, model, bounds)
print(f"after scans: gain {g:.4f} m^3, oracle {o:.4f} m^3, rel err {abs(g - o) / o:.2%}")

# %% the best heading from a spot next to the first box
yaw, gain = best_yaw(occ, (1.5, 3.5, 1.0), model, spec, bounds)
print(f"best yaw {math.degrees(yaw):.0f} deg reveals {gain:.4f} m^3")
print("unknown volume left in bounds", round(occ.unknown_volume_in(bounds), 2), "of", bounds.volume)
