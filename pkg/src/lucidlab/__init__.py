"""Desk-scale lab-manipulation simulator.

Subpackages and modules:
  geometry    rigid transforms, frames, camera model, pose errors
  shapes      primitive-composed object models and meshes
  scene       scene JSON documents and the default desk scenes
  perception  depth rendering, codebook pose estimation, noise oracle
  kinematics  UR3 forward/inverse kinematics and gripper state
  planning    keypoint task formation and collision-checked trajectories
  twin        digital-twin execution and validation reports
  transport   binary wire protocol plus perception/execution servers
  stats       Kruskal-Wallis and Mann-Whitney tests
  bench       workspace sweeps, complex-combination study, dispense demo
"""

__version__ = "0.1.0"
