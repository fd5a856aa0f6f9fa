"""Collision detection, isolation and identification for legged manipulators.

The package is organized around the stages of a collision-event pipeline:

- :mod:`colev.model`, :mod:`colev.dynamics` — floating-base rigid-body model
  and its dynamic terms (inertia, bias, Jacobians).
- :mod:`colev.observers` — external generalized-torque estimation (direct,
  static direct, momentum observers, momentum Kalman observer).
- :mod:`colev.wrench` — foot-force and collision-wrench estimation by
  pseudoinverse of stacked contact Jacobians.
- :mod:`colev.detection` — band-pass filtering, threshold detection with
  two-peak time-span estimation, dynamic thresholds.
- :mod:`colev.identification` — arm/base isolation, disturbance-force
  tracking and collision-force identification.
- :mod:`colev.simulator` — quasi-static scenario generator producing
  ground-truth-labeled logs.
- :mod:`colev.pipeline`, :mod:`colev.evaluation`, :mod:`colev.cli` — batch
  pipeline execution, metrics, reports and the command-line harness.
"""

__version__ = "0.1.0"

from .model import GeneralizedState, RobotModel, default_model  # noqa: F401
