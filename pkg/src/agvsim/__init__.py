"""Hierarchical AGV motion planning and control toolkit.

High level: grid path planning, horizon-based path smoothing, reference
velocity planning, and receding-horizon trajectory tracking at 20 Hz.
Low level: per-channel disturbance-observer torque control at 100 Hz.
A two-rate closed-loop simulator ties the layers to a torque-driven plant
with configurable mass/inertia uncertainty and external disturbances.
"""

__version__ = "0.1.0"
