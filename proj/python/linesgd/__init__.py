"""Python bindings for the loss-line scanning toolkit.

Thin wrappers over the C++ core: step-size grids, fixed-rate and parabolic
step lengths, curve smoothing and shape distance, parabola fits, the
step-length/gradient-norm proportionality fit, and a seeded training demo.
"""

from ._core import (
    curve_distance,
    grid_points,
    moving_average,
    parabola_fit,
    proportionality,
    step_pal,
    step_sgd,
    train_demo,
)

__all__ = [
    "curve_distance",
    "grid_points",
    "moving_average",
    "parabola_fit",
    "proportionality",
    "step_pal",
    "step_sgd",
    "train_demo",
]
