"""Pure-Python implementation of the hot simulation kernels.

The compiled extension (``_kernels.pyx``) mirrors these functions operation
for operation so that both backends produce bit-identical doubles on the
same machine. Any change here must be replicated in the .pyx file in the
exact same floating-point evaluation order.
"""

from __future__ import annotations

import math

BACKEND = "python"


def wrap_angle(a: float) -> float:
    """Normalize an angle to the half-open interval (-pi, pi]."""
    r = math.remainder(a, math.tau)
    return math.pi if r == -math.pi else r


def bicycle_step(
    x: float,
    y: float,
    heading: float,
    speed: float,
    steer: float,
    accel: float,
    dt: float,
    n_substeps: int,
    wheelbase: float,
    max_speed: float,
) -> tuple[float, float, float, float]:
    """Advance the kinematic bicycle state by dt using n_substeps RK4 steps.

    Speed is clipped to [0, max_speed] both inside the derivative evaluation
    and after every substep: braking at standstill must not move the vehicle
    backwards. Heading is wrapped once at the end.
    """
    h = dt / n_substeps
    tan_steer = math.tan(steer)
    for _ in range(n_substeps):
        v1 = speed
        if v1 < 0.0:
            v1 = 0.0
        elif v1 > max_speed:
            v1 = max_speed
        k1x = v1 * math.cos(heading)
        k1y = v1 * math.sin(heading)
        k1h = v1 * tan_steer / wheelbase

        h2 = heading + 0.5 * h * k1h
        v2 = speed + 0.5 * h * accel
        if v2 < 0.0:
            v2 = 0.0
        elif v2 > max_speed:
            v2 = max_speed
        k2x = v2 * math.cos(h2)
        k2y = v2 * math.sin(h2)
        k2h = v2 * tan_steer / wheelbase

        h3 = heading + 0.5 * h * k2h
        v3 = speed + 0.5 * h * accel
        if v3 < 0.0:
            v3 = 0.0
        elif v3 > max_speed:
            v3 = max_speed
        k3x = v3 * math.cos(h3)
        k3y = v3 * math.sin(h3)
        k3h = v3 * tan_steer / wheelbase

        h4 = heading + h * k3h
        v4 = speed + h * accel
        if v4 < 0.0:
            v4 = 0.0
        elif v4 > max_speed:
            v4 = max_speed
        k4x = v4 * math.cos(h4)
        k4y = v4 * math.sin(h4)
        k4h = v4 * tan_steer / wheelbase

        x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        heading += h / 6.0 * (k1h + 2.0 * k2h + 2.0 * k3h + k4h)
        speed += h * accel
        if speed < 0.0:
            speed = 0.0
        elif speed > max_speed:
            speed = max_speed
    return x, y, wrap_angle(heading), speed


def obb_max_gap(
    ax: float,
    ay: float,
    ah: float,
    ahl: float,
    ahw: float,
    bx: float,
    by: float,
    bh: float,
    bhl: float,
    bhw: float,
) -> float:
    """Largest separating-axis gap between two oriented rectangles.

    Arguments are (center x, center y, heading, half length, half width) per
    box. The four candidate axes are the edge normals of both rectangles.
    A positive return value is a lower bound on the separation distance; a
    non-positive value means the closed rectangles overlap, with -gap being
    the minimum translation depth over the tested axes. Exactly symmetric
    under argument exchange.
    """
    ca = math.cos(ah)
    sa = math.sin(ah)
    cb = math.cos(bh)
    sb = math.sin(bh)
    dx = bx - ax
    dy = by - ay
    # |cos| and |sin| of the relative heading, computed from the axis dots.
    m = abs(ca * cb + sa * sb)
    n = abs(sa * cb - ca * sb)

    gap = abs(dx * ca + dy * sa) - ahl - (bhl * m + bhw * n)
    g = abs(dy * ca - dx * sa) - ahw - (bhl * n + bhw * m)
    if g > gap:
        gap = g
    g = abs(dx * cb + dy * sb) - bhl - (ahl * m + ahw * n)
    if g > gap:
        gap = g
    g = abs(dy * cb - dx * sb) - bhw - (ahl * n + ahw * m)
    if g > gap:
        gap = g
    return gap
