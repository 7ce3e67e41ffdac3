# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=False
"""Compiled simulation kernels.

Mirrors ``_kernels_py.py`` operation for operation; both backends must
produce bit-identical doubles on the same machine. Keep the two files in
lockstep.
"""

from libc.math cimport cos, sin, tan, fabs, remainder, M_PI

BACKEND = "compiled"


cpdef double wrap_angle(double a):
    """Normalize an angle to the half-open interval (-pi, pi]."""
    cdef double r = remainder(a, 2.0 * M_PI)
    if r == -M_PI:
        return M_PI
    return r


cpdef tuple bicycle_step(
    double x,
    double y,
    double heading,
    double speed,
    double steer,
    double accel,
    double dt,
    int n_substeps,
    double wheelbase,
    double max_speed,
):
    """Advance the kinematic bicycle state by dt using n_substeps RK4 steps."""
    cdef double h = dt / n_substeps
    cdef double tan_steer = tan(steer)
    cdef double v1, v2, v3, v4, h2, h3, h4
    cdef double k1x, k1y, k1h, k2x, k2y, k2h, k3x, k3y, k3h, k4x, k4y, k4h
    cdef int i
    for i in range(n_substeps):
        v1 = speed
        if v1 < 0.0:
            v1 = 0.0
        elif v1 > max_speed:
            v1 = max_speed
        k1x = v1 * cos(heading)
        k1y = v1 * sin(heading)
        k1h = v1 * tan_steer / wheelbase

        h2 = heading + 0.5 * h * k1h
        v2 = speed + 0.5 * h * accel
        if v2 < 0.0:
            v2 = 0.0
        elif v2 > max_speed:
            v2 = max_speed
        k2x = v2 * cos(h2)
        k2y = v2 * sin(h2)
        k2h = v2 * tan_steer / wheelbase

        h3 = heading + 0.5 * h * k2h
        v3 = speed + 0.5 * h * accel
        if v3 < 0.0:
            v3 = 0.0
        elif v3 > max_speed:
            v3 = max_speed
        k3x = v3 * cos(h3)
        k3y = v3 * sin(h3)
        k3h = v3 * tan_steer / wheelbase

        h4 = heading + h * k3h
        v4 = speed + h * accel
        if v4 < 0.0:
            v4 = 0.0
        elif v4 > max_speed:
            v4 = max_speed
        k4x = v4 * cos(h4)
        k4y = v4 * sin(h4)
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


cpdef double obb_max_gap(
    double ax,
    double ay,
    double ah,
    double ahl,
    double ahw,
    double bx,
    double by,
    double bh,
    double bhl,
    double bhw,
):
    """Largest separating-axis gap between two oriented rectangles."""
    cdef double ca = cos(ah)
    cdef double sa = sin(ah)
    cdef double cb = cos(bh)
    cdef double sb = sin(bh)
    cdef double dx = bx - ax
    cdef double dy = by - ay
    cdef double m = fabs(ca * cb + sa * sb)
    cdef double n = fabs(sa * cb - ca * sb)
    cdef double gap, g

    gap = fabs(dx * ca + dy * sa) - ahl - (bhl * m + bhw * n)
    g = fabs(dy * ca - dx * sa) - ahw - (bhl * n + bhw * m)
    if g > gap:
        gap = g
    g = fabs(dx * cb + dy * sb) - bhl - (ahl * m + ahw * n)
    if g > gap:
        gap = g
    g = fabs(dy * cb - dx * sb) - bhw - (ahl * n + ahw * m)
    if g > gap:
        gap = g
    return gap
