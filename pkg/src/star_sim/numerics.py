"""Finite-difference stencils shared by the state, solver and diagnostics
modules.

All grids are uniform.  Node arrays have length N+1; face arrays (values
at cell midpoints) have length N.  Every derivative here is second-order
accurate, including the one-sided closures at the ends, so that discrete
residuals of smooth fields shrink like dx**2.
"""

import numpy as np


def node_gradient(u, dx):
    """d/dx of node values: centered inside, one-sided at both ends."""
    u = np.asarray(u, dtype=float)
    g = np.empty_like(u)
    g[1:-1] = (u[2:] - u[:-2]) / (2.0 * dx)
    g[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * dx)
    g[-1] = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * dx)
    return g


def node_second_derivative(u, dx):
    """d2/dx2 of node values, second order everywhere."""
    u = np.asarray(u, dtype=float)
    h = np.empty_like(u)
    h[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / dx**2
    h[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / dx**2
    h[-1] = (2.0 * u[-1] - 5.0 * u[-2] + 4.0 * u[-3] - u[-4]) / dx**2
    return h


def face_gradient_at_nodes(face_vals, dx):
    """d/dx at the nodes of a quantity sampled at cell midpoints.

    Interior nodes take the conservative difference of the two adjacent
    faces.  The boundary nodes sit half a cell outside the nearest face,
    so a quadratic through the three nearest faces supplies a one-sided
    value that is still exact for parabolas.
    """
    f = np.asarray(face_vals, dtype=float)
    n_nodes = f.size + 1
    g = np.empty(n_nodes)
    g[1:-1] = (f[1:] - f[:-1]) / dx
    g[0] = (-2.0 * f[0] + 3.0 * f[1] - f[2]) / dx
    g[-1] = (2.0 * f[-1] - 3.0 * f[-2] + f[-3]) / dx
    return g


def nodes_to_faces(u):
    """Arithmetic midpoint average of adjacent node values."""
    u = np.asarray(u, dtype=float)
    return 0.5 * (u[1:] + u[:-1])


def cumulative_trapezoid(y, x):
    """Running trapezoid integral of y over x, anchored at zero."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(y)
    np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x), out=out[1:])
    return out
