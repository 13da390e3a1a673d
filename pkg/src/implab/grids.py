"""Radial grids, quadrature, and finite-difference operators.

The profile lives on a graded grid on [0, xi_max]: spacings grow
geometrically (default ratio 1.05) away from the cluster points xi = 0 and
xi = xi_s, capped at a fraction of the local radius so the far field is
log-uniform.  Quadrature is the trapezoid rule with the 2D radial measure
xi * dxi (the angular factor is a global constant absorbed everywhere).

Derivative matrices use Fornberg stencil weights on the (non-uniform)
grid, with ghost nodes obtained by parity reflection through xi = 0 and
one-sided interior-biased stencils at xi_max.
"""

from __future__ import annotations

import numpy as np


def graded_grid(
    xi_max: float = 1e3,
    n: int = 2048,
    xi_s: float = 1.0,
    ratio: float = 1.05,
    h_min_rel: float = 1e-4,
    sonic_plateau_rel: float = 1.2e-3,
    sonic_pad_rel: float = 0.15,
    tail_cap_rel: float = 0.05,
) -> np.ndarray:
    """Graded radial grid on [0, xi_max] clustered at 0 and xi_s.

    The target spacing grows linearly away from each cluster point at rate
    (ratio - 1) -- equivalent to geometric spacing growth per step -- from
    a floor h_min_rel * xi_s, with a fine plateau (sonic_plateau_rel) held
    across |xi - xi_s| <= sonic_pad_rel * xi_s: the profile's second
    derivative turns sharply just past the sonic radius and the plateau
    resolves it.  The far field caps spacing at tail_cap_rel * xi
    (log-uniform tail).  Nodes are placed by inverting the cumulative
    density of 1/spacing, segment by segment, so xi = 0, xi_s, xi_max are
    exact nodes and the total count is exactly ``n``.
    """
    if xi_max <= xi_s:
        raise ValueError("xi_max must exceed xi_s")
    h0 = h_min_rel * xi_s
    h_pl = sonic_plateau_rel * xi_s
    w_f = sonic_pad_rel * xi_s
    g1 = ratio - 1.0

    def h_sonic(d):
        near = np.minimum(h0 + g1 * d, h_pl)
        far = h_pl + g1 * (d - w_f)
        return np.where(d <= w_f, near, far)

    def shape(xi):
        xi = np.asarray(xi, dtype=float)
        ramp0 = h0 + g1 * xi
        ramps = h_sonic(np.abs(xi - xi_s))
        out = np.minimum(ramp0, ramps)
        tail = tail_cap_rel * np.maximum(xi, 1e-30)
        return np.where(xi > xi_s, np.minimum(ramps, tail), out)

    def segment_nodes(a, b, m):
        # aux sampling dense enough to resolve 1/shape everywhere
        aux = np.unique(np.concatenate([
            np.linspace(a, b, 4001),
            a + (b - a) * np.geomspace(1e-8, 1.0, 2001),
            b - (b - a) * np.geomspace(1e-8, 1.0, 2001),
        ]))
        dens = 1.0 / shape(aux)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(aux))])
        targets = np.linspace(0.0, cum[-1], m)
        nodes = np.interp(targets, cum, aux)
        nodes[0], nodes[-1] = a, b
        return nodes, cum[-1]

    # split the budget by integrated density
    _, cost_a = segment_nodes(0.0, xi_s, 3)
    _, cost_b = segment_nodes(xi_s, xi_max, 3)
    n_a = max(8, int(round((n - 1) * cost_a / (cost_a + cost_b))) + 1)
    n_b = n - n_a + 1
    if n_b < 8:
        raise ValueError(f"n={n} too small for this grading")
    inner, _ = segment_nodes(0.0, xi_s, n_a)
    outer, _ = segment_nodes(xi_s, xi_max, n_b)
    return np.concatenate([inner, outer[1:]])


def trapezoid_weights(xi: np.ndarray) -> np.ndarray:
    """Trapezoid quadrature weights for integral f(xi) * xi dxi on the grid."""
    xi = np.asarray(xi, dtype=float)
    w = np.zeros_like(xi)
    d = np.diff(xi)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w * xi


def fornberg_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Fornberg weights for the m-th derivative at z from nodes x.

    Classic recursion (Fornberg 1988); returns the length-len(x) weight
    vector of the m-th derivative.
    """
    x = np.asarray(x, dtype=float)
    nd = x.size
    c = np.zeros((nd, m + 1))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, nd):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def derivative_matrix(
    xi: np.ndarray,
    order: int = 1,
    acc_width: int = 5,
    parity: int | None = None,
) -> np.ndarray:
    """Dense differentiation matrix on a non-uniform grid.

    ``acc_width``-node stencils (default 5, 4th order for first
    derivatives).  If ``parity`` is +1 (even) or -1 (odd) the stencils near
    xi = 0 may reach through the origin onto mirrored ghost nodes -xi_k
    carrying parity-signed values; columns are folded back accordingly.
    Near xi_max the stencils are one-sided (interior-biased), consistent
    with outgoing transport there.
    """
    xi = np.asarray(xi, dtype=float)
    n = xi.size
    D = np.zeros((n, n))
    half = acc_width // 2
    for i in range(n):
        if parity is not None:
            lo = max(0, i - half)
            hi = min(n, lo + acc_width)
            lo = max(0, hi - acc_width)
            idx = np.arange(lo, hi)
            if i < half and xi[0] == 0.0:
                # extend through the origin with mirrored nodes
                n_ghost = half - i
                mirror = np.arange(1, n_ghost + 1)
                nodes = np.concatenate([-xi[mirror][::-1], xi[: i + half + 1]])
                w = fornberg_weights(xi[i], nodes, order)
                row = np.zeros(n)
                row[: i + half + 1] += w[n_ghost:]
                sign = 1.0 if parity == 1 else -1.0
                row[mirror] += sign * w[:n_ghost][::-1]
                D[i] = row
                continue
        lo = max(0, i - half)
        hi = min(n, lo + acc_width)
        lo = max(0, hi - acc_width)
        idx = np.arange(lo, hi)
        D[i, idx] = fornberg_weights(xi[i], xi[idx], order)
    return D


def parity_origin_value(xi: np.ndarray, f: np.ndarray, parity: int, n_fit: int = 4):
    """Extrapolate f(0) (even parity) or f'(0)-slope behavior (odd).

    Fits the leading parity-consistent polynomial through the first
    ``n_fit`` positive nodes: even fields use 1, xi^2, xi^4, ...; odd
    fields return the coefficient of xi (f ~ c1 xi).
    """
    pos = xi > 0
    x = xi[pos][:n_fit]
    y = f[pos][:n_fit]
    if parity == 1:
        A = np.vander(x**2, n_fit, increasing=True)
        coef = np.linalg.solve(A, y)
        return coef[0]
    A = x[:, None] ** (2 * np.arange(n_fit)[None, :] + 1)
    coef = np.linalg.solve(A, y)
    return coef[0]
