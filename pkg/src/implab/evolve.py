"""Self-similar evolution: radial+swirl 1D runs, planar 2D runs, tracers.

The nonlinear radial system (2D core in polar form, radially symmetric
with swirl A e_theta) is

    dU/ds = -(r-1)U - (xi+U) U' + A^2/xi - a S S'
    dA/ds = -(r-1)A - (xi+U) A' - U A / xi
    dS/ds = -(r-1)S - (xi+U) S' - a S (U' + U/xi)

on a staggered uniform grid xi_i = (i+1/2)h (no node at the origin), with
parity ghosts at 0 (U, A odd; S even) and extrapolation ghosts at xi_max
where the transport is outgoing.  Advection terms use 5th-order WENO
upwinding; pressure/divergence terms use 4th-order central differences;
time stepping is SSP-RK3 under CFL dt <= cfl * h / max(|xi+U| + a S).

The planar system evolves (U1, U2, Sigma) on a Cartesian box and carries
the dimensional lifting correction

    E_d = -a (d-2) e^{-s} U1 Sigma / (R_c + e^{-s} y1),

which vanishes for d = 2 or R_c -> infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .phase import GasParams
from .profile import Profile

WENO_EPS = 1e-6
GHOST = 3


class PositivityLostError(Exception):
    """Sigma dropped to or below zero; carries the offending state."""

    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


class ConfinementError(Exception):
    """Support reached R_c/2: the denominator-safety invariant failed."""


class NotConvergedError(Exception):
    """Diagnostics fit requested on a run that has not settled."""


# ---------------------------------------------------------------------------
# WENO5 machinery (uniform grids)


def _weno5_left(v0, v1, v2, v3, v4):
    """Left-biased WENO5 reconstruction at the right interface of v2."""
    p0 = (2.0 * v0 - 7.0 * v1 + 11.0 * v2) / 6.0
    p1 = (-v1 + 5.0 * v2 + 2.0 * v3) / 6.0
    p2 = (2.0 * v2 + 5.0 * v3 - v4) / 6.0
    b0 = 13.0 / 12.0 * (v0 - 2 * v1 + v2) ** 2 + 0.25 * (v0 - 4 * v1 + 3 * v2) ** 2
    b1 = 13.0 / 12.0 * (v1 - 2 * v2 + v3) ** 2 + 0.25 * (v1 - v3) ** 2
    b2 = 13.0 / 12.0 * (v2 - 2 * v3 + v4) ** 2 + 0.25 * (3 * v2 - 4 * v3 + v4) ** 2
    a0 = 0.1 / (WENO_EPS + b0) ** 2
    a1 = 0.6 / (WENO_EPS + b1) ** 2
    a2 = 0.3 / (WENO_EPS + b2) ** 2
    asum = a0 + a1 + a2
    return (a0 * p0 + a1 * p1 + a2 * p2) / asum


def weno5_derivative(fe: np.ndarray, h: float, wind: np.ndarray) -> np.ndarray:
    """Upwinded WENO5 d/dx of ghosted samples fe (GHOST each side).

    Along the last axis; ``wind`` has the interior shape and selects the
    left- or right-biased interface pair per point.
    """
    n = fe.shape[-1] - 2 * GHOST
    sl = lambda a, b: fe[..., GHOST + a : GHOST + b + n]
    # left-biased interface values at i+1/2 for i = -1..n-1
    vL = _weno5_left(
        fe[..., GHOST - 3 : GHOST - 3 + n + 1],
        fe[..., GHOST - 2 : GHOST - 2 + n + 1],
        fe[..., GHOST - 1 : GHOST - 1 + n + 1],
        fe[..., GHOST : GHOST + n + 1],
        fe[..., GHOST + 1 : GHOST + 1 + n + 1],
    )
    # right-biased at i+1/2 for i = -1..n-1 (mirror of the left formula)
    vR = _weno5_left(
        fe[..., GHOST + 2 : GHOST + 2 + n + 1],
        fe[..., GHOST + 1 : GHOST + 1 + n + 1],
        fe[..., GHOST : GHOST + n + 1],
        fe[..., GHOST - 1 : GHOST - 1 + n + 1],
        fe[..., GHOST - 2 : GHOST - 2 + n + 1],
    )
    dL = (vL[..., 1:] - vL[..., :-1]) / h
    dR = (vR[..., 1:] - vR[..., :-1]) / h
    return np.where(wind >= 0.0, dL, dR)


def central4_derivative(fe: np.ndarray, h: float) -> np.ndarray:
    """4th-order central d/dx of ghosted samples along the last axis."""
    n = fe.shape[-1] - 2 * GHOST
    g = GHOST
    return (
        fe[..., g - 2 : g - 2 + n]
        - 8.0 * fe[..., g - 1 : g - 1 + n]
        + 8.0 * fe[..., g + 1 : g + 1 + n]
        - fe[..., g + 2 : g + 2 + n]
    ) / (12.0 * h)


def ghost_parity(f: np.ndarray, parity: int) -> np.ndarray:
    """Ghost-extend a staggered radial field: parity at 0, cubic extrap out."""
    n = f.shape[-1]
    out = np.empty(f.shape[:-1] + (n + 2 * GHOST,), dtype=f.dtype)
    out[..., GHOST : GHOST + n] = f
    sign = 1.0 if parity == 1 else -1.0
    for k in range(GHOST):
        out[..., GHOST - 1 - k] = sign * f[..., k]
    # cubic extrapolation at the outer edge (exact for degree <= 3)
    for k in range(GHOST):
        out[..., GHOST + n + k] = (
            4.0 * out[..., GHOST + n + k - 1]
            - 6.0 * out[..., GHOST + n + k - 2]
            + 4.0 * out[..., GHOST + n + k - 3]
            - out[..., GHOST + n + k - 4]
        )
    return out


def ghost_extrap(f: np.ndarray) -> np.ndarray:
    """Ghost-extend along the last axis with cubic extrapolation both sides."""
    n = f.shape[-1]
    out = np.empty(f.shape[:-1] + (n + 2 * GHOST,), dtype=f.dtype)
    out[..., GHOST : GHOST + n] = f
    for k in range(GHOST):
        out[..., GHOST + n + k] = (
            4.0 * out[..., GHOST + n + k - 1]
            - 6.0 * out[..., GHOST + n + k - 2]
            + 4.0 * out[..., GHOST + n + k - 3]
            - out[..., GHOST + n + k - 4]
        )
        j = GHOST - 1 - k
        out[..., j] = (
            4.0 * out[..., j + 1]
            - 6.0 * out[..., j + 2]
            + 4.0 * out[..., j + 3]
            - out[..., j + 4]
        )
    return out


# ---------------------------------------------------------------------------
# radial states and stepping


@dataclass
class RadialState:
    xi: np.ndarray
    u: np.ndarray
    a: np.ndarray
    sigma: np.ndarray
    s: float
    params: GasParams

    @property
    def h(self) -> float:
        return float(self.xi[1] - self.xi[0])


def radial_grid(xi_max: float, n: int) -> np.ndarray:
    h = xi_max / n
    return (np.arange(n) + 0.5) * h


def _radial_rhs(st: RadialState, u, a, sig):
    p = st.params
    r, al = p.r, p.alpha
    xi, h = st.xi, st.h
    wind = xi + u
    ue = ghost_parity(u, -1)
    ae = ghost_parity(a, -1)
    se = ghost_parity(sig, +1)
    du_w = weno5_derivative(ue, h, wind)
    da_w = weno5_derivative(ae, h, wind)
    ds_w = weno5_derivative(se, h, wind)
    du_c = central4_derivative(ue, h)
    ds_c = central4_derivative(se, h)
    rhs_u = -(r - 1.0) * u - wind * du_w + a * a / xi - al * sig * ds_c
    rhs_a = -(r - 1.0) * a - wind * da_w - u * a / xi
    rhs_s = -(r - 1.0) * sig - wind * ds_w - al * sig * (du_c + u / xi)
    return rhs_u, rhs_a, rhs_s


def cfl_dt(st: RadialState, cfl: float = 0.4) -> float:
    speed = np.abs(st.xi + st.u) + st.params.alpha * np.abs(st.sigma)
    return cfl * st.h / float(speed.max())


def step_radial(st: RadialState, dt: float) -> RadialState:
    """One SSP-RK3 step; raises PositivityLostError if Sigma leaves (0, inf)."""
    if dt > cfl_dt(st, 0.4) * (1.0 + 1e-12):
        raise ValueError(f"dt={dt} violates the CFL bound {cfl_dt(st, 0.4)}")
    u0, a0, s0 = st.u, st.a, st.sigma

    k1 = _radial_rhs(st, u0, a0, s0)
    u1 = u0 + dt * k1[0]
    a1 = a0 + dt * k1[1]
    s1 = s0 + dt * k1[2]
    k2 = _radial_rhs(st, u1, a1, s1)
    u2 = 0.75 * u0 + 0.25 * (u1 + dt * k2[0])
    a2 = 0.75 * a0 + 0.25 * (a1 + dt * k2[1])
    s2 = 0.75 * s0 + 0.25 * (s1 + dt * k2[2])
    k3 = _radial_rhs(st, u2, a2, s2)
    un = u0 / 3.0 + 2.0 / 3.0 * (u2 + dt * k3[0])
    an = a0 / 3.0 + 2.0 / 3.0 * (a2 + dt * k3[1])
    sn = s0 / 3.0 + 2.0 / 3.0 * (s2 + dt * k3[2])

    out = replace(st, u=un, a=an, sigma=sn, s=st.s + dt)
    if float(sn.min()) <= 0.0:
        raise PositivityLostError(
            f"Sigma positivity lost at s={out.s:.6g} (min={sn.min():.3e})", state=out
        )
    return out


# ---------------------------------------------------------------------------
# planar states and stepping


@dataclass
class PlanarState:
    y1: np.ndarray            # 1D axis
    y2: np.ndarray            # 1D axis
    u1: np.ndarray            # (n1, n2)
    u2: np.ndarray
    sigma: np.ndarray
    s: float
    params: GasParams
    r_c: float
    lift_dim: int = 3         # the d of E_d; 2 switches the correction off
    include_lift: bool = True

    @property
    def h(self) -> float:
        return float(self.y1[1] - self.y1[0])


def planar_grid(box: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    h = 2.0 * box / n
    axis = -box + (np.arange(n) + 0.5) * h
    return axis, axis.copy()


def lift_correction(st: PlanarState, u1, sig, s: float) -> np.ndarray:
    """E_d = -a (d-2) e^-s U1 Sigma / (R_c + e^-s y1)."""
    if not st.include_lift or st.lift_dim == 2:
        return np.zeros_like(u1)
    p = st.params
    den = st.r_c + math.exp(-s) * st.y1[:, None]
    return -p.alpha * (st.lift_dim - 2) * math.exp(-s) * u1 * sig / den


def _planar_rhs(st: PlanarState, u1, u2, sig, s: float):
    p = st.params
    r, al = p.r, p.alpha
    h = st.h
    w1 = st.y1[:, None] + u1
    w2 = st.y2[None, :] + u2

    def ddx1(f, wind=None):
        fe = ghost_extrap(f.T)
        if wind is None:
            return central4_derivative(fe, h).T
        return weno5_derivative(fe, h, wind.T).T

    def ddx2(f, wind=None):
        fe = ghost_extrap(f)
        if wind is None:
            return central4_derivative(fe, h)
        return weno5_derivative(fe, h, wind)

    adv = lambda f: w1 * ddx1(f, w1) + w2 * ddx2(f, w2)
    ds1 = ddx1(sig)
    ds2 = ddx2(sig)
    div_u = ddx1(u1) + ddx2(u2)
    rhs1 = -(r - 1.0) * u1 - adv(u1) - al * sig * ds1
    rhs2 = -(r - 1.0) * u2 - adv(u2) - al * sig * ds2
    rhs_s = -(r - 1.0) * sig - adv(sig) - al * sig * div_u + lift_correction(st, u1, sig, s)
    return rhs1, rhs2, rhs_s


def cfl_dt_planar(st: PlanarState, cfl: float = 0.4) -> float:
    sp1 = np.abs(st.y1[:, None] + st.u1) + st.params.alpha * np.abs(st.sigma)
    sp2 = np.abs(st.y2[None, :] + st.u2) + st.params.alpha * np.abs(st.sigma)
    return cfl * st.h / float(max(sp1.max(), sp2.max()))


def check_denominator_safety(st: PlanarState, threshold: float) -> None:
    """Abort if the support of U reached the R_c/2 safety radius."""
    if not st.include_lift or st.lift_dim == 2:
        return
    mag = np.abs(st.u1) + np.abs(st.u2)
    mask = mag > threshold
    if not mask.any():
        return
    den = st.r_c + math.exp(-st.s) * st.y1[:, None]
    if float(den[mask].min()) <= 0.5 * st.r_c:
        raise ConfinementError(
            f"support reached R_c/2 at s={st.s:.6g}: the confinement being "
            "tested is falsified"
        )


def step_planar(st: PlanarState, dt: float) -> PlanarState:
    if dt > cfl_dt_planar(st, 0.4) * (1.0 + 1e-12):
        raise ValueError("dt violates the planar CFL bound")
    s0t = st.s
    f0 = (st.u1, st.u2, st.sigma)
    k1 = _planar_rhs(st, *f0, s0t)
    f1 = tuple(f + dt * k for f, k in zip(f0, k1))
    k2 = _planar_rhs(st, *f1, s0t + dt)
    f2 = tuple(0.75 * f + 0.25 * (g + dt * k) for f, g, k in zip(f0, f1, k2))
    k3 = _planar_rhs(st, *f2, s0t + 0.5 * dt)
    fn = tuple(f / 3.0 + 2.0 / 3.0 * (g + dt * k) for f, g, k in zip(f0, f2, k3))
    out = replace(st, u1=fn[0], u2=fn[1], sigma=fn[2], s=st.s + dt)
    if float(fn[2].min()) <= 0.0:
        raise PositivityLostError(
            f"Sigma positivity lost at s={out.s:.6g}", state=out
        )
    return out


# ---------------------------------------------------------------------------
# initial data presets


def smooth_cutoff(t: np.ndarray) -> np.ndarray:
    """C^inf-style cutoff: 1 for t <= 1, 0 for t >= 2, smooth ramp between."""
    t = np.asarray(t, dtype=float)
    out = np.ones_like(t)
    out[t >= 2.0] = 0.0
    mid = (t > 1.0) & (t < 2.0)
    u = (t[mid] - 1.0)
    # exp-of-cotangent style partition: smooth at both ends
    a = np.exp(-1.0 / np.maximum(1.0 - u, 1e-300))
    b = np.exp(-1.0 / np.maximum(u, 1e-300))
    out[mid] = a / (a + b)
    return out


def truncation_preset(prof_on_grid, xi, c_in: float, swirl_amp: float):
    """Initial data: profile truncated to the constant background at c_in.

    U = chi(xi/c_in) Ubar, Sigma = chi Sigmabar + (1 - chi) * 1,
    A = swirl_amp * xi * chi(xi): compactly supported deviation from the
    (U, Sigma) = (0, 1) background beyond 2 c_in.
    """
    ub, sb = prof_on_grid
    chi = smooth_cutoff(xi / c_in)
    u0 = chi * ub
    s0 = chi * sb + (1.0 - chi)
    a0 = swirl_amp * xi * smooth_cutoff(xi)
    return u0, a0, s0


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class DiagnosticsSeries:
    s: list = field(default_factory=list)
    e0: list = field(default_factory=list)
    e1: list = field(default_factory=list)
    support: list = field(default_factory=list)
    sigma0: list = field(default_factory=list)
    omega0: list = field(default_factory=list)
    omega_ratio_min: list = field(default_factory=list)
    omega_ratio_max: list = field(default_factory=list)

    def rows(self):
        out = []
        for k in range(len(self.s)):
            out.append({
                "s": self.s[k], "E0": self.e0[k], "E1": self.e1[k],
                "support": self.support[k], "Sigma0": self.sigma0[k],
                "omega0": self.omega0[k],
                "Omega_ratio_min": self.omega_ratio_min[k],
                "Omega_ratio_max": self.omega_ratio_max[k],
            })
        return out

    COLUMNS = ["s", "E0", "E1", "support", "Sigma0", "omega0",
               "Omega_ratio_min", "Omega_ratio_max"]


def origin_value_even(xi: np.ndarray, f: np.ndarray) -> float:
    """f(0) from the first three staggered nodes, even parity (O(h^6))."""
    return float((150.0 * f[0] - 25.0 * f[1] + 3.0 * f[2]) / 128.0)


def swirl_vorticity_origin(xi: np.ndarray, a: np.ndarray) -> float:
    """omega(0) = 2 c1 for A = c1 xi + c3 xi^3 + c5 xi^5 near the origin."""
    x0, x1, x2 = xi[:3]
    mat = np.array([[x0, x0**3, x0**5], [x1, x1**3, x1**5], [x2, x2**3, x2**5]])
    c = np.linalg.solve(mat, a[:3])
    return 2.0 * float(c[0])


def radial_vorticity(st: RadialState) -> np.ndarray:
    """omega = A' + A/xi on the staggered grid."""
    ae = ghost_parity(st.a, -1)
    return central4_derivative(ae, st.h) + st.a / st.xi


def planar_vorticity(st: PlanarState) -> np.ndarray:
    """omega = d2 U1 - d1 U2 (4th-order central)."""
    d2u1 = central4_derivative(ghost_extrap(st.u1), st.h)
    d1u2 = central4_derivative(ghost_extrap(st.u2.T), st.h).T
    return d2u1 - d1u2


def specific_vorticity_factor(p: GasParams, s: float) -> float:
    """Physical specific vorticity = factor * omega_ss / Sigma^(1/alpha).

    From sigma = (1/r)(T-t)^(1/r-1) Sigma, rho = (alpha sigma)^(1/alpha),
    omega_phys = (1/r)(T-t)^-1 omega_ss, and T - t = e^{-rs}.
    """
    al, r = p.alpha, p.r
    expo = r + (1.0 - r) / al
    return (1.0 / r) * (al / r) ** (-1.0 / al) * math.exp(expo * s)


def specific_vorticity_radial(st: RadialState) -> np.ndarray:
    rho_like = st.sigma ** (1.0 / st.params.alpha)
    if float(rho_like.min()) < 1e-14:
        raise ZeroDivisionError("density reconstruction below 1e-14")
    return specific_vorticity_factor(st.params, st.s) * radial_vorticity(st) / rho_like


def vorticity_diagnostics(st) -> dict:
    """(omega field, specific vorticity field, origin samples)."""
    if isinstance(st, RadialState):
        om = radial_vorticity(st)
        big = specific_vorticity_radial(st)
        om0 = swirl_vorticity_origin(st.xi, st.a)
        sig0 = origin_value_even(st.xi, st.sigma)
        om_big0 = specific_vorticity_factor(st.params, st.s) * om0 / sig0 ** (
            1.0 / st.params.alpha
        )
        return {"omega": om, "Omega": big, "omega0": om0, "Sigma0": sig0,
                "Omega0": om_big0}
    om = planar_vorticity(st)
    rho_like = st.sigma ** (1.0 / st.params.alpha)
    if float(rho_like.min()) < 1e-14:
        raise ZeroDivisionError("density reconstruction below 1e-14")
    big = specific_vorticity_factor(st.params, st.s) * om / rho_like
    return {"omega": om, "Omega": big}


# ---------------------------------------------------------------------------
# run drivers


@dataclass
class RadialRun:
    diagnostics: DiagnosticsSeries
    snapshots: list            # list of RadialState (subsampled)
    final: RadialState
    reference: tuple | None    # (Ubar, Sigmabar) on the grid, if any
    sigma_inf: float
    s_in: float


def weighted_energy_radial(st: RadialState, ref, kappa1: float = 0.25):
    """(E0, E1): weighted perturbation energies, trapezoid with xi dxi."""
    xi, h = st.xi, st.h
    vp_g = (1.0 + xi**2) ** (-(2.0 + kappa1) / 2.0)
    du = st.u - (ref[0] if ref is not None else 0.0)
    dsig = st.sigma - (ref[1] if ref is not None else 0.0)
    dens = du**2 + st.a**2 + dsig**2
    e0 = float(np.sum(dens * vp_g * xi) * h)
    # m=1 part: radial scalar/vector Laplacians against phi_2^2 vp_g, phi1 ~ <xi>
    due = ghost_parity(du, -1)
    ae = ghost_parity(st.a, -1)
    dse = ghost_parity(dsig, +1)
    d1u = central4_derivative(due, h)
    d1a = central4_derivative(ae, h)
    d1s = central4_derivative(dse, h)
    d2u = central4_derivative(ghost_parity(d1u, +1), h)
    d2a = central4_derivative(ghost_parity(d1a, +1), h)
    d2s = central4_derivative(ghost_parity(d1s, -1), h)
    lap_u = d2u + d1u / xi - du / xi**2
    lap_a = d2a + d1a / xi - st.a / xi**2
    lap_s = d2s + d1s / xi
    phi2sq = (1.0 + xi**2) ** 2
    e1 = e0 + 1e-2 * float(
        np.sum((lap_u**2 + lap_a**2 + lap_s**2) * phi2sq * vp_g * xi) * h
    )
    return e0, e1


def support_radius(st: RadialState, sigma_inf: float, s_in: float,
                   threshold: float) -> float:
    p = st.params
    bg = sigma_inf * math.exp(-(p.r - 1.0) * (st.s - s_in))
    dev = np.maximum(np.abs(st.u), np.maximum(np.abs(st.a), np.abs(st.sigma - bg)))
    idx = np.flatnonzero(dev > threshold)
    return float(st.xi[idx[-1]]) if idx.size else 0.0


def run_radial(
    prof: Profile,
    xi_max: float = 60.0,
    n: int = 2048,
    span: float = 5.0,
    cfl: float = 0.4,
    c_in: float = 10.0,
    swirl_amp: float = 1e-3,
    sigma_inf: float = 1.0,
    s_in: float = 0.0,
    preset: str = "truncation",
    n_snapshots: int = 200,
    n_diag: int = 200,
    support_threshold_rel: float = 1e-10,
) -> RadialRun:
    """Evolve the radial system from the truncation preset (or pure profile).

    preset "truncation": the profile glued to the (0, sigma_inf) background
    at c_in with a swirl seed; "profile": the unperturbed profile (A = 0);
    "background": the constant trajectory.
    """
    p = prof.params
    xi = radial_grid(xi_max, n)
    if prof.source is not None:
        pr = prof.resample(xi)
        ub, sb = pr.u, pr.sigma
    else:
        ub = np.interp(xi, prof.xi, prof.u)
        sb = np.interp(xi, prof.xi, prof.sigma)
    if preset == "truncation":
        u0, a0, s0 = truncation_preset((ub, sb), xi, c_in, swirl_amp)
    elif preset == "profile":
        u0, a0, s0 = ub.copy(), np.zeros_like(xi), sb.copy()
    elif preset == "background":
        u0 = np.zeros_like(xi)
        a0 = np.zeros_like(xi)
        s0 = np.full_like(xi, sigma_inf)
    else:
        raise ValueError(f"unknown preset {preset!r}")
    st = RadialState(xi=xi, u=u0, a=a0, sigma=s0, s=s_in, params=p)

    scale = max(float(np.abs(u0).max()), float(np.abs(s0).max()), 1.0)
    thr = support_threshold_rel * scale
    ref = (ub, sb) if preset in ("truncation", "profile") else None

    diag = DiagnosticsSeries()
    snapshots = [replace(st)]
    s_end = s_in + span
    next_diag = s_in
    next_snap = s_in
    diag_ds = span / n_diag
    snap_ds = span / n_snapshots

    def record(state):
        e0, e1 = weighted_energy_radial(state, ref)
        diag.s.append(state.s)
        diag.e0.append(e0)
        diag.e1.append(e1)
        diag.support.append(support_radius(state, sigma_inf, s_in, thr))
        diag.sigma0.append(origin_value_even(state.xi, state.sigma))
        diag.omega0.append(swirl_vorticity_origin(state.xi, state.a))
        diag.omega_ratio_min.append(1.0)
        diag.omega_ratio_max.append(1.0)

    record(st)
    while st.s < s_end - 1e-12:
        dt = min(cfl_dt(st, cfl), s_end - st.s)
        st = step_radial(st, dt)
        if st.s >= next_diag + diag_ds - 1e-12:
            record(st)
            next_diag = st.s
        if st.s >= next_snap + snap_ds - 1e-12:
            snapshots.append(replace(st))
            next_snap = st.s
    if diag.s[-1] < st.s:
        record(st)
    if snapshots[-1].s < st.s:
        snapshots.append(replace(st))
    return RadialRun(diagnostics=diag, snapshots=snapshots, final=st,
                     reference=ref, sigma_inf=sigma_inf, s_in=s_in)


# ---------------------------------------------------------------------------
# characteristics


@dataclass
class TrajectorySet:
    x0: np.ndarray
    s: np.ndarray              # sample times
    x: np.ndarray              # (n_tracer, n_time) positions (radial)
    escaped: np.ndarray        # bool flags
    hypothesis_ok: np.ndarray  # per-time perturbation hypothesis flag


def trace_characteristics(
    snapshots: list,
    x0_list,
    prof: Profile | None = None,
    kappa: float | None = None,
    substeps: int = 4,
) -> TrajectorySet:
    """RK4 radial trajectories dX/ds = X + U(X, s) through stored snapshots.

    Velocity is cubic in space (spline per snapshot) and linear in time.
    Trajectories leaving the grid are recorded as escaped, not an error.
    If ``prof`` and ``kappa`` are given, the per-step hypothesis
    |U - Ubar| <= kappa <xi> / 10 is checked and reported per sample time.
    """
    times = np.array([st.s for st in snapshots])
    splines = [CubicSpline(st.xi, st.u) for st in snapshots]
    xi_hi = float(snapshots[0].xi[-1])
    ub = None
    if prof is not None:
        if prof.source is not None:
            ub = CubicSpline(snapshots[0].xi, prof.resample(snapshots[0].xi).u)
        else:
            ub = CubicSpline(prof.xi, prof.u)

    def u_at(x, k, frac):
        ua = float(splines[k](x))
        ub_ = float(splines[min(k + 1, len(splines) - 1)](x))
        return (1.0 - frac) * ua + frac * ub_

    x0 = np.asarray(x0_list, dtype=float)
    n_tr = x0.size
    n_t = times.size
    pos = np.full((n_tr, n_t), np.nan)
    pos[:, 0] = x0
    escaped = np.zeros(n_tr, dtype=bool)
    hyp = np.ones(n_t, dtype=bool)
    if prof is not None and kappa is not None:
        for k, st in enumerate(snapshots):
            dev = np.abs(st.u - ub(st.xi)) / np.sqrt(1.0 + st.xi**2)
            hyp[k] = bool(dev.max() <= kappa / 10.0)

    cur = x0.copy()
    alive = np.ones(n_tr, dtype=bool)
    for k in range(n_t - 1):
        dt_full = times[k + 1] - times[k]
        dt = dt_full / substeps
        for j in range(substeps):
            t_frac0 = j / substeps
            t_half = (j + 0.5) / substeps
            t_frac1 = (j + 1) / substeps
            for i in range(n_tr):
                if not alive[i]:
                    continue
                x = cur[i]
                f = lambda xx, fr: xx + u_at(min(xx, xi_hi), k, fr)
                k1 = f(x, t_frac0)
                k2 = f(x + 0.5 * dt * k1, t_half)
                k3 = f(x + 0.5 * dt * k2, t_half)
                k4 = f(x + dt * k3, t_frac1)
                xn = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
                if xn > xi_hi:
                    alive[i] = False
                    escaped[i] = True
                else:
                    cur[i] = xn
        pos[alive, k + 1] = cur[alive]
    return TrajectorySet(x0=x0, s=times, x=pos, escaped=escaped, hypothesis_ok=hyp)


def omega_ratio_along(snapshots: list, traj: TrajectorySet) -> np.ndarray:
    """Specific-vorticity ratio Omega(X(s), s) / Omega(x0, s_in) per tracer/time."""
    n_tr, n_t = traj.x.shape
    ratios = np.full((n_tr, n_t), np.nan)
    base = None
    for k, st in enumerate(snapshots):
        big = specific_vorticity_radial(st)
        spl = CubicSpline(st.xi, big)
        vals = np.array([
            float(spl(traj.x[i, k])) if np.isfinite(traj.x[i, k]) else np.nan
            for i in range(n_tr)
        ])
        if k == 0:
            base = vals
        ratios[:, k] = vals / base
    return ratios


# ---------------------------------------------------------------------------
# support comparison ODE


def support_ode(a0: float, c_const: float, kappa1: float, s_span: float,
                s_in: float = 0.0, n_out: int = 200):
    """Integrate da/ds = a (1 + C a^(kappa1/2 - 1)) and its closed-form bound.

    Returns (s_grid, a(s), bound) where bound caps a(s) e^{-s}:
    with z = a e^{-s}, z' = C e^{-s} a^{kappa1/2} gives
    (z^{kappa1/2})' <= C2 e^{-s(1 - kappa1/2)}, C2 = (kappa1/2) C z0^(kappa1-1),
    so z <= (z0^{kappa1/2} + C2 e^{-s_in(1-kappa1/2)}/(1-kappa1/2))^{2/kappa1}.
    """
    if a0 <= 0:
        raise ValueError("a0 must be positive")
    sol = solve_ivp(
        lambda s, a: [a[0] * (1.0 + c_const * a[0] ** (kappa1 / 2.0 - 1.0))],
        (s_in, s_in + s_span),
        [a0],
        method="DOP853",
        rtol=1e-10,
        atol=1e-12,
        dense_output=True,
    )
    s_grid = np.linspace(s_in, s_in + s_span, n_out)
    a_vals = sol.sol(s_grid)[0]
    z0 = a0 * math.exp(-s_in)
    c2 = 0.5 * kappa1 * c_const * z0 ** (kappa1 - 1.0)
    bound = (
        z0 ** (kappa1 / 2.0)
        + c2 * math.exp(-s_in * (1.0 - kappa1 / 2.0)) / (1.0 - kappa1 / 2.0)
    ) ** (2.0 / kappa1)
    return s_grid, a_vals, bound


def fit_support_constant(run: RadialRun, kappa1: float = 0.25) -> float:
    """C with |U| + a|Sigma| <= C xi^(kappa1/2) on xi >= 1, over snapshots."""
    c_fit = 0.0
    al = run.final.params.alpha
    for st in run.snapshots:
        sel = st.xi >= 1.0
        val = (np.abs(st.u[sel]) + al * np.abs(st.sigma[sel])) / st.xi[sel] ** (
            kappa1 / 2.0
        )
        c_fit = max(c_fit, float(val.max()))
    return c_fit


def support_tracking(run: RadialRun, kappa1: float = 0.25):
    """Measured support S(s) against the comparison ODE (fitted C).

    Returns dict with the series, a(s), the closed-form bound on a e^{-s},
    and the two verification flags S(s) <= 2 a(s) and a e^{-s} <= bound.
    """
    s_arr = np.array(run.diagnostics.s)
    supp = np.array(run.diagnostics.support)
    c_fit = fit_support_constant(run, kappa1)
    a0 = max(float(supp[0]), 1.0)
    s_grid, a_vals, bound = support_ode(
        a0, c_fit, kappa1, float(s_arr[-1] - s_arr[0]), s_in=float(s_arr[0])
    )
    a_at = np.interp(s_arr, s_grid, a_vals)
    ok_supp = bool(np.all(supp <= 2.0 * a_at * (1.0 + 1e-9)))
    ok_bound = bool(np.all(a_vals * np.exp(-s_grid) <= bound * (1.0 + 1e-9)))
    return {
        "s": s_arr, "support": supp, "a": a_at, "bound": bound,
        "C_fit": c_fit, "support_ok": ok_supp, "bound_ok": ok_bound,
    }


# ---------------------------------------------------------------------------
# blowup-rate fit


def fit_blowup_rate(run: RadialRun, sigma_bar0: float) -> dict:
    """Fitted exponent of omega(0, t) against T - t = e^{-rs}.

    Reconstructs omega(0,t) = Omega(0, s_in) * rho(0, t) with
    rho(0,t) = (alpha r^-1 (T-t)^(1/r-1) Sigma(0,s))^(1/alpha); requires the
    m=0 energy to be decreasing over the last third (convergence) and a
    non-trivial swirl (fit refused for irrotational runs).
    """
    p = run.final.params
    diag = run.diagnostics
    s_arr = np.array(diag.s)
    e0 = np.array(diag.e0)
    third = s_arr >= s_arr[0] + 2.0 * (s_arr[-1] - s_arr[0]) / 3.0
    if third.sum() >= 3:
        slope = np.polyfit(s_arr[third], np.log(np.maximum(e0[third], 1e-300)), 1)[0]
        if slope > 1e-3:
            raise NotConvergedError(
                f"m=0 perturbation energy growing over the last third "
                f"(dlogE0/ds={slope:.3e})"
            )
    om0_init = diag.omega0[0]
    sig0_init = diag.sigma0[0]
    if abs(om0_init) < 1e-300:
        raise ValueError("zero-swirl run: omega(0) vanishes identically, fit refused")
    big0 = specific_vorticity_factor(p, s_arr[0]) * om0_init / sig0_init ** (
        1.0 / p.alpha
    )

    fit_win = s_arr >= s_arr[0] + (s_arr[-1] - s_arr[0]) / 3.0
    s_f = s_arr[fit_win]
    sig0 = np.array(diag.sigma0)[fit_win]
    log_tmt = -p.r * s_f  # log(T - t)
    rho0 = (p.alpha / p.r * np.exp((1.0 / p.r - 1.0) * log_tmt) * sig0) ** (1.0 / p.alpha)
    log_om = np.log(abs(big0) * rho0)
    coef = np.polyfit(log_tmt, log_om, 1)
    target = -(p.r - 1.0) / (p.r * p.alpha)
    sigma_conv = abs(sig0[-1] - sigma_bar0) / abs(sigma_bar0)
    return {
        "exponent_fit": float(coef[0]),
        "exponent_target": float(target),
        "rel_err": float(abs(coef[0] - target) / abs(target)),
        "sigma0_final_relgap": float(sigma_conv),
        "Omega0": float(big0),
    }
