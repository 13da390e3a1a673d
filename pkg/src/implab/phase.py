"""Phase-plane algebra and integration for radial self-similar Euler profiles.

The stationary radial self-similar flow is governed by an autonomous ODE
system for the pair

    W = -Ubar(xi)/xi,      S = alpha*Sigmabar(xi)/xi,      x = log(xi),

        dW/dx = -Delta1(W,S)/Delta(W,S),
        dS/dx = -Delta2(W,S)/Delta(W,S),

with Delta = (1-W)^2 - S^2 vanishing on the sonic line.  The cubic Delta1
and quadratic-in-W Delta2 are obtained by a 2x2 elimination of the field
derivatives from the stationary system; the closed forms used here are

    Delta1 = W(1-W)(r-W) - d*S^2*(W - We),
    Delta2 = S*[(1-W)^2 - S^2 + (r-1)((1-W) + alpha*W) - alpha*(d-1)*W(1-W)],

with d = 2 (the planar core) and We = ell*(r-1)/d.  These forms are pinned
by the invariants tested in the suite: root ordering of the cubic, the
constancy of Delta1(We, .), simultaneous vanishing at the sonic points, and
the small-(W,S) linearization dW/dx -> -rW.

Integration is carried out in S (not x) so the sonic line is crossed
regularly; x is recovered by quadrature of dx/dS = -Delta/Delta2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

DIM_PHASE = 2  # the phase-plane system always describes the planar core


class PhaseError(Exception):
    """Base class for phase-plane failures."""


class ParamError(PhaseError):
    """Gas/blowup parameters outside the admissible regime."""


class ComplexRootsError(PhaseError):
    """The Delta1 cubic has complex roots: the derivation is inconsistent."""


class NoSonicPointError(PhaseError):
    """The sonic quadratic has no positive real root."""


class ComplexSlopesError(PhaseError):
    """The sonic slope quadratic has negative discriminant."""


class Delta2VanishingError(PhaseError):
    """|Delta2| below threshold away from the sonic points."""


class StepUnderflowError(PhaseError):
    """Adaptive step size collapsed below the hard floor."""


def r_admissible_interval(alpha: float) -> tuple[float, float]:
    """Open interval of admissible blowup speeds r for a given alpha.

    For alpha > 1/2 the interval is (1, (1+2a)/(1+a*sqrt(2))); for
    0 < alpha < 1/2 it is ((1+2a)/(1+a*sqrt(2)), 1 + a/(sqrt(a)+1)^2).
    alpha = 1/2 is a degenerate boundary case and is rejected.
    """
    if alpha <= 0:
        raise ParamError(f"alpha must be positive, got {alpha}")
    corner = (1.0 + 2.0 * alpha) / (1.0 + alpha * math.sqrt(2.0))
    if alpha > 0.5:
        return 1.0, corner
    if alpha < 0.5:
        return corner, 1.0 + alpha / (math.sqrt(alpha) + 1.0) ** 2
    raise ParamError("alpha = 1/2 is a degenerate boundary of the admissible range")


def r_eye(alpha: float) -> float:
    """Upper endpoint of the admissible r interval (the accumulation point)."""
    return r_admissible_interval(alpha)[1]


@dataclass(frozen=True)
class GasParams:
    """Adiabatic and blowup-speed parameters with their algebraic relations.

    gamma : adiabatic exponent (> 1)
    r     : blowup speed, strictly inside the admissible interval
    dim   : spatial dimension of the lifted problem (>= 2); the phase
            system itself always uses the planar core dimension 2.
    """

    gamma: float
    r: float
    dim: int = 3

    def __post_init__(self):
        if self.gamma <= 1.0:
            raise ParamError(f"gamma must exceed 1, got {self.gamma}")
        if self.dim < 2 or int(self.dim) != self.dim:
            raise ParamError(f"dim must be an integer >= 2, got {self.dim}")
        lo, hi = r_admissible_interval(self.alpha)
        if not (lo < self.r < hi):
            raise ParamError(
                f"r={self.r} outside the admissible interval ({lo:.9g}, {hi:.9g}) "
                f"for alpha={self.alpha:.9g}"
            )
        if not (0.0 < self.w_e < 1.0):
            raise ParamError(f"We={self.w_e} outside (0, 1)")

    @property
    def alpha(self) -> float:
        return 0.5 * (self.gamma - 1.0)

    @property
    def ell(self) -> float:
        return 1.0 / self.alpha

    @property
    def w_e(self) -> float:
        return self.ell * (self.r - 1.0) / DIM_PHASE


@dataclass(frozen=True)
class PhasePoint:
    s_coord: float
    w_coord: float

    def __post_init__(self):
        if self.s_coord < 0.0:
            raise ParamError(f"S coordinate must be >= 0, got {self.s_coord}")


@dataclass
class SonicData:
    """Both sonic points on W = 1 - S plus the local slope data at P2."""

    p2: PhasePoint
    p3: PhasePoint
    slopes_p2: tuple[float, float] | None = None
    selected_slope: float | None = None
    degenerate: bool = False


@dataclass
class PhaseCurve:
    """One integrated arc of the (S, W) system with recovered x = log(xi).

    ``s`` is strictly monotone (it is the integration variable) and ``x``
    strictly monotone decreasing in S.  ``status`` is "ok" or
    "barrier-violation" for arcs terminated on leaving the admissible strip.
    """

    s: np.ndarray
    w: np.ndarray
    x: np.ndarray
    branch_tag: str
    params: GasParams
    status: str = "ok"
    _spl_w = None
    _spl_s = None

    def interpolants(self):
        """Cubic-spline interpolants (W(x), S(x)) on the stored samples."""
        if self._spl_w is None:
            from scipy.interpolate import CubicSpline

            order = np.argsort(self.x)
            xs = self.x[order]
            self._spl_w = CubicSpline(xs, self.w[order])
            self._spl_s = CubicSpline(xs, self.s[order])
        return self._spl_w, self._spl_s


class PhasePolys:
    """Closed-form evaluators for Delta, Delta1, Delta2 and their partials.

    All methods are vectorized over numpy arrays and pure.
    """

    def __init__(self, p: GasParams):
        self.p = p
        self.d = DIM_PHASE
        self.alpha = p.alpha
        self.r = p.r
        self.w_e = p.w_e

    def delta(self, w, s):
        return (1.0 - w) ** 2 - np.asarray(s) ** 2

    def delta1(self, w, s):
        w = np.asarray(w, dtype=float)
        s = np.asarray(s, dtype=float)
        return w * (1.0 - w) * (self.r - w) - self.d * s**2 * (w - self.w_e)

    def _q2(self, w, s):
        # Delta2 = S * q2(W, S)
        w = np.asarray(w, dtype=float)
        s = np.asarray(s, dtype=float)
        return (
            (1.0 - w) ** 2
            - s**2
            + (self.r - 1.0) * ((1.0 - w) + self.alpha * w)
            - self.alpha * (self.d - 1.0) * w * (1.0 - w)
        )

    def delta2(self, w, s):
        return np.asarray(s, dtype=float) * self._q2(w, s)

    # -- first partials (used for the sonic slope quadratic and L'Hopital) --

    def d_delta(self, w, s):
        return -2.0 * (1.0 - np.asarray(w)), -2.0 * np.asarray(s)

    def d_delta1(self, w, s):
        w = np.asarray(w, dtype=float)
        s = np.asarray(s, dtype=float)
        dw = (
            (1.0 - w) * (self.r - w)
            - w * (self.r - w)
            - w * (1.0 - w)
            - self.d * s**2
        )
        ds = -2.0 * self.d * s * (w - self.w_e)
        return dw, ds

    def d_delta2(self, w, s):
        w = np.asarray(w, dtype=float)
        s = np.asarray(s, dtype=float)
        dq_dw = (
            -2.0 * (1.0 - w)
            + (self.r - 1.0) * (self.alpha - 1.0)
            - self.alpha * (self.d - 1.0) * (1.0 - 2.0 * w)
        )
        dw = s * dq_dw
        ds = self._q2(w, s) - 2.0 * s**2
        return dw, ds

    def sonic_quadratic(self) -> tuple[float, float, float]:
        """Coefficients (1, b, c) of the sonic quadratic in S on W = 1 - S.

        Substituting W = 1 - S into Delta1 = 0 and dividing by S yields
        S^2 + (ell*(r-1) - r)*S + (r-1) = 0 for d = 2; Delta2/S reduces to
        the same quadratic on the sonic line, which is why all three
        polynomials vanish simultaneously there.
        """
        b = self.p.ell * (self.r - 1.0) - self.r
        c = self.r - 1.0
        return 1.0, b, c


def derive_phase_polynomials(p: GasParams) -> PhasePolys:
    """Return the closed-form evaluators for (Delta, Delta1, Delta2)."""
    return PhasePolys(p)


def eval_delta(point: PhasePoint, p: GasParams) -> tuple[float, float, float]:
    """Evaluate (Delta, Delta1, Delta2) at a phase point."""
    polys = PhasePolys(p)
    w, s = point.w_coord, point.s_coord
    return (
        float(polys.delta(w, s)),
        float(polys.delta1(w, s)),
        float(polys.delta2(w, s)),
    )


def _cubic_coeffs_in_w(polys: PhasePolys, s_val: float) -> np.ndarray:
    """Coefficients of Delta1(., s_val) in descending powers of W."""
    r, d, we = polys.r, polys.d, polys.w_e
    s2 = s_val**2
    # W(1-W)(r-W) = W^3 - (1+r) W^2 + r W ;  -d S^2 (W - We)
    return np.array([1.0, -(1.0 + r), r - d * s2, d * s2 * we])


def roots_in_w(s_val: float, p: GasParams):
    """Real roots of the Delta1 cubic and of Delta2/S at fixed S.

    Returns ((W1, W2, W3), (W2minus, W2plus)) with each group sorted
    ascending.  Raises ComplexRootsError when the cubic discriminant is
    negative (a genuinely inconsistent derivation; never silently
    projected).  The Delta2 quadratic legitimately loses its real roots at
    small S; that pair is then returned as (nan, nan).
    """
    if s_val <= 0.0:
        raise ParamError(f"roots_in_w requires S > 0, got {s_val}")
    polys = PhasePolys(p)
    a, b, c, dd = _cubic_coeffs_in_w(polys, s_val)
    disc = (
        18.0 * a * b * c * dd
        - 4.0 * b**3 * dd
        + b**2 * c**2
        - 4.0 * a * c**3
        - 27.0 * a**2 * dd**2
    )
    scale = max(abs(b), abs(c), abs(dd), 1.0)
    if disc < -1e-12 * scale**4:
        raise ComplexRootsError(
            f"Delta1 cubic has complex roots at S={s_val} (disc={disc:.3e})"
        )
    cubic = np.sort(np.roots([a, b, c, dd]).real)

    # Delta2 / S = q2(W, S): quadratic in W, coefficients by evaluation
    q0 = float(polys._q2(0.0, s_val))
    q1 = float(polys._q2(1.0, s_val))
    qm1 = float(polys._q2(-1.0, s_val))
    a2 = 0.5 * (q1 + qm1) - q0
    b2 = 0.5 * (q1 - qm1)
    c2 = q0
    disc2 = b2**2 - 4.0 * a2 * c2
    if disc2 < 0.0:
        quad = (math.nan, math.nan)
    else:
        sq = math.sqrt(disc2)
        pair = sorted(((-b2 - sq) / (2 * a2), (-b2 + sq) / (2 * a2)))
        quad = (pair[0], pair[1])
    return (cubic[0], cubic[1], cubic[2]), quad


def sonic_points(p: GasParams, tol: float = 1e-10) -> SonicData:
    """Locate the sonic points P2, P3 on the line W = 1 - S.

    Both points solve the quadratic obtained by substituting W = 1 - S into
    Delta1 = 0 and dividing by S.  Verifies that Delta2 vanishes there as
    well (all three polynomials to within ``tol``).  P3_S <= P2_S.
    """
    polys = PhasePolys(p)
    _, b, c = polys.sonic_quadratic()
    disc = b * b - 4.0 * c
    if disc < 0.0:
        raise NoSonicPointError(
            f"sonic quadratic S^2 + {b:.6g} S + {c:.6g} has no real root "
            f"(r={p.r} outside the admissible regime)"
        )
    sq = math.sqrt(disc)
    s_hi = 0.5 * (-b + sq)
    s_lo = 0.5 * (-b - sq)
    if s_hi <= 0.0:
        raise NoSonicPointError("sonic quadratic has no positive real root")
    degenerate = disc == 0.0
    p2 = PhasePoint(s_coord=s_hi, w_coord=1.0 - s_hi)
    p3 = PhasePoint(s_coord=max(s_lo, 0.0), w_coord=1.0 - max(s_lo, 0.0))
    for pt in (p2, p3):
        vals = eval_delta(pt, p)
        if max(abs(v) for v in vals) > tol:
            raise PhaseError(
                f"sonic point ({pt.s_coord}, {pt.w_coord}) fails the triple "
                f"vanishing check: {vals}"
            )
    return SonicData(p2=p2, p3=p3, degenerate=degenerate)


def slope_quadratic_coeffs(sd: SonicData, p: GasParams) -> tuple[float, float, float]:
    """Coefficients (A, B, C) of the slope quadratic A m^2 + B m + C = 0 at P2.

    Writing W - W(P2) = m (S - S(P2)) and expanding numerator and
    denominator of dW/dS = Delta1/Delta2 to first order gives
    A = dDelta2/dW, B = dDelta2/dS - dDelta1/dW, C = -dDelta1/dS.
    """
    polys = PhasePolys(p)
    w, s = sd.p2.w_coord, sd.p2.s_coord
    d1w, d1s = polys.d_delta1(w, s)
    d2w, d2s = polys.d_delta2(w, s)
    return float(d2w), float(d2s - d1w), float(-d1s)


def slope_branches_at_sonic(sd: SonicData, p: GasParams) -> tuple[float, float]:
    """The two candidate dW/dS branches at P2, sorted ascending.

    The branch quadratic's sum/product are stored on ``sd`` implicitly via
    the returned pair; ties between branches are broken downstream by the
    shooting score, never here.
    """
    a, b, c = slope_quadratic_coeffs(sd, p)
    disc = b * b - 4.0 * a * c
    if sd.degenerate:
        m = -b / (2.0 * a)
        sd.slopes_p2 = (m, m)
        return (m, m)
    if disc < 0.0:
        raise ComplexSlopesError(
            f"slope quadratic has negative discriminant {disc:.3e} "
            f"(r={p.r} outside the smooth-passage regime)"
        )
    sq = math.sqrt(disc)
    pair = tuple(sorted(((-b - sq) / (2 * a), (-b + sq) / (2 * a))))
    sd.slopes_p2 = pair
    return pair


def branch_rate(sd: SonicData, p: GasParams, slope: float) -> float:
    """Node eigenvalue of the (Delta1, Delta2) flow for a slope branch.

    Eigenvector (m, 1) gives lambda = dDelta2/dW * m + dDelta2/dS; the
    branch with the smaller |lambda| is the slow direction, along which
    the profile passes through the sonic point.
    """
    polys = PhasePolys(p)
    d2w, d2s = polys.d_delta2(sd.p2.w_coord, sd.p2.s_coord)
    return float(d2w) * slope + float(d2s)


def slow_branch_slope(p: GasParams, sd: SonicData | None = None) -> float:
    """The slow-eigendirection slope at P2 (the C1 profile passage)."""
    if sd is None:
        sd = sonic_points(p)
    if sd.slopes_p2 is None:
        slope_branches_at_sonic(sd, p)
    return min(sd.slopes_p2, key=lambda m: abs(branch_rate(sd, p, m)))


def sonic_limit_derivatives(sd: SonicData, p: GasParams, slope: float):
    """L'Hopital limits of (dW/dx, dS/dx) at P2 along the given branch."""
    polys = PhasePolys(p)
    w, s = sd.p2.w_coord, sd.p2.s_coord
    dw_, ds_ = polys.d_delta(w, s)
    d1w, d1s = polys.d_delta1(w, s)
    d2w, d2s = polys.d_delta2(w, s)
    den = dw_ * slope + ds_
    return (-(d1w * slope + d1s) / den, -(d2w * slope + d2s) / den)


def _strip_event(polys: PhasePolys, p2_s: float):
    """Terminal event: W leaves the open strip (W2^-(S), W2(S)) for S > P2_S.

    On the relevant domain the strip condition is equivalent to the sign
    pair Delta1 > 0, Delta2 < 0 (crossing W2 flips Delta1, crossing W2^-
    flips Delta2), which is far better conditioned than comparing W against
    numerically extracted roots: near the far field the curve and W2(S)
    both approach We with an O(1/S^2) gap while Delta1 stays O(1).
    """

    def event(s, y):
        if s <= p2_s:
            return 1.0
        w = y[0]
        d1 = float(polys.delta1(w, s))
        d2 = float(polys.delta2(w, s))
        return min(d1, -d2 / (1.0 + s**3))

    event.terminal = True
    event.direction = -1
    return event


def _wall_event(polys: PhasePolys, p2_s: float, floor: float = 1e-9):
    """Terminal event: trajectory falls onto the Delta2 = 0 wall (W2^-).

    Crossing the wall makes dW/dS singular; terminating on a small
    normalized |Delta2| records the violation before the step collapses.
    """

    def event(s, y):
        if s <= p2_s:
            return 1.0
        d2 = float(polys.delta2(y[0], s))
        return -d2 / (1.0 + s**3) - floor

    event.terminal = True
    event.direction = -1
    return event


def integrate_phase(
    p: GasParams,
    start: PhasePoint,
    slope: float,
    s_target: float,
    tol: float = 1e-10,
    atol: float = 1e-12,
    x_stop: float | None = None,
    launch_offset: float = 1e-6,
    max_samples: int = 6000,
) -> PhaseCurve:
    """Integrate the phase system in S from a sonic point (or regular point).

    dW/dS = Delta1/Delta2 removes the Delta singularity; x is recovered by
    quadrature of dx/dS = -Delta/Delta2.  Launch off a sonic point uses the
    selected slope branch at ``launch_offset`` in S.  The arc terminates
    early with status "barrier-violation" if W leaves the open strip
    (W2^-(S), W2(S)) for S > P2_S, or at x = ``x_stop`` when given.
    """
    polys = PhasePolys(p)
    sd = None
    try:
        sd = sonic_points(p)
    except NoSonicPointError:
        pass
    p2_s = sd.p2.s_coord if sd is not None else math.inf

    on_sonic = abs(start.w_coord - (1.0 - start.s_coord)) < 1e-9 and (
        sd is not None
        and (
            abs(start.s_coord - sd.p2.s_coord) < 1e-9
            or abs(start.s_coord - sd.p3.s_coord) < 1e-9
        )
    )
    going_up = s_target > start.s_coord
    if on_sonic:
        ds0 = launch_offset if going_up else -launch_offset
        s0 = start.s_coord + ds0
        w0 = start.w_coord + slope * ds0
        # anchor x = 0 at the sonic point itself; first-order correction
        _, dsdx_lim = sonic_limit_derivatives(sd, p, slope)
        x0 = ds0 / dsdx_lim
    else:
        d2 = float(polys.delta2(start.w_coord, start.s_coord))
        dd = float(polys.delta(start.w_coord, start.s_coord))
        if abs(d2) < 1e-12 or abs(dd) < 1e-12:
            raise Delta2VanishingError(
                "start point lies on a degenerate line away from P2/P3"
            )
        s0, w0, x0 = start.s_coord, start.w_coord, 0.0

    sonic_eps = 10.0 * launch_offset

    def near_sonic(s, w):
        if sd is None:
            return False
        for pt in (sd.p2, sd.p3):
            if abs(s - pt.s_coord) < sonic_eps and abs(w - pt.w_coord) < sonic_eps:
                return True
        return False

    def rhs(s, y):
        w = y[0]
        d2 = float(polys.delta2(w, s))
        if abs(d2) < 1e-12:
            if not near_sonic(s, w):
                raise Delta2VanishingError(
                    f"|Delta2| < 1e-12 at (S={s:.6g}, W={w:.6g}) away from sonic points"
                )
            dwdx, dsdx = sonic_limit_derivatives(sd, p, slope)
            return [dwdx / dsdx, 1.0 / dsdx]
        d1 = float(polys.delta1(w, s))
        dd = float(polys.delta(w, s))
        return [d1 / d2, -dd / d2]

    events = [_strip_event(polys, p2_s), _wall_event(polys, p2_s)]
    if x_stop is not None:

        def x_event(s, y):
            return y[1] - x_stop

        x_event.terminal = True
        events.append(x_event)

    sol = solve_ivp(
        rhs,
        (s0, s_target),
        [w0, x0],
        method="DOP853",
        rtol=tol,
        atol=atol,
        events=events,
        dense_output=True,
    )
    if sol.status == -1:
        if "step size" in (sol.message or "").lower():
            raise StepUnderflowError(sol.message)
        raise PhaseError(f"phase integration failed: {sol.message}")

    status = "ok"
    if sol.status == 1 and (sol.t_events[0].size > 0 or sol.t_events[1].size > 0):
        status = "barrier-violation"

    s_end = sol.t[-1]
    # dense resample, log-spaced in S, plus the solver's own points and a
    # cluster graded toward the sonic point (the x-spacing of log-uniform
    # samples is otherwise too coarse there for downstream interpolation)
    lo, hi = min(s0, s_end), max(s0, s_end)
    n_dense = min(max_samples, max(800, 4 * sol.t.size))
    dense = np.geomspace(max(lo, 1e-300), hi, n_dense) if lo > 0 else np.linspace(lo, hi, n_dense)
    parts = [sol.t, dense]
    if on_sonic:
        reach = min(0.3 * start.s_coord, hi - lo)
        if reach > launch_offset:
            cluster = np.geomspace(launch_offset, reach, 500)
            parts.append(start.s_coord + cluster if going_up else start.s_coord - cluster)
    s_all = np.unique(np.concatenate(parts))
    s_all = s_all[(s_all >= lo) & (s_all <= hi)]
    vals = sol.sol(s_all)  # s_all ascending
    w_all, x_all = vals[0], vals[1]

    # attach the exact sonic point with x = 0 (the anchor of the arc)
    if on_sonic:
        if going_up:
            s_all = np.concatenate([[start.s_coord], s_all])
            w_all = np.concatenate([[start.w_coord], w_all])
            x_all = np.concatenate([[0.0], x_all])
        else:
            s_all = np.concatenate([s_all, [start.s_coord]])
            w_all = np.concatenate([w_all, [start.w_coord]])
            x_all = np.concatenate([x_all, [0.0]])

    branch = "inner" if going_up else "outer"
    return PhaseCurve(
        s=np.asarray(s_all, dtype=float),
        w=np.asarray(w_all, dtype=float),
        x=np.asarray(x_all, dtype=float),
        branch_tag=f"{branch}:slope={slope:.12g}",
        params=p,
        status=status,
    )


def far_field_coefficient(p: GasParams) -> float:
    """Coefficient c2 of the far-field expansion W(S) = We + c2/S^2 + O(S^-4)."""
    we = p.w_e
    return we * (we - 1.0) * (we - p.r) / (DIM_PHASE + 2.0)


def inner_arc_from_far(
    p: GasParams,
    sd: SonicData | None = None,
    s_far: float = 1e6,
    tol: float = 1e-10,
    atol: float = 1e-12,
    arrival_offset: float = 1e-6,
    max_samples: int = 6000,
) -> PhaseCurve:
    """Integrate the inner arc (S -> infinity side) from the far field to P2.

    The sonic point is a stable node of the desingularized flow whose slow
    eigendirection is the profile branch; launching *off* the node along it
    is exponentially ill-posed (the fast mode grows like exp(1.7 tau)), so
    the arc is computed in the attracting direction instead: launch on the
    asymptote W = We + c2/S^2 at ``s_far`` and integrate S downward into
    the node, stopping at ``arrival_offset`` above P2_S.  x is anchored to
    0 at the sonic point via the L'Hopital limit of dx/dS along the slow
    branch.  Barrier and wall events mark bad parameters.
    """
    polys = PhasePolys(p)
    if sd is None:
        sd = sonic_points(p)
    p2_s = sd.p2.s_coord
    if s_far < 100.0 * p2_s:
        raise ParamError(f"s_far={s_far} must exceed 100 * P2_S for the asymptote launch")
    w_far = p.w_e + far_field_coefficient(p) / s_far**2

    def rhs(s, y):
        w = y[0]
        d2 = float(polys.delta2(w, s))
        if abs(d2) < 1e-300:
            raise Delta2VanishingError(f"Delta2 vanished at (S={s}, W={w})")
        d1 = float(polys.delta1(w, s))
        dd = float(polys.delta(w, s))
        return [d1 / d2, -dd / d2]

    events = [_strip_event(polys, p2_s), _wall_event(polys, p2_s)]
    sol = solve_ivp(
        rhs,
        (s_far, p2_s + arrival_offset),
        [w_far, 0.0],
        method="DOP853",
        rtol=tol,
        atol=atol,
        events=events,
        dense_output=True,
    )
    if sol.status == -1:
        if "step size" in (sol.message or "").lower():
            raise StepUnderflowError(sol.message)
        raise PhaseError(f"inner arc integration failed: {sol.message}")
    status = "ok"
    if sol.status == 1:
        status = "barrier-violation"

    s_end = sol.t[-1]
    lo, hi = s_end, s_far
    n_dense = min(max_samples, max(1200, 4 * sol.t.size))
    dense = np.geomspace(lo, hi, n_dense)
    cluster = p2_s + np.geomspace(arrival_offset, min(0.3 * p2_s, hi - p2_s), 500)
    s_all = np.unique(np.concatenate([sol.t, dense, cluster]))
    s_all = s_all[(s_all >= lo) & (s_all <= hi)]
    vals = sol.sol(s_all)
    w_all, x_all = vals[0], vals[1]

    # arrival tangent identifies the realized slope branch
    tangent = (sol.y[0][-1] - sd.p2.w_coord) / (sol.t[-1] - p2_s)

    if status == "ok":
        # shift x so that x = 0 exactly at the sonic point
        _, dsdx_lim = sonic_limit_derivatives(sd, p, tangent)
        x_anchor = (s_end - p2_s) / dsdx_lim
        x_at_end = sol.y[1][-1]
        x_all = x_all - x_at_end + x_anchor
        s_all = np.concatenate([[p2_s], s_all])
        w_all = np.concatenate([[sd.p2.w_coord], w_all])
        x_all = np.concatenate([[0.0], x_all])

    return PhaseCurve(
        s=np.asarray(s_all, dtype=float),
        w=np.asarray(w_all, dtype=float),
        x=np.asarray(x_all, dtype=float),
        branch_tag=f"inner:slope={tangent:.12g}",
        params=p,
        status=status,
    )


def outer_arc_from_far(
    p: GasParams,
    c_origin: float,
    s_launch: float,
    sd: SonicData | None = None,
    tol: float = 1e-10,
    atol: float = 1e-12,
    arrival_offset: float = 1e-6,
    max_samples: int = 6000,
    arrival_tol: float = 0.05,
) -> PhaseCurve:
    """Integrate the outer arc from the phase-plane origin side into P2.

    Both the sonic point and the origin are attracting for the respective
    integration directions, so the outer arc is computed S-ascending from
    the origin asymptote W = c S + (2 We / r) S^2 at ``s_launch``.  All
    arcs in P2's basin collapse onto the slow branch at a super-algebraic
    rate (delta^(lam2/lam1)), so any basin ``c_origin`` yields the same
    near-sonic arc to machine precision: the choice only sets the far-field
    amplitude.  Raises if the arrival misses P2 by more than
    ``arrival_tol`` (c_origin outside the basin).
    """
    polys = PhasePolys(p)
    if sd is None:
        sd = sonic_points(p)
    p2_s = sd.p2.s_coord
    if not (0.0 < s_launch < 0.5 * p2_s):
        raise ParamError(f"s_launch={s_launch} must lie in (0, P2_S/2)")
    w0 = c_origin * s_launch + (2.0 * p.w_e / p.r) * s_launch**2

    def rhs(s, y):
        w = y[0]
        d2 = float(polys.delta2(w, s))
        if abs(d2) < 1e-300:
            raise Delta2VanishingError(f"Delta2 vanished at (S={s}, W={w})")
        d1 = float(polys.delta1(w, s))
        dd = float(polys.delta(w, s))
        return [d1 / d2, -dd / d2]

    def sonic_line_event(s, y):
        # crossing Delta = 0 away from P2 means the basin was missed
        return (1.0 - y[0]) - s

    sonic_line_event.terminal = True
    sonic_line_event.direction = -1

    sol = solve_ivp(
        rhs,
        (s_launch, p2_s - arrival_offset),
        [w0, 0.0],
        method="DOP853",
        rtol=tol,
        atol=atol,
        events=[sonic_line_event],
        dense_output=True,
    )
    if sol.status == -1:
        if "step size" in (sol.message or "").lower():
            raise StepUnderflowError(sol.message)
        raise PhaseError(f"outer arc integration failed: {sol.message}")
    if sol.status == 1:
        raise PhaseError(
            f"outer arc crossed the sonic line at S={sol.t_events[0][0]:.6g} "
            f"before reaching P2 (c_origin={c_origin} outside the basin)"
        )
    tangent = (sol.y[0][-1] - sd.p2.w_coord) / (sol.t[-1] - p2_s)
    slow_expected = slow_branch_slope(p, sd)
    if abs(tangent - slow_expected) > arrival_tol * max(1.0, abs(slow_expected)):
        raise PhaseError(
            f"outer arc arrived with tangent {tangent:.6g}, not the slow branch "
            f"{slow_expected:.6g} (c_origin={c_origin} on the wrong side of the "
            f"fast separatrix)"
        )

    s_end = sol.t[-1]
    lo, hi = s_launch, s_end
    n_dense = min(max_samples, max(1200, 4 * sol.t.size))
    dense = np.geomspace(lo, hi, n_dense)
    cluster = p2_s - np.geomspace(arrival_offset, min(0.3 * p2_s, p2_s - lo), 500)
    s_all = np.unique(np.concatenate([sol.t, dense, cluster]))
    s_all = s_all[(s_all >= lo) & (s_all <= hi)]
    vals = sol.sol(s_all)
    w_all, x_all = vals[0], vals[1]

    # anchor x = 0 at the sonic point via the L'Hopital limit on arrival
    _, dsdx_lim = sonic_limit_derivatives(sd, p, tangent)
    x_anchor = (s_end - p2_s) / dsdx_lim
    x_all = x_all - sol.y[1][-1] + x_anchor
    s_all = np.concatenate([s_all, [p2_s]])
    w_all = np.concatenate([w_all, [sd.p2.w_coord]])
    x_all = np.concatenate([x_all, [0.0]])

    return PhaseCurve(
        s=np.asarray(s_all, dtype=float),
        w=np.asarray(w_all, dtype=float),
        x=np.asarray(x_all, dtype=float),
        branch_tag=f"outer:slope={tangent:.12g}",
        params=p,
        status="ok",
    )
