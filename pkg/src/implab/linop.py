"""Discretized linearized operators, coercivity checks, norm equivalence.

Fields are radially symmetric triples (U^R, A, Sigma): the radial velocity
component and the swirl component are odd in xi, the sound-speed
perturbation even.  The linearized rows in this symmetry class are

    L_U = -(r-1) U - (xi+Ub) U'  - U Ub'  - a (S Sb' + Sb S')
    L_A = -(r-1) A - (xi+Ub) A'  - (Ub/xi) A
    L_S = -(r-1) S - (xi+Ub) S'  - U Sb' - a S (Ub' + Ub/xi)
                                          - a Sb (U' + U/xi)

(primes are d/dxi, bars the profile).  The swirl row decouples, and the
profile's scaling-family generator (xi Ub' - Ub, xi Sb' - Sb) is an exact
zero mode - both are used as structural tests.

Discretization: 5-point Fornberg stencils (4th order) with parity
reflection through xi = 0 and one-sided interior-biased closures at
xi_max, consistent with outgoing transport there.  Quadrature is the
trapezoid rule with measure xi dxi.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grids import fornberg_weights, trapezoid_weights
from .profile import Profile
from .weights import DerivedWeights, Weight


def derivative_matrix_sparse(xi: np.ndarray, order: int, parity: int,
                             acc_width: int = 5) -> sp.csr_matrix:
    """Sparse differentiation matrix with parity closure at xi = 0."""
    xi = np.asarray(xi, dtype=float)
    n = xi.size
    half = acc_width // 2
    rows, cols, vals = [], [], []
    has_origin = xi[0] == 0.0
    for i in range(n):
        if has_origin and 0 < i < half:
            n_ghost = half - i
            mirror = np.arange(1, n_ghost + 1)
            nodes = np.concatenate([-xi[mirror][::-1], xi[: i + half + 1]])
            w = fornberg_weights(xi[i], nodes, order)
            sign = 1.0 if parity == 1 else -1.0
            for k, jm in enumerate(mirror[::-1]):
                rows.append(i); cols.append(jm); vals.append(sign * w[k])
            for k in range(i + half + 1):
                rows.append(i); cols.append(k); vals.append(w[n_ghost + k])
            continue
        lo = max(0, i - half)
        hi = min(n, lo + acc_width)
        lo = max(0, hi - acc_width)
        w = fornberg_weights(xi[i], xi[lo:hi], order)
        for k, j in enumerate(range(lo, hi)):
            rows.append(i); cols.append(j); vals.append(w[k])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@dataclass
class LinearizedSystem:
    xi: np.ndarray
    prof: Profile
    d1_odd: sp.csr_matrix
    d1_even: sp.csr_matrix
    d2_odd: sp.csr_matrix
    d2_even: sp.csr_matrix
    quad: np.ndarray
    boundary_closure: str = "parity at 0, one-sided upwind at xi_max"

    def _div_radial(self, u: np.ndarray) -> np.ndarray:
        """U' + U/xi for an odd field, with the origin limit 2 U'(0)."""
        du = self.d1_odd @ u
        out = np.empty_like(u)
        pos = self.xi > 0
        out[pos] = du[pos] + u[pos] / self.xi[pos]
        out[~pos] = 2.0 * du[~pos]
        return out

    def _over_xi(self, f: np.ndarray, dmat) -> np.ndarray:
        """f/xi with the L'Hopital origin value from the supplied D1."""
        out = np.empty_like(f)
        pos = self.xi > 0
        out[pos] = f[pos] / self.xi[pos]
        out[~pos] = (dmat @ f)[~pos]
        return out

    def apply(self, u_r: np.ndarray, a_swirl: np.ndarray, sig: np.ndarray):
        """(L_U, L_A, L_S) on a radially symmetric (U^R, A, Sigma) triple."""
        pr = self.prof
        p = pr.params
        r, al = p.r, p.alpha
        transport = pr.xi + pr.u
        du = self.d1_odd @ u_r
        da = self.d1_odd @ a_swirl
        ds = self.d1_even @ sig
        lu = (
            -(r - 1.0) * u_r
            - transport * du
            - u_r * pr.du
            - al * (sig * pr.dsigma + pr.sigma * ds)
        )
        la = -(r - 1.0) * a_swirl - transport * da - pr.u_over_xi * a_swirl
        ls = (
            -(r - 1.0) * sig
            - transport * ds
            - u_r * pr.dsigma
            - al * sig * (pr.du + pr.u_over_xi)
            - al * pr.sigma * self._div_radial(u_r)
        )
        return lu, la, ls

    def laplacian_scalar(self, f: np.ndarray) -> np.ndarray:
        """2D radial Laplacian f'' + f'/xi (even fields)."""
        d2 = self.d2_even @ f
        d1 = self.d1_even @ f
        out = np.empty_like(f)
        pos = self.xi > 0
        out[pos] = d2[pos] + d1[pos] / self.xi[pos]
        out[~pos] = 2.0 * d2[~pos]
        return out

    def laplacian_vector(self, f: np.ndarray) -> np.ndarray:
        """Vector Laplacian f'' + f'/xi - f/xi^2 of F(xi) e (odd fields)."""
        d2 = self.d2_odd @ f
        d1 = self.d1_odd @ f
        out = np.empty_like(f)
        pos = self.xi > 0
        out[pos] = d2[pos] + (d1[pos] - f[pos] / self.xi[pos]) / self.xi[pos]
        out[~pos] = 0.0
        return out


def assemble_linearized(prof: Profile, grid: np.ndarray | None = None) -> LinearizedSystem:
    if grid is not None:
        grid = np.asarray(grid, dtype=float)
        if prof.xi.shape != grid.shape or not np.array_equal(prof.xi, grid):
            if prof.source is None:
                raise ValueError("profile grid differs from requested grid and "
                                 "no evaluator is attached")
            prof = prof.resample(grid)
    xi = prof.xi
    return LinearizedSystem(
        xi=xi,
        prof=prof,
        d1_odd=derivative_matrix_sparse(xi, 1, -1),
        d1_even=derivative_matrix_sparse(xi, 1, +1),
        d2_odd=derivative_matrix_sparse(xi, 2, -1),
        d2_even=derivative_matrix_sparse(xi, 2, +1),
        quad=trapezoid_weights(xi),
    )


def scaling_direction(prof: Profile):
    """Generator of the profile's scaling family: an exact zero mode of L."""
    return prof.xi * prof.du - prof.u, prof.xi * prof.dsigma - prof.sigma


def weighted_inner_product(
    f,
    g,
    dw: DerivedWeights,
    m: int = 0,
    eps_m: float = 1e-2,
    sys: LinearizedSystem | None = None,
    kinds: tuple = ("vector", "vector", "scalar"),
) -> float:
    """Weighted inner product of field triples (U^R, A, Sigma).

    m = 0:  integral of f.g vp_g (xi dxi);
    m = 1:  adds eps_m * Lap f . Lap g * phi_2^2 vp_g with the radial
    scalar/vector Laplacian per component.  ``f`` and ``g`` are tuples of
    arrays (or single arrays, treated as ("scalar",)).
    """
    if isinstance(f, np.ndarray):
        f = (f,)
        g = (g,)
        kinds = ("scalar",)
    if m not in (0, 1):
        raise ValueError("only m in {0, 1} is implemented")
    quad = sys.quad if sys is not None else trapezoid_weights(dw.xi)
    total = 0.0
    for fc, gc in zip(f, g):
        total += float(np.sum(quad * fc * gc * dw.vp_g))
    if m == 1:
        if sys is None:
            raise ValueError("m=1 products need the assembled system (Laplacians)")
        phi2sq = dw.vp_m[2] ** 2
        for fc, gc, kind in zip(f, g, kinds):
            lap = sys.laplacian_vector if kind == "vector" else sys.laplacian_scalar
            total += eps_m * float(np.sum(quad * lap(fc) * lap(gc) * phi2sq * dw.vp_g))
    return total


# ---------------------------------------------------------------------------
# randomized bump ensembles


def _bump(t):
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
    return out


def bump_params(rng: np.random.Generator, support: tuple[float, float], n_max: int = 4):
    lo, hi = support
    n_b = int(rng.integers(2, n_max + 1))
    return [
        (
            float(rng.uniform(-1.0, 1.0)),                     # amplitude
            float(rng.uniform(lo, hi)),                        # center
            float(rng.uniform(0.08, 0.35) * (hi - lo)),        # width
        )
        for _ in range(n_b)
    ]


def bump_field(xi: np.ndarray, params, support: tuple[float, float]) -> np.ndarray:
    lo, hi = support
    out = np.zeros_like(xi)
    for amp, c, w in params:
        wl = min(w, c - lo, hi - c)
        if wl <= 0:
            continue
        out += amp * _bump((xi - c) / wl)
    return out


@dataclass
class QuadraticFormReport:
    mode: str
    records: list
    c_bar_fit: float | None = None
    lambda_a: float | None = None
    outer_margin: float | None = None

    @property
    def passed(self) -> bool:
        if self.mode == "swirl":
            return self.lambda_a is not None and self.lambda_a > 0.0
        if self.mode == "L2-outer":
            return self.outer_margin is not None and self.outer_margin <= 0.0
        return self.c_bar_fit is not None and np.isfinite(self.c_bar_fit)


def coercivity_margin(
    sys: LinearizedSystem,
    w: Weight,
    dw: DerivedWeights,
    mode: str = "L2",
    samples: int = 64,
    seed: int = 7,
    support: tuple[float, float] | None = None,
    outer_radius: float | None = None,
) -> QuadraticFormReport:
    """Randomized quadratic-form checks of the coercive estimates.

    mode "L2": for sampled triples V = (U^R, A, Sigma), computes
    T = <L V, V>_{vp_g}, N = |V|^2_{vp_g} and M = int <xi>^-k2 |V|^2 vp_g
    with k2 = min(2, r) = r, and reports the smallest constant Cbar with
    T <= (-(r-1)) N + Cbar M across all samples.

    mode "swirl": Rayleigh quotients of the decoupled swirl operator in the
    vp_A-weighted product; reports lambda_A = -max quotient (positive means
    uniform decay).

    mode "L2-outer": samples supported in xi >= outer_radius must achieve
    T <= -(r-1)/2 N; reports the worst T + (r-1)/2 N.
    """
    p = sys.prof.params
    r = p.r
    kappa2 = min(2.0, r)
    rng = np.random.default_rng(seed)
    xi = sys.xi
    quad = sys.quad
    if support is None:
        hi = min(0.6 * float(xi.max()), 40.0)
        support = (0.05 * hi, hi)
    if mode == "L2-outer":
        if outer_radius is None:
            raise ValueError("L2-outer mode needs outer_radius")
        support = (outer_radius, max(outer_radius * 2.0, outer_radius + 10.0))
        if support[1] > xi.max():
            raise ValueError("outer support exceeds the grid")
    bracket_pow = (1.0 + xi**2) ** (-kappa2 / 2.0)

    records = []
    for _ in range(samples):
        if mode == "swirl":
            a_par = bump_params(rng, support)
            a_f = bump_field(xi, a_par, support)
            norm = float(np.sum(quad * a_f**2 * dw.vp_a))
            if norm < 1e-14:
                raise ValueError("sample degeneracy: swirl norm below 1e-14")
            _, la, _ = sys.apply(np.zeros_like(a_f), a_f, np.zeros_like(a_f))
            form = float(np.sum(quad * la * a_f * dw.vp_a))
            records.append({"form": form, "norm2": norm, "quotient": form / norm})
        else:
            u_f = bump_field(xi, bump_params(rng, support), support)
            a_f = bump_field(xi, bump_params(rng, support), support)
            s_f = bump_field(xi, bump_params(rng, support), support)
            dens = u_f**2 + a_f**2 + s_f**2
            n2 = float(np.sum(quad * dens * dw.vp_g))
            if n2 < 1e-14:
                raise ValueError("sample degeneracy: norm below 1e-14")
            lu, la, ls = sys.apply(u_f, a_f, s_f)
            form = float(np.sum(quad * (lu * u_f + la * a_f + ls * s_f) * dw.vp_g))
            m_int = float(np.sum(quad * dens * bracket_pow * dw.vp_g))
            records.append({"form": form, "norm2": n2, "m_int": m_int,
                            "c_bar": (form + (r - 1.0) * n2) / m_int})

    report = QuadraticFormReport(mode=mode, records=records)
    if mode == "swirl":
        report.lambda_a = -max(rec["quotient"] for rec in records)
    elif mode == "L2-outer":
        report.outer_margin = max(
            rec["form"] + 0.5 * (r - 1.0) * rec["norm2"] for rec in records
        )
    else:
        report.c_bar_fit = max(rec["c_bar"] for rec in records)
    return report


def transport_ibp_defect(sys: LinearizedSystem, dw: DerivedWeights,
                         field: np.ndarray, kind: str = "scalar") -> float:
    """Discrete integration-by-parts defect of the transport term.

    For compactly supported f, int -(xi+Ub) f' f vp_g xi dxi equals
    (1/2) int f^2 d/dxi[(xi+Ub) vp_g xi] dxi up to quadrature error; the
    returned defect is the difference normalized by the field's norm.
    """
    pr = sys.prof
    xi = sys.xi
    d1 = sys.d1_odd if kind == "vector" else sys.d1_even
    transport = xi + pr.u
    lhs = float(np.sum(sys.quad * (-transport * (d1 @ field)) * field * dw.vp_g))
    coeff = transport * dw.vp_g * xi
    dcoeff = derivative_matrix_sparse(xi, 1, +1) @ coeff
    w_flat = np.zeros_like(xi)
    d = np.diff(xi)
    w_flat[:-1] += 0.5 * d
    w_flat[1:] += 0.5 * d
    rhs = 0.5 * float(np.sum(w_flat * field**2 * dcoeff))
    n2 = float(np.sum(sys.quad * field**2 * dw.vp_g))
    return abs(lhs - rhs) / max(n2, 1e-300)


def norm_equivalence_check(
    f: np.ndarray,
    psi2: np.ndarray,
    psi0: np.ndarray,
    b_field: np.ndarray,
    sys: LinearizedSystem,
    eps: float = 0.1,
):
    """Low-order (n=1) almost-equivalence of |Lap f|^2 and |Hess f|^2.

    For radially symmetric f the Hessian norm is pointwise
    |Hess f|^2 = f''^2 + (f'/xi)^2, so the deviation

        dev = | int B ((Lap f)^2 - f''^2 - (f'/xi)^2) psi2 xi dxi |

    is compared against eps * int (Lap f)^2 psi2 + C int f^2 psi0; returns
    (dev, eps_part, c_needed) with c_needed = max(0, (dev - eps_part)/m0).
    """
    xi = sys.xi
    quad = sys.quad
    lap = sys.laplacian_scalar(f)
    d1 = sys.d1_even @ f
    d2 = sys.d2_even @ f
    over = np.empty_like(f)
    pos = xi > 0
    over[pos] = d1[pos] / xi[pos]
    over[~pos] = d2[~pos]
    hess2 = d2**2 + over**2
    dev = abs(float(np.sum(quad * b_field * (lap**2 - hess2) * psi2)))
    eps_part = eps * float(np.sum(quad * lap**2 * psi2))
    m0 = float(np.sum(quad * f**2 * psi0))
    c_needed = max(0.0, (dev - eps_part) / max(m0, 1e-300))
    return dev, eps_part, c_needed


def power_weights(xi: np.ndarray, delta1: float = 1.0, delta2: float = -2.25):
    """Default psi-family <xi>^(2 j delta1 + delta2) as (psi0, psi2)."""
    bracket = np.sqrt(1.0 + xi**2)
    return bracket**delta2, bracket ** (4.0 * delta1 + delta2)
