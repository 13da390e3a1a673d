"""Damping weight construction and certification.

The weight phi1 is built as phihat1 * g^beta where the base weight has
log-derivative

    h(xi) = a xi/(xi^2 + c^2) - b xi/(1 + xi^2)^(3/2),

so phihat1 = ((xi^2+c^2)/c^2)^(a/2) * exp(b (1/<xi> - 1)) is comparable to
<xi> with an explicit tail margin: the b-term makes xi h - 1 -> -b/xi, so
the damping functionals stay below -mu <xi>^-1 uniformly.  The monotone
g-factor (1 down to 1/2 across [p, q]) adds localized damping through the
outgoing factor (xi + U - a Sigma) dg <= 0 wherever the raw gradient
inequalities weaken beyond the sonic point.  Certification is pointwise on
the grid for both functionals and l in {0, 1}; nothing is assumed from the
construction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .profile import Profile


class WeightSearchError(Exception):
    """No weight in the search family met the damping target."""

    def __init__(self, msg, best_mu=None, best_weight=None):
        super().__init__(msg)
        self.best_mu = best_mu
        self.best_weight = best_weight


@dataclass
class Weight:
    xi: np.ndarray
    phi1: np.ndarray
    h: np.ndarray
    params_h: dict
    g_params: dict
    mu1: float
    c_lo: float
    c_hi: float


@dataclass
class DerivedWeights:
    xi: np.ndarray
    vp_m: dict
    vp_g: np.ndarray
    vp_a: np.ndarray
    kappa1: float
    beta1: float


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


def g_factor(xi: np.ndarray, p: float, q: float, pad_frac: float = 0.05):
    """Monotone cutoff g: 1 below the ramp, 1/2 above, strictly decreasing
    on [p, q] (the ramp extends pad_frac beyond so dg < 0 on the closed
    interval).  Returns (g, dg)."""
    pad = pad_frac * (q - p)
    lo, hi = p - pad, q + pad
    t = (xi - lo) / (hi - lo)
    g = 1.0 - 0.5 * _smoothstep(t)
    tc = np.clip(t, 0.0, 1.0)
    dstep = 30.0 * tc**2 * (1.0 - tc) ** 2 / (hi - lo)
    dg = -0.5 * np.where((t > 0) & (t < 1), dstep, 0.0)
    return g, dg


def base_weight(xi: np.ndarray, a: float, b: float, c: float):
    """(phihat1, h) for the parametric log-derivative family."""
    h = a * xi / (xi**2 + c**2) - b * xi / (1.0 + xi**2) ** 1.5
    phi = ((xi**2 + c**2) / c**2) ** (a / 2.0) * np.exp(
        b * ((1.0 + xi**2) ** -0.5 - 1.0)
    )
    return phi, h


def assemble_weight(prof: Profile, a: float, b: float, c: float,
                    p: float, q: float, beta: float) -> Weight:
    """Build phi1 = phihat1 * g^beta on the profile grid and certify mu1."""
    xi = prof.xi
    phihat, h_hat = base_weight(xi, a, b, c)
    if beta > 0.0:
        g, dg = g_factor(xi, p, q)
        phi1 = phihat * g**beta
        h = h_hat + beta * dg / g
    else:
        g = np.ones_like(xi)
        dg = np.zeros_like(xi)
        phi1 = phihat
        h = h_hat
    mu1 = certified_mu(prof, h)
    bracket = np.sqrt(1.0 + xi**2)
    ratio = phi1 / bracket
    return Weight(
        xi=xi, phi1=phi1, h=h,
        params_h={"a": a, "b": b, "c": c},
        g_params={"p": p, "q": q, "beta": beta},
        mu1=mu1,
        c_lo=float(ratio.min()),
        c_hi=float(ratio.max()),
    )


def damping_functionals(w: Weight, prof: Profile, l: int):
    """Pointwise (D_wg_l, D_ag_l) arrays for l in {0, 1}.

    D_wg_l = (xi+U) h + l a Sigma |h| - (1 + U' - l a |Sigma'|)
    D_ag_l = (xi+U) h + l a Sigma |h| - (1 + U/xi - l a |Sigma'|)

    with U/xi at the origin taken as U'(0).
    """
    if l not in (0, 1):
        raise ValueError("l must be 0 or 1")
    if w.xi.shape != prof.xi.shape or not np.array_equal(w.xi, prof.xi):
        raise ValueError("weight and profile grids differ")
    return _damping(prof, w.h, l)


def _damping(prof: Profile, h: np.ndarray, l: int):
    al = prof.params.alpha
    transport = (prof.xi + prof.u) * h + l * al * prof.sigma * np.abs(h)
    d_wg = transport - (1.0 + prof.du - l * al * np.abs(prof.dsigma))
    d_ag = transport - (1.0 + prof.u_over_xi - l * al * np.abs(prof.dsigma))
    return d_wg, d_ag


def certified_mu(prof: Profile, h: np.ndarray) -> float:
    """Realized mu1 = inf over the grid and l of -<xi> D for both functionals."""
    bracket = np.sqrt(1.0 + prof.xi**2)
    mu = np.inf
    for l in (0, 1):
        d_wg, d_ag = _damping(prof, h, l)
        mu = min(mu, float((-d_wg * bracket).min()), float((-d_ag * bracket).min()))
    return mu


def _search_lattice(prof: Profile):
    xs = prof.xi_s
    a_vals = (1.0, 0.98)
    c_vals = (2.0, 3.0, 1.5, 4.0)
    b_vals = (1.0, 0.6, 1.5, 0.3, 2.0)
    g_combos = [(xs + 0.5, max(2.0 * xs, xs + 2.5), 0.0)]
    for dp in (0.5, 1.5):
        for dq in (2.5, 6.0):
            for beta in (1.0, 3.0):
                g_combos.append((xs + dp, max(2.0 * xs, xs + dp) + dq, beta))
    for a, c, b in itertools.product(a_vals, c_vals, b_vals):
        for p, q, beta in g_combos:
            yield a, b, c, p, q, beta


def build_weight(prof: Profile, mu_target: float = 1e-3,
                 search_budget: int = 400) -> Weight:
    """Search the (a, b, c, p, q, beta) family for a certified weight.

    Returns the best weight found if its mu1 meets ``mu_target``; otherwise
    raises WeightSearchError carrying the best margin.  The monotone-g sign
    condition (xi + U - a Sigma) dg <= 0 is verified for every candidate
    with beta > 0.
    """
    al = prof.params.alpha
    best: Weight | None = None
    tried = 0
    for a, b, c, p, q, beta in _search_lattice(prof):
        if tried >= search_budget:
            break
        tried += 1
        if beta > 0.0:
            g, dg = g_factor(prof.xi, p, q)
            sign = (prof.xi + prof.u - al * prof.sigma) * dg
            if sign.max() > 1e-14:
                continue
        w = assemble_weight(prof, a, b, c, p, q, beta)
        if best is None or w.mu1 > best.mu1:
            best = w
    if best is None or best.mu1 < mu_target:
        mu = None if best is None else best.mu1
        raise WeightSearchError(
            f"no weight reached mu_target={mu_target} within budget {search_budget}; "
            f"best mu1={mu}",
            best_mu=mu,
            best_weight=best,
        )
    return best


def derived_weights(w: Weight, m_list=(1, 2), beta1: float = 3.5,
                    kappa1: float = 0.25) -> DerivedWeights:
    """Power weights phi_m = phi1^m, the decay weight vp_g, and vp_A.

    vp_A = xi^(-beta1) (1+xi^2)^((beta1-2-kappa1)/2), regularized at the
    origin by flooring xi at half the first positive grid node; beta1 must
    lie in (3, 4) so swirl fields vanishing linearly at 0 stay integrable.
    """
    if not (3.0 < beta1 < 4.0):
        raise ValueError(f"beta1 must lie in (3, 4), got {beta1}")
    xi = w.xi
    pos = xi[xi > 0]
    floor = 0.5 * pos.min() if pos.size else 1e-3
    xi_reg = np.maximum(xi, floor)
    vp_g = (1.0 + xi**2) ** (-(kappa1 + 2.0) / 2.0)
    vp_a = xi_reg ** (-beta1) * (1.0 + xi_reg**2) ** ((beta1 - 2.0 - kappa1) / 2.0)
    vp_m = {m: w.phi1 ** int(m) for m in m_list}
    return DerivedWeights(xi=xi, vp_m=vp_m, vp_g=vp_g, vp_a=vp_a,
                          kappa1=kappa1, beta1=beta1)
