"""Certification of the profile inequalities and phase-plane sign claims.

check_repulsivity evaluates, pointwise on the grid,

    (a) 1 + U' - a|S'|            on [0, xi1]
    (b) xi + U - a S   > 0        for xi > xi_s
    (c) 1 + U/xi       > kappa    everywhere
    (d) 1 + U/xi - a|S'|          on [0, xi1]

with xi1 the largest grid point past xi_s where (a) and (d) stay above
kappa/2, and kappa the realized minimum over [0, xi1] minus a 1e-8 guard.
Failures are reported, never raised.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .phase import GasParams, PhaseCurve, PhasePolys, sonic_points
from .profile import Profile


@dataclass
class VerifyReport:
    kappa_found: float
    xi1_found: float
    margins: dict
    pass_flags: dict

    @property
    def passed(self) -> bool:
        return all(self.pass_flags.values())

    def as_text(self) -> str:
        """Flat key-value block consumed by the CLI."""
        lines = [
            f"kappa_found = {self.kappa_found:.17g}",
            f"xi1_found = {self.xi1_found:.17g}",
        ]
        for k in sorted(self.margins):
            lines.append(f"margin.{k} = {self.margins[k]:.17g}")
        for k in sorted(self.pass_flags):
            lines.append(f"pass.{k} = {str(bool(self.pass_flags[k])).lower()}")
        lines.append(f"pass = {str(self.passed).lower()}")
        return "\n".join(lines) + "\n"


def check_repulsivity(prof: Profile, guard: float = 1e-8) -> VerifyReport:
    p = prof.params
    xi = prof.xi
    a = p.alpha
    ineq_a = 1.0 + prof.du - a * np.abs(prof.dsigma)
    ineq_b = xi + prof.u - a * prof.sigma
    ineq_c = 1.0 + prof.u_over_xi
    ineq_d = 1.0 + prof.u_over_xi - a * np.abs(prof.dsigma)

    core = xi <= prof.xi_s
    kappa_core = min(
        float(np.min(ineq_a[core])),
        float(np.min(ineq_d[core])),
        float(np.min(ineq_c)),
    ) - guard

    # extend past xi_s while (a) and (d) stay above kappa/2
    xi1 = prof.xi_s
    beyond = np.flatnonzero(xi > prof.xi_s)
    for i in beyond:
        if ineq_a[i] > kappa_core / 2.0 and ineq_d[i] > kappa_core / 2.0:
            xi1 = float(xi[i])
        else:
            break

    window = xi <= xi1
    kappa = min(
        float(np.min(ineq_a[window])),
        float(np.min(ineq_d[window])),
        float(np.min(ineq_c)),
    ) - guard

    outside = xi > prof.xi_s
    margins = {
        "interior_gradient": float(np.min(ineq_a[window])),
        "outgoing": float(np.min(ineq_b[outside])) if outside.any() else np.inf,
        "angular_global": float(np.min(ineq_c)),
        "angular_gradient": float(np.min(ineq_d[window])),
    }
    pass_flags = {
        "interior_gradient": margins["interior_gradient"] > 0.0,
        "outgoing": margins["outgoing"] > 0.0,
        "angular_global": margins["angular_global"] > 0.0,
        "angular_gradient": margins["angular_gradient"] > 0.0,
        "kappa_positive": kappa > 0.0,
        "xi1_beyond_sonic": xi1 > prof.xi_s,
    }
    return VerifyReport(kappa_found=kappa, xi1_found=xi1, margins=margins,
                        pass_flags=pass_flags)


@dataclass
class DecayReport:
    constants: dict
    slopes: dict
    targets: dict

    def within(self, rel: float = 0.10) -> bool:
        return all(
            abs(self.slopes[k] - self.targets[k]) <= rel * abs(self.targets[k])
            for k in self.slopes
        )


def check_decay(prof: Profile, kmax: int = 2) -> DecayReport:
    """Far-field decay constants and log-log slope fits per derivative order.

    For k <= kmax returns sup over the outer decade of
    |d^k U| <xi>^(r-1+k) and the same for Sigma, plus fitted slopes of
    log|d^k .| against log xi, to compare with 1 - r - k.
    """
    if kmax > 2:
        raise ValueError("kmax must be <= 2")
    p = prof.params
    xi_hi = prof.xi.max()
    if xi_hi < 100.0:
        raise ValueError("grid must reach xi >= 100 for decay fits")
    sel = prof.xi >= 0.1 * xi_hi
    xi = prof.xi[sel]
    bracket = (1.0 + xi**2) ** 0.5

    fields = {0: (prof.u[sel], prof.sigma[sel]), 1: (prof.du[sel], prof.dsigma[sel])}
    if kmax >= 2:
        if prof.source is not None:
            d2u, d2s = prof.source.second_derivatives(xi)
        else:
            d2u = np.gradient(prof.du[sel], xi)
            d2s = np.gradient(prof.dsigma[sel], xi)
        fields[2] = (d2u, d2s)

    constants = {}
    slopes = {}
    targets = {}
    A = np.vstack([np.ones(xi.size), np.log(xi)]).T
    for k in range(kmax + 1):
        fu, fs = fields[k]
        constants[f"u_k{k}"] = float(np.max(np.abs(fu) * bracket ** (p.r - 1.0 + k)))
        constants[f"sigma_k{k}"] = float(np.max(np.abs(fs) * bracket ** (p.r - 1.0 + k)))
        cu, *_ = np.linalg.lstsq(A, np.log(np.abs(fu)), rcond=None)
        cs, *_ = np.linalg.lstsq(A, np.log(np.abs(fs)), rcond=None)
        slopes[f"u_k{k}"] = float(cu[1])
        slopes[f"sigma_k{k}"] = float(cs[1])
        targets[f"u_k{k}"] = 1.0 - p.r - k
        targets[f"sigma_k{k}"] = 1.0 - p.r - k
    return DecayReport(constants=constants, slopes=slopes, targets=targets)


@dataclass
class PhaseSignReport:
    min_slack_delta: float
    min_slack_delta1: float
    min_slack_w_lower: float
    min_slack_w_upper: float
    crossings: int

    @property
    def passed(self) -> bool:
        return (
            self.min_slack_delta > 0.0
            and self.min_slack_delta1 > 0.0
            and self.min_slack_w_lower > 0.0
            and self.min_slack_w_upper > 0.0
            and self.crossings == 0
        )


def check_phase_signs(curve: PhaseCurve) -> PhaseSignReport:
    """Verify Delta < 0, Delta1 > 0 and W1(S) < W(S) < W2(S) for S > P2_S.

    Slacks are reported as minima over the arc samples; a sign change
    between consecutive samples counts as a crossing.
    """
    p = curve.params
    polys = PhasePolys(p)
    sd = sonic_points(p)
    sel = curve.s > sd.p2.s_coord
    if not sel.any():
        raise ValueError("arc does not cover S > P2_S")
    s = curve.s[sel]
    w = curve.w[sel]
    d = np.asarray(polys.delta(w, s))
    d1 = np.asarray(polys.delta1(w, s))

    from .phase import roots_in_w

    w_lo = np.empty_like(s)
    w_hi = np.empty_like(s)
    # the cubic roots are needed pointwise; subsample long arcs for speed
    stride = max(1, s.size // 800)
    idx = np.unique(np.concatenate([np.arange(0, s.size, stride), [s.size - 1]]))
    for j in idx:
        (w1, w2, _w3), _ = roots_in_w(float(s[j]), p)
        w_lo[j] = w1
        w_hi[j] = w2
    idx_all = np.arange(s.size)
    w_lo = np.interp(idx_all, idx, w_lo[idx])
    w_hi = np.interp(idx_all, idx, w_hi[idx])

    slack_d = -d
    slack_d1 = d1
    slack_lo = w - w_lo
    slack_hi = w_hi - w
    crossings = sum(
        int(np.any(np.diff(np.signbit(arr)) != 0))
        for arr in (slack_d, slack_d1, slack_lo, slack_hi)
    )
    return PhaseSignReport(
        min_slack_delta=float(slack_d.min()),
        min_slack_delta1=float(slack_d1.min()),
        min_slack_w_lower=float(slack_lo.min()),
        min_slack_w_upper=float(slack_hi.min()),
        crossings=crossings,
    )
