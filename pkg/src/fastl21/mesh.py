"""Time meshes and admissibility checks for the offset-point scheme.

A TimeMesh carries the grid 0 = t_0 < ... < t_N together with the order
parameter alpha, since the evaluation offset sigma = 1 - alpha/2 ties the
mesh to the fractional order. Admissibility checks verify the step-ratio,
kernel-accuracy and window conditions under which the discrete bilinear
form is positive semidefinite, and the step-size bound for the linearized
semilinear scheme.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gamma

__all__ = [
    "TimeMesh", "AdmissibilityReport", "eta_root",
    "graded_mesh", "hybrid_mesh", "check_psd_conditions",
    "check_semilinear_tau",
]


@lru_cache(maxsize=1)
def eta_root() -> float:
    """Positive root of 1 - 3 rho^2 (1 + rho) = 0, by safeguarded Newton.

    This is the smallest admissible adjacent step ratio; roughly 0.4753.
    """
    lo, hi = 0.25, 1.0
    rho = 0.5
    for _ in range(100):
        g = 1.0 - 3.0 * rho * rho * (1.0 + rho)
        if g > 0.0:
            lo = rho
        else:
            hi = rho
        dg = -(6.0 * rho + 9.0 * rho * rho)
        step = g / dg
        nxt = rho - step
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if abs(nxt - rho) <= 1e-16 * rho:
            rho = nxt
            break
        rho = nxt
    if abs(1.0 - 3.0 * rho * rho * (1.0 + rho)) > 1e-14:
        raise RuntimeError("ratio-root iteration failed to converge")
    return rho


@dataclass(frozen=True)
class TimeMesh:
    """Nonuniform time grid bound to a fractional order alpha in (0, 1)."""
    alpha: float
    t: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        object.__setattr__(self, "t", t)
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if t.ndim != 1 or t.size < 1:
            raise ValueError("mesh needs at least the origin")
        if t[0] != 0.0:
            raise ValueError("mesh must start at t = 0")
        if not np.all(np.isfinite(t)) or not np.all(np.diff(t) > 0.0):
            raise ValueError("mesh points must be finite and increasing")

    @property
    def sigma(self) -> float:
        return 1.0 - 0.5 * self.alpha

    @property
    def n_steps(self) -> int:
        return self.t.size - 1

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def tau(self) -> np.ndarray:
        """Step sizes tau_k = t_k - t_{k-1}; tau[k-1] is step k."""
        return np.diff(self.t)

    @property
    def tstar(self) -> np.ndarray:
        """Offset evaluation points t_k^* = t_{k-1} + sigma tau_k."""
        return self.t[:-1] + self.sigma * self.tau

    @property
    def ratios(self) -> np.ndarray:
        """Adjacent step ratios rho_k = tau_k / tau_{k-1} for k >= 2."""
        tau = self.tau
        return tau[1:] / tau[:-1]

    def save(self, path):
        with open(path, "w") as fh:
            for tk in self.t:
                fh.write(f"{tk:.17e}\n")

    @classmethod
    def load(cls, path, alpha):
        t = np.loadtxt(path)
        return cls(alpha, np.atleast_1d(t))


def graded_mesh(n, r, t_end, alpha) -> TimeMesh:
    """Graded grid t_j = t_end (j/n)^r concentrating steps at the origin."""
    if n < 2:
        raise ValueError("need n >= 2 steps")
    if r < 1.0:
        raise ValueError("grading exponent must satisfy r >= 1")
    j = np.arange(n + 1, dtype=float)
    return TimeMesh(alpha, t_end * (j / n) ** r)


def hybrid_mesh(n_graded, r, t_graded_end, growth, tau_max, horizon,
                alpha) -> TimeMesh:
    """Graded start, then multiplicative step growth capped at tau_max.

    Steps follow the graded rule for n_graded steps up to t_graded_end,
    after which each step is growth * (previous step), clipped to tau_max;
    generation stops once the cumulative time reaches the horizon.
    """
    if growth < 1.0:
        raise ValueError("growth factor must be >= 1")
    if tau_max <= 0.0:
        raise ValueError("tau_max must be positive")
    if horizon < t_graded_end:
        raise ValueError("horizon precedes the graded segment")
    j = np.arange(n_graded + 1, dtype=float)
    t = list(t_graded_end * (j / n_graded) ** r)
    tau = t[-1] - t[-2]
    while t[-1] < horizon:
        tau = min(growth * tau, tau_max)
        t.append(t[-1] + tau)
    return TimeMesh(alpha, np.array(t))


@dataclass(frozen=True)
class AdmissibilityReport:
    """Outcome of the positivity / step-size admissibility checks.

    Margins are signed (requirement satisfied iff margin >= 0); failing
    indices are 1-based step indices of the binding constraint.
    """
    kind: str
    passed: bool
    ratio_ok: bool = True
    ratio_margin: float = np.inf
    ratio_argmin: int = 0
    eps_ok: bool = True
    eps_margin: float = np.inf
    dtcut_ok: bool = True
    dtcut_margin: float = np.inf
    tsoe_ok: bool = True
    tsoe_margin: float = np.inf
    tau_ok: bool = True
    tau_margin: float = np.inf
    tau_argmin: int = 0
    coverage_note: str = ""
    details: dict = field(default_factory=dict)

    def lines(self):
        out = [f"kind={self.kind}", f"passed={self.passed}"]
        for key in ("ratio", "eps", "dtcut", "tsoe", "tau"):
            ok = getattr(self, key + "_ok")
            margin = getattr(self, key + "_margin")
            if np.isfinite(margin) or not ok:
                out.append(f"{key}_ok={ok}")
                out.append(f"{key}_margin={margin:.6e}")
        for key, val in self.details.items():
            out.append(f"{key}={val}")
        if self.coverage_note:
            out.append(f"coverage_note={self.coverage_note}")
        return out


def check_psd_conditions(mesh, soe) -> AdmissibilityReport:
    """Check the mesh/SOE conditions backing the positivity certificate.

    Requires: step ratios >= eta for k >= 2; kernel tolerance
    eps <= min_k 1/(5 (1-alpha) (sigma tau_k)^alpha); dt_cut below every
    offset distance sigma tau_k (k >= 2); t_soe covering the largest
    one-step history distance sigma tau_{k+1} + tau_k.
    """
    if abs(mesh.alpha - soe.alpha) > 1e-14:
        raise ValueError("mesh and SOE carry different alpha")
    alpha, sigma = mesh.alpha, mesh.sigma
    tau = mesh.tau
    eta = eta_root()
    if tau.size == 0:
        return AdmissibilityReport(kind="psd-conditions", passed=True,
                                   details={"note": "empty mesh"})

    ratios = mesh.ratios
    if ratios.size:
        i = int(np.argmin(ratios))
        ratio_margin = float(ratios[i] - eta)
        ratio_argmin = i + 2
    else:
        ratio_margin, ratio_argmin = np.inf, 0
    eps_bound = float(np.min(1.0 / (5.0 * (1.0 - alpha)
                                    * (sigma * tau) ** alpha)))
    eps_margin = eps_bound - soe.eps
    if tau.size >= 2:
        dt_margin = float(sigma * tau[1:].min() - soe.dt_cut)
    else:
        dt_margin = np.inf
    if tau.size >= 3:
        need = float(np.max(sigma * tau[2:] + tau[1:-1]))
        tsoe_margin = soe.t_soe - need
    else:
        tsoe_margin = np.inf

    note = ""
    if mesh.t_end > soe.t_soe:
        note = (f"final time {mesh.t_end:g} exceeds certified window "
                f"t_soe={soe.t_soe:g}; kernel distances beyond it rely on "
                "monotone exponential decay of the compressed kernel")

    report = AdmissibilityReport(
        kind="psd-conditions",
        passed=bool(ratio_margin >= 0 and eps_margin >= 0
                    and dt_margin >= 0 and tsoe_margin >= 0),
        ratio_ok=bool(ratio_margin >= 0),
        ratio_margin=ratio_margin,
        ratio_argmin=ratio_argmin,
        eps_ok=bool(eps_margin >= 0),
        eps_margin=float(eps_margin),
        dtcut_ok=bool(dt_margin >= 0),
        dtcut_margin=float(dt_margin),
        tsoe_ok=bool(tsoe_margin >= 0),
        tsoe_margin=float(tsoe_margin),
        coverage_note=note,
        details={"eta": f"{eta:.12f}", "eps_bound": f"{eps_bound:.6e}"},
    )
    return report


def check_semilinear_tau(mesh, lipschitz, eps) -> AdmissibilityReport:
    """Step-size bound guaranteeing energy dissipation of the linearized
    semilinear scheme: tau_1^alpha and tau_k^alpha must stay below
    f1- and f2-weighted thresholds involving the nonlinearity's Lipschitz
    constant and the kernel tolerance.
    """
    from .stability import f1_f2

    alpha, sigma = mesh.alpha, mesh.sigma
    tau = mesh.tau
    if tau.size == 0:
        return AdmissibilityReport(kind="semilinear-tau", passed=True,
                                   details={"note": "empty mesh"})
    f1, f2 = f1_f2(alpha)
    g2 = gamma(2.0 - alpha)
    denom1 = sigma ** alpha * ((3.0 - alpha) * g2 * lipschitz
                               + (1.0 - alpha) * eps)
    denom2 = sigma ** alpha * ((3.0 - alpha) * g2 * lipschitz
                               + 3.0 * (1.0 - alpha) * eps)
    bounds = np.empty_like(tau)
    with np.errstate(divide="ignore"):
        bounds[0] = f1 / denom1 if denom1 > 0 else np.inf
        bounds[1:] = f2 / denom2 if denom2 > 0 else np.inf
    margins = bounds - tau ** alpha
    i = int(np.argmin(margins))
    return AdmissibilityReport(
        kind="semilinear-tau",
        passed=bool(margins[i] >= 0),
        tau_ok=bool(margins[i] >= 0),
        tau_margin=float(margins[i]),
        tau_argmin=i + 1,
        details={
            "lipschitz": f"{lipschitz:g}",
            "bound_first": f"{bounds[0]:.6e}",
            "bound_rest": f"{bounds[1] if tau.size > 1 else np.inf:.6e}",
            "max_tau_alpha": f"{(tau ** alpha).max():.6e}",
        },
    )
