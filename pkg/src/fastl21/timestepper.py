"""Time marching for linear and Newton-linearized semilinear subdiffusion.

Implicit arrangement per step: the unknown u^k enters both the spatial
part and the history recurrence (through the newest-interval coefficient
chat), so the per-step system is

    (c_k I + sigma f'(u^{k-1}) - sigma nu^2 lap) u^k = rhs,
    c_k = lam_k + chat_k / Gamma(1-alpha),

with the f' term absent in the linear scheme. The history states are
advanced with the solved u^k. The "standard" operator mode recomputes
kernel-integrated coefficients by adaptive quadrature every step (cost
O(k) per step) and serves as the reference for the fast mode.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma

from . import fracops as fo
from .mesh import check_psd_conditions, check_semilinear_tau
from .spatial import Field, build_space, energy, interior_grid, norms, \
    solve_shifted

__all__ = [
    "LinearProblem", "SemilinearProblem", "TruncatedPotential",
    "make_truncated", "RunConfig", "RunResult", "run", "splitmix_unit",
]


def splitmix_unit(seed, count):
    """count floats in [0,1) from a SplitMix64 stream (reproducible)."""
    mask = (1 << 64) - 1
    s = seed & mask
    out = np.empty(count)
    for i in range(count):
        s = (s + 0x9E3779B97F4A7C15) & mask
        z = s
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        z ^= z >> 31
        out[i] = (z >> 11) * 2.0 ** -53
    return out


@dataclass(frozen=True)
class TruncatedPotential:
    """Cubic double-well nonlinearity flattened to linear growth.

    Inside |u| <= m_tr: f(u) = u^3 - u with primitive (u^2-1)^2/4.
    Outside: the tangent-line extension (3 m_tr^2 - 1) u - 2 m_tr^3
    sign(u), quadratic primitive, C^1 at the junction. The derivative is
    globally bounded by 3 m_tr^2 - 1.
    """
    m_tr: float

    def f(self, u):
        u = np.asarray(u, dtype=float)
        m = self.m_tr
        inner = u * u * u - u
        outer = (3.0 * m * m - 1.0) * u - 2.0 * m ** 3 * np.sign(u)
        return np.where(np.abs(u) <= m, inner, outer)

    def fprime(self, u):
        u = np.asarray(u, dtype=float)
        m = self.m_tr
        return np.where(np.abs(u) <= m, 3.0 * u * u - 1.0,
                        3.0 * m * m - 1.0)

    def potential(self, u):
        u = np.asarray(u, dtype=float)
        m = self.m_tr
        inner = 0.25 * (u * u - 1.0) ** 2
        au = np.abs(u)
        outer = (0.25 * (m * m - 1.0) ** 2
                 + 0.5 * (3.0 * m * m - 1.0) * (u * u - m * m)
                 - 2.0 * m ** 3 * (au - m))
        return np.where(au <= m, inner, outer)

    @property
    def lipschitz(self):
        return 3.0 * self.m_tr ** 2 - 1.0


def make_truncated(m_tr) -> TruncatedPotential:
    if m_tr < 1.0:
        raise ValueError("truncation bound must be >= 1")
    return TruncatedPotential(float(m_tr))


@dataclass(frozen=True)
class LinearProblem:
    """d_t^alpha u = lap u + source, homogeneous Dirichlet."""
    source: object = None          # callable (t, X, Y) -> values
    u0: object = None              # callable (X, Y), array, or None
    exact: object = None           # callable (t, X, Y), enables errors


@dataclass(frozen=True)
class SemilinearProblem:
    """d_t^alpha u = nu^2 lap u - f(u) [+ source], Newton-linearized.

    potential is the primitive of f (for the energy diagnostic);
    energy_potential overrides it when the reported energy should use a
    different primitive than the one actually stepped (truncation
    comparisons). lipschitz bounds sup |f'| for the admissibility check.
    """
    f: object
    fprime: object
    potential: object
    nu2: float
    u0: object = None
    source: object = None
    exact: object = None
    lipschitz: float = None
    energy_potential: object = None


@dataclass(frozen=True)
class RunConfig:
    mesh: object
    soe: object
    problem: object
    backend: str = "cheb"
    n_space: int = 24
    operator: str = "fast"
    diag_every: int = 1
    seed: int = 42
    admissibility: str = "warn"    # "error" | "warn" | "skip"


@dataclass
class RunResult:
    series: dict
    final: Field
    n_steps: int
    setup_time: float
    loop_time: float
    max_l2_err: float
    max_h1_err: float
    admissibility: object

    def save_series(self, path):
        cols = ["k", "t", "l2", "h1semi", "energy"]
        if "l2err" in self.series:
            cols += ["l2err", "h1err"]
        data = np.column_stack([self.series[c] for c in cols])
        np.savetxt(path, data, fmt="%.17e", delimiter=",",
                   header=",".join(cols), comments="")


def _initial_field(op, problem, seed):
    xg, yg = interior_grid(op)
    u0 = problem.u0
    if u0 is None:
        return op.field(np.zeros(op.m * op.m))
    if isinstance(u0, str):
        if u0 != "random":
            raise ValueError("unknown initial data %r" % (u0,))
        r = splitmix_unit(seed, op.m * op.m)
        return op.field(0.05 * (2.0 * r - 1.0))
    if callable(u0):
        return op.field(u0(xg, yg))
    return op.field(u0)


def _check_admissibility(cfg):
    mode = cfg.admissibility
    if mode == "skip":
        return None
    reports = []
    if cfg.soe is not None:
        reports.append(check_psd_conditions(cfg.mesh, cfg.soe))
    if isinstance(cfg.problem, SemilinearProblem):
        lip = cfg.problem.lipschitz
        if lip is not None:
            eps = cfg.soe.eps if cfg.soe is not None else 0.0
            reports.append(check_semilinear_tau(cfg.mesh, lip, eps))
    if not reports:
        return None
    bad = [r for r in reports if not r.passed]
    if bad:
        msg = "; ".join("%s failed" % r.kind for r in bad)
        if mode == "error":
            raise ValueError("mesh admissibility: " + msg)
        warnings.warn("mesh admissibility: " + msg, stacklevel=3)
    return reports


def run(cfg: RunConfig) -> RunResult:
    """March the configured scheme over the whole mesh."""
    t_setup = time.perf_counter()
    if cfg.operator not in ("fast", "standard"):
        raise ValueError("operator must be 'fast' or 'standard'")
    mesh, soe = cfg.mesh, cfg.soe
    prob = cfg.problem
    semilinear = isinstance(prob, SemilinearProblem)
    reports = _check_admissibility(cfg)

    op = build_space(cfg.backend, cfg.n_space)
    xg, yg = interior_grid(op)
    size = op.m * op.m
    alpha, sigma = mesh.alpha, mesh.sigma
    g1 = gamma(1.0 - alpha)
    nu2 = prob.nu2 if semilinear else 1.0

    u_prev = _initial_field(op, prob, cfg.seed)
    u_prev2 = None
    hist = fo.init_history(soe, shape=(size,)) if cfg.operator == "fast" \
        else None
    traj = [u_prev.values.copy()] if cfg.operator == "standard" else None

    pot = None
    if semilinear:
        pot = prob.energy_potential or prob.potential
    series = {c: [] for c in ("k", "t", "l2", "h1semi", "energy")}
    track_err = getattr(prob, "exact", None) is not None
    if track_err:
        series["l2err"] = []
        series["h1err"] = []
    max_l2e = max_h1e = 0.0 if track_err else float("nan")

    def record(k, t, fld):
        nonlocal max_l2e, max_h1e
        l2, h1 = norms(fld, op)
        series["k"].append(k)
        series["t"].append(t)
        series["l2"].append(l2)
        series["h1semi"].append(h1)
        if pot is not None:
            series["energy"].append(energy(fld, op, pot,
                                           grad_coeff=0.5 * nu2))
        else:
            series["energy"].append(np.nan)
        if track_err:
            efld = Field(op.backend, op.n,
                         fld.values - prob.exact(t, xg, yg).ravel())
            l2e, h1e = norms(efld, op)
            series["l2err"].append(l2e)
            series["h1err"].append(h1e)
            max_l2e = max(max_l2e, l2e)
            max_h1e = max(max_h1e, h1e)

    record(0, 0.0, u_prev)
    setup_time = time.perf_counter() - t_setup

    t_loop = time.perf_counter()
    n = mesh.n_steps
    for k in range(1, n + 1):
        ts = mesh.tstar[k - 1]
        lam = fo.local_weight(mesh, k)

        if cfg.operator == "fast":
            if k >= 2:
                lc = fo.local_fast_coeffs(mesh, soe, k)
                part = (lc.decay[:, None] * hist.h
                        + np.outer(lc.a, u_prev2.values)
                        + np.outer(lc.b, u_prev.values))
                hist_rhs = (soe.weight @ part) / g1
                c_shift = lam + lc.chat / g1
            else:
                hist_rhs = 0.0
                c_shift = lam
        else:
            co = fo.l21_coeffs(mesh, k)
            if k >= 2:
                du = np.diff(np.asarray(traj), axis=0)
                hist_rhs = ((co.d @ du) - co.c[-1] * u_prev.values) / g1
                c_shift = lam + co.c[-1] / g1
            else:
                hist_rhs = 0.0
                c_shift = lam

        lap_prev = op.apply_lap(u_prev.values)
        if semilinear:
            fp = prob.fprime(u_prev.values)
            rhs = (lam * u_prev.values - hist_rhs
                   + 0.5 * alpha * nu2 * lap_prev
                   - prob.f(u_prev.values) + sigma * fp * u_prev.values)
            if prob.source is not None:
                rhs = rhs + prob.source(ts, xg, yg).ravel()
            u_new = solve_shifted(op, c_shift, sigma * nu2,
                                  op.field(rhs),
                                  diag=op.field(sigma * fp))
        else:
            rhs = lam * u_prev.values - hist_rhs + 0.5 * alpha * lap_prev
            if prob.source is not None:
                rhs = rhs + prob.source(ts, xg, yg).ravel()
            u_new = solve_shifted(op, c_shift, sigma, op.field(rhs))

        if cfg.operator == "fast" and k >= 2:
            hist = fo.FastHistory(k, part + np.outer(lc.c, u_new.values))
        elif cfg.operator == "standard":
            traj.append(u_new.values.copy())

        if k % cfg.diag_every == 0 or k == n:
            record(k, mesh.t[k], u_new)
        u_prev2, u_prev = u_prev, u_new
    loop_time = time.perf_counter() - t_loop

    series = {c: np.asarray(v) for c, v in series.items()}
    return RunResult(series, u_prev, n, setup_time, loop_time,
                     max_l2e, max_h1e, reports)
