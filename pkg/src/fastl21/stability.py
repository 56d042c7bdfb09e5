"""Numerical certification of the fast operator's energy structure.

The weighted increment sum Sum_k (F_k u, delta_k u) equals
psi M psi^T / Gamma(1-alpha) for psi = (delta_1 u, ..., delta_n u), with a
lower-triangular matrix M assembled from the aggregated history
coefficients. M splits exactly as A + diag(bdiag) where A carries the
strict lower part plus a diagonal beta; nonnegativity of the quadratic
form follows once S = A + A^T is positive semidefinite and bdiag >= 0.
This module assembles the split, certifies it by a symmetric eigensolve
plus the sufficient monotonicity conditions, and checks the row-wise
lower bounds used by the error analysis.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigvalsh
from scipy.special import gamma

from .fracops import (_phi0, _phi1, _phi2, fast_coeffs, init_history,
                      history_update, local_fast_coeffs, apply_fast_op)
from .mesh import eta_root

__all__ = [
    "BilinearMatrix", "PsdCertificate", "QPropertyReport",
    "f1_f2", "assemble_bilinear", "certify_psd", "verify_Q_properties",
    "scalar_truncation_probe",
]


def f1_f2(alpha):
    """Diagonal-bound envelope functions; both stay >= 0.6 on (0,1)."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0.0) or np.any(alpha >= 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    eta = eta_root()
    sig = 1.0 - alpha / 2.0
    f1 = 2.0 - alpha - (1.0 - alpha) * eta ** (-alpha)
    f2 = 1.0 - (1.0 - alpha) * sig ** alpha * (
        (sig * eta) ** (-alpha) - (sig * eta + 1.0) ** (-alpha))
    if f1.ndim == 0:
        return float(f1), float(f2)
    return f1, f2


def _diag_local(mesh, k):
    """Gamma(1-alpha)-scaled local weight, mirroring the operator's
    sigma-free opening step."""
    alpha = mesh.alpha
    if k == 1:
        return 1.0 / ((1.0 - alpha) * mesh.tau[0] ** alpha)
    return (mesh.sigma ** (1.0 - alpha)
            / ((1.0 - alpha) * mesh.tau[k - 1] ** alpha))


@dataclass(frozen=True)
class BilinearMatrix:
    """Exact split M = A + diag(bdiag) of the increment-form matrix.

    m is dense lower triangular with rows m[k-1, j-1] = dhat_j at step k
    and diagonal chat_{k-1} + sigma^{1-alpha}/((1-alpha) tau_k^alpha);
    a carries the strict lower part plus diag(beta). Assembly consumes
    coefficient rows up to step n+1 (for beta_n), so the mesh passed in
    must be one step longer than n.
    """
    n: int
    m: np.ndarray
    a: np.ndarray
    bdiag: np.ndarray
    beta: np.ndarray
    mesh: object = field(repr=False)
    soe: object = field(repr=False)

    def s(self):
        return self.a + self.a.T


def assemble_bilinear(mesh, soe, n) -> BilinearMatrix:
    """Build the n-by-n increment-form matrix and its exact split."""
    if n < 1:
        raise ValueError("n must be positive")
    if mesh.n_steps < n + 1:
        raise ValueError("mesh too short: beta_n needs coefficients at "
                         "step n+1")
    m = np.zeros((n, n))
    m[0, 0] = _diag_local(mesh, 1)
    beta = np.empty(n)
    d_prev = None
    for k in range(2, n + 2):
        fc = fast_coeffs(mesh, soe, k)
        if k <= n:
            m[k - 1, :k - 1] = fc.d_hat
            m[k - 1, k - 1] = fc.c_hat[-1] + _diag_local(mesh, k)
        if k == 2:
            beta[0] = 0.5 * fc.d_hat[0]
        else:
            # 2 beta_{k-1} = dhat_{k-1}^{(k)} + dhat_{k-2}^{(k-1)}
            #                - dhat_{k-2}^{(k)}
            beta[k - 2] = 0.5 * (fc.d_hat[k - 2] + d_prev[k - 3]
                                 - fc.d_hat[k - 3])
        d_prev = fc.d_hat
    a = np.tril(m, -1) + np.diag(beta)
    bdiag = np.diag(m) - beta
    return BilinearMatrix(n, m, a, bdiag, beta, mesh, soe)


@dataclass(frozen=True)
class PsdCertificate:
    """Outcome of the eigenvalue and diagonal-bound checks.

    The three monotonicity booleans are the sufficient condition from
    the analysis; the eigenvalue is the ground truth and alone decides
    eig_ok. passed requires the eigensolve, bdiag >= 0, and the analytic
    diagonal lower bounds.
    """
    n: int
    s_min_eig: float
    s_max_abs: float
    eig_tol: float
    eig_ok: bool
    s_all_positive: bool
    s_monotone_props: tuple
    bdiag_min: float
    bdiag_nonneg: bool
    bound_margins: np.ndarray
    bdiag_bounds_ok: bool
    passed: bool

    def lines(self):
        p1, p2, p3 = self.s_monotone_props
        return [
            "kind=psd-certificate",
            "passed=%s" % self.passed,
            "n=%d" % self.n,
            "s_min_eig=%.6e" % self.s_min_eig,
            "eig_tol=%.6e" % self.eig_tol,
            "eig_ok=%s" % self.eig_ok,
            "s_all_positive=%s" % self.s_all_positive,
            "s_monotone_1=%s" % p1,
            "s_monotone_2=%s" % p2,
            "s_monotone_3=%s" % p3,
            "bdiag_min=%.6e" % self.bdiag_min,
            "bdiag_nonneg=%s" % self.bdiag_nonneg,
            "bound_margin_min=%.6e" % float(self.bound_margins.min()),
            "bdiag_bounds_ok=%s" % self.bdiag_bounds_ok,
        ]


def certify_psd(bm: BilinearMatrix, tol_eig=None, bound_slack=1e-12):
    """Eigen-certify S = A + A^T and check the diagonal lower bounds."""
    n = bm.n
    s = bm.s()
    s_max = float(np.max(np.abs(s))) if n else 0.0
    if tol_eig is None:
        tol_eig = 1e-10 * s_max
    eig_min = float(eigvalsh(s)[0])
    eig_ok = eig_min >= -tol_eig

    tol = 1e-12 * s_max
    tri = np.tril_indices(n)
    all_pos = bool(np.all(s[tri] > 0.0))
    # (1) entries decrease down each column, (2) grow along each row,
    # (3) differences across columns dominate those across rows
    p1 = p2 = p3 = True
    for i in range(1, n):
        for j in range(i):
            p1 &= s[i - 1, j] >= s[i, j] - tol
    for i in range(n):
        for j in range(1, i + 1):
            p2 &= s[i, j - 1] < s[i, j] + tol
    for i in range(2, n):
        for j in range(1, i):
            p3 &= (s[i - 1, j - 1] - s[i, j - 1]
                   <= s[i - 1, j] - s[i, j] + tol)

    mesh, soe = bm.mesh, bm.soe
    alpha, sig = mesh.alpha, mesh.sigma
    f1, f2 = f1_f2(alpha)
    stk = (sig * mesh.tau[:n]) ** alpha
    bounds = f2 / (2.0 * (1.0 - alpha) * stk) - 1.5 * soe.eps
    bounds[0] = f1 / (2.0 * (1.0 - alpha) * stk[0]) - 0.5 * soe.eps
    margins = bm.bdiag - bounds
    bounds_ok = bool(np.all(margins >= -bound_slack))

    bdiag_min = float(bm.bdiag.min())
    bdiag_nonneg = bdiag_min >= 0.0
    passed = eig_ok and bdiag_nonneg and bounds_ok
    return PsdCertificate(n, eig_min, s_max, float(tol_eig), eig_ok,
                          all_pos, (bool(p1), bool(p2), bool(p3)),
                          bdiag_min, bdiag_nonneg, margins, bounds_ok,
                          passed)


@dataclass(frozen=True)
class QPropertyReport:
    """Row-wise lower bounds of the increment matrix (worst margins)."""
    n: int
    cond_ratio_ok: bool
    cond_dtcut_ok: bool
    cond_eps_ok: bool
    cond_eps_margin: float
    q1_margin: float
    q1_diag_margin: float
    q2_margin: float
    q2_diag_margin: float
    q3_margin: float
    q1_ok: bool
    q2_ok: bool
    q3_ok: bool
    passed: bool

    def lines(self):
        return [
            "kind=q-properties",
            "passed=%s" % self.passed,
            "n=%d" % self.n,
            "cond_ratio_ok=%s" % self.cond_ratio_ok,
            "cond_dtcut_ok=%s" % self.cond_dtcut_ok,
            "cond_eps_ok=%s" % self.cond_eps_ok,
            "cond_eps_margin=%.6e" % self.cond_eps_margin,
            "q1_ok=%s q1_margin=%.6e q1_diag_margin=%.6e"
            % (self.q1_ok, self.q1_margin, self.q1_diag_margin),
            "q2_ok=%s q2_margin=%.6e q2_diag_margin=%.6e"
            % (self.q2_ok, self.q2_margin, self.q2_diag_margin),
            "q3_ok=%s q3_margin=%.6e" % (self.q3_ok, self.q3_margin),
        ]


def verify_Q_properties(mesh, soe, n) -> QPropertyReport:
    """Check the three row-bound families on the first n steps.

    The step-ratio, cutoff, and eps admissibility of the sharper
    condition set are evaluated first; the integral right-hand sides
    reuse the stable moment primitives.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if mesh.n_steps < n:
        raise ValueError("mesh too short")
    alpha, sig, eta = mesh.alpha, mesh.sigma, eta_root()
    t, tau, theta, w = mesh.t, mesh.tau, soe.theta, soe.weight

    ratio_ok = bool(np.all(mesh.ratios[:n - 1] >= eta))
    dtcut_ok = soe.dt_cut <= float(np.min(sig * tau[1:n]))

    eps_margin = np.inf
    q1 = q1d = q2 = q2d = q3 = np.inf
    for k in range(2, n + 1):
        fc = fast_coeffs(mesh, soe, k)
        chat = fc.c_hat[-1]
        eps_margin = min(eps_margin, (1.0 - alpha) / sig * chat - soe.eps)
        diag = chat + _diag_local(mesh, k)
        row = np.append(fc.d_hat, diag)
        scale = np.max(np.abs(row))

        j = np.arange(1, k)
        tj = tau[j - 1][:, None]
        x = tj * theta[None, :]
        e2 = np.exp(-(mesh.tstar[k - 1] - t[j])[:, None] * theta[None, :])
        rhs1 = eta / (1.0 + eta) * ((e2 * _phi0(x)) @ w)
        q1 = min(q1, float(np.min((fc.d_hat - rhs1) / scale)))
        q1d = min(q1d, (diag - _diag_local(mesh, k)) / scale)

        if k >= 3:
            jj = np.arange(2, k)
            tjj = tau[jj - 1][:, None]
            tjj1 = tau[jj][:, None]
            xx = tjj * theta[None, :]
            ee = np.exp(-(mesh.tstar[k - 1] - t[jj])[:, None]
                        * theta[None, :])
            rhs2 = ((ee * theta[None, :] * tjj / (tjj + tjj1)
                     * (tjj1 * _phi1(xx) + tjj * _phi2(xx))) @ w)
            lhs2 = fc.d_hat[1:] - fc.d_hat[:-1]
            q2 = min(q2, float(np.min((lhs2 - rhs2) / scale)))
        rhs2d = alpha / (2.0 * (1.0 - alpha) * (sig * tau[k - 1]) ** alpha)
        q2d = min(q2d, (diag - row[k - 2] - rhs2d + soe.eps) / scale)
        q3 = min(q3, ((1.0 - alpha) / sig * diag - row[k - 2]) / scale)

    tol = -1e-13
    q1_ok = q1 >= tol and q1d >= tol
    q2_ok = q2 >= tol and q2d >= tol
    q3_ok = q3 >= tol
    eps_ok = eps_margin >= 0.0
    passed = ratio_ok and dtcut_ok and eps_ok and q1_ok and q2_ok and q3_ok
    return QPropertyReport(n, ratio_ok, dtcut_ok, eps_ok,
                           float(eps_margin), q1, float(q1d), q2,
                           float(q2d), q3, q1_ok, q2_ok, q3_ok, passed)


def scalar_truncation_probe(mesh, soe, probe="talpha"):
    """Per-step operator error on a scalar function with known derivative.

    probe "talpha" uses u = t^alpha (fractional derivative identically
    Gamma(1+alpha)); "linear" uses u = t (derivative
    tstar^{1-alpha}/Gamma(2-alpha), reproduced to quadrature accuracy
    from the second step on; the sigma-free opening weight hits the
    endpoint derivative instead, leaving a small gap at index 0).
    """
    alpha = mesh.alpha
    if probe == "talpha":
        u = mesh.t ** alpha
        exact = np.full(mesh.n_steps, gamma(1.0 + alpha))
    elif probe == "linear":
        u = mesh.t.copy()
        exact = mesh.tstar ** (1.0 - alpha) / gamma(2.0 - alpha)
    else:
        raise ValueError("unknown probe %r" % (probe,))
    hist = init_history(soe)
    err = np.empty(mesh.n_steps)
    for k in range(1, mesh.n_steps + 1):
        if k >= 2:
            lc = local_fast_coeffs(mesh, soe, k)
            hist = history_update(hist, lc, u[k - 2], u[k - 1], u[k])
        val = apply_fast_op(mesh, soe, hist, u[k - 1], u[k])
        err[k - 1] = abs(val - exact[k - 1])
    return err
