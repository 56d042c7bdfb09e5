"""Sum-of-exponentials compression of the power kernel t^(-alpha).

The builder discretizes the integral representation

    t^(-alpha) = 1/Gamma(alpha) * int_0^inf exp(-t s) s^(alpha-1) ds

with a Gauss-Jacobi rule on a singular cell [0, s0] and fixed-order
Gauss-Legendre rules on dyadic cells [s0 2^j, s0 2^(j+1)] up to a
tail cutoff. Cell orders are doubled individually until a dense-sample
certificate over the working window [dt_cut, t_soe] passes, then nodes
whose worst-case contribution fits in the certified slack are pruned.

Certificates report the raw absolute error max |t^(-alpha) - S(t)| and,
separately, a double-precision noise floor ~ eps_mach * t^(-alpha):
below that floor the absolute target is not representable, so builders
refine only down to quadrature-error level and stop.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gamma, roots_jacobi, roots_legendre

__all__ = [
    "SoeApprox", "SoeCertificate", "SoeBuildError",
    "build_soe", "eval_soe", "certify_soe", "float_floor",
]

_EPS_MACH = np.finfo(float).eps


class SoeBuildError(RuntimeError):
    """Raised when per-cell refinement cannot reach the certificate."""


@dataclass(frozen=True)
class SoeApprox:
    """Certified exponential-sum approximation of t^(-alpha).

    theta and weight are ascending, strictly positive node/weight arrays;
    the approximation targets absolute accuracy eps on [dt_cut, t_soe].
    """
    alpha: float
    eps: float
    dt_cut: float
    t_soe: float
    theta: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float)
        w = np.asarray(self.weight, dtype=float)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "weight", w)
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if not (0.0 < self.dt_cut < self.t_soe):
            raise ValueError("need 0 < dt_cut < t_soe")
        if th.shape != w.shape or th.ndim != 1:
            raise ValueError("theta/weight must be matching 1-d arrays")
        if th.size:
            if not (np.all(th > 0.0) and np.all(w > 0.0)):
                raise ValueError("nodes and weights must be positive")
            if not np.all(np.diff(th) > 0.0):
                raise ValueError("nodes must be strictly ascending")

    @property
    def nq(self) -> int:
        return self.theta.size

    def eval_kernel(self, t):
        return eval_soe(self, t)

    def save(self, path):
        lines = [f"{self.alpha:.17e} {self.eps:.17e} "
                 f"{self.dt_cut:.17e} {self.t_soe:.17e}"]
        for th, w in zip(self.theta, self.weight):
            lines.append(f"{th:.17e} {w:.17e}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            rows = [ln.split() for ln in fh if ln.strip()]
        alpha, eps, dt_cut, t_soe = (float(v) for v in rows[0])
        pairs = np.array([[float(a), float(b)] for a, b in rows[1:]])
        theta = pairs[:, 0] if pairs.size else np.empty(0)
        weight = pairs[:, 1] if pairs.size else np.empty(0)
        return cls(alpha, eps, dt_cut, t_soe, theta, weight)


@dataclass(frozen=True)
class SoeCertificate:
    eps: float
    n_samples: int
    max_err: float
    argmax_t: float
    passed: bool                # raw absolute test: max_err <= eps
    floor_at_argmax: float      # roundoff floor at the worst sample
    passed_with_floor: bool     # err(t) <= eps + floor(t) pointwise


def float_floor(alpha, t):
    """Double-precision noise floor for evaluating t^(-alpha) sums."""
    t = np.asarray(t, dtype=float)
    return 32.0 * _EPS_MACH * np.maximum(1.0, t ** (-alpha))


def eval_soe(soe, t):
    """Evaluate sum_l weight_l exp(-theta_l t), chunked to bound memory."""
    t = np.asarray(t, dtype=float)
    flat = np.atleast_1d(t).ravel()
    out = np.empty(flat.size)
    step = max(1, int(4e6 // max(soe.nq, 1)))
    for i in range(0, flat.size, step):
        blk = flat[i:i + step]
        out[i:i + step] = np.exp(-np.outer(blk, soe.theta)) @ soe.weight
    return out.reshape(np.atleast_1d(t).shape) if t.ndim else float(out[0])


def _sample_grid(dt_cut, t_soe, samples):
    return np.logspace(np.log10(dt_cut), np.log10(t_soe), samples)


def certify_soe(soe, samples=10_000):
    """Dense-sample certificate on a log grid over [dt_cut, t_soe]."""
    if samples < 100:
        raise ValueError("need at least 100 certification samples")
    t = _sample_grid(soe.dt_cut, soe.t_soe, samples)
    exact = t ** (-soe.alpha)
    err = np.abs(exact - eval_soe(soe, t))
    floor = float_floor(soe.alpha, t)
    i = int(np.argmax(err))
    return SoeCertificate(
        eps=soe.eps,
        n_samples=samples,
        max_err=float(err[i]),
        argmax_t=float(t[i]),
        passed=bool(err[i] <= soe.eps),
        floor_at_argmax=float(floor[i]),
        passed_with_floor=bool(np.all(err <= soe.eps + floor)),
    )


def _tail_cutoff(alpha, eps, dt_cut, ga):
    # Smallest S with s^(alpha-1) exp(-dt s) tail mass below eps/4.
    l0 = np.log(4.0 / (dt_cut * ga * eps))
    s = max(1.0, l0) / dt_cut
    for _ in range(4):
        s = max(1.0 / dt_cut, ((alpha - 1.0) * np.log(s) + l0) / dt_cut)
    return s


def _cell_nodes(alpha, s0, cells, ga):
    """Quadrature nodes/weights for the Jacobi cell and each dyadic cell.

    cells maps cell index -> order; index 0 is the singular cell [0, s0],
    index j >= 1 the dyadic cell [s0 2^(j-1), s0 2^j].
    """
    parts = []
    for j, q in cells.items():
        if j == 0:
            x, w = roots_jacobi(q, 0.0, alpha - 1.0)
            theta = 0.5 * s0 * (x + 1.0)
            wt = (0.5 * s0) ** alpha * w / ga
        else:
            c = s0 * 2.0 ** (j - 1)
            x, w = roots_legendre(q)
            theta = 0.5 * c * (x + 3.0)
            wt = 0.5 * c * w * theta ** (alpha - 1.0) / ga
        parts.append((theta, wt))
    theta = np.concatenate([p[0] for p in parts])
    wt = np.concatenate([p[1] for p in parts])
    order = np.argsort(theta)
    return theta[order], wt[order]


def _merge_close(theta, weight, rel=1e-14):
    if theta.size < 2:
        return theta, weight
    keep_t = [theta[0]]
    keep_w = [weight[0]]
    for th, w in zip(theta[1:], weight[1:]):
        if th - keep_t[-1] <= rel * th:
            keep_w[-1] += w
        else:
            keep_t.append(th)
            keep_w.append(w)
    return np.array(keep_t), np.array(keep_w)


def build_soe(alpha, eps, dt_cut, t_soe, max_doublings=5):
    """Construct a certified SoeApprox for t^(-alpha) on [dt_cut, t_soe].

    Raises SoeBuildError if per-cell order doubling (capped at
    max_doublings per cell) cannot reach the certificate.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    if not (0.0 < eps):
        raise ValueError("eps must be positive")
    if not (0.0 < dt_cut < t_soe):
        raise ValueError("need 0 < dt_cut < t_soe")

    ga = gamma(alpha)
    s_max = _tail_cutoff(alpha, eps, dt_cut, ga)
    s0_target = 1.0 / t_soe
    if s_max <= s0_target:
        n_dyadic = 0
        s0 = s_max
    else:
        n_dyadic = int(np.ceil(np.log2(s_max / s0_target)))
        s0 = s_max / 2.0 ** n_dyadic

    q0 = max(1, int(0.42 * np.log(1.0 / eps)))
    cells = {j: q0 for j in range(n_dyadic + 1)}

    t = _sample_grid(dt_cut, t_soe, 10_000)
    exact = t ** (-alpha)
    kern = np.maximum(1.0, exact)

    def _eval(theta, wt):
        out = np.empty(t.size)
        step = max(1, int(4e6 // max(theta.size, 1)))
        for i in range(0, t.size, step):
            out[i:i + step] = np.exp(-np.outer(t[i:i + step], theta)) @ wt
        return out

    # Refine until the absolute quadrature target eps/2 holds, or until
    # order doubling stops improving and the residual sits at the
    # double-precision plateau (relative error <= 32 eps_mach).
    prev_rel = np.inf
    prev_nodes = None
    for _ in range(40):
        theta, wt = _cell_nodes(alpha, s0, cells, ga)
        err = np.abs(exact - _eval(theta, wt))
        bad = err > 0.5 * eps
        if not bad.any():
            break
        rel = np.max(err[bad] / kern[bad])
        if rel <= 32.0 * _EPS_MACH and rel > prev_rel / 1.25:
            # Roundoff plateau: the last doubling bought nothing, so keep
            # the cheaper node set if it performed essentially as well.
            if prev_nodes is not None and prev_rel <= 1.3 * rel:
                theta, wt = prev_nodes
            break
        prev_rel = rel
        prev_nodes = (theta, wt)
        tb = t[bad]
        # Estimate each cell's own defect by comparing against its
        # order-doubled version on the failing samples. The threshold is
        # noise-aware: defects below the evaluation roundoff of the worst
        # failing sample cannot be acted on meaningfully.
        defects = {}
        for j, q in cells.items():
            if cells[j] >= q0 * 2 ** max_doublings:
                continue
            th1, w1 = _cell_nodes(alpha, s0, {j: q}, ga)
            th2, w2 = _cell_nodes(alpha, s0, {j: 2 * q}, ga)
            d = np.abs(np.exp(-np.outer(tb, th1)) @ w1
                       - np.exp(-np.outer(tb, th2)) @ w2)
            defects[j] = d.max()
        if not defects:
            raise SoeBuildError(
                "certification unreachable: all cells at order cap "
                f"(max err {err.max():.3e}, eps {eps:.3e})")
        cut = max(0.125 * eps, 4.0 * _EPS_MACH * kern[bad].max())
        cut /= n_dyadic + 1
        grew = False
        for j, d in defects.items():
            if d > cut:
                cells[j] += max(1, -(-cells[j] // 3))
                grew = True
        if not grew:
            j = max(defects, key=defects.get)
            cells[j] += max(1, -(-cells[j] // 3))
    else:
        raise SoeBuildError("cell refinement did not converge")

    theta, wt = _merge_close(theta, wt)
    err = np.abs(exact - _eval(theta, wt))

    # Prune nodes whose worst-case window contribution fits in the slack,
    # verifying each candidate set against a fresh dense sample.
    floor = float_floor(alpha, t)
    if np.all(err <= eps):
        slack = eps - err.max()
    else:
        slack = eps - max(np.max(err - floor), 0.0)
    budget = 0.9 * max(slack, 0.0)
    if budget > 0.0 and theta.size:
        contrib = wt * np.exp(-theta * dt_cut)
        order = np.argsort(contrib)
        csum = np.cumsum(contrib[order])
        ndrop = int(np.searchsorted(csum, budget, side="right"))
        ceiling = np.maximum(eps, err + floor)
        while ndrop:
            keep = np.ones(theta.size, dtype=bool)
            keep[order[:ndrop]] = False
            th2, w2 = theta[keep], wt[keep]
            if np.all(np.abs(exact - _eval(th2, w2)) <= ceiling):
                theta, wt = th2, w2
                break
            ndrop //= 2

    return SoeApprox(alpha, eps, dt_cut, t_soe, theta, wt)
