"""Study drivers behind the benchmark tables and long-horizon figures.

convergence_study   graded-mesh error tables (max-over-steps L2/H1) with
                    observed orders between adjacent step counts
timing_bench        wall-clock scaling of the fast vs standard operator,
                    plus quadrature-node counts over eps and dt sweeps
longtime_study      gradient-norm tracking far past the kernel window,
                    with a bounded/growing verdict
energy_study        discrete energy series for the damped sine problem
                    and the truncated double-well problem

Every driver is deterministic for a fixed config. Table runs can fan out
over a process pool (jobs > 1); that changes wall time only, never
values. Each result object exposes passed plus lines() for the report.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma

from .mesh import check_semilinear_tau, graded_mesh, hybrid_mesh
from .soe import build_soe
from .timestepper import (LinearProblem, RunConfig, SemilinearProblem,
                          make_truncated, run)

__all__ = [
    "EPS_SOE", "T_SOE",
    "poly_linear_problem", "poly_semilinear_problem",
    "sine_semilinear_problem", "sine_decay_problem", "allen_cahn_problem",
    "longtime_source", "longtime_mesh", "capped_growth_mesh",
    "ConvergenceRow", "ConvergenceTable", "convergence_study",
    "TimingProfile", "timing_bench",
    "LongtimeResult", "longtime_study", "gradient_verdict",
    "EnergySeries", "EnergyStudy", "energy_study",
    "write_report",
]

EPS_SOE = 1e-12
T_SOE = 1.0


# ---------------------------------------------------------------- problems

def poly_linear_problem(alpha, with_exact=True):
    """Diffusion driven so the solution is t^alpha (x^2-1)(y^2-1)."""
    ga = gamma(1.0 + alpha)

    def exact(t, x, y):
        return t ** alpha * (x * x - 1.0) * (y * y - 1.0)

    def source(t, x, y):
        return (ga * (x * x - 1.0) * (y * y - 1.0)
                - 2.0 * t ** alpha * (x * x + y * y - 2.0))

    return LinearProblem(source=source, exact=exact if with_exact else None)


def poly_semilinear_problem(alpha):
    """Same polynomial solution with a sin(u) reaction folded in.

    Both spatial backends represent the solution exactly, so measured
    errors are pure time-discretization error.
    """
    base = poly_linear_problem(alpha)

    def source(t, x, y):
        return base.source(t, x, y) - np.sin(base.exact(t, x, y))

    return SemilinearProblem(
        f=lambda u: -np.sin(u), fprime=lambda u: -np.cos(u),
        potential=np.cos, nu2=1.0, source=source, exact=base.exact,
        lipschitz=1.0)


def sine_semilinear_problem(alpha):
    """Reaction-diffusion with exact solution t^alpha sin(pi x) sin(pi y)."""
    ga = gamma(1.0 + alpha)

    def shape(x, y):
        return np.sin(np.pi * x) * np.sin(np.pi * y)

    def exact(t, x, y):
        return t ** alpha * shape(x, y)

    def source(t, x, y):
        u = exact(t, x, y)
        return ga * shape(x, y) + 2.0 * np.pi ** 2 * u - np.sin(u)

    return SemilinearProblem(
        f=lambda u: -np.sin(u), fprime=lambda u: -np.cos(u),
        potential=np.cos, nu2=1.0, source=source, exact=exact,
        lipschitz=1.0)


def sine_decay_problem():
    """Undriven sin(u) reaction-diffusion, nu^2 = 0.01, sine initial data."""
    return SemilinearProblem(
        f=lambda u: -np.sin(u), fprime=lambda u: -np.cos(u),
        potential=np.cos, nu2=0.01,
        u0=lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y),
        lipschitz=1.0)


def _double_well(u):
    return 0.25 * (u * u - 1.0) ** 2


def allen_cahn_problem(truncated=True, energy_original=False):
    """Double-well phase-field problem with small random initial data.

    truncated=True uses the globally Lipschitz flattened nonlinearity
    (bound 1); energy_original reports the untruncated well energy while
    still stepping the truncated dynamics, for overlay comparisons.
    """
    if truncated:
        tp = make_truncated(1.0)
        return SemilinearProblem(
            f=tp.f, fprime=tp.fprime, potential=tp.potential, nu2=0.01,
            u0="random", lipschitz=tp.lipschitz,
            energy_potential=_double_well if energy_original else None)
    return SemilinearProblem(
        f=lambda u: u ** 3 - u, fprime=lambda u: 3.0 * u * u - 1.0,
        potential=_double_well, nu2=0.01, u0="random", lipschitz=None)


def longtime_source(name):
    """Space-constant forcings for the long-horizon runs.

    f1 grows linearly in amplitude; f2 is bounded with bounded variation;
    zero turns the forcing off entirely.
    """
    if name == "f1":
        return lambda t, x, y: t * np.sin(0.2 * t) * np.ones_like(x)
    if name == "f2":
        return lambda t, x, y: (5.0 * np.exp(-0.0005 * t)
                                * np.sin(0.005 * t) * np.ones_like(x))
    if name == "zero":
        return None
    raise ValueError("unknown longtime source %r (f1 | f2 | zero)" % (name,))


def longtime_mesh(alpha, horizon=2000.0):
    """100 steps graded with exponent 2/alpha to t=1, then 0.5% growth
    per step capped at 0.2."""
    return hybrid_mesh(100, 2.0 / alpha, 1.0, 1.005, 0.2, horizon, alpha)


def capped_growth_mesh(alpha, horizon=300.0):
    """100 cubically graded steps to t=0.1, then 1% growth capped at 0.02."""
    return hybrid_mesh(100, 3.0, 0.1, 1.01, 0.02, horizon, alpha)


# ------------------------------------------------------------- convergence

_PROBLEMS = {
    "linear": poly_linear_problem,
    "semilinear_poly": poly_semilinear_problem,
    "semilinear_sine": sine_semilinear_problem,
}


@dataclass(frozen=True)
class ConvergenceRow:
    alpha: float
    r: float
    n: int
    err_l2: float
    err_h1: float
    order_l2: float     # nan on the first n of each r sweep
    order_h1: float


@dataclass
class ConvergenceTable:
    problem: str
    alpha: float
    backend: str
    n_space: int
    rows: list
    order_tol: float = 0.1

    def block(self, r):
        return [w for w in self.rows if abs(w.r - r) < 1e-12]

    @property
    def r_values(self):
        out = []
        for w in self.rows:
            if not any(abs(w.r - r) < 1e-12 for r in out):
                out.append(w.r)
        return out

    def last_pair_orders(self, r):
        blk = self.block(r)
        return blk[-1].order_l2, blk[-1].order_h1

    @property
    def passed(self):
        ok = True
        for r in self.r_values:
            target = min(r * self.alpha, 2.0)
            ol2, oh1 = self.last_pair_orders(r)
            ok &= abs(ol2 - target) <= self.order_tol
            ok &= abs(oh1 - target) <= self.order_tol
        return bool(ok)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("alpha,r,n,err_l2,order_l2,err_h1,order_h1\n")
            for w in self.rows:
                fh.write("%.6g,%.10g,%d,%.10e,%.6f,%.10e,%.6f\n"
                         % (w.alpha, w.r, w.n, w.err_l2, w.order_l2,
                            w.err_h1, w.order_h1))

    def lines(self):
        out = ["convergence problem=%s alpha=%.2f backend=%s n_space=%d"
               % (self.problem, self.alpha, self.backend, self.n_space)]
        for r in self.r_values:
            target = min(r * self.alpha, 2.0)
            for w in self.block(r):
                out.append("  r=%-7.4g N=%-5d l2=%.4e ord=%6.4f   "
                           "h1=%.4e ord=%6.4f"
                           % (w.r, w.n, w.err_l2, w.order_l2,
                              w.err_h1, w.order_h1))
            ol2, oh1 = self.last_pair_orders(r)
            ok = (abs(ol2 - target) <= self.order_tol
                  and abs(oh1 - target) <= self.order_tol)
            out.append("  r=%-7.4g largest-pair orders l2=%.4f h1=%.4f "
                       "target=%.4f tol=%.2f: %s"
                       % (r, ol2, oh1, target, self.order_tol,
                          "pass" if ok else "FAIL"))
        return out


def _table_run(problem, alpha, r, n, backend, n_space):
    mesh = graded_mesh(n, r, 1.0, alpha)
    soe = build_soe(alpha, EPS_SOE, mesh.sigma * mesh.tau[1], T_SOE)
    res = run(RunConfig(mesh, soe, _PROBLEMS[problem](alpha),
                        backend=backend, n_space=n_space))
    return res.max_l2_err, res.max_h1_err


def _table_run_star(key):
    return _table_run(*key)


def convergence_study(alpha, r_list=None, n_list=None, problem="linear",
                      backend="cheb", n_space=24, jobs=1,
                      cache=None) -> ConvergenceTable:
    """Error table over graded meshes for each grading exponent in r_list.

    cache maps (problem, alpha, r, n, backend, n_space) to the error
    pair; pass one dict across studies to share runs between overlapping
    tables.
    """
    if problem not in _PROBLEMS:
        raise ValueError("unknown problem %r; have %s"
                         % (problem, sorted(_PROBLEMS)))
    if r_list is None:
        r_list = (1.0 / alpha, 2.0 / alpha, 3.0 / alpha)
    if n_list is None:
        n_list = (100, 200, 400, 800, 1600)
    n_list = sorted(int(n) for n in n_list)
    if cache is None:
        cache = {}
    keys = [(problem, float(alpha), float(r), n, backend, n_space)
            for r in r_list for n in n_list]
    todo = [k for k in keys if k not in cache]
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for key, out in zip(todo, pool.map(_table_run_star, todo)):
                cache[key] = out
    else:
        for key in todo:
            cache[key] = _table_run(*key)

    rows = []
    for r in r_list:
        prev = None
        for n in n_list:
            el2, eh1 = cache[(problem, float(alpha), float(r), n,
                              backend, n_space)]
            if prev is None:
                ol2 = oh1 = float("nan")
            else:
                ratio = math.log(n / prev[0])
                ol2 = math.log(prev[1] / el2) / ratio
                oh1 = math.log(prev[2] / eh1) / ratio
            rows.append(ConvergenceRow(float(alpha), float(r), n,
                                       el2, eh1, ol2, oh1))
            prev = (n, el2, eh1)
    return ConvergenceTable(problem, float(alpha), backend, n_space, rows)


# ------------------------------------------------------------------ timing

@dataclass
class TimingProfile:
    alpha: float
    r: float
    n_list: list
    fast_seconds: list
    standard_seconds: list
    fast_slope: float
    standard_slope: float
    nq_eps: list        # (eps, nq) pairs at dt = 1e-5
    nq_dt: list         # (dt, nq) pairs at eps = 1e-13
    fast_slope_max: float = 1.25
    standard_slope_min: float = 1.7

    @property
    def nq_eps_monotone(self):
        # eps listed decreasing, so nq must be nondecreasing
        nq = [q for _, q in self.nq_eps]
        return all(b >= a for a, b in zip(nq, nq[1:]))

    @property
    def nq_dt_monotone(self):
        nq = [q for _, q in self.nq_dt]
        return all(b >= a for a, b in zip(nq, nq[1:]))

    @property
    def passed(self):
        return bool(self.fast_slope <= self.fast_slope_max
                    and self.standard_slope >= self.standard_slope_min
                    and self.nq_eps_monotone and self.nq_dt_monotone)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("n,fast_seconds,standard_seconds\n")
            for n, tf, ts in zip(self.n_list, self.fast_seconds,
                                 self.standard_seconds):
                fh.write("%d,%.6e,%.6e\n" % (n, tf, ts))

    def nq_to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("sweep,param,nq\n")
            for e, q in self.nq_eps:
                fh.write("eps,%.3e,%d\n" % (e, q))
            for d, q in self.nq_dt:
                fh.write("dt,%.3e,%d\n" % (d, q))

    def lines(self):
        out = ["timing alpha=%.2f r=%g" % (self.alpha, self.r)]
        for n, tf, ts in zip(self.n_list, self.fast_seconds,
                             self.standard_seconds):
            out.append("  N=%-5d fast=%8.3fs standard=%8.3fs" % (n, tf, ts))
        out.append("  fast slope %.3f (max %.2f): %s"
                   % (self.fast_slope, self.fast_slope_max,
                      "pass" if self.fast_slope <= self.fast_slope_max
                      else "FAIL"))
        out.append("  standard slope %.3f (min %.2f): %s"
                   % (self.standard_slope, self.standard_slope_min,
                      "pass" if self.standard_slope
                      >= self.standard_slope_min else "FAIL"))
        out.append("  nodes vs eps %s, nodes vs dt %s"
                   % ("nondecreasing" if self.nq_eps_monotone else "FAIL",
                      "nondecreasing" if self.nq_dt_monotone else "FAIL"))
        return out


def _loglog_slope(ns, ts):
    return float(np.polyfit(np.log(np.asarray(ns, dtype=float)),
                            np.log(np.asarray(ts, dtype=float)), 1)[0])


def timing_bench(alpha=0.5, n_list=(1000, 2000, 4000, 8000), r=1.5,
                 backend="cheb", n_space=9, repeats=1,
                 eps_sweep=None, dt_sweep=None) -> TimingProfile:
    """Time the marching loop with both operator modes on one problem.

    The grid is kept small so the fractional-sum work dominates. Only
    loop_time is compared (mesh, kernel build, and space setup excluded).
    repeats > 1 takes the median loop time.
    """
    prob = poly_linear_problem(alpha, with_exact=False)
    n_list = [int(n) for n in n_list]
    times = {"fast": [], "standard": []}
    for n in n_list:
        mesh = graded_mesh(n, r, 1.0, alpha)
        soe = build_soe(alpha, EPS_SOE, mesh.sigma * mesh.tau[1], T_SOE)
        for op in ("fast", "standard"):
            cfg = RunConfig(mesh, soe, prob, backend=backend,
                            n_space=n_space, operator=op, diag_every=n,
                            admissibility="skip")
            samples = sorted(run(cfg).loop_time for _ in range(repeats))
            times[op].append(samples[len(samples) // 2])

    if eps_sweep is None:
        eps_sweep = tuple(10.0 ** -k for k in range(4, 14))
    if dt_sweep is None:
        dt_sweep = tuple(10.0 ** -k for k in range(1, 10))
    nq_eps = [(e, build_soe(alpha, e, 1e-5, T_SOE).nq) for e in eps_sweep]
    nq_dt = [(d, build_soe(alpha, 1e-13, d, T_SOE).nq) for d in dt_sweep]

    return TimingProfile(
        alpha=alpha, r=r, n_list=n_list,
        fast_seconds=times["fast"], standard_seconds=times["standard"],
        fast_slope=_loglog_slope(n_list, times["fast"]),
        standard_slope=_loglog_slope(n_list, times["standard"]),
        nq_eps=nq_eps, nq_dt=nq_dt)


# --------------------------------------------------------------- long time

def gradient_verdict(series, slack=1.05):
    """bounded/growing call from the recorded gradient-norm series.

    The run counts as bounded when the second half of the series never
    exceeds the first-half maximum by more than the slack factor.
    """
    h1 = np.asarray(series["h1semi"], dtype=float)
    if h1.size < 2:
        raise ValueError("series too short for a verdict")
    half = h1.size // 2
    m1 = float(h1[:half].max())
    m2 = float(h1[half:].max())
    verdict = "bounded" if m2 < slack * m1 else "growing"
    return verdict, m1, m2


@dataclass
class LongtimeResult:
    source: str
    alpha: float
    horizon: float
    verdict: str
    first_half_max: float
    second_half_max: float
    result: object

    @property
    def expected(self):
        return "growing" if self.source == "f1" else "bounded"

    @property
    def passed(self):
        return self.verdict == self.expected

    def lines(self):
        return [
            "longtime source=%s alpha=%.2f horizon=%g steps=%d"
            % (self.source, self.alpha, self.horizon, self.result.n_steps),
            "  grad-norm max first half %.6e second half %.6e"
            % (self.first_half_max, self.second_half_max),
            "  verdict %s (expected %s): %s"
            % (self.verdict, self.expected,
               "pass" if self.passed else "FAIL"),
        ]


def longtime_study(source="f2", alpha=0.5, horizon=2000.0, backend="cheb",
                   n_space=9, diag_every=1,
                   admissibility="warn") -> LongtimeResult:
    """Linear run far past the kernel window with sine initial data."""
    mesh = longtime_mesh(alpha, horizon)
    soe = build_soe(alpha, EPS_SOE, mesh.sigma * mesh.tau[1], T_SOE)
    prob = LinearProblem(
        source=longtime_source(source),
        u0=lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    res = run(RunConfig(mesh, soe, prob, backend=backend, n_space=n_space,
                        diag_every=diag_every, admissibility=admissibility))
    verdict, m1, m2 = gradient_verdict(res.series)
    return LongtimeResult(source, alpha, float(horizon), verdict,
                          m1, m2, res)


# ------------------------------------------------------------------ energy

@dataclass
class EnergySeries:
    alpha: float
    e0: float
    max_e: float
    final_e: float
    bounded: bool       # max over the series <= e0 + 1e-10
    tau_ok: bool        # step-size admissibility for the Lipschitz bound
    result: object


@dataclass
class EnergyStudy:
    problem: str
    horizon: float
    runs: dict          # alpha -> EnergySeries
    comparison: dict    # truncated/untruncated overlay, or None
    bound_slack: float = 1e-10
    overlay_tol: float = 0.01

    @property
    def passed(self):
        ok = all(s.bounded for s in self.runs.values() if s.tau_ok)
        if self.comparison is not None:
            ok &= self.comparison["rel_gap"] <= self.overlay_tol
        return bool(ok)

    def lines(self):
        out = ["energy problem=%s horizon=%g" % (self.problem, self.horizon)]
        for a in sorted(self.runs):
            s = self.runs[a]
            status = ("pass" if s.bounded else "FAIL") if s.tau_ok \
                else ("observed" if s.bounded else "violated")
            out.append("  alpha=%.2f E0=%.8e maxE=%.8e finalE=%.8e "
                       "tau_ok=%s bound: %s"
                       % (a, s.e0, s.max_e, s.final_e, s.tau_ok, status))
        if self.comparison is not None:
            c = self.comparison
            out.append("  overlay alpha=%.2f max gap %.3e (%.4f%% of E0, "
                       "tol %.1f%%): %s"
                       % (c["alpha"], c["gap"], 100.0 * c["rel_gap"],
                          100.0 * self.overlay_tol,
                          "pass" if c["rel_gap"] <= self.overlay_tol
                          else "FAIL"))
        return out

    def comparison_to_csv(self, path):
        if self.comparison is None:
            raise ValueError("study ran without an overlay comparison")
        rt, rp = self.comparison["runs"]
        with open(path, "w") as fh:
            fh.write("k,t,energy_truncated,energy_untruncated\n")
            for k, t, et, ep in zip(rt.series["k"], rt.series["t"],
                                    rt.series["energy"],
                                    rp.series["energy"]):
                fh.write("%d,%.10e,%.17e,%.17e\n" % (k, t, et, ep))


def energy_study(problem="allen_cahn", alpha_list=None, horizon=300.0,
                 backend="cheb", n_space=9, seed=42, diag_every=1,
                 compare_alpha=0.8, bound_slack=1e-10) -> EnergyStudy:
    """Energy series on the capped-growth mesh, kernel window 300.

    For the double-well problem the run uses the truncated nonlinearity;
    compare_alpha adds a pair of runs (truncated vs untruncated
    dynamics) reporting the untruncated well energy for both.
    """
    if problem == "sine":
        alphas = tuple(alpha_list) if alpha_list else (0.3, 0.5, 0.7)
        make_problem = sine_decay_problem
        compare_alpha = None
    elif problem == "allen_cahn":
        alphas = tuple(alpha_list) if alpha_list else (0.4, 0.6, 0.8)
        make_problem = allen_cahn_problem
    else:
        raise ValueError("unknown energy problem %r (sine | allen_cahn)"
                         % (problem,))

    def _cfg(a, prob, mesh, soe):
        return RunConfig(mesh, soe, prob, backend=backend,
                         n_space=n_space, seed=seed, diag_every=diag_every,
                         admissibility="skip")

    runs = {}
    for a in alphas:
        mesh = capped_growth_mesh(a, horizon)
        soe = build_soe(a, EPS_SOE, mesh.sigma * mesh.tau[1], 300.0)
        prob = make_problem()
        tau_rep = check_semilinear_tau(mesh, prob.lipschitz, EPS_SOE)
        res = run(_cfg(a, prob, mesh, soe))
        e = res.series["energy"]
        runs[a] = EnergySeries(
            alpha=a, e0=float(e[0]), max_e=float(np.max(e)),
            final_e=float(e[-1]),
            bounded=bool(np.max(e) <= e[0] + bound_slack),
            tau_ok=bool(tau_rep.passed), result=res)

    comparison = None
    if compare_alpha is not None:
        mesh = capped_growth_mesh(compare_alpha, horizon)
        soe = build_soe(compare_alpha, EPS_SOE,
                        mesh.sigma * mesh.tau[1], 300.0)
        rt = run(_cfg(compare_alpha,
                      allen_cahn_problem(energy_original=True), mesh, soe))
        rp = run(_cfg(compare_alpha,
                      allen_cahn_problem(truncated=False), mesh, soe))
        gap = float(np.max(np.abs(rt.series["energy"]
                                  - rp.series["energy"])))
        e0 = float(rt.series["energy"][0])
        comparison = {"alpha": compare_alpha, "gap": gap, "e0": e0,
                      "rel_gap": gap / abs(e0), "runs": (rt, rp)}

    return EnergyStudy(problem, float(horizon), runs, comparison,
                       bound_slack=bound_slack)


# ------------------------------------------------------------------ report

def write_report(path, sections):
    """Flatten lines() output of several studies into report.txt.

    Returns True when no line carries a FAIL marker.
    """
    lines = []
    for sec in sections:
        lines.extend(sec)
        lines.append("")
    text = "\n".join(lines)
    ok = "FAIL" not in text
    lines.append("overall: %s" % ("pass" if ok else "FAIL"))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return ok
