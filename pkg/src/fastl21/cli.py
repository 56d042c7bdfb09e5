"""Command-line front end binding TOML configs to solver runs and studies.

Subcommand tree:

    soe build | certify        kernel compression artifacts
    mesh make | check          time meshes and admissibility reports
    psd verify                 finite-n positivity certificate
    run linear | semilinear    one labeled trajectory, series CSV out
    study convergence | timing | longtime | energy

Exit codes: 0 when the command succeeds and every check it performed
passed, 1 when a check failed, 2 on usage errors (bad flags, unknown
config keys, malformed TOML).
"""

import argparse
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:          # 3.10: same API from the backport
    import tomli as tomllib

from .soe import SoeApprox, build_soe, certify_soe, SoeBuildError
from .mesh import (TimeMesh, graded_mesh, hybrid_mesh,
                   check_psd_conditions, check_semilinear_tau)
from .stability import assemble_bilinear, certify_psd
from .timestepper import RunConfig, run
from .experiments import (EPS_SOE, T_SOE,
                          poly_linear_problem, poly_semilinear_problem,
                          sine_semilinear_problem, sine_decay_problem,
                          allen_cahn_problem, convergence_study,
                          timing_bench, longtime_study, energy_study,
                          write_report)

__all__ = ["main", "load_config", "dump_config", "UsageError"]


class UsageError(ValueError):
    pass


# Every key a config file may carry, with the coercion applied to it.
# Lists hold homogeneous scalars; `None` entries mean "leave as parsed".
_KEY_TYPES = {
    "study": str, "problem": str, "source": str, "kind": str,
    "alpha": float, "r": float, "t_end": float, "horizon": float,
    "growth": float, "tau_max": float, "t_graded_end": float,
    "eps": float, "t_soe": float, "dt_cut": float,
    "lipschitz": float, "compare_alpha": float,
    "n": int, "n_space": int, "n_graded": int, "n_mat": int,
    "seed": int, "diag_every": int, "repeats": int, "jobs": int,
    "backend": str, "operator": str, "out": str,
    "alpha_list": list, "r_list": list, "n_list": list,
}


def load_config(path):
    """Parse a TOML config, rejecting keys outside the schema."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    cfg = {}
    for key, val in raw.items():
        if key not in _KEY_TYPES:
            raise UsageError("unknown config key %r" % key)
        want = _KEY_TYPES[key]
        if want is list:
            if not isinstance(val, list):
                raise UsageError("config key %r must be a list" % key)
            cfg[key] = list(val)
        else:
            cfg[key] = want(val)
    return cfg


def _toml_scalar(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    raise UsageError("cannot serialize %r" % (v,))


def dump_config(cfg):
    """Serialize a config dict back to TOML (sorted keys, flat table)."""
    lines = []
    for key in sorted(cfg):
        val = cfg[key]
        if isinstance(val, (list, tuple)):
            body = ", ".join(_toml_scalar(x) for x in val)
            lines.append("%s = [%s]" % (key, body))
        else:
            lines.append("%s = %s" % (key, _toml_scalar(val)))
    return "\n".join(lines) + "\n"


def _merged(args):
    """Config-file values overridden by explicitly set CLI flags."""
    cfg = dict(args.config) if args.config else {}
    for key in _KEY_TYPES:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _outdir(cfg):
    out = cfg.get("out", "out")
    os.makedirs(out, exist_ok=True)
    return out


def _build_mesh(cfg):
    kind = cfg.get("kind", "graded")
    alpha = cfg.get("alpha", 0.5)
    if kind == "graded":
        return graded_mesh(cfg.get("n", 100), cfg.get("r", 2.0 / alpha),
                           cfg.get("t_end", 1.0), alpha)
    if kind == "hybrid":
        return hybrid_mesh(cfg.get("n_graded", 100),
                           cfg.get("r", 2.0 / alpha),
                           cfg.get("t_graded_end", 1.0),
                           cfg.get("growth", 1.005),
                           cfg.get("tau_max", 0.2),
                           cfg.get("horizon", 2000.0), alpha)
    raise UsageError("mesh kind must be 'graded' or 'hybrid'")


def _build_soe(cfg, mesh):
    alpha = mesh.alpha
    eps = cfg.get("eps", EPS_SOE)
    dt_cut = cfg.get("dt_cut", mesh.sigma * mesh.tau[1])
    t_soe = cfg.get("t_soe", T_SOE)
    return build_soe(alpha, eps, dt_cut, t_soe)


def _print(lines):
    for ln in lines:
        print(ln)


# ---------------------------------------------------------------- soe --

def _cmd_soe_build(args):
    cfg = _merged(args)
    alpha = cfg.get("alpha", 0.5)
    eps = cfg.get("eps", EPS_SOE)
    dt_cut = cfg.get("dt_cut", 1e-5)
    t_soe = cfg.get("t_soe", T_SOE)
    try:
        soe = build_soe(alpha, eps, dt_cut, t_soe)
    except SoeBuildError as exc:
        print("build failed: %s" % exc, file=sys.stderr)
        return 1
    out = _outdir(cfg)
    path = os.path.join(out, "soe_alpha%g_eps%g.txt" % (alpha, eps))
    soe.save(path)
    print("alpha=%g eps=%g dt_cut=%g t_soe=%g nq=%d" %
          (alpha, eps, dt_cut, t_soe, soe.nq))
    print("saved %s" % path)
    return 0


def _cmd_soe_certify(args):
    cfg = _merged(args)
    if getattr(args, "infile", None):
        soe = SoeApprox.load(args.infile)
    else:
        soe = build_soe(cfg.get("alpha", 0.5), cfg.get("eps", EPS_SOE),
                        cfg.get("dt_cut", 1e-5), cfg.get("t_soe", T_SOE))
    cert = certify_soe(soe)
    print("nq=%d samples=%d" % (soe.nq, cert.n_samples))
    print("max_err=%.6e at t=%.6e (eps=%.1e)" %
          (cert.max_err, cert.argmax_t, cert.eps))
    print("passed=%s passed_with_floor=%s" %
          (cert.passed, cert.passed_with_floor))
    return 0 if cert.passed_with_floor else 1


# --------------------------------------------------------------- mesh --

def _cmd_mesh_make(args):
    cfg = _merged(args)
    mesh = _build_mesh(cfg)
    out = _outdir(cfg)
    path = os.path.join(out, "mesh_%s_alpha%g.txt" %
                        (cfg.get("kind", "graded"), mesh.alpha))
    mesh.save(path)
    print("steps=%d t_end=%.6e tau_min=%.6e tau_max=%.6e" %
          (mesh.n_steps, mesh.t_end, mesh.tau.min(), mesh.tau.max()))
    print("saved %s" % path)
    return 0


def _cmd_mesh_check(args):
    cfg = _merged(args)
    mesh = _build_mesh(cfg)
    soe = _build_soe(cfg, mesh)
    rep = check_psd_conditions(mesh, soe)
    _print(rep.lines())
    ok = rep.passed
    if cfg.get("lipschitz") is not None:
        rep2 = check_semilinear_tau(mesh, cfg["lipschitz"], soe.eps)
        _print(rep2.lines())
        ok = ok and rep2.passed
    return 0 if ok else 1


# ---------------------------------------------------------------- psd --

def _cmd_psd_verify(args):
    cfg = _merged(args)
    mesh = _build_mesh(cfg)
    soe = _build_soe(cfg, mesh)
    n_mat = min(cfg.get("n_mat", 64), mesh.n_steps)
    cert = certify_psd(assemble_bilinear(mesh, soe, n_mat))
    _print(cert.lines())
    return 0 if cert.passed else 1


# ---------------------------------------------------------------- run --

_SEMILINEAR = {
    "poly": lambda a: poly_semilinear_problem(a),
    "sine": lambda a: sine_semilinear_problem(a),
    "decay": lambda a: sine_decay_problem(),
    "allen_cahn": lambda a: allen_cahn_problem(),
}


def _cmd_run(args):
    cfg = _merged(args)
    alpha = cfg.get("alpha", 0.5)
    if args.equation == "linear":
        prob = poly_linear_problem(alpha)
        label = "linear"
    else:
        name = cfg.get("problem", "poly")
        if name not in _SEMILINEAR:
            raise UsageError("semilinear problem must be one of %s"
                             % sorted(_SEMILINEAR))
        prob = _SEMILINEAR[name](alpha)
        label = "semilinear_%s" % name
    mesh = _build_mesh(cfg)
    operator = cfg.get("operator", "fast")
    soe = _build_soe(cfg, mesh) if operator == "fast" else None
    rc = RunConfig(mesh=mesh, soe=soe, problem=prob,
                   backend=cfg.get("backend", "cheb"),
                   n_space=cfg.get("n_space", 24),
                   operator=operator,
                   diag_every=cfg.get("diag_every", 1),
                   seed=cfg.get("seed", 42))
    res = run(rc)
    out = _outdir(cfg)
    path = os.path.join(out, "series_%s_alpha%g.csv" % (label, alpha))
    res.save_series(path)
    print("steps=%d loop=%.3fs" % (res.n_steps, res.loop_time))
    if np.isfinite(res.max_l2_err):
        print("max_l2_err=%.6e max_h1_err=%.6e" %
              (res.max_l2_err, res.max_h1_err))
    print("saved %s" % path)
    return 0


# -------------------------------------------------------------- study --

def _cmd_study(args):
    cfg = _merged(args)
    out = _outdir(cfg)
    name = args.kind_study
    if cfg.get("study") not in (None, name):
        raise UsageError("config selects study %r but command line says %r"
                         % (cfg["study"], name))

    if name == "convergence":
        alpha = cfg.get("alpha", 0.3)
        table = convergence_study(alpha,
                                  r_list=cfg.get("r_list"),
                                  n_list=cfg.get("n_list"),
                                  problem=cfg.get("problem", "linear"),
                                  backend=cfg.get("backend", "cheb"),
                                  n_space=cfg.get("n_space", 24),
                                  jobs=cfg.get("jobs", 1))
        table.to_csv(os.path.join(out, "convergence_alpha%g.csv" % alpha))
        sections = [table.lines()]
    elif name == "timing":
        prof = timing_bench(alpha=cfg.get("alpha", 0.5),
                            n_list=tuple(cfg.get("n_list",
                                                 (1000, 2000, 4000, 8000))),
                            r=cfg.get("r", 1.5),
                            backend=cfg.get("backend", "cheb"),
                            n_space=cfg.get("n_space", 9),
                            repeats=cfg.get("repeats", 1))
        prof.to_csv(os.path.join(out, "timing.csv"))
        prof.nq_to_csv(os.path.join(out, "soe_nodes.csv"))
        sections = [prof.lines()]
    elif name == "longtime":
        res = longtime_study(source=cfg.get("source", "f2"),
                             alpha=cfg.get("alpha", 0.5),
                             horizon=cfg.get("horizon", 2000.0),
                             backend=cfg.get("backend", "cheb"),
                             n_space=cfg.get("n_space", 9),
                             diag_every=cfg.get("diag_every", 1))
        res.result.save_series(os.path.join(
            out, "longtime_%s.csv" % res.source))
        sections = [res.lines()]
    else:
        study = energy_study(problem=cfg.get("problem", "allen_cahn"),
                             alpha_list=cfg.get("alpha_list"),
                             horizon=cfg.get("horizon", 300.0),
                             backend=cfg.get("backend", "cheb"),
                             n_space=cfg.get("n_space", 9),
                             seed=cfg.get("seed", 42),
                             diag_every=cfg.get("diag_every", 1))
        for a, srs in sorted(study.runs.items()):
            srs.result.save_series(os.path.join(
                out, "energy_%s_alpha%g.csv" % (study.problem, a)))
        if study.comparison is not None:
            study.comparison_to_csv(os.path.join(out, "energy_overlay.csv"))
        sections = [study.lines()]

    ok = write_report(os.path.join(out, "report.txt"), sections)
    _print(sections[0])
    print("report: %s" % os.path.join(out, "report.txt"))
    return 0 if ok else 1


# --------------------------------------------------------------- wiring --

def _add_common(p):
    p.add_argument("--config", type=str, default=None, metavar="PATH")
    p.add_argument("--out", type=str, default=None, metavar="DIR")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--backend", choices=("fd", "cheb"), default=None)
    p.add_argument("--operator", choices=("fast", "standard"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--t-soe", dest="t_soe", type=float, default=None)
    p.add_argument("--dt-cut", dest="dt_cut", type=float, default=None)
    p.add_argument("--kind", choices=("graded", "hybrid"), default=None)
    p.add_argument("--t-end", dest="t_end", type=float, default=None)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--n-space", dest="n_space", type=int, default=None)
    p.add_argument("--problem", type=str, default=None)
    p.add_argument("--source", type=str, default=None)
    p.add_argument("--lipschitz", type=float, default=None)
    p.add_argument("--n-mat", dest="n_mat", type=int, default=None)
    p.add_argument("--diag-every", dest="diag_every", type=int, default=None)


def build_parser():
    top = argparse.ArgumentParser(
        prog="fastl21",
        description="Nonuniform-mesh Caputo solvers with compressed history")
    sub = top.add_subparsers(dest="group", required=True)

    p_soe = sub.add_parser("soe", help="kernel compression")
    soe_sub = p_soe.add_subparsers(dest="action", required=True)
    pb = soe_sub.add_parser("build")
    _add_common(pb)
    pb.set_defaults(func=_cmd_soe_build)
    pc = soe_sub.add_parser("certify")
    _add_common(pc)
    pc.add_argument("--in", dest="infile", type=str, default=None)
    pc.set_defaults(func=_cmd_soe_certify)

    p_mesh = sub.add_parser("mesh", help="time meshes")
    mesh_sub = p_mesh.add_subparsers(dest="action", required=True)
    pm = mesh_sub.add_parser("make")
    _add_common(pm)
    pm.set_defaults(func=_cmd_mesh_make)
    pk = mesh_sub.add_parser("check")
    _add_common(pk)
    pk.set_defaults(func=_cmd_mesh_check)

    p_psd = sub.add_parser("psd", help="positivity certificates")
    psd_sub = p_psd.add_subparsers(dest="action", required=True)
    pv = psd_sub.add_parser("verify")
    _add_common(pv)
    pv.set_defaults(func=_cmd_psd_verify)

    p_run = sub.add_parser("run", help="single trajectory")
    run_sub = p_run.add_subparsers(dest="equation", required=True)
    for eq in ("linear", "semilinear"):
        pr = run_sub.add_parser(eq)
        _add_common(pr)
        pr.set_defaults(func=_cmd_run, equation=eq)

    p_study = sub.add_parser("study", help="paper-scale studies")
    study_sub = p_study.add_subparsers(dest="kind_study", required=True)
    for st in ("convergence", "timing", "longtime", "energy"):
        ps = study_sub.add_parser(st)
        _add_common(ps)
        ps.set_defaults(func=_cmd_study, kind_study=st)

    return top


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:          # argparse handles usage/help itself
        return int(exc.code or 0)
    try:
        if args.config is not None:
            args.config = load_config(args.config)
        return args.func(args)
    except UsageError as exc:
        print("error: %s" % exc, file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    except (OSError, tomllib.TOMLDecodeError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
