"""Fast L2-1sigma Caputo discretization on nonuniform time meshes.

The history term of the fractional derivative is compressed into a
short sum of decaying exponentials, turning the O(N^2) convolution into
an O(N) recurrence while keeping the scheme's second-order accuracy and
its discrete positivity structure.
"""

from .soe import (SoeApprox, SoeCertificate, SoeBuildError,
                  build_soe, certify_soe, eval_soe, float_floor)
from .mesh import (TimeMesh, AdmissibilityReport, eta_root,
                   graded_mesh, hybrid_mesh,
                   check_psd_conditions, check_semilinear_tau)
from .quadrature import gk_batch, QuadratureError
from .fracops import (l21_coeffs, local_fast_coeffs, exp_moment,
                      apply_standard_op, apply_fast_op,
                      init_history, history_update)
from .stability import (BilinearMatrix, PsdCertificate, QPropertyReport,
                        f1_f2, assemble_bilinear, certify_psd,
                        verify_Q_properties, scalar_truncation_probe)
from .spatial import build_space, FdSpace, ChebSpace, interior_grid
from .timestepper import (LinearProblem, SemilinearProblem, RunConfig,
                          RunResult, TruncatedPotential, make_truncated,
                          run, splitmix_unit)
from .experiments import (ConvergenceTable, TimingProfile, LongtimeResult,
                          EnergyStudy, convergence_study, timing_bench,
                          longtime_study, energy_study, write_report)
from .cli import main as cli_main

__version__ = "0.1.0"

__all__ = [
    "SoeApprox", "SoeCertificate", "SoeBuildError",
    "build_soe", "certify_soe", "eval_soe", "float_floor",
    "TimeMesh", "AdmissibilityReport", "eta_root",
    "graded_mesh", "hybrid_mesh",
    "check_psd_conditions", "check_semilinear_tau",
    "gk_batch", "QuadratureError",
    "l21_coeffs", "local_fast_coeffs", "exp_moment",
    "apply_standard_op", "apply_fast_op",
    "init_history", "history_update",
    "BilinearMatrix", "PsdCertificate", "QPropertyReport",
    "f1_f2", "assemble_bilinear", "certify_psd",
    "verify_Q_properties", "scalar_truncation_probe",
    "build_space", "FdSpace", "ChebSpace", "interior_grid",
    "LinearProblem", "SemilinearProblem", "RunConfig", "RunResult",
    "TruncatedPotential", "make_truncated", "run", "splitmix_unit",
    "ConvergenceTable", "TimingProfile", "LongtimeResult", "EnergyStudy",
    "convergence_study", "timing_bench", "longtime_study", "energy_study",
    "write_report",
    "cli_main",
    "__version__",
]
