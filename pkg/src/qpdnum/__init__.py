"""Quantized primal-dual iterations for network utility maximization.

Simulation of the quantized PD dynamics, a zoom-in optimum-achieving codec
with exact bit accounting, and the entropy-power and lattice-counting lower
bounds on how fast any such scheme can converge.
"""
from .errors import *  # noqa: F401,F403
from .problem import GeneralConcave, NumProblem, Optimum, Quadratic, ValidatedProblem, solve_optimum, validate
from .pd import (
    PdState,
    StepSchedule,
    TMatrix,
    build_t_matrix,
    contraction_constant,
    error_vector,
    quantized_step,
    unquantized_step,
)
from .quantize import (
    PassthroughScheme,
    QaScheme,
    RateLedger,
    StaticUniformScheme,
    passthrough_codec,
    qa_decode,
    qa_encode,
    qa_init,
    rate_summary,
    static_uniform_codec,
)
from .lattice import build_box, count_exact, count_upper
from .bounds import (
    BoundReport,
    InitialDistribution,
    dde_bound_combined,
    dde_bound_dual,
    dde_bound_pd,
    dde_bound_primal,
    dde_bound_zoomin,
    entropy_uniform_box,
    msd_bound_curves,
    msd_bound_dual,
    msd_bound_pd,
    msd_bound_primal,
)
from .sim import ExperimentConfig, empirical_dde, monte_carlo, run_trial

__version__ = "0.1.0"
