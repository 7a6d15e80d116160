"""Dynamic pricing for a single-server queue with balking customers.

The package simulates an M/G/1 queue whose customers observe the admission
price and the current workload and join with a state-dependent probability,
samples the resulting effective arrival process exactly, differentiates the
sample paths in the price, and runs a projected stochastic-gradient
controller that learns the revenue-maximizing price from effective arrivals
alone.  ``analysis`` adds the experiment harnesses (grid oracle, coupling,
bias/variance diagnostics, regret accounting) and ``cli`` the command-line
front end.
"""

from .joining import (
    ExponentialJoining,
    InterarrivalLaw,
    JoiningModel,
    NumericJoining,
    PolynomialJoining,
    contraction_factor_bound,
    xi_moment_bound,
)
from .service import Deterministic, Exponential, Gamma, ServiceDistribution, make_service
from .core import ArrivalEvent, QueueState, WindowRecord, run_arrivals, run_window, step
from .estimators import GradientEstimate, estimate_a, estimate_grad_a, estimate_psi_grad
from .sgd import (
    SgdConfig,
    SgdIteration,
    SgdTrace,
    log_schedule,
    power_schedule,
    project,
    run_sgd,
    sqrt_schedule,
)
from .analysis import (
    BiasVarianceRow,
    OracleGradient,
    CouplingReport,
    PsiCurve,
    RegretReport,
    bias_variance_diagnostic,
    compute_regret,
    estimate_psi_curve,
    run_coupling,
    service_study,
)

__version__ = "0.1.0"

__all__ = [
    "JoiningModel",
    "ExponentialJoining",
    "PolynomialJoining",
    "NumericJoining",
    "InterarrivalLaw",
    "xi_moment_bound",
    "contraction_factor_bound",
    "ServiceDistribution",
    "Exponential",
    "Gamma",
    "Deterministic",
    "make_service",
    "QueueState",
    "ArrivalEvent",
    "WindowRecord",
    "step",
    "run_window",
    "run_arrivals",
    "GradientEstimate",
    "estimate_a",
    "estimate_grad_a",
    "estimate_psi_grad",
    "SgdConfig",
    "SgdIteration",
    "SgdTrace",
    "project",
    "run_sgd",
    "log_schedule",
    "sqrt_schedule",
    "power_schedule",
    "PsiCurve",
    "CouplingReport",
    "BiasVarianceRow",
    "OracleGradient",
    "RegretReport",
    "estimate_psi_curve",
    "run_coupling",
    "bias_variance_diagnostic",
    "compute_regret",
    "service_study",
    "__version__",
]
