"""OLS inference on a few coefficients in linear models with many nuisance covariates."""

from .design import (
    AnnihilatorRep,
    DiagnosticsSummary,
    PruneReport,
    RegressionData,
    annihilator,
    drop_unit_leverage,
    leverage_diagnostics,
    prepare_design,
    prune_collinear,
)
from .exceptions import (
    CollinearityError,
    DesignError,
    DesignTooLargeError,
    HCKInfeasibleError,
    KappaSolveError,
    ManyCovError,
    NegativeVarianceError,
    UnitLeverageError,
)
from .inference import (
    IntervalEstimate,
    bootstrap_ci,
    gaussian_ci,
    normal_quantile,
    p_value,
    t_statistic,
)
from .regression import PartialledFit, fit_partialled
from .variance import (
    EstimatorKind,
    MeatEstimate,
    SandwichEstimate,
    compute_meat,
    meat_hc_diag,
    meat_hck,
    meat_ho,
    sandwich,
    solve_kappa_system,
)

__version__ = "0.1.0"
