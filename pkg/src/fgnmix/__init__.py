"""Long-memory Gaussian time series with a linear-cost Markov approximation.

Exact fractional Gaussian noise tools (O(n^2) Toeplitz recursions) next
to an AR(1)-mixture representation whose joint precision matrix is banded,
giving O(n) likelihoods, conditionals, samples and forecasts.
"""
from .ar1fit import (
    Ar1Mixture,
    CoeffTable,
    FitResult,
    build_table,
    fit_single,
    load_packaged_table,
    mixture_acf,
)
from .errors import (
    BreakdownError,
    DataFormatError,
    DegenerateDataError,
    DomainError,
    FitError,
    NotPositiveDefiniteError,
)
from .exact import (
    HurstParams,
    conditional_exact,
    dense_conditional,
    fgn_acf,
    h_to_hurst,
    hurst_to_h,
    loglik_exact,
    simulate_exact,
    trench_inverse,
)
from .gmrf import (
    KAPPA_DEFAULT,
    BandedCholesky,
    BandedPrecision,
    ConditionResult,
    assemble_precision,
    band_marginal_variances,
    band_quadform,
    cholesky_banded,
    condition,
    logdet,
    sample,
    solve,
)
from .inference import (
    Decomposition,
    MleResult,
    PredictionReport,
    ReplicationStudy,
    decompose,
    gaussian_kld,
    kld,
    loglik_approx,
    mle,
    predict,
    prediction_error_study,
    replication_study,
)
from .observation import ObservationModel

__version__ = "0.1.0"
