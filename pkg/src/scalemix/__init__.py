"""Bayesian classification with finite mixtures of multivariate scale
mixture (Student-t) models.

Per-class generative models are trained by variational inference with
conjugate Dirichlet and Gaussian-inverse-Wishart priors; redundant mixture
components prune themselves, the shared tail-weight parameter is selected
by held-out mutual information, and classification evaluates a closed-form
plug-in posterior predictive. A feature pipeline (rectification, low-pass
smoothing, windowed mean absolute value), dataset utilities, evaluation
metrics, and a command-line interface round out the package.
"""

from .data import (
    DataFormatError,
    FeatureDataset,
    SplitPlan,
    generate_simulation,
    load_csv,
    save_csv,
    split_by_trials,
    subsample,
)
from .density import (
    QuadratureError,
    StudentParams,
    log_marginal_density,
    log_marginal_density_batch,
    quadrature_marginal_density,
)
from .features import (
    FilterCoeffs,
    SignalBlock,
    butter2_coeffs,
    butterworth2_lowpass,
    first_order_coeffs,
    first_order_lowpass,
    mav_window,
    pipeline_rect_smooth,
    read_signal_csv,
    rectify,
)
from .metrics import (
    MetricsReport,
    Workload,
    accuracy,
    confusion_matrix,
    precision_recall,
    probability_of_superiority,
    time_stages,
)
from .model import (
    ClassModel,
    ComponentPosterior,
    LatentStatistics,
    PriorHyperparameters,
    TrainedClassifier,
    build_default_prior,
    classifier_from_dict,
    classifier_to_dict,
    load_model,
    save_model,
)
from .nu_select import (
    NuSearchConfig,
    conditional_entropy,
    default_nu_grid,
    select_nu,
    stratified_folds,
)
from .numerics import (
    CholeskyFactor,
    NotPositiveDefiniteError,
    cholesky,
    digamma,
    log_det,
    log_gamma,
    mahalanobis_sq,
    mahalanobis_sq_batch,
    multivariate_log_gamma,
)
from .predict import (
    ClassPosterior,
    class_log_predictive,
    class_posterior,
    classify,
    predict_batch,
    sample,
)
from .vb import (
    NumericalFailure,
    Responsibilities,
    VbConfig,
    e_step,
    elbo,
    expectations,
    fit,
    fit_ml_nu,
    m_step,
    prune,
    statistics,
)

__version__ = "0.1.0"
