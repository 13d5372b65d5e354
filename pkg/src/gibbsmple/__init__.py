"""Maximum pseudolikelihood inference for exponential-family marked Gibbs point processes."""

from .errors import (
    ConfigurationError,
    GibbsError,
    IdentifiabilityError,
    IllConditioned,
    InfeasibleData,
    InvalidInput,
    InvalidParameter,
    MisalignedWindow,
    ModelDataMismatch,
    NumericError,
    PatternParseError,
    WindowTooSmall,
)
from .geometry import Window, added_disc_area, cell_index, cell_partition, disc_overlap_area, knn_graph
from .inference import (
    FitOptions,
    FitResult,
    confidence_intervals,
    fit_mple,
    gnz_residual,
    identifiability_diagnostic,
    sandwich_covariance,
    sigma_hat,
)
from .models import (
    FAMILIES,
    ModelSpec,
    global_statistics,
    local_energy,
    local_statistics,
    stability_bound,
    validate_theta,
)
from .patterns import MarkedPoint, MarkSpace, PointPattern, erode_window, read_pattern, restrict, write_pattern
from .pseudolikelihood import cell_gradients, lpl, lpl_gradient, lpl_hessian
from .quadrature import QuadratureScheme, build_quadrature, integrate_papangelou
from .simulate import SimConfig, simulate_mh

__version__ = "0.1.0"
