"""Multiprecision experiments on Walsh-table rows, Hankel determinants and AAK errors."""

from .aak import AakSpectrum, aak_errors, bilinear_orthogonality_check, build_weighted_hankel, det_vs_product_check
from .errors import (
    CoefficientRangeError,
    ConfigError,
    ConvergenceError,
    DegenerateError,
    DimensionError,
    DomainError,
    NumericError,
    WalshLabError,
)
from .faber import ExteriorMap, FaberReduction, continuum_radii, faber_coeffs, level_curve
from .hankel import RadiusEstimate, big_hankel_det, hadamard_radii, hankel_det, hankel_matrix, verify_scaling_identity
from .numkernel import PrecisionContext, TruncatedSVD, fft, jacobi_svd, lu_det, truncated_svd
from .series import (
    CATALOG,
    CoefficientStream,
    EntirePart,
    FunctionSpec,
    MeromorphyProfile,
    Pole,
    Scalar,
    coeffs_from_samples,
    derive_profile,
    scale_series,
    taylor_coeffs,
)
from .walsh import (
    RateReport,
    WalshGrid,
    find_common_subsequence,
    hankel_quotient_rate,
    quotient_rate,
    scaled_product_rate,
    superdiagonal_product_rate,
    two_circle_comparison,
    walsh_grid,
)

__version__ = "0.1.0"
