"""Kernel distances between probability measures via random fields.

The same squared distance is computed three ways: kernel double
expectations, expected squared pairings with sampled Gaussian fields, and
weighted Fourier quadrature of empirical characteristic functions.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    KernelDistError,
    NumericalError,
    SingularityError,
    UnsupportedKernelError,
    ValidationError,
)
from .measures import (  # noqa: E402
    DiscretePMF,
    EmpiricalMeasure,
    Gaussian1D,
    MultivariateStudentT,
    PerturbedGaussian1D,
    PointMass,
    SeedSpec,
    build_student_scale,
    empirical_cdf_diff_l2,
    empirical_char_fn,
    sample_distribution,
)
from .kernels import AdditiveL1, Discrete, Fractional, GreenGFF, RieszGFF, kernel_eval, kernel_psd_check  # noqa: E402
from .fields import (  # noqa: E402
    FBM,
    AdditiveBM,
    DiscreteField,
    FieldRealization,
    GFFNeumann1D,
    pair_field_density,
    pair_field_empirical,
    sample_fbm_grid_1d,
    sample_field_at,
    sample_gff_series,
)
from .estimators import (  # noqa: E402
    DistanceEstimate,
    additive_distance,
    biased_kernel_distance,
    discrete_distance,
    field_mc_distance,
    fourier_distance_1d,
    gaussian_energy_oracle,
    unbiased_kernel_distance,
    v_statistic_distance,
)
from .spectral import c_h_constant, moment_condition_check, phi_eval  # noqa: E402
