"""ARMA convolutional layers and receptive-field analysis.

The layer couples a standard (moving-average) convolution on its inputs with
convolutional constraints among its outputs (the autoregressive part), solved
exactly by frequency-domain division.  The package provides the forward and
analytic backward passes, a provably stable unconstrained parameterization of
the autoregressive filters, an effective-receptive-field toolkit with both
analytic and empirical radii, a small training harness, and a CLI.
"""

from .numerics import (
    DEFAULT_EPSILON,
    FftPlan,
    FieldTensor,
    MaKernel,
    SingularSpectrumError,
    SpectralTensor,
    circular_conv2,
    dft1,
    dft2,
    embed_kernel,
    idft1,
    idft2,
    spectral_divide,
)
from .filters import (
    FilterZeros,
    Length3Filter,
    ReparamFilter,
    SeparableArKernel,
    compose_1d,
    is_stable,
    materialize,
    materialize_2d,
    reparam_gradient,
    zeros_of,
)
from .arma import (
    ArGradients,
    ArmaLayerParams,
    LayerCache,
    ar_backward,
    ar_forward,
    ar_forward_dense,
    arma_backward,
    arma_forward,
    ma_backward,
    ma_forward,
)
from .erf import (
    ErfMap,
    LayerSpec1D,
    LinearNetSpec,
    WraparoundError,
    analytic_radius_arma,
    effective_filter_1d,
    empirical_erf_1d,
    empirical_erf_2d,
    erf_axis_variance,
    erf_radius,
    layer_moments,
)
from .training import (
    ToyTask,
    TrainConfig,
    TrainTrace,
    finite_diff_grad,
    learned_coefficient_summary,
    train,
)

__version__ = "0.1.0"
