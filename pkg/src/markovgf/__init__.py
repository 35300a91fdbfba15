"""Loss landscape and gradient-flow dynamics of a rank-one single-layer
transformer trained on first-order binary Markov chains.

Modules:

* :mod:`markovgf.markov` - kernel, stationary law, entropies, sampling
* :mod:`markovgf.canonical` - the (e, w[, b]) model: loss, gradients,
  Hessians, critical sets, energy and basin prediction
* :mod:`markovgf.attention` - the (e, w, a[, b]) model with linear attention
* :mod:`markovgf.flow` - gradient-flow integration and basin sweeps
* :mod:`markovgf.oracle` - full d-dimensional model, finite differences,
  Monte-Carlo loss
* :mod:`markovgf.checks` - the verification suite behind ``markovgf verify``
"""

__version__ = "0.1.0"

from .attention import Params3, attn_classify, attn_energy, attn_grad, attn_loss
from .canonical import (
    E_SAD,
    BasinClass,
    BiasedParams,
    CriticalClass,
    Params2,
    basin,
    classify_critical,
    energy,
    grad,
    loss,
    loss_with_bias,
    optimal_bias,
    predicted_limit,
    saddle_contour,
)
from .errors import (
    AmbiguousClass,
    DegenerateKernel,
    DimensionMismatch,
    DomainError,
    EnergyViolation,
    HessianUndefined,
    MarkovGFError,
    NegativeRadicand,
    NoBracket,
    NonFinite,
)
from .flow import FlowConfig, LimitReport, TerminatedBy, Trajectory, basin_sweep, integrate2d, integrate3d, verify_trajectory
from .markov import SwitchKernel, binary_entropy, entropy_rate, marginal_entropy, sample_sequence, stationary
