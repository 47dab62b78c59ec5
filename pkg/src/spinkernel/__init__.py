"""Quantum-kernel learning with simulated nuclear-spin dynamics."""
from .spinsim import (
    DEFAULT_DT,
    EncodingParams,
    SpinSystem,
    apply_collective_z,
    apply_dq_gate,
    draw_couplings,
    encode,
    encode_adjoint,
    encode_batch,
    evolve_segment,
    ground_state,
)
from .qkernel import (
    GramMatrix,
    MqSpectrum,
    cross_kernel,
    gram,
    kernel,
    kernel_profile_1d,
    kernel_vector,
    mq_spectrum,
    profile_fwhm,
    trace_kernel,
)
from .learners import (
    ConvergenceError,
    RegressionModel,
    SingularSystemError,
    SvmModel,
    hinge_loss,
    krr_fit,
    krr_predict,
    mse,
    select_lambda,
    svm_decision,
    svm_fit,
)

__version__ = "0.1.0"
