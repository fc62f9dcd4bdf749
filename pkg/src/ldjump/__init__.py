"""Large-deviation machinery for jump Markov processes in periodic media.

Pipeline: jump kernels -> rate fields -> skewed torus operators -> principal
eigenvalues -> Hamiltonians -> Lagrangians -> path rate functionals, plus an
exact thinning simulator with exponential tilting for verifying the predicted
decay rates at desk scale.
"""

from .kernels import (
    JumpKernel,
    GeneralizedGaussianKernel,
    BoxKernel,
    TabulatedKernel,
    KernelError,
    EnvelopeError,
)
from .environment import RateField, FrozenPairField, FieldBoundError
from .torus import (
    TorusGrid,
    SkewedOperatorMatrix,
    SpectralResult,
    assemble,
    principal_eig,
    theta_grad,
    theta_hess,
    effective_coeffs,
)
from .hamiltonian import Hamiltonian, FlatBranchError
from .legendre import LagrangianValue, lagrangian, l_t, tail_diagnostic
from .path_rate import Path, RateReport, rate, path_distance, effective_flow
from .simulate import (
    SimConfig,
    Trajectory,
    HalfspaceEvent,
    BallEvent,
    TubeEvent,
    AlwaysEvent,
    simulate,
    estimate_event,
)

__version__ = "0.1.0"
