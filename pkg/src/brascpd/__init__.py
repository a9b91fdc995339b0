"""Block-randomized stochastic proximal gradient for dense CPD."""

__version__ = "0.1.0"

from .errors import ConfigError, DimensionError, DivergedError, FormatError, MetricError, ResourceError
from .tensor import (
    DenseTensor,
    FactorModel,
    FiberIndex,
    decode_fiber,
    encode_fiber,
    entry_at,
    fiber_at,
    full_mttkrp,
    kr_rows,
)
from .sampling import BatchSchedule, SamplerState, sample_fibers, sample_mode
from .gradient import block_lipschitz, full_block_gradient, stochastic_block_gradient
from .prox import Regularizer, apply_prox
from .metrics import TraceRecord, cost, mse, snr_sigma
from .solvers import (
    SolverConfig,
    SolverState,
    StepSchedule,
    StoppingRule,
    ada_step,
    als_update,
    bras_step,
    proximal_safeguard,
    run,
)
from .data import SyntheticSpec, generate, load_model, load_tensor, save_model, save_tensor
