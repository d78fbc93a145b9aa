from .core import Module, Parameter, ShapeError, MissingCacheError, generator
from .layers import (
    Conv1d,
    CausalSelfAttention,
    Embedding,
    FeedForward,
    KernelKind,
    KernelSpec,
    LayerNorm,
    Linear,
    SiLU,
    SoftmaxCrossEntropy,
    build_kernel,
)
from .optim import FreezeSchedule, Mode, optimizer_step
from .gradcheck import grad_check, GradCheckResult, NonFiniteLossError
from .transformer import Transformer, sinusoid_table
