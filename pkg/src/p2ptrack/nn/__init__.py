"""Minimal differentiable-kernel library on numpy."""
from p2ptrack.nn import functional
from p2ptrack.nn.accounting import count_params_flops
from p2ptrack.nn.checkpoint import load_checkpoint, save_checkpoint
from p2ptrack.nn.gradcheck import GradcheckReport, finite_diff_check
from p2ptrack.nn.layers import (
    BatchNorm,
    Conv1d,
    Conv2d,
    ConvBNReLU1d,
    ConvBNReLU2d,
    Linear,
    LinearBNReLU,
    Module,
    Sequential,
    count_parameters,
)
from p2ptrack.nn.optim import AdamW, OptimizerState, adamw_step
from p2ptrack.nn.tensor import Parameter, Tensor, backward, no_grad

__all__ = [
    "AdamW", "BatchNorm", "Conv1d", "Conv2d", "ConvBNReLU1d", "ConvBNReLU2d", "GradcheckReport",
    "Linear", "LinearBNReLU", "Module", "OptimizerState", "Parameter", "Sequential", "Tensor",
    "adamw_step", "backward", "count_parameters", "count_params_flops", "finite_diff_check",
    "functional", "load_checkpoint", "no_grad", "save_checkpoint",
]
