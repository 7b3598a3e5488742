"""Parameter and multiply-add accounting."""
from __future__ import annotations

from p2ptrack.nn.functional import count_macs
from p2ptrack.nn.layers import count_parameters
from p2ptrack.nn.tensor import no_grad


def count_params_flops(model, *example_inputs):
    """(parameter count, forward multiply-adds) for one forward on ``example_inputs``.

    Multiply-adds cover linear and convolution kernels only and are summed over
    the batch, so pass batch-1 inputs for per-sample figures.
    """
    was_training = model.training
    model.eval()
    try:
        with no_grad(), count_macs() as counter:
            model(*example_inputs)
    finally:
        model.train(was_training)
    return count_parameters(model), counter.total
