"""Two-stream image-to-image translation (content stream, style stream, FADE
generator, multi-scale patch discriminator) on a small numpy autodiff core."""

from .networks import MultiScaleDiscriminator, NetConfig, TwoStreamGenerator
from .tensor import NonFiniteError, Tensor, no_grad
from .train import TrainConfig, Trainer

__all__ = ["MultiScaleDiscriminator", "NetConfig", "NonFiniteError", "Tensor", "TrainConfig",
           "Trainer", "TwoStreamGenerator", "no_grad"]
__version__ = "0.1.0"
