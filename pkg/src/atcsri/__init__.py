"""Speaker-role identification for air-traffic-control radio.

Text, speech, and multimodal classifiers that label each transmission as
coming from the controller or the pilot, built on a small reverse-mode
autodiff engine.
"""

from .tensor import Tensor, Parameter, astensor, no_grad, backward, reset_tape
from .tensor import AutodiffError, TapeConsumedError

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "Parameter",
    "astensor",
    "no_grad",
    "backward",
    "reset_tape",
    "AutodiffError",
    "TapeConsumedError",
    "__version__",
]
