"""Radio map prediction at desk scale.

Subpackages: autodiff tensor core (`tensor`), transformer blocks
(`layers`), urban scene synthesis (`scene`), ray-launching ground truth
(`oracle`), the prediction model and its ablation variants (`model`),
training and metrics (`training`), binary formats (`dataio`), and the
command-line interface (`cli`).
"""

__version__ = "0.1.0"

from .tensor import RngState, Tensor

__all__ = ["RngState", "Tensor", "__version__"]
