"""qmlc: circuit synthesis from measurement statistics.

Synthetic gate-set-tomography data from a simulated noisy device, a
permutation-invariant set encoder over circuit-token grids, hierarchical
variational diffusion (isotropic over set contexts, label-conditioned
anisotropic over token embeddings), and a closed loop that decodes
sampled embeddings into discrete circuits matching a target outcome
distribution.
"""

from .config import RunConfig
from .errors import QmlcError

__version__ = "0.1.0"

__all__ = ["RunConfig", "QmlcError", "__version__"]
