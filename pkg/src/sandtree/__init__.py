"""sandtree: exact samplers and tail-exponent estimation for the 3D
uniform spanning tree, the 0-wired spanning forest and the Abelian
sandpile on wired lattice boxes."""

from ._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
