"""deimlab: POD/DEIM reduced-order modelling with learned sampling and neural ODEs.

Submodules are imported on demand so that ``deimlab.cli`` can set thread
limits before numpy is loaded.
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
