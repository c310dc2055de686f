"""Multi-region MFD traffic model with system-optimal routing and neural congestion tolls."""

__version__ = "0.1.0"

from .demand import DemandProfile, Trapezoid  # noqa: E402
from .network import MfdPolynomial, NetworkSpec, RegionParams, Topology  # noqa: E402

__all__ = ["DemandProfile", "MfdPolynomial", "NetworkSpec", "RegionParams", "Topology", "Trapezoid", "__version__"]
