"""Free induction decay in dipolar-coupled spin-1/2 lattices: exact quantum and classical engines."""
__version__ = "0.1.0"

from .analysis import FidTrace, Spectrum, fit_abragam, first_zero, spectrum  # noqa: E402
from .chaos import LyapunovSeries, lyapunov  # noqa: E402
from .classical import (ClassicalSpinState, InitialDistributionSpec, IntegrationControls,  # noqa: E402
                        integrate, integrate_rotating_secular, initial_state)
from .geometry import SpinGeometry, build_cubic, build_explicit, cluster_geometry  # noqa: E402
from .quantum import QuantumConfig, run_quantum  # noqa: E402

__all__ = [
    "FidTrace", "Spectrum", "fit_abragam", "first_zero", "spectrum",
    "LyapunovSeries", "lyapunov",
    "ClassicalSpinState", "InitialDistributionSpec", "IntegrationControls",
    "integrate", "integrate_rotating_secular", "initial_state",
    "SpinGeometry", "build_cubic", "build_explicit", "cluster_geometry",
    "QuantumConfig", "run_quantum",
]
