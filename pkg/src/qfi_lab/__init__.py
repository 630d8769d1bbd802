"""Quadratic first integrals of constrained autonomous systems.

Differential geometry on jets, symmetry certificates, first-integral builders,
an adaptive integrator with drift monitors, scenario reproductions and a CLI.
"""

from .errors import QfiLabError
from .geometry import Domain, Field, Metric
from .qfi import ConstrainedSystem, QfiSpec
from .scenarios import SCENARIOS, ScenarioReport

__all__ = ["ConstrainedSystem", "Domain", "Field", "Metric", "QfiLabError", "QfiSpec", "SCENARIOS",
           "ScenarioReport"]
__version__ = "0.1.0"
