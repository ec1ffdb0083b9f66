"""Opportunistic ARQ spectrum sharing at finite blocklength.

Analytical model (``fbl``, ``arq``, ``optimizer``), slot-level simulator
(``sim``) and a CSV-emitting command line (``cli``).
"""

from .arq import (
    DelayPmf,
    LinkConfig,
    OutageProfile,
    TrafficModel,
    delay_pmf,
    derive_schedule,
    pu_outage_conditioned,
    pu_outage_overall,
    reach_probability,
    su_outage,
    su_outage_bounds,
    transmission_load,
)
from .optimizer import OptimizerConfig, SchemePowers, equal_access, optimize_access, scheme_powers

__version__ = "0.1.0"
