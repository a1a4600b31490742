"""Outage probability and ergodic rate of cell-free massive MIMO uplinks with MRC."""

from .config import ConfigError, PilotMode, PilotModeError, SystemConfig, Topology
from .deployment import Deployment, generate_deployment
from .channel import EstimationStats, PilotBook, build_pilot_book, draw_channels, estimation_stats
from .moments import MomentSet, moments_general, moments_mmimo, moments_npc
from .lognormal import (LogNormalParams, fit_lognormal, outage_lognormal, rate_bounds, rate_lognormal,
                        rate_uatf)
from .udr import (HypoExpParams, hypoexp_cdf, outage_exact_smallcase, outage_mmimo_closed_form,
                  outage_udr)
from .sinr_sim import MonteCarloResult, run_monte_carlo
from .experiment import ExperimentSpec, run_experiment

__version__ = "1.0.0"
