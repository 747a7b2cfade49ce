"""Ground states, gradient flow and bubble decompositions for ``du/dt = Delta u - f(u)``."""
from .reaction import Nonlinearity, check_hypotheses
from .ground_state import RadialProfile, decay_report, shoot
from .field import BoxGrid, RadialGrid, energy, make_field, sample_bubble
from .flow import Event, FlowState, dissipation_residual, run
from .bubbles import MBubble, best_match, interaction_g, solve_weights
from .spectral import assemble_Q, constrained_coercivity, spectrum
from .threshold import bisect_threshold, near_threshold_profile_check
from .geometry import SeparationCert, separate, verify

__version__ = "0.1.0"

__all__ = [
    "Nonlinearity", "check_hypotheses", "RadialProfile", "decay_report", "shoot",
    "BoxGrid", "RadialGrid", "energy", "make_field", "sample_bubble",
    "Event", "FlowState", "dissipation_residual", "run",
    "MBubble", "best_match", "interaction_g", "solve_weights",
    "assemble_Q", "constrained_coercivity", "spectrum",
    "bisect_threshold", "near_threshold_profile_check",
    "SeparationCert", "separate", "verify",
]
