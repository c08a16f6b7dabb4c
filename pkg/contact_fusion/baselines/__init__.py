from contact_fusion.baselines.mechanics import MechanicsModel, mechanics_model, mechanics_model_for
from contact_fusion.baselines.thresholding import ReferenceState, proximity_only, tactile_only

__all__ = [
    "MechanicsModel",
    "ReferenceState",
    "mechanics_model",
    "mechanics_model_for",
    "proximity_only",
    "tactile_only",
]
