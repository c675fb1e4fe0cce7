"""Embodied scene description on procedural grid rooms: pick where to look,
describe what is seen, and score how well the description fits the view."""

from .config import ExperimentConfig, load_config
from .gridscene import Action, Pose, Scene, generate_scene, load_scene
from .harness import run_experiment, run_pipeline
from .lexicon import Lexicon, build_lexicon
from .perception import NoiseConfig, Observation, observe
from .policy import PolicyParams
from .scoring import ScoringConfig, score_map, viewpoint_score

__version__ = "0.1.0"
