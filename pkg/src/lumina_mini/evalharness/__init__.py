from .adherence import AdherenceReport, adherence_eval, binomial_ci
from .classify import classify_image
from .experiments import (
    AblationRow,
    DEFAULT_GRID,
    caption_length_experiment,
    ffn_equivalence_suite,
    inference_ablation,
    write_ablation_csv,
)

__all__ = [
    "AblationRow",
    "AdherenceReport",
    "DEFAULT_GRID",
    "adherence_eval",
    "binomial_ci",
    "caption_length_experiment",
    "classify_image",
    "ffn_equivalence_suite",
    "inference_ablation",
    "write_ablation_csv",
]
