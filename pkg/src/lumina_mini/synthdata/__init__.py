from .captions import (
    GRANULARITIES,
    PROMPT_LEN,
    Caption,
    apply_system_prompt,
    caption_scene,
    caption_words,
    pad_prompt,
    unconditional_tokens,
)
from .dataset import (
    DEFAULT_TIER_FRACTIONS,
    HierarchicalDataset,
    build_hierarchical_dataset,
    highest_tier,
    read_manifest,
    scene_seed,
    write_manifest,
)
from .scene import (
    COLOR_RGB,
    N_CLASSES,
    RESOLUTIONS,
    Scene,
    generate_scene,
    quality_score,
    render_scene,
)
from .vocab import (
    CELL_NAMES,
    COLOR_NAMES,
    SHAPE_NAMES,
    TEMPLATE_TOKENS,
    Vocabulary,
    build_vocabulary,
)

__all__ = [
    "Caption",
    "CELL_NAMES",
    "COLOR_NAMES",
    "COLOR_RGB",
    "DEFAULT_TIER_FRACTIONS",
    "GRANULARITIES",
    "HierarchicalDataset",
    "N_CLASSES",
    "PROMPT_LEN",
    "RESOLUTIONS",
    "SHAPE_NAMES",
    "Scene",
    "TEMPLATE_TOKENS",
    "Vocabulary",
    "apply_system_prompt",
    "build_hierarchical_dataset",
    "build_vocabulary",
    "caption_scene",
    "caption_words",
    "generate_scene",
    "highest_tier",
    "pad_prompt",
    "quality_score",
    "read_manifest",
    "render_scene",
    "scene_seed",
    "unconditional_tokens",
    "write_manifest",
]
