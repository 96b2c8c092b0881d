"""lumina-mini: a desk-scale single-stream flow-matching text-to-image stack.

Subpackages:
    numerics    dense tensors with reverse-mode autodiff
    model       the single-stream joint-attention transformer
    flow        rectified-flow objectives
    sampler     ODE samplers, guidance, caching, NFE accounting
    synthdata   procedural compositional scenes, captions, tiers
    trainer     staged training, AdamW, checkpoints, metrics
    evalharness prompt-adherence oracle and experiment runners
"""

__version__ = "0.1.0"
