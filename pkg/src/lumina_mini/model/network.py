"""The full network: token/patch embedding, processors, joint blocks, output head.

forward() maps (text tokens, image, timestep) to a velocity field with the
same shape as the image. Text goes through the token table and text-processor
blocks (no timestep conditioning); the image is patchified, embedded and run
through image-processor blocks; the two are concatenated into one sequence
for the joint blocks; the image positions are projected back to patch pixels.

forward_batch() is the throughput path: it runs several samples through every
layer at once. All prompts in a batch must share one length (callers pad with
the dedicated pad token), so no attention mask is needed and token coordinates
are shared batch-wide.
"""

from __future__ import annotations

import numpy as np

from ..errors import DataError, ShapeError, UsageError
from ..numerics import Tensor, concat, embedding, matmul, ones, rms_norm
from .blocks import block_batch, timestep_embedding_batch, _modulation
from .params import ParamStore
from .rope import assign_coords


def patchify(image: Tensor, patch_size: int) -> Tensor:
    """[c, H, W] -> [(H/p)(W/p), c*p*p] with row-major patch ordering."""
    c, h, w = image.shape
    return _patchify_batch(image.reshape(1, c, h, w), patch_size).reshape(
        (h // patch_size) * (w // patch_size), c * patch_size * patch_size
    )


def unpatchify(tokens: Tensor, channels: int, height: int, width: int, patch_size: int) -> Tensor:
    """Exact inverse of patchify."""
    n, d = tokens.shape
    return _unpatchify_batch(
        tokens.reshape(1, n, d), channels, height, width, patch_size
    ).reshape(channels, height, width)


def _patchify_batch(images: Tensor, p: int) -> Tensor:
    b, c, h, w = images.shape
    if h % p or w % p:
        raise ShapeError(f"image extents ({h},{w}) not divisible by patch size {p}")
    x = images.reshape(b, c, h // p, p, w // p, p)
    x = x.transpose(0, 2, 4, 1, 3, 5)  # [b, rows, cols, c, p, p]
    return x.reshape(b, (h // p) * (w // p), c * p * p)


def _unpatchify_batch(tokens: Tensor, c: int, h: int, w: int, p: int) -> Tensor:
    b = tokens.shape[0]
    x = tokens.reshape(b, h // p, w // p, c, p, p)
    x = x.transpose(0, 3, 1, 4, 2, 5)  # [b, c, rows, p, cols, p]
    return x.reshape(b, c, h, w)


def forward_batch(
    token_rows,
    images: Tensor,
    ts,
    store: ParamStore,
    t_emb: Tensor | None = None,
) -> Tensor:
    """Velocity predictions for a batch. token_rows must share one length."""
    cfg = store.config
    rows_list = [list(r) for r in token_rows]
    if not isinstance(images, Tensor):
        images = Tensor(np.asarray(images), "f32")
    b, c, h, w = images.shape
    if len(rows_list) != b:
        raise UsageError(f"{len(rows_list)} prompts for a batch of {b} images")
    text_len = len(rows_list[0])
    if any(len(r) != text_len for r in rows_list):
        raise UsageError("all prompts in a batch must share one padded length")
    for r in rows_list:
        if any(tok < 0 or tok >= cfg.vocab_size for tok in r):
            raise DataError(f"token id outside vocabulary of size {cfg.vocab_size}: {r}")
    if c != cfg.channels:
        raise ShapeError(f"expected {cfg.channels} channels, got {c}")
    ts = np.asarray(ts, dtype=np.float64).reshape(-1)
    if ts.size != b:
        raise UsageError(f"{ts.size} timesteps for a batch of {b} images")
    if ts.min() < 0.0 or ts.max() > 1.0:
        raise UsageError(f"timestep outside [0, 1]: {ts}")
    p = cfg.patch_size
    if h % p or w % p:
        raise ShapeError(f"image extents ({h},{w}) not divisible by patch size {p}")
    prows, pcols = h // p, w // p

    if t_emb is None:
        t_emb = timestep_embedding_batch(ts, store)
    coords = assign_coords(text_len, prows, pcols)

    # Text path: token table then plain sandwich blocks, no timestep.
    txt = None
    if text_len:
        txt = embedding(store["tok_emb.w"], np.asarray(rows_list, dtype=np.int64))
        for i in range(cfg.text_processor_layers):
            txt = block_batch(txt, coords[:text_len], store, f"text_proc.{i}", None)

    # Image path: patch embedding then timestep-conditioned blocks.
    img = matmul(_patchify_batch(images, p), store["patch_emb.w"]) + store["patch_emb.b"]
    for i in range(cfg.image_processor_layers):
        img = block_batch(img, coords[text_len:], store, f"img_proc.{i}", t_emb)

    # Joint single-stream blocks over the concatenated sequence.
    x = concat([txt, img], axis=1) if txt is not None else img
    for i in range(cfg.layers):
        x = block_batch(x, coords, store, f"blocks.{i}", t_emb)

    # Output head: modulated norm then linear back to patch pixels.
    x_img = x.narrow(1, text_len, prows * pcols)
    shift, scale = _modulation(t_emb, store, "final.ada", 2)
    gain = ones(cfg.dim, dtype=x_img.dtype)
    hidden = rms_norm(x_img, gain, cfg.rmsnorm_eps) * (scale + 1.0) + shift
    patches = matmul(hidden, store["final.proj.w"]) + store["final.proj.b"]
    return _unpatchify_batch(patches, c, h, w, p)


def forward(
    text_tokens,
    image: Tensor,
    t: float,
    store: ParamStore,
    t_emb: Tensor | None = None,
) -> Tensor:
    """Predicted velocity for one sample. Output shape equals image shape."""
    if not isinstance(image, Tensor):
        image = Tensor(np.asarray(image), "f32")
    if image.ndim != 3:
        raise ShapeError(f"expected a [c, H, W] image, got {image.shape}")
    if not 0.0 <= float(t) <= 1.0:
        raise UsageError(f"timestep {t} outside [0, 1]")
    if t_emb is not None:
        t_emb = t_emb.reshape(1, store.config.dim)
    out = forward_batch([list(text_tokens)], image.reshape(1, *image.shape), [t], store, t_emb)
    return out.reshape(image.shape)
