"""Text-to-image attention rewritten as a dynamically generated FFN.

With image tokens X [L_img, d] and text tokens Y [L_text, d], single-head
cross-attention equals

    softmax(X @ W1(Y)) @ W2(Y)
    W1(Y) = W_Q @ (Y @ W_K)^T / sqrt(d_k)   [d, L_text]
    W2(Y) = Y @ W_V                         [L_text, d]

i.e. an FFN whose weights are generated from the text and whose hidden width
IS the text length. Both routes are kept: the FFN form and the directly
computed cross-attention, so each can check the other.
"""

from __future__ import annotations

import math

from ..numerics import Tensor, matmul, softmax_lastdim


def dynamic_ffn_weights(y: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor):
    """(W1, W2) generated from text tokens y. W1 has one column per text token."""
    d_k = w_q.shape[1]
    w1 = matmul(w_q, matmul(y, w_k).transpose(1, 0)) * (1.0 / math.sqrt(d_k))
    w2 = matmul(y, w_v)
    return w1, w2


def attention_as_ffn(x: Tensor, y: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor) -> Tensor:
    """Cross-attention computed through the generated-FFN form."""
    w1, w2 = dynamic_ffn_weights(y, w_q, w_k, w_v)
    return matmul(softmax_lastdim(matmul(x, w1)), w2)


def cross_attention_direct(x: Tensor, y: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor) -> Tensor:
    """Plain single-head cross-attention, the independent route."""
    d_k = w_q.shape[1]
    q = matmul(x, w_q)
    k = matmul(y, w_k)
    v = matmul(y, w_v)
    logits = matmul(q, k.transpose(1, 0)) * (1.0 / math.sqrt(d_k))
    return matmul(softmax_lastdim(logits), v)
