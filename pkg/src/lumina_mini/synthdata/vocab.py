"""Fixed symbolic vocabulary for scene captions.

Captions are token sequences, not natural language: every token names a real
scene attribute, so longer captions carry strictly more information about the
image rather than padding. System-prompt templates are dedicated marker
tokens prepended before a prompt-start separator.
"""

from __future__ import annotations

from ..errors import ConfigError, DataError

PAD, BOS, EOS = "<pad>", "<bos>", "<eos>"
PROMPT_START = "<prompt_start>"
LANG_EN = "<lang_en>"
TEMPLATE_TOKENS = {"A": "<tpl_a>", "B": "<tpl_b>", "C": "<tpl_c>"}

COLOR_NAMES = ("red", "green", "blue", "yellow", "cyan", "magenta")
SHAPE_NAMES = ("circle", "square", "triangle")
CELL_NAMES = tuple(f"cell_{i}" for i in range(9))
SIZE_NAMES = ("size_small", "size_medium", "size_large")
LUM_NAMES = ("lum_dim", "lum_normal", "lum_bright")
ROW_NAMES = ("row_top", "row_middle", "row_bottom")
COL_NAMES = ("col_left", "col_center", "col_right")
BG_NAMES = ("bg_gray",)
FINISH_NAMES = ("finish_crisp", "finish_rough")
PALETTE_NAMES = ("palette_warm", "palette_cool")


class Vocabulary:
    """Dense token <-> id map; encode/decode round trips exactly."""

    def __init__(self, tokens):
        self._tokens = list(tokens)
        self._ids = {tok: i for i, tok in enumerate(self._tokens)}
        if len(self._ids) != len(self._tokens):
            raise ConfigError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def encode(self, tokens) -> list:
        try:
            return [self._ids[t] for t in tokens]
        except KeyError as e:
            raise DataError(f"unknown token {e.args[0]!r}") from None

    def decode(self, ids) -> list:
        out = []
        for i in ids:
            if not 0 <= i < len(self._tokens):
                raise DataError(f"token id {i} outside vocabulary of size {len(self)}")
            out.append(self._tokens[i])
        return out

    def id(self, token: str) -> int:
        return self._ids[token]


def build_vocabulary() -> Vocabulary:
    tokens = [PAD, BOS, EOS, LANG_EN, PROMPT_START]
    tokens += [TEMPLATE_TOKENS[k] for k in ("A", "B", "C")]
    tokens += list(COLOR_NAMES) + list(SHAPE_NAMES) + list(CELL_NAMES)
    tokens += list(SIZE_NAMES) + list(LUM_NAMES)
    tokens += list(ROW_NAMES) + list(COL_NAMES)
    tokens += list(BG_NAMES) + list(FINISH_NAMES) + list(PALETTE_NAMES)
    return Vocabulary(tokens)
