"""Deterministic, model-independent token counting.

Chunk budgets must be reproducible offline, so the counter does not depend
on any provider's tokenizer. Tokens are Unicode word segments, with CJK
ideographs treated as one token per character (they carry word-level
meaning and have no whitespace segmentation). Long tokens are charged
ceil(utf8_bytes / 8) so byte-dense scripts and compound words are not
undercounted.
"""

from __future__ import annotations

import math
import re

# CJK unified ideographs plus common extensions and fullwidth forms.
_CJK = r"㐀-䶿一-鿿豈-﫿"

_TOKEN_RE = re.compile(rf"[{_CJK}]|[^\W_{_CJK}]+", re.UNICODE)

# Words up to this many UTF-8 bytes count as one token; longer ones are
# charged per 8-byte block. The threshold is sized so ordinary English
# vocabulary (e.g. "compliance", 10 bytes) stays a single token.
_SHORT_TOKEN_BYTES = 10
_BLOCK_BYTES = 8


def tokenize(text: str) -> list[str]:
    """Split text into word tokens; CJK characters are individual tokens."""
    return _TOKEN_RE.findall(text)


def token_weight(token: str) -> int:
    nbytes = len(token.encode("utf-8"))
    if nbytes <= _SHORT_TOKEN_BYTES:
        return 1
    return math.ceil(nbytes / _BLOCK_BYTES)


def count_tokens(text: str) -> int:
    """Deterministic token count; monotone under concatenation."""
    return sum(token_weight(t) for t in tokenize(text))
