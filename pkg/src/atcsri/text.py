"""Tokenization and vocabulary for mixed Chinese/English ATC transcripts.

Chinese is split per character, English per lowercased whitespace word;
that mirrors how readbacks mix 航路点 names with ICAO English.
"""

from __future__ import annotations

from collections import Counter
from pathlib import Path

import numpy as np

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

_STRIP = {",", ".", "，", "。"}  # ASCII and fullwidth comma/period


class EmptyTranscript(ValueError):
    pass


def _is_cjk(ch: str) -> bool:
    return "一" <= ch <= "鿿"


def tokenize(transcript: str) -> list[str]:
    """CJK characters one token each; Latin runs lowercased and whitespace-split."""
    if not transcript or not transcript.strip():
        raise EmptyTranscript("transcript is empty or whitespace-only")
    tokens: list[str] = []
    run: list[str] = []

    def flush():
        if run:
            tokens.extend("".join(run).lower().split())
            run.clear()

    for ch in transcript:
        if ch in _STRIP:
            run.append(" ")
        elif _is_cjk(ch):
            flush()
            tokens.append(ch)
        else:
            run.append(ch)
    flush()
    if not tokens:
        raise EmptyTranscript("transcript has no tokens after stripping punctuation")
    return tokens


class Vocabulary:
    """Frozen token<->id bijection with PAD=0 and UNK=1 reserved."""

    def __init__(self, tokens: list[str]):
        self.id_to_token = [PAD_TOKEN, UNK_TOKEN] + list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.id_to_token)

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self.id_to_token[idx]

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids) -> list[str]:
        return [self.id_to_token[int(i)] for i in ids if int(i) != PAD_ID]

    def save(self, path) -> None:
        # one token per line, line number = id - 2; reserved ids implicit
        Path(path).write_text("\n".join(self.id_to_token[2:]) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([ln for ln in lines if ln])


def build_vocab(corpus, min_count: int = 1) -> Vocabulary:
    """Ids by descending frequency, ties broken lexicographically."""
    counts = Counter()
    for transcript in corpus:
        counts.update(tokenize(transcript))
    kept = [t for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


def encode_batch(transcripts: list[str], vocab: Vocabulary,
                 max_len: int = 128) -> tuple[np.ndarray, np.ndarray]:
    """Right-padded (batch, T) id matrix plus pre-pad lengths.

    T is the longest (possibly truncated) sequence in the batch; truncation
    keeps the prefix.
    """
    rows = []
    for i, tr in enumerate(transcripts):
        try:
            ids = vocab.encode(tokenize(tr))[:max_len]
        except EmptyTranscript as e:
            raise EmptyTranscript(f"transcript {i}: {e}") from None
        rows.append(ids)
    t = max(len(r) for r in rows)
    ids = np.full((len(rows), t), PAD_ID, dtype=np.int64)
    lengths = np.zeros(len(rows), dtype=np.int64)
    for i, r in enumerate(rows):
        ids[i, : len(r)] = r
        lengths[i] = len(r)
    return ids, lengths


def lengths_to_mask(lengths: np.ndarray, t: int) -> np.ndarray:
    """(batch, t) float mask, 1 inside each sequence and 0 over padding."""
    return (np.arange(t)[None, :] < np.asarray(lengths)[:, None]).astype(np.float32)
