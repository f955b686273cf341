"""Amino-acid vocabulary, sequence encoding and masked-token corruption.

The vocabulary has exactly 25 symbols with fixed contiguous ids:

    0 <cls>   1 <eos>   2 <pad>   3 <mask>
    4..23     the 20 standard residues in alphabetical order (ACDEFGHIKLMNPQRSTVWY)
    24        X (unknown residue)

Corruption uses numpy's default PCG64 generator seeded per call. The draw
order is fixed and part of the format: one uniform per residue position for
selection, then one uniform per selected position for the policy choice,
then one integer draw per position that needs a random replacement residue.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EncodingError, TruncationError

RESIDUES = "ACDEFGHIKLMNPQRSTVWY"
UNKNOWN = "X"

CLS_ID = 0
EOS_ID = 1
PAD_ID = 2
MASK_ID = 3
FIRST_RESIDUE_ID = 4
UNKNOWN_ID = 24
VOCAB_SIZE = 25

SPECIAL_SYMBOLS = ("<cls>", "<eos>", "<pad>", "<mask>")
SYMBOLS = SPECIAL_SYMBOLS + tuple(RESIDUES) + (UNKNOWN,)

_CHAR_TO_ID = {ch: FIRST_RESIDUE_ID + i for i, ch in enumerate(RESIDUES)}
_CHAR_TO_ID[UNKNOWN] = UNKNOWN_ID


def is_special(token_id: int) -> bool:
    return token_id < FIRST_RESIDUE_ID


def write_vocab(path) -> None:
    """Write vocab.txt: one symbol per line, line number (0-based) = id."""
    with open(path, "w") as fh:
        for sym in SYMBOLS:
            fh.write(sym + "\n")


@dataclass
class TokenSequence:
    """An encoded sequence: CLS + residues + EOS, padded to max_len."""

    ids: np.ndarray
    length: int  # count of real (non-PAD) tokens, CLS and EOS included
    source_id: str = ""

    def residue_positions(self) -> np.ndarray:
        """Positions of real residues (between CLS and EOS)."""
        return np.arange(1, self.length - 1)

    @property
    def n_residues(self) -> int:
        return self.length - 2


@dataclass
class MlmBatch:
    """One corrupted view of a TokenSequence."""

    corrupted: np.ndarray
    positions: np.ndarray  # positions whose original token must be predicted
    targets: np.ndarray  # original ids at those positions
    seed: object = None


def encode(residues: str, max_len: int, source_id: str = "") -> TokenSequence:
    """Encode a residue string as CLS + ids + EOS, PAD-filled to max_len.

    Case-insensitive. Unknown characters raise EncodingError naming the
    1-based position; sequences longer than max_len - 2 raise
    TruncationError rather than being cut.
    """
    if max_len < 2:
        raise ConfigError(f"max_len must be >= 2, got {max_len}")
    seq = residues.upper()
    if len(seq) > max_len - 2:
        raise TruncationError(
            f"sequence {source_id or '<anonymous>'!s} has {len(seq)} residues "
            f"but max_len {max_len} leaves room for {max_len - 2}; refusing to truncate"
        )
    ids = np.full(max_len, PAD_ID, dtype=np.int64)
    ids[0] = CLS_ID
    for i, ch in enumerate(seq):
        tok = _CHAR_TO_ID.get(ch)
        if tok is None:
            raise EncodingError(f"illegal residue {ch!r} at position {i + 1}")
        ids[1 + i] = tok
    ids[1 + len(seq)] = EOS_ID
    return TokenSequence(ids=ids, length=len(seq) + 2, source_id=source_id)


def decode(ids) -> str:
    """Inverse of encode for the residue span: decode(encode(s).ids) == s.upper()."""
    out = []
    for tok in np.asarray(ids).tolist():
        if tok == CLS_ID:
            continue
        if tok in (EOS_ID, PAD_ID):
            break
        if tok == MASK_ID:
            raise EncodingError("cannot decode a corrupted sequence containing <mask>")
        out.append(SYMBOLS[tok])
    return "".join(out)


def apply_mlm_mask(
    seq: TokenSequence,
    rate: float,
    seed,
    probs: tuple[float, float, float] = (0.8, 0.1, 0.1),
) -> MlmBatch:
    """Corrupt residue positions for masked-token pretraining.

    Each real residue is independently selected with probability `rate`;
    a selected position becomes <mask> with probs[0], a uniform random
    standard residue with probs[1], and stays unchanged with probs[2].
    Special tokens are never touched. At least one position is always
    selected: if no draw lands under `rate`, the position with the lowest
    draw is used, so every batch carries a prediction target.
    Deterministic given the seed.
    """
    if not (0.0 < rate < 1.0):
        raise ConfigError(f"mask rate must be in (0, 1), got {rate}")
    if len(probs) != 3 or any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-12:
        raise ConfigError(f"mask policy probabilities must be >= 0 and sum to 1, got {probs}")
    rng = np.random.default_rng(seed)
    pos = seq.residue_positions()
    draws = rng.random(pos.size)
    selected = pos[draws < rate]
    if selected.size == 0:
        selected = pos[[int(np.argmin(draws))]]
    corrupted = seq.ids.copy()
    targets = seq.ids[selected].copy()
    policy = rng.random(selected.size)
    need_random = policy >= probs[0]
    need_random &= policy < probs[0] + probs[1]
    replacements = rng.integers(0, len(RESIDUES), size=int(need_random.sum()))
    r_iter = iter(replacements)
    for k, p in enumerate(selected):
        if policy[k] < probs[0]:
            corrupted[p] = MASK_ID
        elif need_random[k]:
            corrupted[p] = FIRST_RESIDUE_ID + int(next(r_iter))
        # else: keep the original token, still a prediction target
    return MlmBatch(corrupted=corrupted, positions=selected, targets=targets, seed=seed)
