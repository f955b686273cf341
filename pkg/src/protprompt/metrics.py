"""Evaluation metrics and the embedding-shift probe.

Contact precision follows the CASP convention: pairs (i, j), i < j, are
bucketed by sequence separation j - i into short [6, 12), medium [12, 24)
and long [24, inf); separations below 6 are never scored. precision@L/2
takes the floor(L/2) highest-scoring eligible pairs with deterministic
lexicographic (i, j) tie-breaking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .data import ContactMap
from .errors import ContractError, DataError


@dataclass(frozen=True)
class RangeClass:
    """Sequence-separation bucket; max_sep=None means unbounded."""

    name: str
    min_sep: int
    max_sep: int | None

    def contains(self, sep: int) -> bool:
        if sep < self.min_sep:
            return False
        return self.max_sep is None or sep <= self.max_sep


SHORT = RangeClass("short", 6, 11)
MEDIUM = RangeClass("medium", 12, 23)
LONG = RangeClass("long", 24, None)
RANGE_CLASSES = {"short": SHORT, "medium": MEDIUM, "long": LONG}


class ContactPrecision(NamedTuple):
    precision: float
    scored_pairs: int
    truncated: bool  # fewer eligible pairs than floor(L/2)


def precision_at_l_half(
    scores: np.ndarray, truth: ContactMap, range_class: RangeClass
) -> ContactPrecision:
    """Fraction of true contacts among the floor(L/2) top-scoring pairs.

    scores is an (n, n) real matrix; only the upper triangle is read.
    Ties break lexicographically by (i, j). If fewer eligible pairs exist
    than floor(L/2), all of them are scored and the result is flagged.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = truth.n
    if scores.shape != (n, n):
        raise ContractError(f"scores shape {scores.shape} does not match map n={n}")
    k = n // 2
    ii, jj = np.triu_indices(n, k=1)
    sep = jj - ii
    keep = sep >= range_class.min_sep
    if range_class.max_sep is not None:
        keep &= sep <= range_class.max_sep
    ii, jj = ii[keep], jj[keep]
    if ii.size == 0 or k == 0:
        return ContactPrecision(precision=0.0, scored_pairs=0, truncated=True)
    # sort by score descending, then i, then j ascending
    order = np.lexsort((jj, ii, -scores[ii, jj]))
    take = min(k, ii.size)
    top_i, top_j = ii[order[:take]], jj[order[:take]]
    hits = int(truth.bits[top_i, top_j].sum())
    return ContactPrecision(
        precision=hits / take, scored_pairs=take, truncated=take < k
    )


def micro_f1(pred, truth) -> float:
    """Micro-averaged F1 over all label slots pooled; 0/0 defined as 0."""
    p = np.asarray(pred, dtype=np.int64)
    t = np.asarray(truth, dtype=np.int64)
    if p.shape != t.shape:
        raise ContractError(f"pred shape {p.shape} does not match truth {t.shape}")
    if not np.all((p == 0) | (p == 1)) or not np.all((t == 0) | (t == 1)):
        raise DataError("micro_f1 labels must be 0 or 1")
    tp = int(np.sum((p == 1) & (t == 1)))
    fp = int(np.sum((p == 1) & (t == 0)))
    fn = int(np.sum((p == 0) & (t == 1)))
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2 * tp / denom


def q_accuracy(pred, truth, classes: int) -> float:
    """Per-residue accuracy for 3- or 8-state labels."""
    p = np.asarray(pred, dtype=np.int64)
    t = np.asarray(truth, dtype=np.int64)
    if p.shape != t.shape or p.ndim != 1:
        raise ContractError(f"label vectors must match, got {p.shape} and {t.shape}")
    if p.size == 0:
        raise ContractError("q_accuracy on empty labels")
    if classes not in (3, 8):
        raise ContractError(f"classes must be 3 or 8, got {classes}")
    for name, v in (("pred", p), ("truth", t)):
        if v.min() < 0 or v.max() >= classes:
            raise DataError(f"{name} labels outside [0, {classes})")
    return float(np.mean(p == t))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties replaced by their group average."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        # positions i..j share the same value; average of ranks i+1..j+1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(pred, truth) -> float:
    """Spearman correlation: Pearson correlation of average ranks.

    Returns nan if either input is constant (correlation undefined).
    """
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise ContractError(f"inputs must be matching vectors, got {p.shape} and {t.shape}")
    if p.size < 2:
        raise ContractError("spearman_rho needs at least two observations")
    rp = _average_ranks(p)
    rt = _average_ranks(t)
    rp = rp - rp.mean()
    rt = rt - rt.mean()
    denom = np.sqrt((rp * rp).sum() * (rt * rt).sum())
    if denom == 0.0:
        return float("nan")
    return float((rp * rt).sum() / denom)


@dataclass
class ShiftEntry:
    index: int  # 0-based residue position within the sequence
    residue: str
    distance: float
    flagged: bool


@dataclass
class ShiftReport:
    """Per-residue movement of final-layer representations when a prompt
    is attached versus not."""

    source_id: str
    prompt: str
    cutoff: float
    entries: list[ShiftEntry]

    def csv_lines(self) -> list[str]:
        lines = ["index,residue,distance,flagged"]
        for e in self.entries:
            lines.append(f"{e.index},{e.residue},{e.distance!r},{int(e.flagged)}")
        return lines


def embedding_shift_probe(model, seq, prompt_name: str, cutoff: float) -> ShiftReport:
    """Encode with and without the prompt, report per-residue Euclidean
    distance between final-layer representations, flag those above cutoff."""
    from .tokenizer import SYMBOLS

    if cutoff < 0:
        raise ContractError("cutoff must be >= 0")
    with_prompt = model.encode(seq, (prompt_name,))
    without = model.encode(seq, ())
    a = with_prompt.residue_rows().data
    b = without.residue_rows().data
    deltas = np.sqrt(((a - b) ** 2).sum(axis=1))
    positions = seq.residue_positions()
    entries = [
        ShiftEntry(
            index=int(i),
            residue=SYMBOLS[int(seq.ids[p])],
            distance=float(d),
            flagged=bool(d > cutoff),
        )
        for i, (p, d) in enumerate(zip(positions, deltas))
    ]
    return ShiftReport(
        source_id=seq.source_id, prompt=prompt_name, cutoff=cutoff, entries=entries
    )
