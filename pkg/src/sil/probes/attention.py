"""Attention-weight analyses over corpus records.

All analyses consume per-record attention vectors from eval-mode forwards
on target-only truncated records, so positions are 0-based indices into
the truncated token list.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import truncate
from ..embeddings import embed_utterance
from ..errors import ContractError
from ..metrics import bootstrap_ci
from ..model import forward


def attention_for_records(records, params, config, source) -> dict[str, np.ndarray]:
    """Eval-mode attention weights per record id (target-only inputs)."""
    weights: dict[str, np.ndarray] = {}
    for record in records:
        truncated = truncate(record, "target_only")
        embedded = embed_utterance(truncated, source, with_context=False)
        fp = forward(embedded, params, config, train=False, pooling="attention")
        weights[record.id] = fp.attention
    return weights


@dataclass
class PositionStat:
    group: str
    position: int
    n: int
    mean: float
    lo: float
    hi: float


@dataclass
class AttentionReport:
    # analysis (a): raw weights, some-token vs all other tokens by position
    position_curves: list[PositionStat]
    some_mean: float
    other_mean: float
    # analysis (b): some-weight zeroed + renormalized, grouped by subjecthood
    subjecthood_curves: list[PositionStat]
    n_length_filtered: int
    skipped_missing_some: int


def _curve(buckets: dict[tuple[str, int], list[float]], B: int,
           seed: int) -> list[PositionStat]:
    cis = bootstrap_ci(buckets, B=B, seed=seed)
    return [
        PositionStat(group=key[0], position=key[1], n=len(buckets[key]),
                     mean=cis[key][0], lo=cis[key][1], hi=cis[key][2])
        for key in sorted(buckets)
    ]


def attention_by_position(records, attention_by_id: dict, max_len: int = 30,
                          B: int = 1000, seed: int = 0) -> AttentionReport:
    """Positionwise attention curves.

    (a) Raw weights: at each position, the mean weight of some-tokens vs
    the mean weight of all other tokens at that position, over every
    record whose truncation kept its some-token. (b) The some-token's
    weight is zeroed, the rest renormalized to sum 1, and records are
    restricted to untruncated length <= max_len, averaged per position
    within subject / non-subject some-NP groups.
    """
    raw_buckets: dict[tuple[str, int], list[float]] = {}
    renorm_buckets: dict[tuple[str, int], list[float]] = {}
    some_values: list[float] = []
    other_values: list[float] = []
    skipped = 0
    n_filtered = 0

    for record in records:
        weights = attention_by_id.get(record.id)
        if weights is None:
            continue
        weights = np.asarray(weights, dtype=np.float64)
        some_index = record.some_index
        if some_index is None or some_index >= len(weights):
            skipped += 1
            continue

        for pos, w in enumerate(weights):
            if pos == some_index:
                raw_buckets.setdefault(("some", pos), []).append(float(w))
                some_values.append(float(w))
            else:
                raw_buckets.setdefault(("other", pos), []).append(float(w))
                other_values.append(float(w))

        if record.features.utterance_length > max_len:
            continue
        rest = weights.copy()
        rest[some_index] = 0.0
        total = rest.sum()
        if total <= 0.0:
            continue  # single-token utterance: nothing left to renormalize
        rest /= total
        n_filtered += 1
        group = "subject" if record.features.subjecthood else "non_subject"
        for pos, w in enumerate(rest):
            if pos != some_index:
                renorm_buckets.setdefault((group, pos), []).append(float(w))

    if not some_values:
        raise ContractError("no record carried a usable some-token index")
    return AttentionReport(
        position_curves=_curve(raw_buckets, B, seed),
        some_mean=float(np.mean(some_values)),
        other_mean=float(np.mean(other_values)) if other_values else 0.0,
        subjecthood_curves=_curve(renorm_buckets, B, seed),
        n_length_filtered=n_filtered,
        skipped_missing_some=skipped)


@dataclass
class OfStat:
    kind: str  # partitive / other
    n_tokens: int
    mean: float
    lo: float
    hi: float


@dataclass
class OfReport:
    raw: list[OfStat]
    normalized: list[OfStat]
    n_multi_of: int  # utterances entering the normalized comparison


def partitive_of_analysis(records, attention_by_id: dict, B: int = 1000,
                          seed: int = 0) -> OfReport:
    """Attention mass on partitive vs non-partitive *of* tokens.

    Raw mode pools every of-token's weight. Normalized mode keeps only
    utterances with at least two of-tokens, renormalizes the of-token
    weights within each utterance to sum 1, then pools by class.
    """
    raw_vals: dict[str, list[float]] = {"partitive": [], "other": []}
    norm_vals: dict[str, list[float]] = {"partitive": [], "other": []}
    n_multi = 0

    for record in records:
        weights = attention_by_id.get(record.id)
        if weights is None:
            continue
        weights = np.asarray(weights, dtype=np.float64)
        part_idx = [i for i in record.of_partitive_indices if i < len(weights)]
        other_idx = [i for i in record.of_other_indices if i < len(weights)]
        for i in part_idx:
            raw_vals["partitive"].append(float(weights[i]))
        for i in other_idx:
            raw_vals["other"].append(float(weights[i]))

        all_idx = part_idx + other_idx
        if len(all_idx) < 2:
            continue
        total = float(weights[all_idx].sum())
        if total <= 0.0:
            continue
        n_multi += 1
        for i in part_idx:
            norm_vals["partitive"].append(float(weights[i]) / total)
        for i in other_idx:
            norm_vals["other"].append(float(weights[i]) / total)

    def stats(vals: dict[str, list[float]]) -> list[OfStat]:
        present = {k: v for k, v in vals.items() if v}
        cis = bootstrap_ci(present, B=B, seed=seed)
        return [OfStat(kind=k, n_tokens=len(present[k]), mean=cis[k][0],
                       lo=cis[k][1], hi=cis[k][2]) for k in sorted(present)]

    return OfReport(raw=stats(raw_vals), normalized=stats(norm_vals),
                    n_multi_of=n_multi)
