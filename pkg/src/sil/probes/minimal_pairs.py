"""Minimal-pair sentence suite: 25 frames x 32 feature combinations.

Each frame supplies an agent NP, a patient NP (each with a prenominal and
a postnominal modifier), a verb in active and passive form, and the
passive auxiliary agreeing with the patient head. Variants toggle five
binary features: some on the subject vs object NP, voice, partitive "of
the", prenominal modifier, postnominal modifier. The non-some NP always
surfaces fully modified with its plain determiner, so toggled material
belongs to the some-NP alone.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..corpus import unscale_rating
from ..embeddings import embed_utterance, tokenize
from ..errors import ValidationError
from ..metrics import bootstrap_ci
from ..model import forward

FRAME_COLUMNS = [
    "frame_id", "subj_premod", "subj_head", "subj_postmod", "obj_premod",
    "obj_head", "obj_postmod", "verb_active", "verb_passive", "passive_aux",
    "other_det", "complement",
]

# odometer bit order, most significant first
FEATURE_BITS = ("some_subject", "passive", "partitive",
                "prenominal_mod", "postnominal_mod")


@dataclass
class SentenceFrame:
    frame_id: str
    subj_premod: str
    subj_head: str
    subj_postmod: str
    obj_premod: str
    obj_head: str
    obj_postmod: str
    verb_active: str
    verb_passive: str
    passive_aux: str
    other_det: str = "the"
    complement: str = ""


@dataclass
class MinimalPairVariant:
    variant_id: str
    frame_id: str
    text: str
    features: dict[str, int]

    @property
    def some_is_subject(self) -> bool:
        """True when the some-NP is the surface subject of its clause."""
        if self.features["passive"]:
            return not self.features["some_subject"]
        return bool(self.features["some_subject"])

    def tokens(self) -> list[str]:
        return tokenize(self.text)


def load_frames(path=None) -> list[SentenceFrame]:
    """Read the frame table; defaults to the bundled 25-frame file."""
    if path is None:
        ref = resources.files("sil").joinpath("data/frames.tsv")
        text = ref.read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    rows = list(csv.reader(text.splitlines(), delimiter="\t"))
    if not rows:
        raise ValidationError("empty frames file")
    header = rows[0]
    missing = [c for c in FRAME_COLUMNS if c not in header]
    if missing:
        raise ValidationError(f"frames file missing columns: {missing}")
    col = {name: header.index(name) for name in FRAME_COLUMNS}
    frames = []
    for i, row in enumerate(rows[1:], start=2):
        if not any(cell.strip() for cell in row):
            continue
        # hand-edited TSVs often drop tabs for trailing empty cells
        row = row + [""] * (len(header) - len(row))
        values = {name: row[col[name]].strip() for name in FRAME_COLUMNS}
        for name, value in values.items():
            if name != "complement" and not value:
                raise ValidationError(f"frame row {i}: empty {name}")
        frames.append(SentenceFrame(**values))
    seen = set()
    for frame in frames:
        key = (frame.verb_active, frame.subj_head, frame.obj_head)
        if key in seen:
            raise ValidationError(
                f"duplicate verb/NP combination in frame {frame.frame_id}")
        seen.add(key)
    return frames


def _some_np(premod: str, head: str, postmod: str, partitive: int,
             pre_on: int, post_on: int) -> str:
    parts = ["some"]
    if partitive:
        parts.append("of the")
    if pre_on:
        parts.append(premod)
    parts.append(head)
    if post_on:
        parts.append(postmod)
    return " ".join(parts)


def _plain_np(det: str, premod: str, head: str, postmod: str) -> str:
    return " ".join([det, premod, head, postmod])


def realize(frame: SentenceFrame, features: dict[str, int]) -> str:
    """Surface string for one feature combination of a frame."""
    part = features["partitive"]
    pre = features["prenominal_mod"]
    post = features["postnominal_mod"]
    if features["some_subject"]:
        agent = _some_np(frame.subj_premod, frame.subj_head,
                         frame.subj_postmod, part, pre, post)
        patient = _plain_np(frame.other_det, frame.obj_premod, frame.obj_head,
                            frame.obj_postmod)
    else:
        agent = _plain_np(frame.other_det, frame.subj_premod, frame.subj_head,
                          frame.subj_postmod)
        patient = _some_np(frame.obj_premod, frame.obj_head,
                           frame.obj_postmod, part, pre, post)
    if features["passive"]:
        core = f"{patient} {frame.passive_aux} {frame.verb_passive} by {agent}"
    else:
        core = f"{agent} {frame.verb_active} {patient}"
    if frame.complement:
        core = f"{core} {frame.complement}"
    return core[0].upper() + core[1:] + "."


def generate_minimal_pairs(frames: list[SentenceFrame]
                           ) -> list[MinimalPairVariant]:
    """All 32 variants per frame, in frame order then feature-odometer order."""
    variants = []
    for frame in frames:
        for i in range(32):
            bits = [(i >> (4 - b)) & 1 for b in range(5)]
            features = dict(zip(FEATURE_BITS, bits))
            variants.append(MinimalPairVariant(
                variant_id=f"{frame.frame_id}.{i:05b}",
                frame_id=frame.frame_id,
                text=realize(frame, features),
                features=features))
    return variants


def score_variants(variants, params, config, table,
                   pooling: str | None = None) -> np.ndarray:
    """Eval-mode model scores in [0, 1] for each variant's tokenization."""
    scores = []
    for variant in variants:
        embedded = np.vstack([table.lookup(t) for t in variant.tokens()])
        fp = forward(embedded, params, config, train=False, pooling=pooling)
        scores.append(float(fp.score.value))
    return np.array(scores)


@dataclass
class GroupStat:
    grouping: str
    level: str
    n: int
    mean: float
    lo: float
    hi: float


@dataclass
class MinimalPairReport:
    groups: list[GroupStat]
    per_sentence: list[tuple[str, dict[str, int], float]]  # id, features, raw

    def group_mean(self, grouping: str, level: str) -> float:
        for g in self.groups:
            if g.grouping == grouping and g.level == level:
                return g.mean
        raise KeyError(f"{grouping}/{level}")


def _groupings(variant: MinimalPairVariant) -> list[tuple[str, str]]:
    f = variant.features
    pre = f["prenominal_mod"]
    post = f["postnominal_mod"]
    return [
        ("partitive", "partitive" if f["partitive"] else "no_partitive"),
        ("grammatical_function",
         "subject" if variant.some_is_subject else "other"),
        ("prenominal", "modified" if pre else "unmodified"),
        ("postnominal", "modified" if post else "unmodified"),
        ("modification", "modified" if (pre or post) else "unmodified"),
    ]


def minimal_pair_report(variants, scores, B: int = 1000,
                        seed: int = 0) -> MinimalPairReport:
    """Group mean predicted ratings (raw 1-7 scale) with bootstrap CIs.

    Groupings: partitive presence, grammatical function of the some-NP,
    prenominal / postnominal modification, and their union ("modification",
    modified = either modifier present, splitting 600/200).
    """
    raw = [unscale_rating(float(s)) for s in scores]
    buckets: dict[tuple[str, str], list[float]] = {}
    per_sentence = []
    for variant, value in zip(variants, raw):
        per_sentence.append((variant.variant_id, dict(variant.features), value))
        for grouping, level in _groupings(variant):
            buckets.setdefault((grouping, level), []).append(value)

    cis = bootstrap_ci({key: vals for key, vals in buckets.items()},
                       B=B, seed=seed)
    groups = [
        GroupStat(grouping=key[0], level=key[1], n=len(buckets[key]),
                  mean=cis[key][0], lo=cis[key][1], hi=cis[key][2])
        for key in sorted(buckets)
    ]
    return MinimalPairReport(groups=groups, per_sentence=per_sentence)
