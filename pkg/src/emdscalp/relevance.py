"""Channel-relevance ingestion, top-k extraction, and cohort aggregation.

Relevance scores may come from the elimination trace of the covariance
classifier or from external per-model JSON exports (schema below).  The
module also builds the 21-channel motor-cortex baseline map that
data-driven selections are compared against.

External relevance JSON schema::

    {
      "subject": str,
      "model": str,
      "channels": [str, ...],
      "pooled": [float, ...],              # aligned with channels
      "per_class": {"<label>": [float, ...], ...}   # optional
    }
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .montage import GridLayout, SpatialMap, binary_map, default_layout, weighted_map
from .spdgeom import SelectionTrace

__all__ = [
    "RelevanceScores",
    "CohortAggregate",
    "MI_BASELINE_CHANNELS",
    "ingest_external",
    "scores_from_trace",
    "top_k",
    "aggregate_cohort",
    "mi_baseline",
]

#: 21 channels proximal to the motor cortex: the full FC, C and CP rows of
#: the shipped montage, temporal ends excluded.
MI_BASELINE_CHANNELS = (
    "FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6",
    "C5", "C3", "C1", "Cz", "C2", "C4", "C6",
    "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6",
)


@dataclass(frozen=True)
class RelevanceScores:
    """Per-channel importance from one source, montage-ordered.

    `channels` lists the scored channels in montage order, which fixes the
    deterministic tie-break used by `top_k`.  `per_class` is present only
    for class-discriminative sources.
    """

    source: str
    channels: tuple[str, ...]
    pooled: dict[str, float]
    per_class: dict[str, dict[str, float]] | None = None
    subject: str | None = None
    model: str | None = None


@dataclass(frozen=True)
class CohortAggregate:
    """How many subjects selected each channel in their top-k set."""

    counts: dict[str, int]
    subjects: tuple[str, ...]


def ingest_external(file: str | Path, layout: GridLayout | None = None) -> RelevanceScores:
    """Load and validate an external relevance JSON document.

    Channel names are resolved against the montage (case-insensitive);
    unknown names, misaligned arrays, and non-finite scores are rejected.
    """
    layout = layout or default_layout()
    doc = json.loads(Path(file).read_text(encoding="utf-8"))
    for key in ("channels", "pooled"):
        if key not in doc:
            raise ValueError(f"relevance document missing {key!r}")
    raw_names = list(doc["channels"])
    names = [layout.resolve(n) for n in raw_names]
    if len(set(names)) != len(names):
        raise ValueError("relevance document lists a channel twice")

    def aligned(values, what: str) -> dict[str, float]:
        if len(values) != len(names):
            raise ValueError(f"{what} has {len(values)} entries for {len(names)} channels")
        out = {}
        for name, v in zip(names, values):
            v = float(v)
            if not math.isfinite(v):
                raise ValueError(f"non-finite {what} score for {name}")
            out[name] = v
        return out

    pooled = aligned(doc["pooled"], "pooled")
    per_class = None
    if doc.get("per_class"):
        per_class = {str(lab): aligned(v, f"per_class[{lab}]") for lab, v in doc["per_class"].items()}
    order = sorted(names, key=layout.montage_rank)
    return RelevanceScores(
        source="external",
        channels=tuple(order),
        pooled=pooled,
        per_class=per_class,
        subject=doc.get("subject"),
        model=doc.get("model"),
    )


def scores_from_trace(
    trace: SelectionTrace,
    channel_names: list[str],
    layout: GridLayout | None = None,
) -> RelevanceScores:
    """Relevance ranking implied by an elimination trace.

    Channels removed earlier score lower; the surviving subset scores
    highest, ordered among themselves by how much the inter-class distance
    drops when each is left out.  Scores are rank values 0..dim-1.  This
    source is class agnostic, so `per_class` is None.
    """
    layout = layout or default_layout()
    order = [step.removed for step in trace.removal_order]
    survivors = sorted(
        range(len(trace.final_subset)),
        key=lambda pos: (trace.final_loo_drops[pos], trace.final_subset[pos]),
    )
    order.extend(trace.final_subset[pos] for pos in survivors)
    pooled = {
        layout.resolve(channel_names[ch]): float(rank) for rank, ch in enumerate(order)
    }
    names = sorted(pooled, key=layout.montage_rank)
    return RelevanceScores(source="riemannian", channels=tuple(names), pooled=pooled)


def _ranked(scores: Mapping[str, float], order: tuple[str, ...]) -> list[str]:
    pos = {name: i for i, name in enumerate(order)}
    return sorted(scores, key=lambda name: (-scores[name], pos[name]))


def top_k(scores: RelevanceScores, k: int, class_mode: str = "pooled") -> set[str]:
    """The k most relevant channel names.

    ``pooled`` takes the k highest pooled scores.  ``per_class_union``
    takes each class's top-k list, unions them, and truncates back to k by
    pooled score.  Ties always break towards the lower montage position.
    """
    if not 1 <= k <= len(scores.channels):
        raise ValueError(f"k must be in [1, {len(scores.channels)}], got {k}")
    if class_mode == "pooled":
        return set(_ranked(scores.pooled, scores.channels)[:k])
    if class_mode == "per_class_union":
        if not scores.per_class:
            raise ValueError("per_class_union requires per-class scores")
        union: set[str] = set()
        for class_scores in scores.per_class.values():
            union.update(_ranked(class_scores, scores.channels)[:k])
        pooled_in_union = {name: scores.pooled[name] for name in union}
        return set(_ranked(pooled_in_union, scores.channels)[:k])
    raise ValueError(f"unknown class_mode {class_mode!r}")


def aggregate_cohort(selections: Mapping[str, Iterable[str]]) -> CohortAggregate:
    """Per-channel selection counts across subjects."""
    if not selections:
        raise ValueError("cohort is empty")
    counts: dict[str, int] = {}
    for chans in selections.values():
        for name in set(chans):
            counts[name] = counts.get(name, 0) + 1
    return CohortAggregate(counts=counts, subjects=tuple(sorted(selections)))


def mi_baseline(
    layout: GridLayout,
    weighting: str = "binary",
    uniform_weight: float = 1.0,
) -> SpatialMap:
    """Spatial map of the 21 motor-cortex baseline channels.

    ``binary`` marks each channel with 1 (total mass 21);
    ``uniform-weighted`` gives each the same configurable weight.
    """
    missing = [c for c in MI_BASELINE_CHANNELS if c not in layout]
    if missing:
        raise ValueError(f"layout is missing baseline channels: {missing}")
    if weighting == "binary":
        return binary_map(MI_BASELINE_CHANNELS, layout)
    if weighting == "uniform-weighted":
        return weighted_map({c: uniform_weight for c in MI_BASELINE_CHANNELS}, layout)
    raise ValueError(f"unknown weighting {weighting!r}")
