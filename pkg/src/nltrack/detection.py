"""Score fusion, relaxed motion gating and Top-N selection."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch

from .errors import NoProposalsError, ShapeMismatchError
from .geometry import Box, box_centers_t

TOP_N = 5
V_FLOOR = 1.0
D_FLOOR = 1.0
GATE_CAP = 10.0


@dataclass
class DetectionSet:
    boxes: torch.Tensor  # (N, 4)
    features: torch.Tensor  # (N, D, A, A)
    scores: torch.Tensor  # (N,), descending
    pad_count: int = 0
    indices: torch.Tensor | None = None  # source proposal index of each entry

    def __len__(self):
        return self.boxes.shape[0]

    def box(self, i: int) -> Box:
        return Box(*(float(v) for v in self.boxes[i]))


def _as_box_tensor(boxes) -> torch.Tensor:
    if isinstance(boxes, torch.Tensor):
        return boxes
    return torch.tensor([b.as_tuple() for b in boxes], dtype=torch.float64)


def fuse_scores(objectness, sim) -> torch.Tensor:
    """Joint score under conditional independence of image and query given a box."""
    objectness = torch.as_tensor(objectness)
    sim = torch.as_tensor(sim, dtype=objectness.dtype)
    if objectness.shape != sim.shape:
        raise ShapeMismatchError(f"objectness {tuple(objectness.shape)} vs similarity {tuple(sim.shape)}")
    return objectness * sim


def gate_factors(boxes, prev: Box, prev2: Box, v_floor=V_FLOOR, d_floor=D_FLOOR, cap=GATE_CAP) -> torch.Tensor:
    b = _as_box_tensor(boxes)
    (px, py), (qx, qy) = prev.center, prev2.center
    v = max(((px - qx) ** 2 + (py - qy) ** 2) ** 0.5, v_floor)
    c = box_centers_t(b.to(torch.float64))
    d = torch.hypot(c[:, 0] - px, c[:, 1] - py).clamp(min=d_floor)
    return (v / d).clamp(max=cap)


def relaxed_gate(sim, boxes, prev: Box, prev2: Box, **kw) -> torch.Tensor:
    """Scale similarities by velocity over distance to the last prediction."""
    sim = torch.as_tensor(sim)
    return sim * gate_factors(boxes, prev, prev2, **kw).to(sim.dtype)


def select_top_n(boxes, features, fused_scores, n: int = TOP_N) -> DetectionSet:
    b = _as_box_tensor(boxes)
    scores = torch.as_tensor(fused_scores)
    if scores.numel() == 0:
        raise NoProposalsError("no proposals to select from")
    if not bool(torch.isfinite(scores).all()):
        raise ValueError("fused scores must be finite")
    order = torch.sort(-scores, stable=True).indices[:n]
    pad = n - order.shape[0]
    if pad > 0:
        order = torch.cat([order, order[-1:].expand(pad)])
    feats = features[order] if features is not None else None
    return DetectionSet(b[order], feats, scores[order], max(pad, 0), order)


@dataclass
class FrameCandidates:
    """Everything the detection phase computes for a frame before gating.

    ``features`` may be dropped to save memory; callers then pool the selected boxes
    from ``fmap`` themselves.
    """

    boxes: torch.Tensor
    objectness: torch.Tensor
    similarity: torch.Tensor
    features: torch.Tensor | None
    fmap: object = None

    def without_features(self) -> "FrameCandidates":
        return FrameCandidates(self.boxes, self.objectness, self.similarity, None, self.fmap)

    def select(self, gate_context=None, n: int = TOP_N) -> DetectionSet:
        sim = self.similarity
        if gate_context is not None:
            sim = relaxed_gate(sim, self.boxes, *gate_context)
        return select_top_n(self.boxes, self.features, fuse_scores(self.objectness, sim), n)


def detect(frame, query, model, gate_context: tuple[Box, Box] | None = None, sentence=None) -> DetectionSet:
    """Full detection phase on one (already preprocessed) frame.

    ``model`` is a :class:`nltrack.pipeline.TrackerModel`; ``query`` a raw string
    or :class:`~nltrack.language.Query`. ``sentence`` may carry a precomputed embedding.
    """
    return model.detect(frame, query, gate_context, sentence)


def detect_sequence_gate(history: Sequence[Box]) -> tuple[Box, Box] | None:
    """Gate context from the prediction history; needs two earlier predictions."""
    if len(history) < 2:
        return None
    return history[-1], history[-2]
