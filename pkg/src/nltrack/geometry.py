"""Box arithmetic, anchors, box-delta coding and non-maximum suppression.

Boxes are stored in corner format ``(x1, y1, x2, y2)`` in image pixels with
the origin at the top-left corner. Scalar helpers operate on :class:`Box`;
the ``*_t`` variants are batched torch versions used inside the networks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import torch

DEFAULT_SIZES = (32, 64, 128, 256, 512)
DEFAULT_RATIOS = (1.0, 0.5, 2.0)

# Faster R-CNN style cap on log-scale deltas so exp() stays finite.
DELTA_CLAMP = math.log(1000.0 / 16)


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite box coordinates {coords}")
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise ValueError(f"degenerate box {coords}")

    @classmethod
    def from_xywh(cls, x, y, w, h) -> "Box":
        return cls(float(x), float(y), float(x) + float(w), float(y) + float(h))

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def to_xywh(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.width, self.height)

    def scaled(self, factor: float) -> "Box":
        return Box(self.x1 * factor, self.y1 * factor, self.x2 * factor, self.y2 * factor)

    def clipped(self, width: float, height: float) -> "Box":
        return Box(
            min(max(self.x1, 0.0), width),
            min(max(self.y1, 0.0), height),
            min(max(self.x2, 0.0), width),
            min(max(self.y2, 0.0), height),
        )


def iou(a: Box, b: Box) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def center_distance(a: Box, b: Box) -> float:
    (ax, ay), (bx, by) = a.center, b.center
    return math.hypot(ax - bx, ay - by)


@dataclass(frozen=True)
class AnchorSet:
    """Anchors tiled over a feature map.

    ``boxes`` is an ``(H*W*S*R, 4)`` tensor ordered row-major over cells,
    then by size, then by ratio.
    """

    boxes: torch.Tensor
    stride: float
    map_height: int
    map_width: int
    per_cell: int

    def __len__(self):
        return self.boxes.shape[0]

    def box(self, i: int) -> Box:
        return Box(*(float(v) for v in self.boxes[i]))


def anchor_shapes(sizes: Sequence[float], ratios: Sequence[float]) -> list[tuple[float, float]]:
    """(width, height) per anchor in size-major, ratio-major order.

    A ratio ``r`` is width:height, so the anchor is ``s*sqrt(r)`` by ``s/sqrt(r)``.
    """
    return [(s * math.sqrt(r), s / math.sqrt(r)) for s in sizes for r in ratios]


def generate_anchors(
    map_height: int,
    map_width: int,
    stride: float,
    sizes: Sequence[float] = DEFAULT_SIZES,
    ratios: Sequence[float] = DEFAULT_RATIOS,
) -> AnchorSet:
    if map_height <= 0 or map_width <= 0 or stride <= 0:
        raise ValueError("map dimensions and stride must be positive")
    if not sizes or not ratios:
        raise ValueError("sizes and ratios must be non-empty")
    if any(s <= 0 for s in sizes) or any(r <= 0 for r in ratios):
        raise ValueError("sizes and ratios must be positive")
    shapes = torch.tensor(anchor_shapes(sizes, ratios), dtype=torch.float64)
    ys = (torch.arange(map_height, dtype=torch.float64) + 0.5) * stride
    xs = (torch.arange(map_width, dtype=torch.float64) + 0.5) * stride
    cy, cx = torch.meshgrid(ys, xs, indexing="ij")
    centers = torch.stack([cx.reshape(-1), cy.reshape(-1)], dim=1)  # (HW, 2)
    half = shapes / 2  # (K, 2)
    lo = centers[:, None, :] - half[None]
    hi = centers[:, None, :] + half[None]
    boxes = torch.cat([lo, hi], dim=2).reshape(-1, 4)
    return AnchorSet(boxes.float(), float(stride), map_height, map_width, len(shapes))


def encode_deltas(anchor: Box, target: Box) -> tuple[float, float, float, float]:
    (acx, acy), (tcx, tcy) = anchor.center, target.center
    return (
        (tcx - acx) / anchor.width,
        (tcy - acy) / anchor.height,
        math.log(target.width / anchor.width),
        math.log(target.height / anchor.height),
    )


def decode_deltas(anchor: Box, deltas: Sequence[float], image_size=None) -> Box:
    """Inverse of :func:`encode_deltas`; clips to ``image_size=(W, H)`` when given."""
    dx, dy, dw, dh = (float(d) for d in deltas)
    if not all(math.isfinite(d) for d in (dx, dy, dw, dh)):
        raise ValueError(f"non-finite deltas {tuple(deltas)}")
    acx, acy = anchor.center
    cx = acx + dx * anchor.width
    cy = acy + dy * anchor.height
    w = anchor.width * math.exp(dw)
    h = anchor.height * math.exp(dh)
    box = Box(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
    if image_size is not None:
        box = box.clipped(*image_size)
    return box


def nms(boxes, scores, iou_threshold: float = 0.7) -> list[int]:
    """Greedy NMS. Returns kept indices by descending score, ties to the lower index."""
    if len(boxes) == 0:
        return []
    if isinstance(boxes, torch.Tensor):
        b = boxes.detach().to(torch.float64)
    else:
        b = torch.tensor([bx.as_tuple() for bx in boxes], dtype=torch.float64)
    s = torch.as_tensor(scores, dtype=torch.float64).detach()
    if b.shape[0] != s.shape[0]:
        raise ValueError("boxes and scores differ in length")
    return nms_t(b, s, iou_threshold).tolist()


# ---------------------------------------------------------------- batched


def box_area_t(boxes: torch.Tensor) -> torch.Tensor:
    return (boxes[..., 2] - boxes[..., 0]).clamp(min=0) * (boxes[..., 3] - boxes[..., 1]).clamp(min=0)


def box_iou_t(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Pairwise IoU matrix of shape ``(len(a), len(b))``."""
    lt = torch.maximum(a[:, None, :2], b[None, :, :2])
    rb = torch.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = (rb - lt).clamp(min=0)
    inter = wh[..., 0] * wh[..., 1]
    union = box_area_t(a)[:, None] + box_area_t(b)[None, :] - inter
    return torch.where(inter > 0, inter / union.clamp(min=1e-12), torch.zeros_like(inter))


def box_centers_t(boxes: torch.Tensor) -> torch.Tensor:
    return torch.stack([(boxes[..., 0] + boxes[..., 2]) / 2, (boxes[..., 1] + boxes[..., 3]) / 2], dim=-1)


def encode_deltas_t(anchors: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    tw = targets[:, 2] - targets[:, 0]
    th = targets[:, 3] - targets[:, 1]
    ac = box_centers_t(anchors)
    tc = box_centers_t(targets)
    return torch.stack(
        [(tc[:, 0] - ac[:, 0]) / aw, (tc[:, 1] - ac[:, 1]) / ah, torch.log(tw / aw), torch.log(th / ah)],
        dim=1,
    )


def decode_deltas_t(anchors: torch.Tensor, deltas: torch.Tensor) -> torch.Tensor:
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    ac = box_centers_t(anchors)
    cx = ac[:, 0] + deltas[:, 0] * aw
    cy = ac[:, 1] + deltas[:, 1] * ah
    w = aw * torch.exp(deltas[:, 2].clamp(max=DELTA_CLAMP))
    h = ah * torch.exp(deltas[:, 3].clamp(max=DELTA_CLAMP))
    return torch.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], dim=1)


def clip_boxes_t(boxes: torch.Tensor, width: float, height: float) -> torch.Tensor:
    x = boxes[:, 0::2].clamp(0, width)
    y = boxes[:, 1::2].clamp(0, height)
    return torch.stack([x[:, 0], y[:, 0], x[:, 1], y[:, 1]], dim=1)


def nms_t(boxes: torch.Tensor, scores: torch.Tensor, iou_threshold: float) -> torch.Tensor:
    order = torch.sort(-scores, stable=True).indices
    ious = box_iou_t(boxes[order], boxes[order])
    n = order.shape[0]
    suppressed = torch.zeros(n, dtype=torch.bool)
    keep = []
    for i in range(n):
        if suppressed[i]:
            continue
        keep.append(i)
        suppressed |= ious[i] > iou_threshold
    return order[torch.tensor(keep, dtype=torch.long)]
