"""Backbone, region proposal network, RoI pooling and the RPN loss."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .geometry import (
    AnchorSet,
    Box,
    box_iou_t,
    clip_boxes_t,
    decode_deltas_t,
    encode_deltas_t,
    nms_t,
)

NMS_THRESHOLD = 0.7
MIN_PROPOSAL_SIZE = 1.0


@dataclass
class FeatureMap:
    """Backbone output. ``values`` is laid out ``(D, H, W)``."""

    values: torch.Tensor
    stride: int
    image_size: tuple[int, int]  # (W, H) of the input image

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @property
    def depth(self) -> int:
        return self.values.shape[0]


@dataclass
class ProposalSet:
    boxes: torch.Tensor  # (n, 4), clipped to the image
    objectness: torch.Tensor  # (n,), descending

    def __len__(self):
        return self.boxes.shape[0]

    def box(self, i: int) -> Box:
        return Box(*(float(v) for v in self.boxes[i]))


class Backbone(nn.Module):
    """Stack of stride-2 conv blocks; each block is a strided 3x3 conv and a 3x3 conv.

    ``color_skip = g > 0`` appends the input image average-pooled onto a ``g x g`` grid inside
    every output cell (space-to-depth), i.e. ``3 g^2`` extra channels. Nothing in the skip is
    learned, so it survives any training stage.
    """

    def __init__(self, blocks: int = 3, depth: int = 32, in_channels: int = 3, color_skip: int = 0):
        super().__init__()
        layers = []
        ch = in_channels
        for _ in range(blocks):
            layers += [
                nn.Conv2d(ch, depth, 3, stride=2, padding=1),
                nn.ReLU(),
                nn.Conv2d(depth, depth, 3, padding=1),
                nn.ReLU(),
            ]
            ch = depth
        self.layers = nn.Sequential(*layers)
        self.stride = 2**blocks
        g = int(color_skip)
        if g < 0 or (g and self.stride % g):
            raise ValueError(f"color_skip grid {g} must divide the stride {self.stride}")
        self.color_skip = g
        self.depth = depth + in_channels * g * g

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.layers(x)
        g = self.color_skip
        if g:
            c = F.avg_pool2d(x, self.stride // g, ceil_mode=True)
            H, W = y.shape[-2:]
            c = F.pad(c, (0, g * W - c.shape[-1], 0, g * H - c.shape[-2]))
            y = torch.cat([y, F.pixel_unshuffle(c, g)], dim=1)
        return y


class RPNHead(nn.Module):
    def __init__(self, depth: int, anchors_per_cell: int):
        super().__init__()
        self.conv = nn.Conv2d(depth, depth, 3, padding=1)
        self.cls = nn.Conv2d(depth, anchors_per_cell, 1)
        self.reg = nn.Conv2d(depth, 4 * anchors_per_cell, 1)
        self.k = anchors_per_cell

    def forward(self, f: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Per-anchor logits ``(HWK,)`` and deltas ``(HWK, 4)`` in anchor order.

        A batched ``(B, D, H, W)`` input gives ``(B, HWK)`` and ``(B, HWK, 4)``.
        """
        single = f.dim() == 3
        x = f[None] if single else f
        B, _, H, W = x.shape
        h = F.relu(self.conv(x))
        logits = self.cls(h).permute(0, 2, 3, 1).reshape(B, -1)
        deltas = self.reg(h).reshape(B, self.k, 4, H, W).permute(0, 3, 4, 1, 2).reshape(B, -1, 4)
        return (logits[0], deltas[0]) if single else (logits, deltas)


def image_to_tensor(image: np.ndarray) -> torch.Tensor:
    return torch.tensor(np.asarray(image)).permute(2, 0, 1).float() / 255.0


def extract_features(image: np.ndarray, backbone: Backbone) -> FeatureMap:
    h, w = image.shape[:2]
    if h < backbone.stride or w < backbone.stride:
        raise ValueError(f"image {w}x{h} is smaller than the backbone stride {backbone.stride}")
    x = image_to_tensor(image).to(next(backbone.parameters()).dtype)
    return FeatureMap(backbone(x[None])[0], backbone.stride, (w, h))


def rpn_forward(
    f: FeatureMap,
    anchors: AnchorSet,
    head: RPNHead,
    pre_nms_k: int = 256,
    post_nms_k: int = 64,
    nms_threshold: float = NMS_THRESHOLD,
) -> ProposalSet:
    logits, deltas = head(f.values)
    return proposals_from_outputs(logits, deltas, anchors, f.image_size, pre_nms_k, post_nms_k, nms_threshold)


def proposals_from_outputs(logits, deltas, anchors, image_size, pre_nms_k, post_nms_k, nms_threshold=NMS_THRESHOLD):
    with torch.no_grad():
        scores = torch.sigmoid(logits)
        boxes = clip_boxes_t(decode_deltas_t(anchors.boxes.to(deltas.dtype), deltas), *image_size)
        wh = boxes[:, 2:] - boxes[:, :2]
        valid = (wh >= MIN_PROPOSAL_SIZE).all(dim=1).nonzero()[:, 0]
        order = valid[torch.sort(-scores[valid], stable=True).indices][:pre_nms_k]
        keep = nms_t(boxes[order], scores[order], nms_threshold)[:post_nms_k]
        idx = order[keep]
        return ProposalSet(boxes[idx], scores[idx])


def _bin_edges(lo: torch.Tensor, hi: torch.Tensor, size: int, bins: int):
    """Integer cell ranges ``[start, end)`` of ``bins`` bins spanning ``[lo, hi)`` in cell units."""
    start = torch.floor(lo).clamp(0, size - 1)
    end = torch.maximum(torch.ceil(hi).clamp(1, size), start + 1)
    length = end - start
    j = torch.arange(bins, dtype=lo.dtype)
    s = start[:, None] + torch.floor(j[None] * length[:, None] / bins)
    e = start[:, None] + torch.ceil((j[None] + 1) * length[:, None] / bins)
    # Empty bins fall back to the nearest valid cell.
    s = s.clamp(0, size - 1)
    e = torch.maximum(e.clamp(1, size), s + 1)
    return s.long(), e.long()


def roi_pool(f: FeatureMap, boxes, output_size: int = 7) -> torch.Tensor:
    """Max-pool each box into an ``A x A`` grid. Returns ``(n, D, A, A)``.

    Accepts a single :class:`Box` or an ``(n, 4)`` tensor of pixel boxes.
    """
    single = isinstance(boxes, Box)
    b = torch.tensor([boxes.as_tuple()], dtype=torch.float64) if single else boxes.detach().to(torch.float64)
    W, H = f.image_size
    outside = (b[:, 0] >= W) | (b[:, 1] >= H) | (b[:, 2] <= 0) | (b[:, 3] <= 0)
    if bool(outside.any()):
        raise ValueError("box lies entirely outside the image")
    s = f.stride
    rs, re = _bin_edges(b[:, 1] / s, b[:, 3] / s, f.height, output_size)
    cs, ce = _bin_edges(b[:, 0] / s, b[:, 2] / s, f.width, output_size)
    hs = torch.arange(f.height)
    ws = torch.arange(f.width)
    row_mask = (hs[None, None] >= rs[..., None]) & (hs[None, None] < re[..., None])  # (n, A, H)
    col_mask = (ws[None, None] >= cs[..., None]) & (ws[None, None] < ce[..., None])  # (n, A, W)
    v = f.values.detach()
    neg = torch.tensor(-math.inf, dtype=v.dtype)
    # Separable max: first over columns of each column bin, then over rows.
    cols = torch.where(col_mask[:, :, None, None, :], v[None, None], neg).amax(dim=-1)  # (n, Ac, D, H)
    out = torch.where(row_mask[:, :, None, None, :], cols[:, None], neg).amax(dim=-1)  # (n, Ar, Ac, D)
    out = out.permute(0, 3, 1, 2).contiguous()
    return out[0] if single else out


def smooth_l1(x: torch.Tensor) -> torch.Tensor:
    ax = x.abs()
    return torch.where(ax < 1, 0.5 * x * x, ax - 0.5)


def label_anchors(anchors: torch.Tensor, gt: Box, pos_iou=0.7, neg_iou=0.3) -> torch.Tensor:
    """1 positive, 0 negative, -1 ignored. The single best-IoU anchor is always positive."""
    ious = box_iou_t(anchors.to(torch.float64), torch.tensor([gt.as_tuple()], dtype=torch.float64))[:, 0]
    labels = torch.full((anchors.shape[0],), -1, dtype=torch.long)
    labels[ious < neg_iou] = 0
    labels[ious >= pos_iou] = 1
    labels[int(torch.argmax(ious))] = 1
    return labels


def sample_anchors(labels: torch.Tensor, generator: torch.Generator, batch: int = 64, max_pos: int = 32):
    pos = (labels == 1).nonzero()[:, 0]
    neg = (labels == 0).nonzero()[:, 0]
    pos = pos[torch.randperm(len(pos), generator=generator)[:max_pos]]
    neg = neg[torch.randperm(len(neg), generator=generator)[: batch - len(pos)]]
    return pos, neg


def rpn_loss(
    logits: torch.Tensor,
    deltas: torch.Tensor,
    anchors: AnchorSet,
    gt: Box,
    generator: torch.Generator | None = None,
    batch: int = 64,
    max_pos: int = 32,
    reg_weight: float = 1.0,
) -> torch.Tensor:
    """Objectness cross-entropy over sampled anchors plus smoothed-L1 on positive deltas."""
    if generator is None:
        generator = torch.Generator().manual_seed(0)
    labels = label_anchors(anchors.boxes, gt)
    pos, neg = sample_anchors(labels, generator, batch, max_pos)
    sel = torch.cat([pos, neg])
    target = torch.cat([torch.ones(len(pos)), torch.zeros(len(neg))]).to(logits.dtype)
    cls = F.binary_cross_entropy_with_logits(logits[sel], target, reduction="mean")
    a = anchors.boxes[pos].to(deltas.dtype)
    g = torch.tensor([gt.as_tuple()], dtype=deltas.dtype).expand(len(pos), 4)
    reg = smooth_l1(deltas[pos] - encode_deltas_t(a, g)).sum(dim=1).mean()
    return cls + reg_weight * reg
