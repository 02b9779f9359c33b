"""Recurrent tracking head: packs Top-N detections, steps an LSTM cell, regresses a box."""
from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .detection import DetectionSet
from .errors import ShapeMismatchError
from .geometry import Box
from .vision import smooth_l1

MIN_SIDE = 1.0


@dataclass
class TrackerState:
    hidden: torch.Tensor
    cell: torch.Tensor
    history: tuple[Box, ...] = ()
    frame_index: int = 0

    @classmethod
    def initial(cls, hidden_size: int, dtype=torch.float32) -> "TrackerState":
        z = torch.zeros(hidden_size, dtype=dtype)
        return cls(z, z.clone())

    def detached(self) -> "TrackerState":
        return TrackerState(self.hidden.detach(), self.cell.detach(), self.history, self.frame_index)


@dataclass
class Prediction:
    box: Box
    frame_index: int
    # Raw normalized (x1, y1, x2, y2) output; carries gradient during training.
    normalized: torch.Tensor | None = field(default=None, repr=False, compare=False)


class TrackerHead(nn.Module):
    def __init__(self, top_n: int, region_dim: int, projection: int = 64, hidden: int = 64):
        super().__init__()
        self.top_n = top_n
        self.projection = projection
        self.hidden_size = hidden
        self.project = nn.Linear(region_dim, projection)
        self.cell = nn.LSTMCell(top_n * (5 + projection), hidden)
        self.out = nn.Linear(hidden, 4)

    @property
    def input_size(self) -> int:
        return self.top_n * (5 + self.projection)

    @torch.no_grad()
    def copy_top_init(self, gain: float = 2.0, hold_sharpness: float = 0.0, hold_threshold: float = 0.0) -> None:
        """Start as an approximate pass-through of the top-ranked detection box.

        Hidden units 0..3 read one coordinate each of the first detection and the output
        layer reads only those units, so the initial prediction follows the best detection
        instead of a constant. With ``hold_sharpness = a > 0`` their input and forget gates
        are driven by the top fused score ``s`` as ``sigmoid(+-a (s - hold_threshold))``:
        confident detections overwrite the cell, weak ones leave the previous box in place.
        Every other weight keeps its random initialization and stays trainable.
        """
        H = self.hidden_size
        if H < 4:
            raise ValueError("copy initialization needs at least 4 hidden units")
        cell = self.cell
        a, tau = hold_sharpness, hold_threshold
        for k in range(4):
            rows = [gate * H + k for gate in range(4)]  # i, f, g, o
            cell.weight_ih[rows] = 0.0
            cell.weight_hh[rows] = 0.0
            cell.bias_hh[rows] = 0.0
            if a:
                cell.bias_ih[rows] = torch.tensor([-a * tau, a * tau, -gain / 2, 6.0], dtype=cell.bias_ih.dtype)
                cell.weight_ih[k, 4] = a
                cell.weight_ih[H + k, 4] = -a
            else:
                cell.bias_ih[rows] = torch.tensor([6.0, -6.0, -gain / 2, 6.0], dtype=cell.bias_ih.dtype)
            cell.weight_ih[2 * H + k, k] = gain
        self.out.weight.zero_()
        self.out.bias.zero_()
        # sigmoid(4 (x - 1/2)) ~ x near the middle; tanh(tanh(gain u)) ~ gain u.
        self.out.weight[:, :4] = torch.eye(4, dtype=self.out.weight.dtype) * (4.0 / gain)


def pack_input(d: DetectionSet, image_size: tuple[int, int], head: TrackerHead) -> torch.Tensor:
    """Per detection in rank order: normalized box, fused score, projected region feature."""
    W, H = image_size
    dtype = head.project.weight.dtype
    scale = torch.tensor([W, H, W, H], dtype=dtype)
    boxes = d.boxes.to(dtype) / scale
    feats = head.project(d.features.reshape(len(d), -1).to(dtype))
    block = torch.cat([boxes, d.scores.to(dtype)[:, None], feats], dim=1)
    return block.reshape(-1)


def fix_box(x1: float, y1: float, x2: float, y2: float, width: float, height: float) -> Box:
    """Order the corners, clip to the image and keep at least ``MIN_SIDE`` pixels per side."""

    def axis(a, b, limit):
        lo, hi = min(a, b), max(a, b)
        lo, hi = min(max(lo, 0.0), limit), min(max(hi, 0.0), limit)
        if hi - lo < MIN_SIDE:
            hi = lo + MIN_SIDE
            if hi > limit:
                hi, lo = limit, limit - MIN_SIDE
        return lo, hi

    x1, x2 = axis(x1, x2, float(width))
    y1, y2 = axis(y1, y2, float(height))
    return Box(x1, y1, x2, y2)


def tracker_step(state: TrackerState, x: torch.Tensor, head: TrackerHead, image_size: tuple[int, int]):
    if x.shape != (head.input_size,):
        raise ShapeMismatchError(f"tracker input has shape {tuple(x.shape)}, expected ({head.input_size},)")
    h, c = head.cell(x[None], (state.hidden[None], state.cell[None]))
    h, c = h[0], c[0]
    norm = torch.sigmoid(head.out(h))
    W, H = image_size
    n = norm.detach().tolist()
    box = fix_box(n[0] * W, n[1] * H, n[2] * W, n[3] * H, W, H)
    index = state.frame_index + 1
    new_state = TrackerState(h, c, (state.history + (box,))[-2:], index)
    return new_state, Prediction(box, index, norm)


def tracker_loss(predictions, gts) -> torch.Tensor:
    """Smoothed-L1 summed over time steps and coordinates (normalized space).

    Both arguments are ``(T, 4)`` tensors, or sequences of 4-vectors.
    """
    if not isinstance(predictions, torch.Tensor):
        predictions = torch.stack([torch.as_tensor(p) for p in predictions]) if len(predictions) else torch.zeros(0, 4)
    gts = torch.as_tensor(gts, dtype=predictions.dtype)
    if predictions.shape != gts.shape:
        raise ShapeMismatchError(f"{tuple(predictions.shape)} predictions vs {tuple(gts.shape)} targets")
    return smooth_l1(predictions - gts).sum()


def normalize_box(box: Box, image_size: tuple[int, int]) -> tuple[float, float, float, float]:
    W, H = image_size
    return (box.x1 / W, box.y1 / H, box.x2 / W, box.y2 / H)
