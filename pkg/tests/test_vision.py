import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from nltrack.geometry import AnchorSet, Box, decode_deltas, encode_deltas, generate_anchors, iou
from nltrack.vision import (
    Backbone,
    FeatureMap,
    RPNHead,
    extract_features,
    label_anchors,
    roi_pool,
    rpn_forward,
    rpn_loss,
)
from oracles import brute_greedy_nms, sigmoid


@pytest.fixture
def tiny():
    torch.manual_seed(0)
    backbone = Backbone(blocks=2, depth=4)
    anchors_sizes, ratios = [4, 8], [1.0, 2.0]
    head = RPNHead(4, len(anchors_sizes) * len(ratios))
    for p in head.parameters():
        torch.nn.init.normal_(p, std=0.5)
    image = (np.random.default_rng(0).random((16, 16, 3)) * 255).astype(np.uint8)
    fmap = extract_features(image, backbone)
    anchors = generate_anchors(fmap.height, fmap.width, backbone.stride, anchors_sizes, ratios)
    return backbone, head, fmap, anchors


class TestExtractFeatures:
    def test_desk_shape(self):
        backbone = Backbone(3, 32)
        f = extract_features(np.zeros((64, 64, 3), np.uint8), backbone)
        assert (f.height, f.width, f.depth) == (8, 8, 32)
        assert f.stride == 8

    @pytest.mark.parametrize("hw", [(16, 16), (20, 12), (64, 64)])
    def test_color_skip_is_sub_cell_means(self, hw):
        H, W = hw
        image = np.random.default_rng(1).integers(0, 256, (H, W, 3)).astype(np.uint8)
        with torch.no_grad():
            f = extract_features(image, Backbone(3, 4, color_skip=2))
        assert f.depth == 4 + 12
        x = image.astype(np.float64) / 255
        for r in range(f.height):
            for c in range(f.width):
                for k in range(3):
                    for i in range(2):
                        for j in range(2):
                            y0, x0 = 8 * r + 4 * i, 8 * c + 4 * j
                            patch = x[y0 : y0 + 4, x0 : x0 + 4, k]
                            want = patch.mean() if patch.size else 0.0
                            got = float(f.values[4 + k * 4 + i * 2 + j, r, c])
                            assert got == pytest.approx(want, abs=1e-6)

    def test_color_skip_must_divide_stride(self):
        with pytest.raises(ValueError):
            Backbone(3, 4, color_skip=3)

    def test_long_side_1333_at_stride_16(self):
        backbone = Backbone(4, 2)
        f = extract_features(np.zeros((750, 1333, 3), np.uint8), backbone)
        assert f.width == math.ceil(1333 / 16) == 84
        assert f.height == math.ceil(750 / 16)

    @pytest.mark.parametrize("hw", [(61, 64), (64, 57), (9, 9), (17, 33)])
    def test_ceil_shape(self, hw):
        f = extract_features(np.zeros(hw + (3,), np.uint8), Backbone(3, 2))
        assert (f.height, f.width) == (math.ceil(hw[0] / 8), math.ceil(hw[1] / 8))

    def test_zero_image_constant_activations(self):
        backbone = Backbone(3, 8)
        for m in backbone.modules():
            if isinstance(m, torch.nn.Conv2d):
                torch.nn.init.zeros_(m.bias)
        v = extract_features(np.zeros((32, 32, 3), np.uint8), backbone).values
        assert torch.equal(v, v[:, :1, :1].expand_as(v))

    def test_rejects_undersized(self):
        with pytest.raises(ValueError):
            extract_features(np.zeros((4, 64, 3), np.uint8), Backbone(3, 2))

    def test_deterministic(self):
        backbone = Backbone(2, 4)
        img = np.full((16, 16, 3), 77, np.uint8)
        assert torch.equal(extract_features(img, backbone).values, extract_features(img, backbone).values)


def brute_force_proposals(logits, deltas, anchors, image_size, pre_k, post_k, thr=0.7):
    cand = []
    for i in range(len(anchors)):
        b = decode_deltas(anchors.box(i), deltas[i].tolist(), image_size=None)
        x1, y1, x2, y2 = b.as_tuple()
        W, H = image_size
        c = (min(max(x1, 0), W), min(max(y1, 0), H), min(max(x2, 0), W), min(max(y2, 0), H))
        if c[2] - c[0] >= 1 and c[3] - c[1] >= 1:
            cand.append((i, sigmoid(float(logits[i].detach())), Box(*c)))
    cand.sort(key=lambda t: (-t[1], t[0]))
    cand = cand[:pre_k]
    keep = brute_greedy_nms([c[2] for c in cand], [c[1] for c in cand], thr, iou)[:post_k]
    return [cand[k] for k in keep]


class TestRPNForward:
    def test_single_proposal(self, tiny):
        _, head, fmap, anchors = tiny
        full = rpn_forward(fmap, anchors, head, 100, 100)
        one = rpn_forward(fmap, anchors, head, 100, 1)
        assert len(one) == 1
        assert torch.equal(one.boxes[0], full.boxes[0])
        assert float(one.objectness[0]) == float(full.objectness.max())

    def test_zero_parameters(self, tiny):
        _, head, fmap, anchors = tiny
        for p in head.parameters():
            torch.nn.init.zeros_(p)
        props = rpn_forward(fmap, anchors, head, 1000, 1000)
        assert torch.equal(props.objectness, torch.full((len(props),), 0.5))
        W, H = fmap.image_size
        clipped = [anchors.box(i).clipped(W, H) for i in range(len(anchors))]
        keep = brute_greedy_nms(clipped, [0.5] * len(clipped), 0.7, iou)
        expected = torch.tensor([clipped[k].as_tuple() for k in keep])
        assert torch.allclose(props.boxes, expected, atol=1e-5)

    @pytest.mark.parametrize("pre_k,post_k", [(64, 64), (20, 5), (8, 8)])
    def test_matches_brute_force(self, tiny, pre_k, post_k):
        _, head, fmap, anchors = tiny
        logits, deltas = head(fmap.values)
        props = rpn_forward(fmap, anchors, head, pre_k, post_k)
        ref = brute_force_proposals(logits.double(), deltas.double(), anchors, fmap.image_size, pre_k, post_k)
        assert len(props) == len(ref)
        for k, (_, score, box) in enumerate(ref):
            assert float(props.objectness[k]) == pytest.approx(score, abs=1e-6)
            assert props.boxes[k].tolist() == pytest.approx(list(box.as_tuple()), abs=1e-4)

    def test_sorted_and_inside_image(self, tiny):
        _, head, fmap, anchors = tiny
        props = rpn_forward(fmap, anchors, head)
        W, H = fmap.image_size
        s = props.objectness
        assert bool((s[:-1] >= s[1:]).all())
        b = props.boxes
        assert bool(((b[:, 0] >= 0) & (b[:, 1] >= 0) & (b[:, 2] <= W) & (b[:, 3] <= H)).all())


def _map(values: np.ndarray, stride=8):
    v = torch.tensor(values, dtype=torch.float32)
    return FeatureMap(v, stride, (v.shape[2] * stride, v.shape[1] * stride))


def geometric_hot_bins(box_cells, hot, A):
    """Bins whose extent overlaps the hot cell with positive length (box given in cell units)."""
    x1, y1, x2, y2 = box_cells
    hr, hc = hot
    hot_bins = set()
    for i in range(A):
        lo_y, hi_y = y1 + i * (y2 - y1) / A, y1 + (i + 1) * (y2 - y1) / A
        for j in range(A):
            lo_x, hi_x = x1 + j * (x2 - x1) / A, x1 + (j + 1) * (x2 - x1) / A
            if max(lo_y, hr) < min(hi_y, hr + 1) and max(lo_x, hc) < min(hi_x, hc + 1):
                hot_bins.add((i, j))
    return hot_bins


class TestRoIPool:
    def test_single_cell(self):
        rng = np.random.default_rng(1)
        f = _map(rng.normal(size=(5, 6, 6)))
        out = roi_pool(f, Box(16, 8, 24, 16), 7)
        assert out.shape == (5, 7, 7)
        cell = f.values[:, 1, 2]
        assert torch.equal(out, cell[:, None, None].expand(5, 7, 7))

    def test_identity(self):
        rng = np.random.default_rng(2)
        f = _map(rng.normal(size=(3, 7, 7)))
        out = roi_pool(f, Box(0, 0, 56, 56), 7)
        assert torch.equal(out, f.values)

    @settings(max_examples=40, deadline=None)
    @given(
        st.integers(0, 5), st.integers(0, 5), st.integers(1, 6), st.integers(1, 6),
        st.integers(0, 10), st.integers(0, 10), st.integers(1, 7),
    )
    def test_hot_cell(self, cx, cy, w, h, hx, hy, A):
        size = 11
        x2, y2 = min(cx + w, size), min(cy + h, size)
        vals = np.zeros((1, size, size))
        vals[0, hy, hx] = 1.0
        f = _map(vals, stride=4)
        out = roi_pool(f, Box(cx * 4, cy * 4, x2 * 4, y2 * 4), A)[0]
        hot = {(i, j) for i in range(A) for j in range(A) if out[i, j] == 1.0}
        assert hot == geometric_hot_bins((cx, cy, x2, y2), (hy, hx), A)

    @given(st.floats(0.01, 100))
    def test_positive_homogeneity(self, c):
        rng = np.random.default_rng(3)
        vals = rng.normal(size=(2, 8, 8))
        boxes = torch.tensor([[3.0, 5.0, 40.0, 22.0], [0.0, 0.0, 64.0, 64.0], [50.0, 50.0, 70.0, 70.0]])
        a = roi_pool(_map(vals), boxes, 7)
        b = roi_pool(_map(vals * c), boxes, 7)
        assert torch.allclose(b, a * torch.tensor(c, dtype=torch.float32), rtol=1e-5, atol=1e-6)

    def test_outside_rejected(self):
        f = _map(np.zeros((1, 4, 4)))
        with pytest.raises(ValueError):
            roi_pool(f, Box(40, 40, 50, 50))

    def test_tiny_box_uses_nearest_cell(self):
        vals = np.arange(16, dtype=float).reshape(1, 4, 4)
        out = roi_pool(_map(vals), Box(9, 9, 10, 10), 3)
        assert torch.equal(out, torch.full((1, 3, 3), 5.0))


def _bce(logit, y):
    p = sigmoid(logit)
    return -(y * math.log(p) + (1 - y) * math.log(1 - p))


def _sl1(x):
    return 0.5 * x * x if abs(x) < 1 else abs(x) - 0.5


class TestRPNLoss:
    def _anchors(self, boxes):
        return AnchorSet(torch.tensor(boxes, dtype=torch.float32), 8.0, 1, len(boxes), 1)

    def test_perfect_regression_term_is_zero(self):
        anchors = self._anchors([[0, 0, 16, 16], [40, 40, 56, 56]])
        gt = Box(0, 0, 16, 16)
        deltas = torch.zeros(2, 4)
        logits = torch.tensor([30.0, -30.0])
        loss = rpn_loss(logits, deltas, anchors, gt)
        assert float(loss) < 1e-10

    def test_best_anchor_always_positive(self):
        anchors = torch.tensor([[0, 0, 10, 10], [5, 5, 25, 25], [40, 40, 50, 50]], dtype=torch.float32)
        gt = Box(6, 6, 30, 30)
        labels = label_anchors(anchors, gt)
        assert max(iou(Box(*a.tolist()), gt) for a in anchors) < 0.7
        assert labels.tolist() == [0, 1, 0]

    def test_four_anchor_hand_computation(self):
        boxes = [[0, 0, 10, 10], [1, 0, 11, 10], [4, 0, 14, 10], [30, 30, 40, 40]]
        anchors = self._anchors(boxes)
        gt = Box(0.5, 0, 10.5, 10)
        # IoUs: 0.905, 0.905, 0.538 (ignored), 0 -> labels 1, 1, -1, 0
        logits = torch.tensor([0.3, -0.2, 1.5, 0.4], dtype=torch.float64)
        deltas = torch.tensor([[0.1, 0, 0.05, 0], [0, 0.2, 0, -0.1], [5, 5, 5, 5], [1, 1, 1, 1]], dtype=torch.float64)
        loss = float(rpn_loss(logits, deltas, anchors, gt))
        cls = (_bce(0.3, 1) + _bce(-0.2, 1) + _bce(0.4, 0)) / 3
        reg = 0.0
        for k in (0, 1):
            t = encode_deltas(Box(*boxes[k]), gt)
            reg += sum(_sl1(float(deltas[k, j]) - t[j]) for j in range(4))
        reg /= 2
        assert loss == pytest.approx(cls + reg, abs=1e-9)

    def test_sampling_caps(self):
        anchors = generate_anchors(8, 8, 8, [8, 16, 32], [1.0, 0.5, 2.0])
        gt = Box(10, 10, 26, 26)
        labels = label_anchors(anchors.boxes, gt)
        from nltrack.vision import sample_anchors

        pos, neg = sample_anchors(labels, torch.Generator().manual_seed(0), batch=64, max_pos=32)
        assert len(pos) <= 32 and len(pos) + len(neg) == 64
        assert bool((labels[pos] == 1).all()) and bool((labels[neg] == 0).all())

    def test_gradient_through_backbone_and_head(self):
        from oracles import central_difference, relative_error

        torch.manual_seed(2)
        backbone = Backbone(blocks=1, depth=2).double()
        head = RPNHead(2, 2).double()
        image = torch.rand(1, 3, 16, 16, dtype=torch.float64, generator=torch.Generator().manual_seed(4))
        anchors = generate_anchors(8, 8, 2, [4, 8], [1.0])
        gt = Box(3, 5, 11, 12)

        def loss():
            logits, deltas = head(backbone(image)[0])
            return rpn_loss(logits, deltas, anchors, gt, torch.Generator().manual_seed(1), batch=16, max_pos=4)

        params = list(backbone.parameters()) + list(head.parameters())
        loss().backward()
        analytic = [p.grad.clone() for p in params]
        numeric = central_difference(loss, [p.data for p in params])
        assert relative_error(analytic, numeric) < 1e-4
