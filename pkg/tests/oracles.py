"""Independent reference computations used to check the library.

Nothing here imports the code paths it checks.
"""
import math

import numpy as np
import torch


def raster_iou(a, b):
    """IoU of integer-coordinate boxes by counting covered unit cells on a grid."""
    hi = int(max(a[2], a[3], b[2], b[3])) + 1
    grid = np.zeros((2, hi, hi), dtype=bool)
    for k, (x1, y1, x2, y2) in enumerate((a, b)):
        grid[k, int(y1):int(y2), int(x1):int(x2)] = True
    inter = np.logical_and(grid[0], grid[1]).sum()
    union = np.logical_or(grid[0], grid[1]).sum()
    return inter / union


def central_difference(f, params, step=1e-5):
    """Numerical gradient of scalar ``f()`` w.r.t. each tensor in ``params`` (perturbed in place)."""
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat, gflat = p.view(-1), g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                up = float(f())
                flat[i] = orig - step
                down = float(f())
                flat[i] = orig
                gflat[i] = (up - down) / (2 * step)
            grads.append(g)
    return grads


def relative_error(a, b, floor=1e-4):
    """||a - b|| / max(||a||, ||b||); the floor keeps vanishing gradients from amplifying FD noise."""
    a = torch.cat([x.reshape(-1) for x in a])
    b = torch.cat([x.reshape(-1) for x in b])
    return float((a - b).norm() / max(a.norm(), b.norm(), floor))


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def lstm_cell_scalar(x, h, c, w_ih, w_hh, b_ih, b_hh):
    """One LSTM step written out unit by unit (gate order i, f, g, o)."""
    n = len(h)
    pre = []
    for row in range(4 * n):
        s = b_ih[row] + b_hh[row]
        for j, xj in enumerate(x):
            s += w_ih[row][j] * xj
        for j, hj in enumerate(h):
            s += w_hh[row][j] * hj
        pre.append(s)
    h_new, c_new = [], []
    for u in range(n):
        i = sigmoid(pre[u])
        f = sigmoid(pre[n + u])
        g = math.tanh(pre[2 * n + u])
        o = sigmoid(pre[3 * n + u])
        cu = f * c[u] + i * g
        c_new.append(cu)
        h_new.append(o * math.tanh(cu))
    return h_new, c_new


def brute_success(ious_or_none, tau):
    present = [v for v in ious_or_none if v is not None]
    return sum(1 for v in present if v > tau) / len(present)


def brute_precision(errors_or_none, theta):
    present = [v for v in errors_or_none if v is not None]
    return sum(1 for v in present if v <= theta) / len(present)


def brute_greedy_nms(boxes, scores, thr, iou_fn):
    order = sorted(range(len(boxes)), key=lambda i: (-scores[i], i))
    keep = []
    for i in order:
        if all(iou_fn(boxes[i], boxes[k]) <= thr for k in keep):
            keep.append(i)
    return keep
