"""Model container, three-stage curriculum training, inference and checkpoints."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import struct
import time
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from . import geometry
from .data import SYNTH_VOCABULARY, VideoSample, preprocess
from .detection import DetectionSet, FrameCandidates, detect_sequence_gate, fuse_scores, relaxed_gate, select_top_n
from .errors import (
    CheckpointShapeError,
    CheckpointVersionError,
    CorruptCheckpointError,
    FrameError,
    IncompleteModelError,
    StageOrderError,
)
from .geometry import Box, box_iou_t
from .language import EMBED_DIM, LanguageNetwork, Query, embed_query, language_loss, tokenize
from .tracker import Prediction, TrackerHead, TrackerState, normalize_box, pack_input, tracker_loss, tracker_step
from .vision import (
    Backbone,
    FeatureMap,
    RPNHead,
    extract_features,
    image_to_tensor,
    proposals_from_outputs,
    roi_pool,
    rpn_loss,
)

log = logging.getLogger(__name__)

STAGES = ("init", "rpn", "language", "tracker", "complete")
BLOCKS = ("backbone", "rpn", "language", "tracker")


@dataclass(frozen=True)
class ModelConfig:
    vocabulary: tuple[str, ...] = SYNTH_VOCABULARY
    embed_dim: int = EMBED_DIM
    backbone_blocks: int = 3
    feature_depth: int = 32
    color_skip: int = 2  # sub-cell grid of raw colour appended to the features; 0 disables
    anchor_sizes: tuple[float, ...] = (8, 12, 16, 24, 32)
    anchor_ratios: tuple[float, ...] = geometry.DEFAULT_RATIOS
    pool_size: int = 7
    pre_nms_k: int = 256
    post_nms_k: int = 64
    nms_threshold: float = 0.7
    top_n: int = 5
    projection: int = 64
    hidden: int = 64
    max_side: int = 128
    gate_v_floor: float = 1.0
    gate_d_floor: float = 1.0
    gate_cap: float = 10.0
    # Tracker initialization: follow the top detection (gain 0 keeps plain random init),
    # holding the previous box while the top fused score is below the threshold.
    tracker_copy_gain: float = 2.0
    tracker_hold_sharpness: float = 200.0
    tracker_hold_threshold: float = 0.03

    @classmethod
    def full_scale(cls, vocabulary: Sequence[str], **kw) -> "ModelConfig":
        base = dict(
            vocabulary=tuple(vocabulary),
            backbone_blocks=4,
            feature_depth=256,
            anchor_sizes=geometry.DEFAULT_SIZES,
            pre_nms_k=6000,
            post_nms_k=300,
            hidden=256,
            max_side=1333,
        )
        base.update(kw)
        return cls(**base)

    @property
    def region_dim(self) -> int:
        return self.pool_size * self.pool_size * self.map_depth

    @property
    def map_depth(self) -> int:
        return self.feature_depth + 3 * int(self.color_skip) ** 2

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        raw = json.loads(text)
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()})

    def fingerprint(self) -> bytes:
        return hashlib.sha256(self.to_json().encode()).digest()


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    rpn_iters: int = 2000
    language_iters: int = 2000
    tracker_iters: int = 4000
    batch_size: int = 8  # frames per step in the rpn and language stages
    rpn_batch: int = 64
    rpn_max_pos: int = 32
    bptt: int = 16
    init_box_fraction: float = 0.0
    # Starting AdaGrad sum of squares for the tracker stage. Zero makes the first step a
    # full-lr sign step on every weight, which swamps the wide tracker input layer. The
    # detection stages keep zero: their gradients are tiny and a floor would stall them.
    tracker_adagrad_init: float = 0.1
    seed: int = 0
    log_every: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if self.tracker_adagrad_init < 0:
            raise ValueError("tracker_adagrad_init must be non-negative")
        for name in ("rpn_iters", "language_iters", "tracker_iters", "batch_size", "bptt"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class TrackerModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.backbone = Backbone(config.backbone_blocks, config.feature_depth, color_skip=config.color_skip)
        k = len(config.anchor_sizes) * len(config.anchor_ratios)
        self.rpn = RPNHead(config.map_depth, k)
        self.language = LanguageNetwork(config.vocabulary, config.region_dim, config.embed_dim)
        self.tracker = TrackerHead(config.top_n, config.region_dim, config.projection, config.hidden)
        if config.tracker_copy_gain:
            self.tracker.copy_top_init(
                config.tracker_copy_gain, config.tracker_hold_sharpness, config.tracker_hold_threshold
            )
        self._anchors: dict[tuple[int, int], geometry.AnchorSet] = {}

    def anchors(self, height: int, width: int) -> geometry.AnchorSet:
        key = (height, width)
        if key not in self._anchors:
            c = self.config
            self._anchors[key] = geometry.generate_anchors(
                height, width, self.backbone.stride, c.anchor_sizes, c.anchor_ratios
            )
        return self._anchors[key]

    def features(self, image: np.ndarray) -> FeatureMap:
        return extract_features(image, self.backbone)

    def sentence(self, query) -> torch.Tensor:
        q = query if isinstance(query, Query) else tokenize(query)
        return embed_query(q, self.language.table, self.language.encoder)

    def proposals(self, fmap: FeatureMap):
        c = self.config
        logits, deltas = self.rpn(fmap.values)
        anchors = self.anchors(fmap.height, fmap.width)
        return proposals_from_outputs(logits, deltas, anchors, fmap.image_size, c.pre_nms_k, c.post_nms_k, c.nms_threshold)

    @torch.no_grad()
    def candidates(self, image: np.ndarray, query=None, sentence=None) -> FrameCandidates:
        """Ungated detection-phase outputs for one preprocessed frame."""
        if sentence is None:
            sentence = self.sentence(query)
        fmap = self.features(image)
        props = self.proposals(fmap)
        feats = roi_pool(fmap, props.boxes, self.config.pool_size)
        sims = self.language.head(sentence, feats)
        return FrameCandidates(props.boxes, props.objectness, sims, feats, fmap)

    def gate_kwargs(self) -> dict:
        c = self.config
        return dict(v_floor=c.gate_v_floor, d_floor=c.gate_d_floor, cap=c.gate_cap)

    def select(self, cand: FrameCandidates, gate_context=None) -> DetectionSet:
        sim = cand.similarity
        if gate_context is not None:
            sim = relaxed_gate(sim, cand.boxes, *gate_context, **self.gate_kwargs())
        det = select_top_n(cand.boxes, cand.features, fuse_scores(cand.objectness, sim), self.config.top_n)
        if det.features is None:
            with torch.no_grad():
                det.features = roi_pool(cand.fmap, det.boxes, self.config.pool_size)
        return det

    def detect(self, image: np.ndarray, query=None, gate_context=None, sentence=None) -> DetectionSet:
        return self.select(self.candidates(image, query, sentence), gate_context)

    @torch.no_grad()
    def init_detections(self, image: np.ndarray, box: Box) -> DetectionSet:
        """A DetectionSet built from a single known box, repeated N times."""
        fmap = self.features(image)
        feat = roi_pool(fmap, box, self.config.pool_size)
        n = self.config.top_n
        boxes = torch.tensor([box.as_tuple()] * n, dtype=torch.float32)
        return DetectionSet(boxes, feat[None].expand(n, *feat.shape), torch.ones(n), pad_count=n - 1)

    def new_state(self) -> TrackerState:
        return TrackerState.initial(self.config.hidden, self.tracker.out.weight.dtype)

    def step(self, state: TrackerState, det: DetectionSet, image_size):
        x = pack_input(det, image_size, self.tracker)
        return tracker_step(state, x, self.tracker, image_size)

    def block_parameters(self, block: str) -> list[nn.Parameter]:
        return list(getattr(self, block).parameters())


# ---------------------------------------------------------------- checkpoints

FORMAT_VERSION = 1
MAGIC = b"NLTRKCKP"


@dataclass
class ModelCheckpoint:
    config: ModelConfig
    params: dict[str, torch.Tensor]
    stage: str = "init"
    version: int = FORMAT_VERSION

    @classmethod
    def from_model(cls, model: TrackerModel, stage: str) -> "ModelCheckpoint":
        params = {k: v.detach().clone().float() for k, v in model.state_dict().items()}
        return cls(model.config, params, stage)

    def build(self) -> TrackerModel:
        model = TrackerModel(self.config)
        model.load_state_dict(self.params)
        return model

    def block_hash(self, block: str) -> str:
        h = hashlib.sha256()
        for name in sorted(self.params):
            if name.split(".", 1)[0] == block:
                h.update(name.encode())
                h.update(self.params[name].numpy().tobytes())
        return h.hexdigest()

    def block_hashes(self) -> dict[str, str]:
        return {b: self.block_hash(b) for b in BLOCKS}

    def at_least(self, stage: str) -> bool:
        return STAGES.index(self.stage) >= STAGES.index(stage)


def save_checkpoint(ckpt: ModelCheckpoint, path) -> None:
    """Header (magic, version, config, fingerprint, stage) + named float32 blocks + CRC32."""
    cfg = ckpt.config.to_json().encode()
    out = bytearray(MAGIC)
    out += struct.pack("<I", ckpt.version)
    out += struct.pack("<I", len(cfg)) + cfg
    out += ckpt.config.fingerprint()
    stage = ckpt.stage.encode()
    out += struct.pack("<B", len(stage)) + stage
    out += struct.pack("<I", len(ckpt.params))
    for name in sorted(ckpt.params):
        t = ckpt.params[name].detach().cpu().contiguous()
        nb = name.encode()
        out += struct.pack("<H", len(nb)) + nb
        out += struct.pack("<B", t.dim()) + struct.pack(f"<{t.dim()}I", *t.shape)
        out += t.numpy().astype("<f4").tobytes()
    out += struct.pack("<I", zlib.crc32(out))
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path, config: ModelConfig | None = None) -> ModelCheckpoint:
    data = Path(path).read_bytes()
    try:
        return _parse_checkpoint(data, config)
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError, TypeError, IndexError) as e:
        raise CorruptCheckpointError(f"{path}: {e}") from None


def _parse_checkpoint(data: bytes, expected: ModelConfig | None) -> ModelCheckpoint:
    if data[: len(MAGIC)] != MAGIC:
        raise CorruptCheckpointError("bad magic")
    pos = len(MAGIC)
    (version,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version}")
    if len(data) < pos + 4 or struct.unpack("<I", data[-4:])[0] != zlib.crc32(data[:-4]):
        raise CorruptCheckpointError("checksum mismatch (truncated or damaged file)")
    (n,) = struct.unpack_from("<I", data, pos)
    pos += 4
    config = ModelConfig.from_json(data[pos : pos + n].decode())
    pos += n
    fp = data[pos : pos + 32]
    pos += 32
    if fp != config.fingerprint():
        raise CorruptCheckpointError("config fingerprint mismatch")
    if expected is not None and expected.fingerprint() != fp:
        raise CheckpointShapeError("checkpoint was saved for a different model configuration")
    (n,) = struct.unpack_from("<B", data, pos)
    pos += 1
    stage = data[pos : pos + n].decode()
    pos += n
    if stage not in STAGES:
        raise CorruptCheckpointError(f"unknown stage {stage!r}")
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    shapes = {k: tuple(v.shape) for k, v in TrackerModel(config).state_dict().items()}
    params = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + n].decode()
        pos += n
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        numel = int(np.prod(shape)) if shape else 1
        if shapes.get(name) != tuple(shape):
            raise CheckpointShapeError(f"block {name!r} has shape {shape}, config expects {shapes.get(name)}")
        arr = np.frombuffer(data, dtype="<f4", count=numel, offset=pos).reshape(shape)
        pos += 4 * numel
        params[name] = torch.from_numpy(arr.astype(np.float32))
    if set(params) != set(shapes):
        raise CheckpointShapeError(f"missing blocks: {sorted(set(shapes) - set(params))}")
    if pos != len(data) - 4:
        raise CorruptCheckpointError("trailing bytes")
    return ModelCheckpoint(config, params, stage, version)


# ---------------------------------------------------------------- training


def init_checkpoint(config: ModelConfig, seed: int = 0) -> ModelCheckpoint:
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = TrackerModel(config)
    return ModelCheckpoint.from_model(model, "init")


def _present_frames(data: Sequence[VideoSample]) -> list[tuple[int, int]]:
    return [(v, t) for v, s in enumerate(data) for t, b in enumerate(s.gt_boxes) if b is not None]


def _prepared(sample: VideoSample, t: int, max_side: int):
    image, scale = preprocess(sample.frame(t), max_side)
    gt = sample.gt_boxes[t]
    return image, (gt.scaled(scale) if gt is not None else None)


def _optimizer(params, lr: float, accumulator: float = 0.0):
    return torch.optim.Adagrad(params, lr=lr, initial_accumulator_value=accumulator)


def _freeze(model: TrackerModel, trainable: Sequence[str]):
    for b in BLOCKS:
        for p in model.block_parameters(b):
            p.requires_grad_(b in trainable)


def train_stage_rpn(data: Sequence[VideoSample], config: TrainConfig, model_config: ModelConfig | None = None,
                    ckpt: ModelCheckpoint | None = None) -> ModelCheckpoint:
    """First stage: backbone and RPN on (frame, box) pairs."""
    pairs = _present_frames(data)
    if not pairs:
        raise ValueError("no annotated frames to train on")
    if ckpt is None:
        ckpt = init_checkpoint(model_config or ModelConfig(), config.seed)
    model = ckpt.build()
    _freeze(model, ("backbone", "rpn"))
    opt = _optimizer(model.block_parameters("backbone") + model.block_parameters("rpn"), config.learning_rate)
    gen = torch.Generator().manual_seed(config.seed * 7919 + 1)
    c = model.config
    for it in range(config.rpn_iters):
        picks = torch.randint(len(pairs), (config.batch_size,), generator=gen).tolist()
        items = [_prepared(data[pairs[i][0]], pairs[i][1], c.max_side) for i in picks]
        opt.zero_grad()
        loss = 0.0
        for group in _same_size_groups(items):
            x = torch.stack([image_to_tensor(items[i][0]) for i in group])
            fmaps = model.backbone(x)
            logits, deltas = model.rpn(fmaps)
            anchors = model.anchors(fmaps.shape[2], fmaps.shape[3])
            for j, i in enumerate(group):
                loss = loss + rpn_loss(logits[j], deltas[j], anchors, items[i][1], gen, config.rpn_batch, config.rpn_max_pos)
        loss = loss / len(items)
        loss.backward()
        opt.step()
        _log(config, "rpn", it, loss)
    return ModelCheckpoint.from_model(model, "rpn")


def _same_size_groups(items):
    groups: dict[tuple, list[int]] = {}
    for i, (image, _) in enumerate(items):
        groups.setdefault(image.shape, []).append(i)
    return list(groups.values())


def _log(config, stage, it, loss):
    if config.log_every and (it % config.log_every == 0):
        log.info("%s iter %d loss %.5f", stage, it, float(loss.detach() if isinstance(loss, torch.Tensor) else loss))


def train_stage_language(data: Sequence[VideoSample], ckpt: ModelCheckpoint, config: TrainConfig) -> ModelCheckpoint:
    """Second stage: the language network on IoU-valued similarity targets, RPN frozen."""
    if not ckpt.at_least("rpn"):
        raise StageOrderError(f"language stage needs an rpn-trained checkpoint, got stage {ckpt.stage!r}")
    pairs = _present_frames(data)
    if not pairs:
        raise ValueError("no annotated frames to train on")
    model = ckpt.build()
    _freeze(model, ("language",))
    opt = _optimizer(model.block_parameters("language"), config.learning_rate)
    gen = torch.Generator().manual_seed(config.seed * 7919 + 2)
    c = model.config
    for it in range(config.language_iters):
        picks = torch.randint(len(pairs), (config.batch_size,), generator=gen).tolist()
        opt.zero_grad()
        loss = 0.0
        for i in picks:
            v, t = pairs[i]
            image, gt = _prepared(data[v], t, c.max_side)
            with torch.no_grad():
                fmap = model.features(image)
                props = model.proposals(fmap)
                feats = roi_pool(fmap, props.boxes, c.pool_size)
                target = language_targets(props.boxes, gt)
            sims = model.language.head(model.sentence(data[v].query), feats)
            loss = loss + language_loss(sims, target)
        loss = loss / len(picks)
        loss.backward()
        opt.step()
        _log(config, "language", it, loss)
    return ModelCheckpoint.from_model(model, "language")


def language_targets(boxes: torch.Tensor, gt: Box) -> torch.Tensor:
    """IoU of every proposal with the ground-truth box."""
    return box_iou_t(boxes.to(torch.float64), torch.tensor([gt.as_tuple()], dtype=torch.float64))[:, 0].float()


def train_stage_tracker(data: Sequence[VideoSample], ckpt: ModelCheckpoint, config: TrainConfig) -> ModelCheckpoint:
    """Third stage: the recurrent head over gated Top-N detections, detection phase frozen."""
    if not ckpt.at_least("language"):
        raise StageOrderError(f"tracker stage needs a language-trained checkpoint, got stage {ckpt.stage!r}")
    if not data:
        raise ValueError("no sequences to train on")
    if any(len(s) < 2 for s in data):
        raise ValueError("tracker training needs sequences of at least 2 frames")
    model = ckpt.build()
    _freeze(model, ("tracker",))
    opt = _optimizer(model.block_parameters("tracker"), config.learning_rate, config.tracker_adagrad_init)
    gen = torch.Generator().manual_seed(config.seed * 7919 + 3)
    c = model.config
    # The detection phase is frozen here, so its per-frame outputs never change.
    cache: dict[tuple[int, int], tuple] = {}

    def frame(v: int, t: int, sentence):
        if (v, t) not in cache:
            image, gt = _prepared(data[v], t, c.max_side)
            cand = model.candidates(image, sentence=sentence).without_features()
            cache[(v, t)] = (image, gt, cand)
        return cache[(v, t)]

    for it in range(config.tracker_iters):
        v = int(torch.randint(len(data), (1,), generator=gen))
        sample = data[v]
        use_init = float(torch.rand(1, generator=gen)) < config.init_box_fraction and sample.gt_boxes[0] is not None
        with torch.no_grad():
            sentence = model.sentence(sample.query)
        state = model.new_state()
        history: tuple[Box, ...] = ()
        loss = 0.0
        pending = 0
        total = 0.0
        for t in range(len(sample)):
            image, gt, cand = frame(v, t, sentence)
            size = (image.shape[1], image.shape[0])
            if t == 0 and use_init:
                det = model.init_detections(image, gt)
            else:
                det = model.select(cand, detect_sequence_gate(history))
            state, pred = model.step(state, det, size)
            if t == 0 and use_init:
                state.history = (gt,)
            history = state.history
            if gt is not None:
                target = torch.tensor(normalize_box(gt, size), dtype=pred.normalized.dtype)
                loss = loss + tracker_loss(pred.normalized[None], target[None])
                pending += 1
            if (t + 1) % config.bptt == 0 or t == len(sample) - 1:
                if pending:
                    opt.zero_grad()
                    loss.backward()
                    opt.step()
                    total += float(loss.detach())
                loss, pending = 0.0, 0
                state = state.detached()
        _log(config, "tracker", it, total)
    return ModelCheckpoint.from_model(model, "complete")


@torch.no_grad()
def stage_loss(stage: str, ckpt: ModelCheckpoint, data: Sequence[VideoSample], seed: int = 0) -> float:
    """Mean per-frame loss of one curriculum stage on ``data`` without updating anything.

    ``stage`` is ``"rpn"``, ``"language"`` or ``"tracker"``; rpn anchor sampling uses ``seed``.
    """
    model = ckpt.build().eval()
    c = model.config
    gen = torch.Generator().manual_seed(seed)
    total, count = 0.0, 0
    if stage in ("rpn", "language"):
        for v, t in _present_frames(data):
            image, gt = _prepared(data[v], t, c.max_side)
            fmap = model.features(image)
            if stage == "rpn":
                logits, deltas = model.rpn(fmap.values)
                total += float(rpn_loss(logits, deltas, model.anchors(fmap.height, fmap.width), gt, gen))
            else:
                props = model.proposals(fmap)
                sims = model.language.head(model.sentence(data[v].query), roi_pool(fmap, props.boxes, c.pool_size))
                total += float(language_loss(sims, language_targets(props.boxes, gt)))
            count += 1
    elif stage == "tracker":
        for sample in data:
            sentence = model.sentence(sample.query)
            state = model.new_state()
            for t in range(len(sample)):
                image, gt = _prepared(sample, t, c.max_side)
                size = (image.shape[1], image.shape[0])
                det = model.select(model.candidates(image, sentence=sentence), detect_sequence_gate(state.history))
                state, pred = model.step(state, det, size)
                if gt is not None:
                    target = torch.tensor(normalize_box(gt, size), dtype=pred.normalized.dtype)
                    total += float(tracker_loss(pred.normalized[None], target[None]))
                    count += 1
    else:
        raise ValueError(f"unknown stage {stage!r}")
    if not count:
        raise ValueError("no annotated frames to evaluate")
    return total / count


def train_all(data: Sequence[VideoSample], config: TrainConfig, model_config: ModelConfig | None = None,
              on_stage=None) -> ModelCheckpoint:
    """Run the full curriculum; ``on_stage(name, ckpt)`` is called at each freezing boundary."""
    ckpt = train_stage_rpn(data, config, model_config)
    if on_stage:
        on_stage("rpn", ckpt)
    ckpt = train_stage_language(data, ckpt, config)
    if on_stage:
        on_stage("language", ckpt)
    ckpt = train_stage_tracker(data, ckpt, config)
    if on_stage:
        on_stage("complete", ckpt)
    return ckpt


# ---------------------------------------------------------------- inference


def track_video(frames, query: str, init_box: Box | None, ckpt, timings: list | None = None) -> list[Prediction]:
    """Run the tracker over ``frames`` (raw ``H x W x 3`` arrays). Boxes are in input pixel coordinates.

    ``ckpt`` is a complete :class:`ModelCheckpoint` or an already built :class:`TrackerModel`.
    """
    if isinstance(ckpt, ModelCheckpoint):
        if ckpt.stage != "complete":
            raise IncompleteModelError(f"checkpoint stage is {ckpt.stage!r}, tracking needs a complete model")
        model = ckpt.build()
    else:
        model = ckpt
    if len(frames) == 0:
        raise ValueError("no frames to track")
    model.eval()
    c = model.config
    preds: list[Prediction] = []
    with torch.no_grad():
        sentence = model.sentence(query)
        state = model.new_state()
        for t, frame in enumerate(frames):
            start = time.perf_counter()
            try:
                image, scale = preprocess(np.asarray(frame), c.max_side)
                size = (image.shape[1], image.shape[0])
                if t == 0 and init_box is not None:
                    box = init_box.scaled(scale)
                    state, _ = model.step(state, model.init_detections(image, box), size)
                    state.history = (box,)
                    preds.append(Prediction(init_box, 1))
                else:
                    det = model.detect(image, gate_context=detect_sequence_gate(state.history), sentence=sentence)
                    state, pred = model.step(state, det, size)
                    out = pred.box if scale == 1.0 else pred.box.scaled(1.0 / scale)
                    preds.append(Prediction(out, pred.frame_index))
            except FrameError:
                raise
            except Exception as e:  # attach the frame index for the caller
                raise FrameError(t, e) from e
            if timings is not None:
                timings.append(time.perf_counter() - start)
    return preds
