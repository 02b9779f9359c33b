"""Benchmark ingestion, frame preprocessing and the synthetic video generator."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .errors import DatasetError
from .geometry import Box

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")
GT_FILE = "groundtruth.txt"
QUERY_FILE = "nlp.txt"
IMG_DIR = "img"
SUBSET_FILE = "subset.txt"


@dataclass
class VideoSample:
    id: str
    frames: list  # np.ndarray (H, W, 3) uint8, or paths loaded on demand
    gt_boxes: list  # Box, or None where the target is absent
    query: str

    def __post_init__(self):
        if len(self.frames) != len(self.gt_boxes):
            raise DatasetError(
                f"{len(self.frames)} frames but {len(self.gt_boxes)} annotations", video_id=self.id
            )
        if not self.query.strip():
            raise DatasetError("empty query", video_id=self.id)

    def __len__(self):
        return len(self.frames)

    def frame(self, i: int) -> np.ndarray:
        f = self.frames[i]
        if isinstance(f, np.ndarray):
            return f
        with Image.open(f) as im:
            return np.asarray(im.convert("RGB"))

    def load(self) -> "VideoSample":
        """Copy with every frame decoded into memory."""
        return VideoSample(self.id, [self.frame(i) for i in range(len(self))], list(self.gt_boxes), self.query)


# ---------------------------------------------------------------- benchmark layout


def parse_gt_line(line: str, video_id=None, lineno=None) -> Box | None:
    parts = [p for p in line.replace("\t", ",").replace(" ", ",").split(",") if p]
    try:
        x, y, w, h = (float(p) for p in parts)
    except ValueError:
        raise DatasetError(f"unparsable ground-truth line {line.strip()!r}", video_id, lineno) from None
    if not all(math.isfinite(v) for v in (x, y, w, h)) or w <= 0 or h <= 0:
        return None
    return Box.from_xywh(x, y, w, h)


def format_gt_line(box: Box | None) -> str:
    if box is None:
        return "0,0,0,0"
    return ",".join(repr(float(v)) for v in box.to_xywh())


def read_subset(path) -> list[str]:
    return [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]


def load_benchmark_dir(root, subset=None) -> list[VideoSample]:
    """Load ``<root>/<video_id>/{img/, groundtruth.txt, nlp.txt}`` video directories.

    ``subset`` is an optional path to a file listing video ids, one per line; when
    omitted, ``<root>/subset.txt`` is used if present. Pass ``False`` to load everything.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(root)
    if subset is None and (root / SUBSET_FILE).is_file():
        subset = root / SUBSET_FILE
    wanted = read_subset(subset) if subset else None
    dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if wanted is not None:
        names = {p.name for p in dirs}
        missing = [w for w in wanted if w not in names]
        if missing:
            raise DatasetError(f"subset names unknown videos: {missing}")
        dirs = [p for p in dirs if p.name in set(wanted)]
    return [_load_video(d) for d in dirs]


def _load_video(d: Path) -> VideoSample:
    vid = d.name
    gt_path = d / GT_FILE
    if not gt_path.is_file():
        raise DatasetError(f"missing {GT_FILE}", video_id=vid)
    q_path = d / QUERY_FILE
    if not q_path.is_file():
        raise DatasetError(f"missing {QUERY_FILE}", video_id=vid)
    img_dir = d / IMG_DIR
    frames = sorted(p for p in img_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES) if img_dir.is_dir() else []
    boxes = []
    for lineno, line in enumerate(gt_path.read_text().splitlines(), 1):
        if line.strip():
            boxes.append(parse_gt_line(line, vid, lineno))
    if len(frames) != len(boxes):
        raise DatasetError(f"{len(frames)} frames but {len(boxes)} ground-truth lines", video_id=vid)
    query = q_path.read_text(encoding="utf-8").strip()
    return VideoSample(vid, frames, boxes, query)


def write_benchmark_dir(samples: Sequence[VideoSample], root, subset: Sequence[str] | None = None) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for s in samples:
        d = root / s.id
        (d / IMG_DIR).mkdir(parents=True, exist_ok=True)
        for i in range(len(s)):
            Image.fromarray(s.frame(i)).save(d / IMG_DIR / f"{i + 1:05d}.png")
        (d / GT_FILE).write_text("".join(format_gt_line(b) + "\n" for b in s.gt_boxes))
        (d / QUERY_FILE).write_text(s.query + "\n", encoding="utf-8")
    if subset is not None:
        (root / SUBSET_FILE).write_text("".join(v + "\n" for v in subset))
    return root


def write_predictions(path, boxes: Sequence[Box | None]) -> None:
    lines = ["absent" if b is None else ",".join(repr(float(v)) for v in b.as_tuple()) for b in boxes]
    Path(path).write_text("".join(ln + "\n" for ln in lines))


def read_predictions(path) -> list[Box | None]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line == "absent":
            out.append(None)
            continue
        try:
            out.append(Box(*(float(v) for v in line.split(","))))
        except (TypeError, ValueError) as e:
            raise DatasetError(f"bad prediction line {line!r}: {e}", video_id=Path(path).stem, line=lineno) from None
    return out


# ---------------------------------------------------------------- preprocessing


def preprocess(image: np.ndarray, max_side: int = 1333) -> tuple[np.ndarray, float]:
    """Downscale so the longest side is at most ``max_side``; never upscales."""
    h, w = image.shape[:2]
    if h == 0 or w == 0:
        raise ValueError("empty image")
    longest = max(h, w)
    if longest <= max_side:
        return image, 1.0
    scale = max_side / longest
    size = (max(1, round(w * scale)), max(1, round(h * scale)))
    return np.asarray(Image.fromarray(image).resize(size, Image.BILINEAR)), scale


# ---------------------------------------------------------------- synthetic videos

COLORS = {
    "red": (220, 40, 40),
    "green": (40, 190, 60),
    "blue": (50, 70, 230),
    "yellow": (235, 215, 40),
}
SHAPES = ("square", "circle")
OCCLUDER_COLOR = (128, 128, 128)
QUERY_TEMPLATE = "track the {color} {shape}"


@dataclass
class SynthConfig:
    canvas: tuple[int, int] = (64, 64)  # (W, H)
    frames: int = 30
    target_color: str | None = None  # None: drawn from the seed
    target_shape: str | None = None
    size_range: tuple[int, int] = (10, 16)
    distractors: int | Sequence[tuple[str, str]] = 2
    occlusion: tuple[int, int] | None = None  # (first frame, duration), 0-based
    velocity: tuple[float, float] | None = None  # px/frame; None: random
    speed_range: tuple[float, float] = (0.5, 2.0)
    start: tuple[float, float] | None = None  # target top-left
    seed: int = 0
    id: str | None = None

    def __post_init__(self):
        if self.frames < 2:
            raise ValueError("a synthetic video needs at least 2 frames")
        if self.target_color is not None and self.target_color not in COLORS:
            raise ValueError(f"unknown color {self.target_color!r}")
        if self.target_shape is not None and self.target_shape not in SHAPES:
            raise ValueError(f"unknown shape {self.target_shape!r}")


@dataclass
class _Object:
    color: str
    shape: str
    size: int
    pos: np.ndarray = field(default_factory=lambda: np.zeros(2))
    vel: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def box(self) -> Box:
        x, y = np.round(self.pos)
        return Box(float(x), float(y), float(x + self.size), float(y + self.size))

    def advance(self, canvas):
        self.pos = self.pos + self.vel
        for k, limit in enumerate(canvas):
            hi = limit - self.size
            if self.pos[k] < 0:
                self.pos[k] = -self.pos[k]
                self.vel[k] = -self.vel[k]
            elif self.pos[k] > hi:
                self.pos[k] = 2 * hi - self.pos[k]
                self.vel[k] = -self.vel[k]


def _texture(rng, W, H) -> np.ndarray:
    bh, bw = -(-H // 4), -(-W // 4)
    blocks = rng.integers(-18, 19, size=(bh, bw, 1))
    coarse = np.kron(blocks, np.ones((4, 4, 1), dtype=np.int64))[:H, :W]
    return 100 + coarse + np.array([0, 4, 8])


def _background(rng, texture) -> np.ndarray:
    fine = rng.integers(-5, 6, size=texture.shape[:2] + (1,))
    return np.clip(texture + fine, 0, 255)


def _draw(img: np.ndarray, obj: _Object):
    b = obj.box()
    x1, y1, x2, y2 = (int(v) for v in b.as_tuple())
    color = np.array(COLORS[obj.color])
    if obj.shape == "square":
        img[y1:y2, x1:x2] = color
    else:
        yy, xx = np.mgrid[y1:y2, x1:x2]
        r = obj.size / 2
        mask = (xx + 0.5 - (x1 + r)) ** 2 + (yy + 0.5 - (y1 + r)) ** 2 <= r * r
        img[y1:y2, x1:x2][mask] = color


def _random_velocity(rng, speed_range):
    speed = rng.uniform(*speed_range)
    angle = rng.uniform(0, 2 * np.pi)
    return np.array([speed * np.cos(angle), speed * np.sin(angle)])


def generate_synthetic(cfg: SynthConfig) -> VideoSample:
    rng = np.random.default_rng(cfg.seed)
    W, H = cfg.canvas
    color = cfg.target_color or str(rng.choice(list(COLORS)))
    shape = cfg.target_shape or str(rng.choice(SHAPES))
    if isinstance(cfg.distractors, int):
        others = [c for c in COLORS if c != color]
        specs = [(str(rng.choice(others)), str(rng.choice(SHAPES))) for _ in range(cfg.distractors)]
    else:
        specs = [tuple(s) for s in cfg.distractors]
        if any(s == (color, shape) for s in specs):
            raise ValueError(f"ambiguous scene: a distractor is also a {color} {shape}")
        for c, s in specs:
            if c not in COLORS or s not in SHAPES:
                raise ValueError(f"unknown distractor {(c, s)}")

    def make(c, s, start=None, vel=None):
        size = int(rng.integers(cfg.size_range[0], cfg.size_range[1] + 1))
        if size > min(W, H):
            raise ValueError("object larger than the canvas")
        pos = np.array(start, dtype=float) if start is not None else rng.uniform(0, [W - size, H - size])
        v = np.array(vel, dtype=float) if vel is not None else _random_velocity(rng, cfg.speed_range)
        return _Object(c, s, size, pos, v)

    target = make(color, shape, cfg.start, cfg.velocity)
    distractors = [make(c, s) for c, s in specs]
    occluded = set()
    if cfg.occlusion is not None:
        first, duration = cfg.occlusion
        occluded = set(range(first, min(first + duration, cfg.frames)))

    texture = _texture(rng, W, H)
    frames, boxes = [], []
    for t in range(cfg.frames):
        img = _background(rng, texture)
        for d in distractors:
            _draw(img, d)
        _draw(img, target)
        if t in occluded:
            b = target.box()
            x1, y1 = max(int(b.x1) - 2, 0), max(int(b.y1) - 2, 0)
            img[y1 : int(b.y2) + 2, x1 : int(b.x2) + 2] = OCCLUDER_COLOR
            boxes.append(None)
        else:
            boxes.append(target.box())
        frames.append(img.astype(np.uint8))
        for o in [target, *distractors]:
            o.advance((W, H))
    vid = cfg.id or f"synth_{cfg.seed:05d}"
    return VideoSample(vid, frames, boxes, QUERY_TEMPLATE.format(color=color, shape=shape))


SYNTH_VOCABULARY = ("track", "the", *COLORS, *SHAPES)


def synthetic_dataset(count: int, seed: int = 0, occlusion="half", **kw) -> list[VideoSample]:
    """``count`` synthetic videos with seeds ``seed .. seed+count-1``.

    ``occlusion`` is ``None``, a fixed ``(first, duration)`` schedule, or ``"half"``:
    every other video gets a 5-frame occlusion at a seed-dependent start
    (videos shorter than 12 frames are left unoccluded).
    """
    out = []
    for i in range(count):
        s = seed + i
        occ = occlusion
        if occlusion == "half":
            frames = kw.get("frames", SynthConfig.frames)
            occ = None
            if i % 2 and frames >= 12:
                occ = (int(np.random.default_rng(s + 7_000_003).integers(3, frames - 8)), 5)
        out.append(generate_synthetic(SynthConfig(seed=s, occlusion=occ, **kw)))
    return out
