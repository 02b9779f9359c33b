"""Command line entry point: ``nltrack {train,track,eval,synth}``.

Exit status is 0 on success; failures exit with a category code (see ``EXIT_CODES``).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import errors
from .data import (
    IMAGE_SUFFIXES,
    QUERY_FILE,
    load_benchmark_dir,
    read_predictions,
    synthetic_dataset,
    write_benchmark_dir,
    write_predictions,
)
from .evaluation import evaluate_dataset, plot_report, write_report
from .geometry import Box
from .pipeline import ModelConfig, TrainConfig, load_checkpoint, save_checkpoint, track_video, train_all

log = logging.getLogger("nltrack")

# Ordered: the first matching class decides the code.
EXIT_CODES = (
    (errors.CheckpointError, 4, "checkpoint error"),
    (errors.IncompleteModelError, 4, "incompatible checkpoint"),
    (errors.DatasetError, 3, "dataset error"),
    (FileNotFoundError, 3, "missing file"),
    (errors.FrameError, 5, "tracking failed"),
    (errors.NothingToEvaluateError, 6, "nothing to evaluate"),
    (errors.EmptyQueryError, 2, "invalid query"),
    (ValueError, 2, "invalid argument"),
)


def parse_box(text: str) -> Box:
    try:
        x, y, w, h = (float(v) for v in text.split(","))
        return Box.from_xywh(x, y, w, h)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected x,y,w,h with positive w and h, got {text!r}") from e


def _frames_in(video: Path) -> list[np.ndarray]:
    img_dir = video / "img" if (video / "img").is_dir() else video
    if not img_dir.is_dir():
        raise FileNotFoundError(f"no frame directory at {video}")
    paths = sorted(p for p in img_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise FileNotFoundError(f"no image files in {img_dir}")
    return [np.asarray(Image.open(p).convert("RGB")) for p in paths]


def cmd_train(args) -> None:
    if args.data is not None:
        data = load_benchmark_dir(args.data)
    else:
        data = synthetic_dataset(args.synthetic, seed=args.seed)
    cfg = TrainConfig(
        learning_rate=args.lr,
        rpn_iters=args.rpn_iters,
        language_iters=args.language_iters,
        tracker_iters=args.tracker_iters,
        seed=args.seed,
        log_every=args.log_every,
    )
    ckpt = train_all(data, cfg, ModelConfig(), on_stage=lambda name, _: log.info("finished stage %s", name))
    save_checkpoint(ckpt, args.output)
    print(f"saved {ckpt.stage} checkpoint to {args.output}")


def cmd_track(args) -> None:
    ckpt = load_checkpoint(args.checkpoint)
    frames = _frames_in(args.video)
    query = args.query
    if query is None:
        qfile = args.video / QUERY_FILE
        if not qfile.is_file():
            raise ValueError("no --query given and no query file next to the frames")
        query = qfile.read_text(encoding="utf-8").strip()
    preds = track_video(frames, query, args.init_box, ckpt)
    write_predictions(args.output, [p.box for p in preds])
    mode = "init-box" if args.init_box is not None else "language-only"
    print(f"{mode}: wrote {len(preds)} predictions to {args.output}")


def cmd_eval(args) -> None:
    data = load_benchmark_dir(args.data)
    results = []
    for sample in data:
        path = args.predictions / f"{sample.id}.txt"
        if not path.is_file():
            raise FileNotFoundError(f"no predictions for video {sample.id!r} ({path})")
        preds = read_predictions(path)
        if len(preds) != len(sample):
            raise errors.DatasetError(f"{len(preds)} predictions for {len(sample)} frames", video_id=sample.id)
        results.append((preds, sample.gt_boxes))
    report = evaluate_dataset(results)
    out = write_report(report, args.output)
    if args.plot:
        plot_report(out)
    for k, v in report.summary.items():
        print(f"{k}={v:.4f}")


def cmd_synth(args) -> None:
    occlusion = None if args.occlusion == "none" else "half"
    data = synthetic_dataset(args.count, seed=args.seed, occlusion=occlusion, frames=args.frames)
    write_benchmark_dir(data, args.output)
    print(f"wrote {len(data)} videos to {args.output}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nltrack", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the three training stages")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", type=Path, help="benchmark-layout dataset directory")
    src.add_argument("--synthetic", type=int, metavar="N", help="train on N generated videos")
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--rpn-iters", type=int, default=2000)
    p.add_argument("--language-iters", type=int, default=2000)
    p.add_argument("--tracker-iters", type=int, default=4000)
    p.add_argument("--log-every", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("track", help="track one video")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--video", type=Path, required=True, help="video directory (with img/) or a frame directory")
    p.add_argument("--query", help="defaults to the video's query file")
    p.add_argument("--init-box", type=parse_box, metavar="x,y,w,h")
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score prediction files against a dataset")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--predictions", type=Path, required=True, help="directory of <video_id>.txt files")
    p.add_argument("--output", type=Path, required=True, help="report directory")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--occlusion", choices=("half", "none"), default="half")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(asctime)s %(message)s")
    torch.manual_seed(getattr(args, "seed", 0))
    try:
        args.func(args)
    except Exception as e:
        for cls, code, label in EXIT_CODES:
            if isinstance(e, cls):
                print(f"nltrack: {label}: {e}", file=sys.stderr)
                return code
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
