"""Train the desk-scale model on synthetic videos and report held-out tracking quality."""
import argparse
import logging
import time
from pathlib import Path

import numpy as np

from nltrack.data import synthetic_dataset
from nltrack.evaluation import evaluate_dataset, frame_ious
from nltrack.geometry import iou
from nltrack.pipeline import ModelConfig, TrainConfig, load_checkpoint, save_checkpoint, train_all, track_video


def reacquired(preds, sample, first, duration, window=5):
    after = range(first + duration, min(first + duration + window, len(sample)))
    return any(iou(preds[t].box, sample.gt_boxes[t]) > 0.5 for t in after)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--train", type=int, default=100)
    ap.add_argument("--test", type=int, default=20)
    ap.add_argument("--rpn-iters", type=int, default=2000)
    ap.add_argument("--language-iters", type=int, default=2000)
    ap.add_argument("--tracker-iters", type=int, default=4000)
    ap.add_argument("--lr", type=float, default=0.01)
    ap.add_argument("--init-fraction", type=float, default=0.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--checkpoint", type=Path, default=None, help="reuse instead of training")
    ap.add_argument("--save", type=Path, default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    train = synthetic_dataset(args.train, seed=0)
    test = synthetic_dataset(args.test, seed=10_000, occlusion=(10, 5))
    if args.checkpoint:
        ckpt = load_checkpoint(args.checkpoint)
    else:
        cfg = TrainConfig(args.lr, args.rpn_iters, args.language_iters, args.tracker_iters,
                          init_box_fraction=args.init_fraction, seed=args.seed, log_every=100)
        start = time.time()
        ckpt = train_all(train, cfg, ModelConfig())
        print(f"training took {time.time() - start:.1f}s")
        if args.save:
            save_checkpoint(ckpt, args.save)
    model = ckpt.build()

    for mode in ("nl", "init"):
        results, hits, mean_ious = [], 0, []
        for s in test:
            preds = track_video(s.frames, s.query, s.gt_boxes[0] if mode == "init" else None, model)
            results.append((preds, s.gt_boxes))
            hits += reacquired(preds, s, 10, 5)
            mean_ious.append(frame_ious(preds, s.gt_boxes).mean())
        rep = evaluate_dataset(results)
        print(mode, {k: round(v, 4) for k, v in rep.summary.items()},
              f"reacquired {hits}/{len(test)}", "mean IoU per video", np.round(mean_ious, 2))


if __name__ == "__main__":
    main()
