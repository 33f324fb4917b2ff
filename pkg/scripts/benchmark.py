"""End-to-end synthetic benchmark driver used while tuning the trainer.

Not part of the package; run from the repo root:
    python3 scripts/benchmark.py --iterations 2000 --lr 0.05
"""

import argparse
import sys
import time

import numpy as np

sys.path.insert(0, "src")

from voxtrack.clustering import MeanShiftConfig, cluster_window
from voxtrack.core import EmbeddingField, InstanceLabeling
from voxtrack.encoder import TrainConfig, infer_field, train
from voxtrack.metrics import evaluate
from voxtrack.sync import stitch_windows, sync_volume
from voxtrack.synthdata import SceneConfig, generate
from voxtrack.cli import window_spans


def benchmark_scene(seed, density=1.0):
    return SceneConfig(
        dims=(16, 12, 64, 64),
        n_cells=4,
        radius_range=(3.0, 6.0),
        drift_range=(-0.5, 0.5),
        noise_sigma=0.02,
        annotation_density=density,
        rng_seed=seed,
    )


def run_pipeline(stream, grid, ms_cfg=None):
    ms_cfg = ms_cfg or MeanShiftConfig()
    field = infer_field(stream, grid)
    windows = []
    for start, stop in window_spans(grid.dims[0], stream.window):
        chunk = EmbeddingField(
            vectors=field.vectors[start : stop + 1],
            fg_score=field.fg_score[start : stop + 1],
            dim_kind=field.dim_kind,
        )
        ids = cluster_window(chunk, ms_cfg)
        for t in range(ids.shape[0]):
            ids[t] = sync_volume(ids[t])
        windows.append((start, ids))
    labeling, table = stitch_windows(windows)
    return labeling, table


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--lr", type=float, default=1e-4)
    ap.add_argument("--train-seed", type=int, default=0)
    ap.add_argument("--scene-seed", type=int, default=101)
    ap.add_argument("--eval-seeds", type=int, nargs="*", default=[202, 303])
    ap.add_argument("--density", type=float, default=1.0)
    ap.add_argument("--radius", type=float, nargs=2, default=[3.0, 6.0])
    ap.add_argument("--push-radius", type=float, default=10.0)
    args = ap.parse_args()

    t0 = time.time()
    cfg = benchmark_scene(args.scene_seed, args.density)
    cfg.radius_range = tuple(args.radius)
    grid, labeling = generate(cfg)
    print(f"scene generated in {time.time() - t0:.1f}s; fg fraction "
          f"{(labeling.ids > 0).mean():.3f}")

    tcfg = TrainConfig(
        iterations=args.iterations,
        lr_initial=args.lr,
        lr_after_half=args.lr / 10.0,
        rng_seed=args.train_seed,
        neighbor_radius=args.push_radius,
    )
    t0 = time.time()
    stream, history = train(grid, labeling, tcfg)
    train_time = time.time() - t0
    n = max(1, args.iterations // 10)
    print(f"train {args.iterations} iters in {train_time:.1f}s "
          f"({1000 * train_time / args.iterations:.0f} ms/iter)")
    print(f"loss first10%median={np.median(history[:n]):.4f} "
          f"last10%median={np.median(history[-n:]):.4f} final={history[-1]:.4f}")

    for seed in args.eval_seeds:
        eval_cfg = benchmark_scene(seed, args.density)
        eval_cfg.radius_range = tuple(args.radius)
        eval_grid, eval_gt = generate(eval_cfg)
        t0 = time.time()
        pred, table = run_pipeline(stream, eval_grid)
        pipe_time = time.time() - t0
        report = evaluate(eval_gt, pred, table)
        n_pred = len(np.unique(pred.ids)) - 1
        n_gt = len(np.unique(eval_gt.ids)) - 1
        print(f"seed {seed}: SEG {report['SEG']:.3f} TRA {report['TRA']:.3f} "
              f"OP {report['OP']:.3f}  ({n_pred} pred ids / {n_gt} gt) "
              f"pipeline {pipe_time:.1f}s")


if __name__ == "__main__":
    main()
