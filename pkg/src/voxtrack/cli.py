"""Command-line pipeline: simulate, train, infer, cluster, sync, eval, render.

Stages hand off through files so each one can be run and tested on its
own: volumes and labelings as .vxg, embedding fields as .vxe, encoder
parameters as .vxp, track tables as plain text, reports as JSON.  Every
command is deterministic given its flags (seeds are explicit), exits 0
on success and nonzero with a stage-named message otherwise.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import clustering, core, encoder, metrics, sync, synthdata


def _parse_bool(text):
    lowered = str(text).lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def cmd_simulate(args):
    cfg = synthdata.SceneConfig.from_json(Path(args.config).read_text(encoding="utf-8"))
    grid, labeling = synthdata.generate(cfg)
    core.write_volume(grid, f"{args.out_prefix}.img.vxg")
    core.write_labeling(labeling, f"{args.out_prefix}.lbl.vxg")


def cmd_train(args):
    grid = core.read_volume(args.img)
    labeling = core.read_labeling(args.lbl)
    cfg = encoder.TrainConfig(
        iterations=args.iterations,
        rng_seed=args.seed,
        shared_weights=args.shared_weights,
    )
    stream, history = encoder.train(grid, labeling, cfg)
    encoder.save_params(stream, args.out)
    encoder.save_loss_history(history, Path(args.out).with_suffix(".loss.csv"))


def cmd_infer(args):
    grid = core.read_volume(args.img)
    stream = encoder.load_params(args.params)
    field = encoder.infer_field(stream, grid)
    core.write_field(field, args.out)


def window_spans(n_frames, window):
    """Inclusive frame spans of length <= window sharing exactly one frame."""
    spans = []
    start = 0
    while True:
        stop = min(start + window - 1, n_frames - 1)
        spans.append((start, stop))
        if stop == n_frames - 1:
            return spans
        start = stop


def cmd_cluster(args):
    field = core.read_field(args.field)
    cfg = clustering.MeanShiftConfig()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    window = min(field.dims[0], encoder.TrainConfig().window)
    manifest = []
    for index, (start, stop) in enumerate(window_spans(field.dims[0], window)):
        chunk = core.EmbeddingField(
            vectors=field.vectors[start : stop + 1],
            fg_score=field.fg_score[start : stop + 1],
            dim_kind=field.dim_kind,
        )
        ids = clustering.cluster_window(chunk, cfg)
        name = f"window_{index:03d}.vxg"
        core.write_labeling(core.InstanceLabeling(ids=ids), out_dir / name)
        manifest.append({"file": name, "t_start": start, "t_stop": stop})
    payload = json.dumps({"windows": manifest}, indent=2, sort_keys=True) + "\n"
    (out_dir / "manifest.json").write_text(payload, encoding="utf-8")


def cmd_sync(args):
    out_pred, out_tracks = _split_outputs(args.out)
    manifest_path = Path(args.windows) / "manifest.json"
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    windows = []
    for entry in manifest["windows"]:
        labeling = core.read_labeling(Path(args.windows) / entry["file"])
        ids = labeling.ids.copy()
        for t in range(ids.shape[0]):
            ids[t] = sync.sync_volume(ids[t])
        windows.append((int(entry["t_start"]), ids))
    labeling, table = sync.stitch_windows(windows)
    core.write_labeling(labeling, out_pred)
    core.write_tracks(table, out_tracks)


def _split_outputs(out):
    parts = out.split(",")
    if len(parts) != 2:
        raise ValueError(f"--out expects 'pred.vxg,tracks.txt', got {out!r}")
    return parts[0], parts[1]


def cmd_eval(args):
    gt = core.read_labeling(args.gt)
    pred = core.read_labeling(args.pred)
    table = core.read_tracks(args.tracks)
    report = metrics.evaluate(gt, pred, table)
    payload = json.dumps({key: report[key] for key in ("SEG", "TRA", "OP")}) + "\n"
    Path(args.out).write_text(payload, encoding="utf-8")
    print(f"SEG {report['SEG']:.3f}  TRA {report['TRA']:.3f}  OP {report['OP']:.3f}")


_GOLDEN_HUE_STEP = 0.618033988749895


def _id_color(instance_id):
    hue = (instance_id * _GOLDEN_HUE_STEP) % 1.0
    # saturated HSV -> RGB with v = 1, s = 0.85
    h6 = hue * 6.0
    sector = int(h6) % 6
    frac = h6 - int(h6)
    s = 0.85
    p, q, t = 1.0 - s, 1.0 - s * frac, 1.0 - s * (1.0 - frac)
    rgb = [(1, t, p), (q, 1, p), (p, 1, t), (p, q, 1), (t, p, 1), (1, p, q)][sector]
    return tuple(int(round(255 * c)) for c in rgb)


def _boundaries(label_frame):
    mask = np.zeros(label_frame.shape, bool)
    ids = label_frame
    mask[:-1] |= (ids[:-1] != ids[1:]) & (ids[:-1] > 0)
    mask[1:] |= (ids[1:] != ids[:-1]) & (ids[1:] > 0)
    mask[:, :-1] |= (ids[:, :-1] != ids[:, 1:]) & (ids[:, :-1] > 0)
    mask[:, 1:] |= (ids[:, 1:] != ids[:, :-1]) & (ids[:, 1:] > 0)
    return mask


def cmd_render(args):
    from PIL import Image

    grid = core.read_volume(args.img)
    labeling = None
    label_path = args.lbl or args.pred
    if label_path:
        labeling = core.read_labeling(label_path)
        if labeling.dims != grid.dims:
            raise ValueError(f"label dims {labeling.dims} != grid dims {grid.dims}")
    n_t, n_z = grid.dims[0], grid.dims[1]
    if not 0 <= args.t < n_t:
        raise ValueError(f"frame {args.t} outside [0, {n_t})")
    volume = grid.data[args.t]
    if args.mip:
        image = volume.max(axis=0)
        z_of_max = volume.argmax(axis=0)
        label_frame = None
        if labeling is not None:
            frame = labeling.ids[args.t]
            label_frame = np.take_along_axis(frame, z_of_max[None], axis=0)[0]
    else:
        if args.z is None or not 0 <= args.z < n_z:
            raise ValueError(f"slice {args.z} outside [0, {n_z})")
        image = volume[args.z]
        label_frame = labeling.ids[args.t, args.z] if labeling is not None else None

    gray = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    rgb = np.stack([gray, gray, gray], axis=-1)
    if label_frame is not None:
        for instance_id in (int(i) for i in np.unique(label_frame) if i > 0):
            edge = _boundaries(np.where(label_frame == instance_id, label_frame, 0))
            rgb[edge] = _id_color(instance_id)
    Image.fromarray(rgb, mode="RGB").save(args.out, format="PNG")


def build_parser():
    parser = argparse.ArgumentParser(prog="voxtrack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scene")
    p.add_argument("--config", required=True)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the embedding encoder")
    p.add_argument("--img", required=True)
    p.add_argument("--lbl", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shared-weights", type=_parse_bool, default=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="embed a whole video")
    p.add_argument("--img", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("cluster", help="cluster embedding windows into instances")
    p.add_argument("--field", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("sync", help="synchronize and stitch window labelings")
    p.add_argument("--windows", required=True)
    p.add_argument("--out", required=True, help="pred.vxg,tracks.txt")
    p.set_defaults(func=cmd_sync)

    p = sub.add_parser("eval", help="score a prediction against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--tracks", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="render a slice or projection to PNG")
    p.add_argument("--img", required=True)
    p.add_argument("--lbl")
    p.add_argument("--pred")
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--z", type=int)
    p.add_argument("--mip", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - single reporting point
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
