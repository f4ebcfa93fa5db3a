"""Command-line entry point: dataset generation, training, extraction,
evaluation and gradient checking."""

import argparse
import csv
import os
import sys

import numpy as np

from .config import ConfigError, parse_run_config
from .datagen import make_dataset
from .objectives import JointMode
from .projector import pwtp_forward
from .storage import (
    FormatError,
    export_da,
    load_checkpoint,
    read_frames,
    read_tensor,
    require_groups,
    save_checkpoint,
    write_tensor,
)
from .training import (
    end_to_end_grad_check,
    evaluate,
    train_joint,
    train_unsup,
    unsup_grad_check,
)

GRADCHECK_TOLERANCE = 1e-4


def _write_log(path, header, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in row])


def _save_split(outdir, name, clips):
    split_dir = os.path.join(outdir, name)
    os.makedirs(split_dir, exist_ok=True)
    with open(os.path.join(split_dir, "manifest.tsv"), "w") as f:
        for i, lc in enumerate(clips):
            write_tensor(os.path.join(split_dir, f"clip_{i:05d}.pwtt"), lc.clip)
            f.write(f"{i}\t{lc.label}\t{lc.background_id}\t{lc.glyph_id}\n")


def load_split(datadir, name):
    split_dir = os.path.join(datadir, name)
    manifest = os.path.join(split_dir, "manifest.tsv")
    if not os.path.exists(manifest):
        raise FormatError(f"no manifest at {manifest}")
    clips, labels = [], []
    with open(manifest) as f:
        for line in f:
            index, label, _bg, _glyph = line.rstrip("\n").split("\t")
            clips.append(
                read_tensor(os.path.join(split_dir, f"clip_{int(index):05d}.pwtt"))
            )
            labels.append(int(label))
    return np.stack(clips), np.asarray(labels, dtype=int)


def cmd_gen_data(args):
    cfg = parse_run_config(args.config)
    train, test = make_dataset(cfg.data)
    _save_split(args.out, "train", train)
    _save_split(args.out, "test", test)
    print(f"wrote {len(train)} train and {len(test)} test clips to {args.out}")
    return 0


def cmd_train_unsup(args):
    cfg = parse_run_config(args.config)
    clips, _ = load_split(args.data, "train")
    params, rows = train_unsup(cfg.pwtp, cfg.train, clips)
    save_checkpoint(args.out, params)
    _write_log(args.log, ["step", "enopr", "lr"], rows)
    print(f"final enopr={rows[-1][1]:.6g}")
    return 0


def cmd_train_joint(args):
    cfg = parse_run_config(args.config)
    mode = JointMode.parse(args.mode) if args.mode else cfg.joint
    clips, labels = load_split(args.data, "train")
    params, rows = train_joint(
        cfg.pwtp, cfg.train, mode, clips, labels, cfg.data.K,
        input_mode=args.input_mode,
    )
    save_checkpoint(args.out, params)
    _write_log(args.log, ["step", "enopr", "loss2", "alpha"], rows)
    print(f"final enopr={rows[-1][1]:.6g} loss2={rows[-1][2]:.6g}")
    return 0


def cmd_extract(args):
    cfg = parse_run_config(args.config)
    params = load_checkpoint(args.ckpt)
    require_groups(params, groups=("theta1/",))
    frames = read_frames(args.frames)
    t = cfg.pwtp.T
    if frames.shape[0] % t:
        raise FormatError(
            f"{frames.shape[0]} frames do not divide into segments of {t}"
        )
    clip = frames.reshape(-1, t, *frames.shape[1:])
    da, _ = pwtp_forward(clip, params, cfg.pwtp)
    os.makedirs(args.out, exist_ok=True)
    for i in range(da.shape[0]):
        with open(os.path.join(args.out, f"da_{i + 1:05d}.ppm"), "wb") as f:
            f.write(export_da(da[i]))
    print(f"wrote {da.shape[0]} dynamic appearance frames to {args.out}")
    return 0


def cmd_eval(args):
    cfg = parse_run_config(args.config)
    params = load_checkpoint(args.ckpt)
    require_groups(params)
    clips, labels = load_split(args.data, "test")
    acc = evaluate(params, cfg.pwtp, clips, labels, input_mode=args.input_mode)
    print(f"accuracy={acc}")
    return 0


def cmd_gradcheck(args):
    cfg = parse_run_config(args.config)
    spec = cfg.data
    spec.n_train = max(spec.K, 2)
    spec.n_test = max(spec.K, 2)
    train, _ = make_dataset(spec)
    clips = np.stack([lc.clip for lc in train[:2]])
    labels = np.asarray([lc.label for lc in train[:2]])
    err1 = unsup_grad_check(cfg.pwtp, clips, seed=cfg.train.seed)
    err2 = end_to_end_grad_check(cfg.pwtp, clips, labels, spec.K,
                                 seed=cfg.train.seed)
    worst = max(err1, err2)
    print(f"max_rel_error={worst:.3e}")
    return 0 if worst < GRADCHECK_TOLERANCE else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pwtp",
        description="Static/dynamic appearance disentanglement of video clips",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-unsup", help="train the projector alone")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_train_unsup)

    p = sub.add_parser("train-joint", help="jointly train projector and head")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--mode", default=None,
                   help="separate | constant:<a> | mgda | sched:<g>,<l>")
    p.add_argument("--input-mode", default="da", choices=["da", "rgb_baseline"])
    p.set_defaults(func=cmd_train_joint)

    p = sub.add_parser("extract", help="write dynamic appearance images")
    p.add_argument("--config", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", help="top-1 accuracy on the test split")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input-mode", default="da", choices=["da", "rgb_baseline"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient validation")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, FormatError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
