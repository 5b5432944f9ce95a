"""Harness CLI: train | distill | calibrate | export | pipeline.

Every command takes --seed for deterministic runs.  Checkpoints are torch
files carrying the architecture name, state dict, calibrated scales and
the step reports; `export` turns a checkpoint into an engine weight file.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np
import torch

from .calibrate import calibrate_scales, tanh_violation_rate
from .export import export_weights, plaintext_forward
from .networks import ActorNet
from .task import SyntheticTask
from .training import DistillConfig, distill_step, train_teacher

SIMILARITY_GATE = 0.95

SCALES = {
    "small": DistillConfig(train_samples=256, heldout_samples=96, epochs=10,
                           distill_epochs=8, head_epochs=40),
    "full": DistillConfig(),
}


def save_ckpt(path, net, report=None, scales=None):
    torch.save(
        {
            "architecture": net.name,
            "input_hw": net.input_hw,
            "action_dim": net.action_dim,
            "state_dict": net.state_dict(),
            "scales": scales or {},
            "report": report,
        },
        path,
    )


def load_ckpt(path):
    blob = torch.load(path, weights_only=False)
    net = ActorNet(blob["architecture"], blob["input_hw"], blob["action_dim"])
    net.load_state_dict(blob["state_dict"])
    return net, blob


def cmd_train(args):
    task = SyntheticTask(seed=args.seed)
    cfg = SCALES[args.scale]
    net, report = train_teacher(task, args.model, cfg, seed=args.seed)
    save_ckpt(args.output, net, report={"epoch_losses": report.epoch_losses,
                                        "heldout_r2": report.heldout_r2})
    print(f"trained {args.model}: held-out R^2 {report.heldout_r2:.4f}, "
          f"params {net.parameter_count():,}")
    if report.heldout_r2 < 0.9:
        print("warning: teacher R^2 below the 0.9 desk-scale gate", file=sys.stderr)
        return 1 if args.strict else 0
    return 0


def cmd_distill(args):
    teacher, _ = load_ckpt(args.teacher)
    task = SyntheticTask(seed=args.seed)
    cfg = SCALES[args.scale]
    student, report = distill_step(teacher, args.student, task, cfg, seed=args.seed)
    save_ckpt(args.output, student,
              report={"feature_losses": report.feature_losses,
                      "cosine_similarity": report.cosine_similarity,
                      "head_losses": report.head_losses})
    print(f"distilled {args.student} from {teacher.name}: "
          f"held-out feature cosine similarity {report.cosine_similarity:.4f}, "
          f"params {student.parameter_count():,}")
    if report.cosine_similarity < SIMILARITY_GATE:
        print(f"warning: similarity below {SIMILARITY_GATE}", file=sys.stderr)
        return 1 if args.strict else 0
    return 0


def cmd_calibrate(args):
    net, blob = load_ckpt(args.model)
    task = SyntheticTask(seed=args.seed)
    images, _ = task.sample(args.samples, offset=2)
    scales = calibrate_scales(net, images)
    fresh, _ = task.sample(args.samples, offset=3)
    rate = tanh_violation_rate(net, fresh)
    save_ckpt(args.model, net, report=blob.get("report"), scales=scales)
    print("scales:", json.dumps({k: round(v, 6) for k, v in scales.items()}))
    print(f"tanh domain violation rate on fresh data: {rate:.5f}")
    return 0 if rate < 0.01 or not args.strict else 1


def cmd_export(args):
    net, blob = load_ckpt(args.model)
    scales = blob.get("scales")
    if not scales:
        print("error: checkpoint has no scales; run calibrate first", file=sys.stderr)
        return 2
    export_weights(net, scales, args.output)
    print(f"exported {net.name} -> {args.output}")
    return 0


def cmd_pipeline(args):
    """train -> distill x2 -> calibrate -> export, all artifacts in --outdir."""
    import os

    os.makedirs(args.outdir, exist_ok=True)
    task = SyntheticTask(seed=args.seed)
    cfg = SCALES[args.scale]

    teacher, t_report = train_teacher(task, "teacher", cfg, seed=args.seed)
    print(f"teacher R^2 {t_report.heldout_r2:.4f}")
    s1, r1 = distill_step(teacher, "student1", task, cfg, seed=args.seed)
    print(f"student1 cosine similarity {r1.cosine_similarity:.4f}")
    s2, r2 = distill_step(s1, "student2", task, cfg, seed=args.seed)
    print(f"student2 cosine similarity {r2.cosine_similarity:.4f}")

    images, _ = task.sample(cfg.heldout_samples, offset=2)
    probe, _ = task.sample(4, offset=5)
    for i, img in enumerate(probe):
        # task-distribution inputs for driving the engine CLI; calibrated
        # scales only cover inputs that look like the task
        np.savetxt(os.path.join(args.outdir, f"probe_input{i}.csv"),
                   img, delimiter=",", fmt="%.17e")
    rc = 0
    for net, report in ((teacher, t_report), (s1, r1), (s2, r2)):
        scales = calibrate_scales(net, images)
        ckpt = os.path.join(args.outdir, f"{net.name}.pt")
        save_ckpt(ckpt, net, scales=scales)
        hews = os.path.join(args.outdir, f"{net.name}.hews")
        export_weights(net, scales, hews)
        ref = plaintext_forward(net, probe)
        np.savetxt(os.path.join(args.outdir, f"{net.name}_probe_actions.csv"),
                   ref, delimiter=",")
        print(f"exported {hews}")
    if t_report.heldout_r2 < 0.9 or r1.cosine_similarity < SIMILARITY_GATE:
        rc = 1 if args.strict else 0
    return rc


def build_parser():
    parser = argparse.ArgumentParser(
        prog="distill",
        description="Desk-scale training and two-step knowledge distillation harness.",
    )
    parser.add_argument("--seed", type=int, default=0, help="deterministic run seed")
    parser.add_argument("--scale", choices=sorted(SCALES), default="full",
                        help="dataset/epoch preset")
    parser.add_argument("--strict", action="store_true",
                        help="non-zero exit when a quality gate is missed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the teacher on the synthetic task")
    p.add_argument("--model", default="teacher",
                   choices=["teacher", "student1", "student2"])
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("distill", help="one feature-distillation step")
    p.add_argument("--teacher", required=True, help="teacher checkpoint (.pt)")
    p.add_argument("--student", required=True,
                   choices=["student1", "student2"])
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("calibrate", help="activation scales on a task sample")
    p.add_argument("--model", required=True, help="checkpoint to calibrate (updated in place)")
    p.add_argument("--samples", type=int, default=256)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("export", help="checkpoint -> engine weight store")
    p.add_argument("--model", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("pipeline", help="train, distill twice, calibrate, export")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
