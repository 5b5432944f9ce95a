"""Teacher training and the two-step feature-based knowledge distillation.

The teacher is fitted to the synthetic task by plain regression.  Each
distillation step trains the student's feature extractor against its
teacher's 64-dim feature vectors with a cosine-similarity loss
(1 - cos(f_T, f_S), batch mean), then fits the student's FC segment and
Gym head to the teacher's action outputs with the extractor frozen.  A
soft penalty keeps every tanh pre-activation inside the engine's [-2, 2]
approximation domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .networks import ActorNet
from .task import SyntheticTask

TANH_LIMIT = 1.7  # training headroom inside the [-2, 2] domain
TANH_PENALTY = 0.5


@dataclass
class DistillConfig:
    teacher: str = "teacher"
    student1: str = "student1"
    student2: str = "student2"
    train_samples: int = 1024
    heldout_samples: int = 256
    epochs: int = 12
    distill_epochs: int = 10
    head_epochs: int = 60
    batch_size: int = 32
    lr: float = 1e-3
    lr_decay: float = 0.8  # per-epoch; settles the late epochs monotonically


def seed_everything(seed):
    torch.manual_seed(seed)
    np.random.seed(seed)


def _batches(count, batch_size, generator):
    order = torch.randperm(count, generator=generator)
    for start in range(0, count, batch_size):
        yield order[start : start + batch_size]


def _tanh_penalty(preacts):
    total = sum(torch.relu(p.abs() - TANH_LIMIT).pow(2).mean() for p in preacts)
    return TANH_PENALTY * total


def _eval_loss(net, x, y, batch_size):
    net.eval()
    total = 0.0
    with torch.no_grad():
        for start in range(0, x.shape[0], batch_size):
            xb, yb = x[start : start + batch_size], y[start : start + batch_size]
            total += float(nn.functional.mse_loss(net(xb), yb, reduction="sum"))
    return total / (x.shape[0] * y.shape[1])


@dataclass
class TrainReport:
    epoch_losses: list  # end-of-epoch loss over the training set
    heldout_r2: float


def task_r2(pred, target):
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    ss_tot = ((target - target.mean()) ** 2).sum()
    return 1.0 - ((target - pred) ** 2).sum() / ss_tot


def train_teacher(task, name="teacher", config=None, seed=0):
    """Supervised regression onto the synthetic targets."""
    config = config or DistillConfig()
    seed_everything(seed)
    net = ActorNet(name, input_hw=task.image_hw)
    xs, ys = task.sample(config.train_samples, offset=0)
    x = torch.tensor(xs, dtype=torch.float32)
    y = torch.tensor(ys, dtype=torch.float32)
    opt = torch.optim.Adam(net.parameters(), lr=config.lr)
    sched = torch.optim.lr_scheduler.ExponentialLR(opt, gamma=config.lr_decay)
    gen = torch.Generator().manual_seed(seed)
    epoch_losses = []

    for _ in range(config.epochs):
        net.train()
        for idx in _batches(x.shape[0], config.batch_size, gen):
            opt.zero_grad()
            preacts = []
            pred = net(x[idx], tanh_preacts=preacts)
            loss = nn.functional.mse_loss(pred, y[idx]) + _tanh_penalty(preacts)
            loss.backward()
            opt.step()
        sched.step()
        epoch_losses.append(_eval_loss(net, x, y, config.batch_size))

    hx, hy = task.sample(config.heldout_samples, offset=1)
    net.eval()
    with torch.no_grad():
        pred = net(torch.tensor(hx, dtype=torch.float32)).numpy()
    return net, TrainReport(epoch_losses, task_r2(pred, hy))


@dataclass
class DistillReport:
    feature_losses: list
    cosine_similarity: float  # vs this step's teacher, held-out set
    head_losses: list


def feature_cosine(a, b):
    a = torch.as_tensor(a, dtype=torch.float64)
    b = torch.as_tensor(b, dtype=torch.float64)
    return float(nn.functional.cosine_similarity(a, b, dim=1).mean())


def distill_step(teacher_net, student_name, task, config=None, seed=0):
    """One compression step: features by cosine loss, then the head."""
    config = config or DistillConfig()
    seed_everything(seed + 1)
    student = ActorNet(student_name, input_hw=task.image_hw)

    xs, _ = task.sample(config.train_samples, offset=0)
    x = torch.tensor(xs, dtype=torch.float32)
    teacher_net.eval()
    with torch.no_grad():
        t_feats = teacher_net.extract_features(x)
        t_actions = teacher_net.head_forward(t_feats)

    gen = torch.Generator().manual_seed(seed + 1)
    feat_params = list(student.conv_blocks.parameters()) + list(student.feature.parameters())
    opt = torch.optim.Adam(feat_params, lr=config.lr)
    feature_losses = []
    student.train()
    for _ in range(config.distill_epochs):
        total, seen = 0.0, 0
        for idx in _batches(x.shape[0], config.batch_size, gen):
            opt.zero_grad()
            s_feats = student.extract_features(x[idx])
            loss = 1.0 - nn.functional.cosine_similarity(s_feats, t_feats[idx], dim=1).mean()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * idx.shape[0]
            seen += idx.shape[0]
        feature_losses.append(total / seen)

    # fit the FC segment and Gym head to the teacher's actions, extractor frozen
    student.eval()
    with torch.no_grad():
        s_feats_all = student.extract_features(x)
    head_params = [
        p
        for name in ("shared1", "shared2", "output", "head1", "head2", "head3")
        for p in getattr(student, name).parameters()
    ]
    opt = torch.optim.Adam(head_params, lr=config.lr)
    head_losses = []
    for _ in range(config.head_epochs):
        total, seen = 0.0, 0
        for idx in _batches(x.shape[0], config.batch_size, gen):
            opt.zero_grad()
            preacts = []
            pred = student.head_forward(s_feats_all[idx], tanh_preacts=preacts)
            loss = nn.functional.mse_loss(pred, t_actions[idx]) + _tanh_penalty(preacts)
            loss.backward()
            opt.step()
            total += float(loss.detach()) * idx.shape[0]
            seen += idx.shape[0]
        head_losses.append(total / seen)

    hx, _ = task.sample(config.heldout_samples, offset=1)
    hx = torch.tensor(hx, dtype=torch.float32)
    student.eval()
    with torch.no_grad():
        sim = feature_cosine(teacher_net.extract_features(hx), student.extract_features(hx))
    return student, DistillReport(feature_losses, sim, head_losses)
