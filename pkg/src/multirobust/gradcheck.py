"""Canned finite-difference verification suite behind the gradcheck command.

Each entry compares an autograd path used during training against an
independent numeric oracle and yields a GradCheckReport.
"""

from __future__ import annotations

import torch
from torch.func import functional_call

from multirobust.geometry import NormBall, project_ball
from multirobust.losses import ac_loss, cls_loss
from multirobust.models import NoiseGenerator, make_classifier
from multirobust.oracles import (
    GradCheckReport,
    fd_hypergradient,
    gradcheck,
    l1_projection_oracle,
)
from multirobust.training import meta_gradient


def _flatten_params(module):
    return torch.cat([p.detach().reshape(-1) for p in module.parameters()])


def _param_plan(module):
    return [(n, p.shape, p.numel()) for n, p in module.named_parameters()]


def _unflatten(flat, plan):
    out, offset = {}, 0
    for name, shape, size in plan:
        out[name] = flat[offset : offset + size].reshape(shape)
        offset += size
    return out


def check_cls_loss_gradient(seed: int, tolerance: float) -> GradCheckReport:
    g = torch.Generator().manual_seed(seed)
    logits0 = torch.randn(4, 5, generator=g, dtype=torch.float64)
    labels = torch.randint(0, 5, (4,), generator=g)

    def f(flat):
        return float(cls_loss(flat.reshape(4, 5), labels).detach())

    z = logits0.clone().requires_grad_(True)
    cls_loss(z, labels).backward()
    return gradcheck("cls_loss", f, logits0.reshape(-1), z.grad, h=1e-5, tolerance=tolerance)


def check_ac_loss_gradient(seed: int, tolerance: float) -> GradCheckReport:
    g = torch.Generator().manual_seed(seed + 1)
    raw = torch.randn(3, 2, 4, generator=g, dtype=torch.float64)

    def f(flat):
        z = flat.reshape(3, 2, 4)
        return float(ac_loss(*[torch.softmax(z[i], dim=1) for i in range(3)]).detach())

    z = raw.clone().requires_grad_(True)
    ac_loss(*[torch.softmax(z[i], dim=1) for i in range(3)]).backward()
    return gradcheck("ac_loss", f, raw.reshape(-1), z.grad, h=1e-5, tolerance=tolerance)


def check_l1_projection(seed: int, tolerance: float) -> GradCheckReport:
    g = torch.Generator().manual_seed(seed + 2)
    worst, worst_idx = 0.0, 0
    for trial in range(100):
        dim = 1 + trial % 8
        v = torch.randn(dim, generator=g, dtype=torch.float64) * 2
        eps = float(torch.rand(1, generator=g)) * 2 + 1e-3
        ours = project_ball(torch.zeros(1, dim, dtype=torch.float64), v.unsqueeze(0), NormBall("l1", eps))
        oracle = l1_projection_oracle(v, eps)
        err = (ours.squeeze(0) - oracle).abs().max().item()
        if err > worst:
            worst, worst_idx = err, trial
    return GradCheckReport(
        name="l1_projection", max_rel_err=worst, worst_index=worst_idx,
        step_size=0.0, tolerance=tolerance, passed=worst <= tolerance,
    )


def check_meta_gradient(seed: int, tolerance: float) -> GradCheckReport:
    g = torch.Generator().manual_seed(seed + 3)
    model = make_classifier("linear", (1, 2, 2), 2, seed=seed).double()
    gen = NoiseGenerator(channels=1, hidden=2, seed=seed + 60).double()
    x = torch.rand(3, 1, 2, 2, generator=g, dtype=torch.float64)
    y = torch.randint(0, 2, (3,), generator=g)
    x_adv = (x + 0.05 * torch.randn(x.shape, generator=g, dtype=torch.float64)).clamp(0, 1)
    ball = NormBall("l2", 10.0)  # inactive projection keeps the check kink-free
    z = torch.randn(x.shape, generator=g, dtype=torch.float64) * 0.1
    alpha = 0.03

    theta_plan = _param_plan(model)
    phi_plan = _param_plan(gen)

    def x_aug_from(phi_params):
        return project_ball(x, x + functional_call(gen, phi_params, (z, x)), ball).clamp(0, 1)

    def train_loss(theta_flat, phi_flat):
        th = _unflatten(theta_flat, theta_plan)
        ph = _unflatten(phi_flat, phi_plan)
        return cls_loss(functional_call(model, th, (x_aug_from(ph),)), y)

    def eval_loss(theta_flat):
        return cls_loss(functional_call(model, _unflatten(theta_flat, theta_plan), (x_adv,)), y)

    x_aug = x_aug_from(dict(gen.named_parameters()))
    analytic = torch.cat(
        [t.reshape(-1) for t in meta_gradient(model, gen, x_aug, x_adv, y, alpha)]
    )
    fd = fd_hypergradient(
        train_loss, eval_loss, _flatten_params(model), _flatten_params(gen), alpha, h=1e-5
    )
    denom = torch.maximum(fd.abs(), analytic.abs()).clamp_min(1e-8)
    errs = (fd - analytic).abs() / denom
    worst = int(errs.argmax())
    return GradCheckReport(
        name="meta_gradient", max_rel_err=float(errs[worst]), worst_index=worst,
        step_size=1e-5, tolerance=tolerance, passed=float(errs[worst]) <= tolerance,
    )


def run_gradcheck_suite(seed: int = 0, tolerance: float = 1e-3):
    return [
        check_cls_loss_gradient(seed, min(tolerance, 1e-4)),
        check_ac_loss_gradient(seed, min(tolerance, 1e-4)),
        check_l1_projection(seed, min(tolerance, 1e-6)),
        check_meta_gradient(seed, tolerance),
    ]
