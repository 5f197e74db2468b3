"""Independent numeric oracles backing the test suite and the gradcheck CLI.

These deliberately avoid the code paths they verify: gradients come from
central finite differences, the l1 projection from bisection on the KKT
threshold, and the hypergradient from finite differences over the generator
parameters with only a first-order inner gradient. Everything runs in
float64.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable

import torch


def relative_error(a: torch.Tensor, b: torch.Tensor) -> float:
    """Coordinatewise max of |a - b| / max(|a|, |b|, 1e-8)."""
    a = a.double().reshape(-1)
    b = b.double().reshape(-1)
    denom = torch.maximum(a.abs(), b.abs()).clamp_min(1e-8)
    return ((a - b).abs() / denom).max().item()


@dataclass
class GradCheckReport:
    name: str
    max_rel_err: float
    worst_index: int
    step_size: float
    tolerance: float
    passed: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def fd_gradient(
    f: Callable[[torch.Tensor], float], params: torch.Tensor, h: float = 1e-4
) -> torch.Tensor:
    """Central-difference gradient of a scalar function of a flat parameter vector."""
    params = params.detach().double()
    grad = torch.zeros_like(params)
    for i in range(params.numel()):
        bump = torch.zeros_like(params)
        bump[i] = h
        hi = float(f(params + bump))
        lo = float(f(params - bump))
        if not (torch.isfinite(torch.tensor(hi)) and torch.isfinite(torch.tensor(lo))):
            raise ValueError(f"non-finite function value at coordinate {i}")
        grad[i] = (hi - lo) / (2.0 * h)
    return grad


def gradcheck(
    name: str,
    f: Callable[[torch.Tensor], float],
    params: torch.Tensor,
    analytic: torch.Tensor,
    h: float = 1e-4,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Compare an analytic gradient against fd_gradient and report the result."""
    fd = fd_gradient(f, params, h)
    analytic = analytic.detach().double().reshape(-1)
    denom = torch.maximum(fd.abs(), analytic.abs()).clamp_min(1e-8)
    errs = (fd - analytic).abs() / denom
    worst = int(errs.argmax().item())
    max_err = float(errs[worst].item())
    return GradCheckReport(
        name=name,
        max_rel_err=max_err,
        worst_index=worst,
        step_size=h,
        tolerance=tolerance,
        passed=max_err <= tolerance,
    )


def fd_hypergradient(
    train_loss: Callable[[torch.Tensor, torch.Tensor], torch.Tensor],
    eval_loss: Callable[[torch.Tensor], torch.Tensor],
    theta: torch.Tensor,
    phi: torch.Tensor,
    alpha_meta: float,
    h: float = 1e-4,
) -> torch.Tensor:
    """Finite-difference gradient of phi -> eval_loss(theta - alpha * d train_loss/d theta).

    ``train_loss(theta, phi)`` and ``eval_loss(theta)`` must be autograd-capable
    scalar functions of flat float64 vectors; the inner gradient is plain
    first-order autograd, so this path is independent of any second-order
    machinery it is used to check.
    """
    theta = theta.detach().double()
    phi = phi.detach().double()

    def outer(phi_value: torch.Tensor) -> float:
        th = theta.clone().requires_grad_(True)
        inner = train_loss(th, phi_value)
        if not torch.isfinite(inner):
            raise ValueError("non-finite inner loss in hypergradient oracle")
        (g,) = torch.autograd.grad(inner, th)
        updated = theta - alpha_meta * g.detach()
        value = eval_loss(updated)
        return float(value.detach() if isinstance(value, torch.Tensor) else value)

    return fd_gradient(outer, phi, h)


def l1_projection_oracle(point: torch.Tensor, epsilon: float) -> torch.Tensor:
    """Euclidean projection of a vector onto the l1 ball via bisection on tau.

    Solves sum(max(|v| - tau, 0)) == epsilon for tau >= 0, independently of
    the sort-and-threshold production path. Interior points are returned
    unchanged.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    v = point.detach().double().reshape(-1)
    if epsilon == 0.0:
        return torch.zeros_like(v)
    mags = v.abs()
    if mags.sum() <= epsilon:
        return v.clone()
    lo, hi = 0.0, float(mags.max())
    for _ in range(200):
        tau = 0.5 * (lo + hi)
        mass = (mags - tau).clamp_min(0.0).sum().item()
        if mass > epsilon:
            lo = tau
        else:
            hi = tau
    tau = 0.5 * (lo + hi)
    return v.sign() * (mags - tau).clamp_min(0.0)
