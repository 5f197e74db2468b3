"""PGD attack family, uniform attack sampling, and a salt-and-pepper attack.

Attacks are read-only on the model: gradients are taken with respect to the
inputs only and parameters are never touched. All randomness comes from
explicit torch.Generator streams so seeded runs are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from multirobust.geometry import (
    DEFAULT_SPARSITY,
    NormBall,
    NumericError,
    project_ball,
    steepest_direction,
)
from multirobust.losses import cls_loss

# Budgets and step sizes below match the standard 32x32 RGB setting
# (d = 3072); for other input sizes the l1/l2 budgets rescale with dimension
# and the step sizes rescale with the budget.
REFERENCE_DIM = 3 * 32 * 32
REFERENCE_EPS = {"linf": 8 / 255, "l1": 2000 / 255, "l2": 128 / 255}
REFERENCE_STEP = {"linf": 0.004, "l1": 1.0, "l2": 0.1}
TRAIN_STEPS = {"linf": 10, "l1": 20, "l2": 10}
EVAL_STEPS = {"linf": 10, "l1": 100, "l2": 10}

ATTACK_NAMES = ("pgd-linf", "pgd-l1", "pgd-l2", "salt-pepper")


@dataclass(frozen=True)
class AttackSpec:
    """One PGD configuration: ball, iteration count, step size, and init mode."""

    name: str
    ball: NormBall
    steps: int
    step_size: float
    random_init: bool = True
    sparsity_fraction: float = DEFAULT_SPARSITY

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.step_size <= 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.ball.p == "linf" and self.ball.epsilon > 0 and self.step_size >= 2 * self.ball.epsilon:
            raise ValueError("linf step_size must be below 2*epsilon")

    @property
    def group(self) -> str:
        return self.ball.p


@dataclass(frozen=True)
class SaltPepperSpec:
    """Black-box evaluation attack: random pixels forced to 0 or 1."""

    name: str
    max_fraction: float
    trials: int

    def __post_init__(self):
        if not (0.0 < self.max_fraction <= 1.0):
            raise ValueError(f"max_fraction must be in (0, 1], got {self.max_fraction}")
        if self.trials < 0:
            raise ValueError("trials must be nonnegative")

    @property
    def group(self) -> str:
        return "salt-pepper"


def default_epsilon(p: str, input_dim: int) -> float:
    """Reference budget rescaled for an input of ``input_dim`` coordinates."""
    ratio = input_dim / REFERENCE_DIM
    if p == "linf":
        return REFERENCE_EPS["linf"]
    if p == "l1":
        return REFERENCE_EPS["l1"] * ratio
    return REFERENCE_EPS["l2"] * math.sqrt(ratio)


def make_attack(
    name: str,
    input_dim: int,
    *,
    epsilon: float | None = None,
    steps: int | None = None,
    step_size: float | None = None,
    random_init: bool = True,
    sparsity_fraction: float = DEFAULT_SPARSITY,
    max_fraction: float = 0.1,
    trials: int = 10,
    for_eval: bool = False,
):
    """Resolve a registry name into a fully populated attack spec."""
    if name not in ATTACK_NAMES:
        raise ValueError(f"unknown attack {name!r}, expected one of {ATTACK_NAMES}")
    if name == "salt-pepper":
        return SaltPepperSpec(name=name, max_fraction=max_fraction, trials=trials)
    p = name.split("-")[1]
    eps = default_epsilon(p, input_dim) if epsilon is None else float(epsilon)
    if step_size is None:
        # keep the paper-scale step-to-budget ratio when the budget is rescaled
        step_size = REFERENCE_STEP[p] * eps / REFERENCE_EPS[p]
    if steps is None:
        steps = (EVAL_STEPS if for_eval else TRAIN_STEPS)[p]
    return AttackSpec(
        name=name,
        ball=NormBall(p, eps),
        steps=steps,
        step_size=step_size,
        random_init=random_init,
        sparsity_fraction=sparsity_fraction,
    )


class PerturbationSet:
    """Ordered attack list with a uniform, seedable sampler."""

    def __init__(self, attacks, seed: int = 0):
        attacks = list(attacks)
        if not attacks:
            raise ValueError("perturbation set must be nonempty")
        self.attacks = attacks
        self.rng = torch.Generator()
        self.rng.manual_seed(seed)

    def __len__(self):
        return len(self.attacks)

    def sample(self):
        """Draw one attack, each with probability 1/n."""
        idx = int(torch.randint(len(self.attacks), (1,), generator=self.rng).item())
        return self.attacks[idx]


def _uniform_ball_delta(x: torch.Tensor, ball: NormBall, generator: torch.Generator) -> torch.Tensor:
    """A point drawn uniformly from the ball, expressed as a delta from its center."""
    n = x.shape[0]
    d = x[0].numel()
    if ball.epsilon == 0.0:
        return torch.zeros_like(x)
    if ball.p == "linf":
        u = torch.rand(x.shape, generator=generator, dtype=x.dtype)
        return (2 * u - 1) * ball.epsilon
    radius = (
        torch.rand(n, 1, generator=generator, dtype=x.dtype).pow(1.0 / d) * ball.epsilon
    )
    if ball.p == "l2":
        v = torch.randn(n, d, generator=generator, dtype=x.dtype)
        v = v / v.norm(dim=1, keepdim=True).clamp_min(1e-12)
        return (radius * v).reshape(x.shape)
    # l1: exponential sampling of the simplex, random signs, radial scaling
    e = -torch.rand(n, d, generator=generator, dtype=x.dtype).clamp_min(1e-12).log()
    w = e / e.sum(dim=1, keepdim=True)
    signs = torch.where(
        torch.rand(n, d, generator=generator) < 0.5,
        -torch.ones(n, d, dtype=x.dtype),
        torch.ones(n, d, dtype=x.dtype),
    )
    return (radius * w * signs).reshape(x.shape)


def pgd_attack(
    model,
    x: torch.Tensor,
    labels: torch.Tensor,
    spec: AttackSpec,
    loss_fn=cls_loss,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Projected gradient ascent on the loss inside the spec's ball.

    Each iteration takes the steepest-ascent direction for the ball's norm,
    scales it by the step size, projects back onto the ball around ``x`` and
    clamps to [0, 1]. The starting point is uniform over the ball when
    ``random_init`` is set, otherwise ``x`` itself.
    """
    if x.shape[0] != labels.shape[0]:
        raise ValueError("batch and labels disagree on batch size")
    x = x.detach()
    if spec.random_init:
        if generator is None:
            raise ValueError("random_init requires an explicit generator")
        x_adv = x + _uniform_ball_delta(x, spec.ball, generator)
        x_adv = project_ball(x, x_adv, spec.ball).clamp(0.0, 1.0)
    else:
        x_adv = x.clone()

    was_training = getattr(model, "training", False)
    if hasattr(model, "eval"):
        model.eval()
    try:
        for step in range(spec.steps):
            x_adv = x_adv.detach().requires_grad_(True)
            with torch.enable_grad():
                loss = loss_fn(model(x_adv), labels)
                if not torch.isfinite(loss):
                    raise NumericError(f"non-finite attack loss at step {step}")
                (grad,) = torch.autograd.grad(loss, x_adv, allow_unused=True)
            if grad is None:  # loss constant in the input
                grad = torch.zeros_like(x_adv)
            direction = steepest_direction(grad, spec.ball.p, spec.sparsity_fraction)
            x_adv = x_adv.detach() + spec.step_size * direction
            x_adv = project_ball(x, x_adv, spec.ball).clamp(0.0, 1.0)
    finally:
        if was_training and hasattr(model, "train"):
            model.train()
    return x_adv.detach()


def salt_pepper_attack(
    model,
    x: torch.Tensor,
    labels: torch.Tensor,
    spec: SaltPepperSpec,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Set geometrically growing random pixel subsets to 0 or 1 until the
    prediction flips; samples that never flip come back unchanged."""
    if x.shape[0] != labels.shape[0]:
        raise ValueError("batch and labels disagree on batch size")
    if generator is None:
        generator = torch.Generator()
    x = x.detach()
    n = x.shape[0]
    d = x[0].numel()
    result = x.clone()
    with torch.no_grad():
        fooled = model(x).argmax(dim=1) != labels
    for trial in range(spec.trials):
        if bool(fooled.all()):
            break
        fraction = spec.max_fraction * (2.0 ** (trial - (spec.trials - 1)))
        k = max(1, int(round(fraction * d)))
        flat = x.reshape(n, d).clone()
        scores = torch.rand(n, d, generator=generator)
        idx = scores.argsort(dim=1)[:, :k]
        values = (torch.rand(n, k, generator=generator) < 0.5).to(x.dtype)
        flat.scatter_(1, idx, values)
        candidate = flat.reshape(x.shape)
        with torch.no_grad():
            wrong = model(candidate).argmax(dim=1) != labels
        newly = wrong & ~fooled
        result[newly] = candidate[newly]
        fooled |= newly
    return result
