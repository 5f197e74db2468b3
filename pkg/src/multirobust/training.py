"""Training steps: the bi-level meta-noise scheme and its baselines.

The meta scheme alternates three updates per batch: a temporary classifier
update on generator-augmented samples, a generator update through the
second-order path of that temporary update evaluated on the adversarial
batch, and the real classifier update on the stochastic adversarial loss
plus the consistency term. The temporary parameters never leak into the
returned classifier.

Baselines share the same state container: natural training, single-attack
adversarial training, the average and max multi-attack strategies, and
stochastic adversarial training (one sampled attack per batch, so its
attack cost is constant in the size of the perturbation set).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import torch
from torch.func import functional_call

from multirobust.attacks import PerturbationSet, pgd_attack
from multirobust.geometry import NumericError
from multirobust.losses import ac_loss, cls_loss, total_loss
from multirobust.models import NoiseGenerator, generate_augmented, random_augmented

METHODS = ("nat", "adv_single", "adv_avg", "adv_max", "sat", "mng_ac")


@dataclass(frozen=True)
class LrSchedule:
    """Triangular schedule: 0 -> max_lr at mid-training -> 0 at the end."""

    max_lr: float
    total_epochs: int

    def __post_init__(self):
        if self.max_lr <= 0 or self.total_epochs <= 0:
            raise ValueError("max_lr and total_epochs must be positive")


def lr_at(schedule: LrSchedule, fractional_epoch: float) -> float:
    if not (0.0 <= fractional_epoch <= schedule.total_epochs):
        raise ValueError(f"fractional_epoch outside [0, {schedule.total_epochs}]")
    half = schedule.total_epochs / 2.0
    if fractional_epoch <= half:
        return schedule.max_lr * fractional_epoch / half
    return schedule.max_lr * (schedule.total_epochs - fractional_epoch) / half


@dataclass
class TrainState:
    """Everything a training step reads or writes, checkpointable as a unit."""

    model: torch.nn.Module
    gen: NoiseGenerator | None = None
    pset: PerturbationSet | None = None
    theta_buf: dict = field(default_factory=dict)
    phi_buf: dict = field(default_factory=dict)
    rng_noise: torch.Generator = field(default_factory=torch.Generator)
    epoch: int = 0
    global_step: int = 0
    attack_calls: int = 0
    momentum: float = 0.9
    weight_decay: float = 5e-4
    phi_momentum: float = 0.0
    phi_weight_decay: float = 0.0
    alpha_meta: float | None = None  # None: reuse the scheduled lr
    generator_enabled: bool = True
    phase_seconds: dict = field(default_factory=lambda: {"attack": 0.0, "meta": 0.0, "update": 0.0})


def sgd_step(params, grads, buffers: dict, lr: float, momentum: float, weight_decay: float):
    """One SGD-with-momentum update, in place on the parameters.

    Matches the conventional recipe: g += wd * p; buf = m * buf + g;
    p -= lr * buf.
    """
    with torch.no_grad():
        for (name, p), g in zip(params, grads):
            if weight_decay:
                g = g + weight_decay * p
            if momentum:
                buf = buffers.get(name)
                buf = g.clone() if buf is None else momentum * buf + g
                buffers[name] = buf
                g = buf
            p -= lr * g


def _grads(loss, params, *, create_graph=False, stage=""):
    grads = torch.autograd.grad(loss, [p for _, p in params], create_graph=create_graph)
    for (name, _), g in zip(params, grads):
        if not torch.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {name} during {stage}")
    return grads


def _named_params(module):
    return list(module.named_parameters())


def nat_step(state: TrainState, x, y, lr: float) -> TrainState:
    """Plain cross-entropy step on the clean batch."""
    t0 = time.perf_counter()
    params = _named_params(state.model)
    loss = cls_loss(state.model(x), y)
    grads = _grads(loss, params, stage="natural update")
    sgd_step(params, grads, state.theta_buf, lr, state.momentum, state.weight_decay)
    state.global_step += 1
    state.phase_seconds["update"] += time.perf_counter() - t0
    return state


def _craft(state: TrainState, x, y, spec):
    t0 = time.perf_counter()
    x_adv = pgd_attack(state.model, x, y, spec, generator=state.pset.rng)
    state.attack_calls += 1
    state.phase_seconds["attack"] += time.perf_counter() - t0
    return x_adv


def sat_step(state: TrainState, x, y, pset: PerturbationSet, lr: float) -> TrainState:
    """Stochastic adversarial training: one sampled attack, one update."""
    spec = pset.sample()
    x_adv = _craft(state, x, y, spec)
    t0 = time.perf_counter()
    params = _named_params(state.model)
    loss = cls_loss(state.model(x_adv), y)
    grads = _grads(loss, params, stage="sat update")
    sgd_step(params, grads, state.theta_buf, lr, state.momentum, state.weight_decay)
    state.global_step += 1
    state.phase_seconds["update"] += time.perf_counter() - t0
    return state


def avg_step(state: TrainState, x, y, pset: PerturbationSet, lr: float) -> TrainState:
    """Mean classification loss over every attack in the set."""
    advs = [_craft(state, x, y, spec) for spec in pset.attacks]
    t0 = time.perf_counter()
    params = _named_params(state.model)
    loss = sum(cls_loss(state.model(x_adv), y) for x_adv in advs) / len(advs)
    grads = _grads(loss, params, stage="avg update")
    sgd_step(params, grads, state.theta_buf, lr, state.momentum, state.weight_decay)
    state.global_step += 1
    state.phase_seconds["update"] += time.perf_counter() - t0
    return state


def max_step(state: TrainState, x, y, pset: PerturbationSet, lr: float) -> TrainState:
    """Per-example worst-attack classification loss."""
    advs = [_craft(state, x, y, spec) for spec in pset.attacks]
    t0 = time.perf_counter()
    params = _named_params(state.model)
    per_example = torch.stack(
        [torch.nn.functional.cross_entropy(state.model(x_adv), y, reduction="none") for x_adv in advs]
    )
    loss = per_example.max(dim=0).values.mean()
    grads = _grads(loss, params, stage="max update")
    sgd_step(params, grads, state.theta_buf, lr, state.momentum, state.weight_decay)
    state.global_step += 1
    state.phase_seconds["update"] += time.perf_counter() - t0
    return state


def meta_gradient(model, gen, x_aug, x_adv, y, alpha: float):
    """Generator gradient through the one-step temporary classifier update.

    ``x_aug`` must still be attached to the generator parameters. The
    temporary parameters theta_hat = theta - alpha * d cls(x_aug)/d theta are
    built with ``create_graph`` so the returned gradient carries the
    second-order dependence of the lookahead adversarial loss on the
    generator; theta_hat is discarded afterwards.
    """
    theta = _named_params(model)
    phi = _named_params(gen)
    inner = cls_loss(model(x_aug), y)
    inner_grads = _grads(inner, theta, create_graph=True, stage="temporary update")
    theta_hat = {name: p - alpha * g for (name, p), g in zip(theta, inner_grads)}
    lookahead = cls_loss(functional_call(model, theta_hat, (x_adv,)), y)
    return _grads(lookahead, phi, stage="meta-gradient (generator update)")


def mng_ac_step(
    state: TrainState, x, y, pset: PerturbationSet, beta: float, lr: float
) -> TrainState:
    """One three-phase bi-level step.

    Phases: (1) sample an attack and craft the adversarial batch; (2) when the
    generator is enabled, build augmented samples, form the temporary
    classifier update as a differentiable function of the generator, and
    update the generator by the gradient of the adversarial loss through that
    temporary update; (3) regenerate augmented samples with the new generator
    and update the classifier on the adversarial loss plus ``beta`` times the
    three-way consistency loss. With the generator disabled the augmented
    samples are plain projected noise and phase (2) is skipped.
    """
    spec = pset.sample()
    x_adv = _craft(state, x, y, spec)

    if state.generator_enabled:
        if state.gen is None:
            raise ValueError("mng_ac_step with generator_enabled requires state.gen")
        t0 = time.perf_counter()
        alpha = lr if state.alpha_meta is None else state.alpha_meta
        x_aug = generate_augmented(state.gen, x, spec.ball, state.rng_noise)
        phi_grads = meta_gradient(state.model, state.gen, x_aug, x_adv, y, alpha)
        sgd_step(
            _named_params(state.gen), phi_grads, state.phi_buf,
            lr, state.phi_momentum, state.phi_weight_decay,
        )
        state.phase_seconds["meta"] += time.perf_counter() - t0

        x_aug = generate_augmented(state.gen, x, spec.ball, state.rng_noise).detach()
    else:
        x_aug = random_augmented(x, spec.ball, state.rng_noise)

    t0 = time.perf_counter()
    theta = _named_params(state.model)
    adv_logits = state.model(x_adv)
    loss = cls_loss(adv_logits, y)
    if beta > 0:
        p_clean = torch.softmax(state.model(x), dim=1)
        p_adv = torch.softmax(adv_logits, dim=1)
        p_aug = torch.softmax(state.model(x_aug), dim=1)
        loss = total_loss(loss, ac_loss(p_clean, p_adv, p_aug), beta)
    grads = _grads(loss, theta, stage="classifier update")
    sgd_step(theta, grads, state.theta_buf, lr, state.momentum, state.weight_decay)
    state.global_step += 1
    state.phase_seconds["update"] += time.perf_counter() - t0
    return state


def train_step(state: TrainState, method: str, x, y, pset, beta: float, lr: float) -> TrainState:
    """Dispatch one step by method key."""
    if method == "nat":
        return nat_step(state, x, y, lr)
    if method in ("sat", "adv_single"):
        return sat_step(state, x, y, pset, lr)
    if method == "adv_avg":
        return avg_step(state, x, y, pset, lr)
    if method == "adv_max":
        return max_step(state, x, y, pset, lr)
    if method == "mng_ac":
        return mng_ac_step(state, x, y, pset, beta, lr)
    raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
