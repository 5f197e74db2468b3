"""Classification loss, three-way Jensen-Shannon consistency loss, and their sum."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F

# Probability floor before logs: keeps one-hot posteriors finite.
PROB_FLOOR = 1e-12

LN3 = math.log(3.0)


def cls_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy over the batch, computed via log-softmax."""
    if logits.dim() != 2:
        raise ValueError(f"logits must be (batch, classes), got {tuple(logits.shape)}")
    n_classes = logits.shape[1]
    if labels.shape != logits.shape[:1]:
        raise ValueError(f"labels shape {tuple(labels.shape)} does not match batch")
    if labels.numel() and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels out of range [0, {n_classes})")
    return F.nll_loss(F.log_softmax(logits, dim=1), labels)


def _check_rows(p: torch.Tensor, name: str) -> None:
    if p.dim() != 2:
        raise ValueError(f"{name} must be (batch, classes), got {tuple(p.shape)}")
    if (p < 0).any():
        raise ValueError(f"{name} has negative entries")
    sums = p.sum(dim=1)
    if (sums - 1.0).abs().max() > 1e-5:
        raise ValueError(f"{name} rows must sum to 1 within 1e-5")


def _kl(p: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
    p = p.clamp_min(PROB_FLOOR)
    m = m.clamp_min(PROB_FLOOR)
    return (p * (p.log() - m.log())).sum(dim=1)


def ac_loss(p_clean: torch.Tensor, p_adv: torch.Tensor, p_aug: torch.Tensor) -> torch.Tensor:
    """Jensen-Shannon divergence among the three posteriors, batch mean.

    Natural-log convention, so the value lies in [0, ln 3]; it is 0 iff the
    three rows agree and symmetric under any permutation of the inputs.
    """
    for p, name in ((p_clean, "p_clean"), (p_adv, "p_adv"), (p_aug, "p_aug")):
        _check_rows(p, name)
    if not (p_clean.shape == p_adv.shape == p_aug.shape):
        raise ValueError("posterior shapes must match")
    m = (p_clean + p_adv + p_aug) / 3.0
    per_sample = (_kl(p_clean, m) + _kl(p_adv, m) + _kl(p_aug, m)) / 3.0
    return per_sample.mean()


def total_loss(cls: torch.Tensor, ac: torch.Tensor, beta: float) -> torch.Tensor:
    """Classification loss plus beta times the consistency loss."""
    if beta < 0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    return cls + beta * ac
