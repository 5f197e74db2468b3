"""Norm-ball geometry: exact lp projections and steepest-ascent directions.

Everything here operates per sample: the first tensor dimension is the batch
and norms are taken over all remaining dimensions. Norm arithmetic runs in
float64 internally so that epsilon-boundary behaviour is stable regardless of
the model dtype; results are cast back to the input dtype.

All operations are built from subdifferentiable primitives (clamp, rescale,
sort-and-threshold), so gradients flow through projections almost everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

NORMS = ("l1", "l2", "linf")

# SLIDE-style sparse l1 steps touch this fraction of coordinates by default.
DEFAULT_SPARSITY = 0.01


class NumericError(RuntimeError):
    """A computation produced or received non-finite values."""


@dataclass(frozen=True)
class NormBall:
    """An lp ball of radius ``epsilon`` (same pixel units as the inputs).

    ``epsilon == 0`` is the degenerate ball: projecting onto it returns the
    center exactly.
    """

    p: str
    epsilon: float

    def __post_init__(self):
        if self.p not in NORMS:
            raise ValueError(f"unsupported norm {self.p!r}, expected one of {NORMS}")
        if not (float(self.epsilon) >= 0.0):
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")


def _check_shapes(center: torch.Tensor, point: torch.Tensor) -> None:
    if center.shape != point.shape:
        raise ValueError(
            f"shape mismatch: center {tuple(center.shape)} vs point {tuple(point.shape)}"
        )


def _check_finite(t: torch.Tensor, what: str) -> None:
    if not torch.isfinite(t).all():
        raise NumericError(f"non-finite values in {what}")


def _flatten(t: torch.Tensor) -> torch.Tensor:
    return t.reshape(t.shape[0], -1)


def ball_norm(center: torch.Tensor, point: torch.Tensor, p: str) -> torch.Tensor:
    """Per-sample lp norm of ``point - center``, returned as a float64 vector."""
    _check_shapes(center, point)
    if p not in NORMS:
        raise ValueError(f"unsupported norm {p!r}")
    delta = _flatten((point - center).double())
    if p == "l1":
        return delta.abs().sum(dim=1)
    if p == "l2":
        return delta.pow(2).sum(dim=1).sqrt()
    return delta.abs().amax(dim=1)


def _l1_threshold(mags: torch.Tensor, epsilon: float) -> torch.Tensor:
    """Soft threshold tau per row so that sum(max(|v| - tau, 0)) == epsilon.

    Sort-and-scan version of the Euclidean l1-ball projection; only valid for
    rows with l1 norm > epsilon.
    """
    srt, _ = torch.sort(mags, dim=1, descending=True)
    csum = srt.cumsum(dim=1) - epsilon
    counts = torch.arange(1, mags.shape[1] + 1, dtype=mags.dtype, device=mags.device)
    # prefix of indices where the running threshold stays below the sorted value
    rho = (srt - csum / counts > 0).sum(dim=1, keepdim=True).clamp_min(1)
    return csum.gather(1, rho - 1) / rho.to(mags.dtype)


def project_ball(center: torch.Tensor, point: torch.Tensor, ball: NormBall) -> torch.Tensor:
    """Euclidean-nearest point of the lp ball around ``center``, per sample.

    Points already inside the ball are returned bit-identically. For linf the
    delta is clamped coordinatewise, for l2 it is rescaled radially, and for
    l1 it is soft-thresholded with the sorted-cumsum threshold.
    """
    _check_shapes(center, point)
    _check_finite(point, "projection input")
    _check_finite(center, "projection center")
    if float(ball.epsilon) == 0.0:
        return center.clone()

    eps = float(ball.epsilon)
    dtype = point.dtype
    delta = _flatten((point - center).double())

    if ball.p == "linf":
        proj = delta.clamp(-eps, eps)
    elif ball.p == "l2":
        norms = delta.pow(2).sum(dim=1, keepdim=True).sqrt()
        scale = torch.where(norms > eps, eps / norms.clamp_min(1e-300), torch.ones_like(norms))
        proj = delta * scale
    else:
        mags = delta.abs()
        inside = mags.sum(dim=1, keepdim=True) <= eps
        tau = _l1_threshold(mags, eps)
        thresholded = delta.sign() * (mags - tau).clamp_min(0.0)
        proj = torch.where(inside, delta, thresholded)

    return center + proj.to(dtype).reshape(point.shape)


def steepest_direction(
    gradient: torch.Tensor, p: str, sparsity_fraction: float = DEFAULT_SPARSITY
) -> torch.Tensor:
    """Unit-lp-norm direction maximizing the inner product with ``gradient``.

    linf -> sign of the gradient; l2 -> gradient normalized; l1 -> sign steps
    on the top ``sparsity_fraction`` of coordinates by magnitude (minimum one
    coordinate, ties broken toward the lowest flat index), rescaled to unit
    l1 norm. A zero gradient yields a zero direction.
    """
    if p not in NORMS:
        raise ValueError(f"unsupported norm {p!r}")
    _check_finite(gradient, "gradient")
    dtype = gradient.dtype
    flat = _flatten(gradient.double())

    if p == "linf":
        direction = flat.sign()
    elif p == "l2":
        norms = flat.pow(2).sum(dim=1, keepdim=True).sqrt()
        direction = torch.where(norms > 0, flat / norms.clamp_min(1e-300), torch.zeros_like(flat))
    else:
        if not (0.0 < sparsity_fraction <= 1.0):
            raise ValueError(f"sparsity_fraction must be in (0, 1], got {sparsity_fraction}")
        d = flat.shape[1]
        k = max(1, int(sparsity_fraction * d))
        # stable sort keeps the lowest flat index first among tied magnitudes
        order = torch.argsort(flat.abs(), dim=1, descending=True, stable=True)
        top = order[:, :k]
        direction = torch.zeros_like(flat)
        direction.scatter_(1, top, flat.gather(1, top).sign())
        norms = direction.abs().sum(dim=1, keepdim=True)
        direction = torch.where(norms > 0, direction / norms.clamp_min(1.0), direction)

    return direction.to(dtype).reshape(gradient.shape)
