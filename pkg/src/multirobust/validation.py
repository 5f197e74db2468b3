"""Input validation helpers shared by the estimator and data plumbing."""

from __future__ import annotations

import numpy as np
import torch


def check_image_array(X, name: str = "X") -> torch.Tensor:
    """Coerce to a float32 (N, C, H, W) tensor with finite values in [0, 1]."""
    if isinstance(X, torch.Tensor):
        tensor = X.detach().float()
    else:
        array = np.asarray(X)
        if array.dtype == object:
            raise ValueError(f"{name} must be numeric")
        tensor = torch.from_numpy(np.ascontiguousarray(array)).float()
    if tensor.dim() != 4:
        raise ValueError(f"{name} must have shape (n_samples, channels, height, width), got {tuple(tensor.shape)}")
    if tensor.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not torch.isfinite(tensor).all():
        raise ValueError(f"{name} contains non-finite values")
    if tensor.min() < 0.0 or tensor.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return tensor


def check_labels(y, n_samples: int | None = None, classes=None, name: str = "y"):
    """Coerce labels to int64; returns (tensor of class indices, class values).

    When ``classes`` is given, labels must be drawn from it and are encoded
    against it; otherwise classes are inferred sorted-unique.
    """
    if isinstance(y, torch.Tensor):
        array = y.detach().cpu().numpy()
    else:
        array = np.asarray(y)
    if array.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if n_samples is not None and array.shape[0] != n_samples:
        raise ValueError(f"{name} has {array.shape[0]} entries, expected {n_samples}")
    if classes is None:
        classes = np.unique(array)
    else:
        classes = np.asarray(classes)
        missing = np.setdiff1d(np.unique(array), classes)
        if missing.size:
            raise ValueError(f"{name} contains labels outside the fitted classes: {missing.tolist()}")
    lookup = {value: idx for idx, value in enumerate(classes.tolist())}
    encoded = torch.tensor([lookup[v] for v in array.tolist()], dtype=torch.int64)
    return encoded, classes
