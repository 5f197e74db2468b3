"""Dataset handling: built-in synthetic generators and a raw-tensor format.

Two synthetic families cover desk-scale experiments: "blobs" renders each
class as a smoothed random template plus pixel noise, and "moons" rasterizes
two interleaved crescents as a Gaussian bump per sampled point. Both are
deterministic given a seed. The raw format is a minimal little-endian
container (magic ``MNGT``) so externally produced tensors can be dropped in
without extra dependencies.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import torch

MAGIC = b"MNGT"
FORMAT_VERSION = 1
DTYPE_TAGS = {1: torch.float32, 2: torch.int64}
TAG_FOR_DTYPE = {v: k for k, v in DTYPE_TAGS.items()}

DATASET_NAMES = ("blobs", "moons", "raw")


@dataclass
class Dataset:
    train_x: torch.Tensor
    train_y: torch.Tensor
    test_x: torch.Tensor
    test_y: torch.Tensor
    classes: int

    @property
    def in_shape(self):
        return tuple(self.train_x.shape[1:])

    @property
    def input_dim(self):
        return int(torch.tensor(self.in_shape).prod())


def _smooth(field: torch.Tensor, passes: int = 2) -> torch.Tensor:
    """Cheap box blur over (N, 1, H, W); keeps templates low-frequency."""
    kernel = torch.full((1, 1, 3, 3), 1.0 / 9.0)
    out = field
    for _ in range(passes):
        out = torch.nn.functional.conv2d(out, kernel, padding=1)
    return out


def make_blobs(
    n_train: int,
    n_test: int,
    channels: int,
    height: int,
    width: int,
    classes: int,
    seed: int,
    noise_std: float = 0.1,
    contrast: float = 0.5,
    fragile_amplitude: float = 0.045,
    spot_amplitude: float = 0.35,
    spot_count: int = 6,
):
    """Synthetic image classes with three coexisting feature families.

    Each class template combines a smoothed orthogonalized pattern
    (``contrast``, distributed and broadly robust), a dense random sign code
    (``fragile_amplitude``, tiny per-pixel amplitude: highly predictive but
    erasable by small per-pixel perturbations), and a few class-specific
    bright/dark spots (``spot_amplitude`` on ``spot_count`` disjoint pixels:
    immune to small per-pixel changes, vulnerable to attacks that concentrate
    their budget). Gaussian pixel noise is added and everything is clipped to
    [0, 1]. Orthogonalization keeps pairwise template distances seed
    independent.
    """
    g = torch.Generator().manual_seed(seed)
    d = channels * height * width
    if classes > d:
        raise ValueError(f"cannot build {classes} orthogonal templates in {d} dims")
    if classes * spot_count > d:
        raise ValueError("not enough pixels for disjoint class spots")
    raw = torch.randn(classes, channels, height, width, generator=g)
    smooth = _smooth(raw.reshape(classes * channels, 1, height, width)).reshape(classes, d)
    q, _ = torch.linalg.qr(smooth.T.double())
    patterns = q.T[:classes].float()

    cues = fragile_amplitude * torch.where(
        torch.rand(classes, d, generator=g) < 0.5, -1.0, 1.0
    )

    spot_masks = torch.zeros(classes, d)
    order = torch.randperm(d, generator=g)
    for c in range(classes):
        spot_masks[c, order[c * spot_count : (c + 1) * spot_count]] = spot_amplitude

    def draw(n):
        labels = torch.arange(n) % classes
        labels = labels[torch.randperm(n, generator=g)]
        # robust structure carries a random polarity per sample, so only its
        # magnitude is class evidence; the dense cues stay deterministic
        polarity = torch.where(torch.rand(n, 1, generator=g) < 0.5, -1.0, 1.0)
        flat = (
            0.5
            + polarity * (contrast * patterns[labels] + spot_masks[labels])
            + cues[labels]
            + noise_std * torch.randn(n, d, generator=g)
        )
        return flat.clamp(0.0, 1.0).reshape(n, channels, height, width), labels

    train_x, train_y = draw(n_train)
    test_x, test_y = draw(n_test)
    return Dataset(train_x, train_y, test_x, test_y, classes)


def make_moons(
    n_train: int,
    n_test: int,
    channels: int,
    height: int,
    width: int,
    seed: int,
    noise_std: float = 0.05,
):
    """Two interleaved crescents rasterized as Gaussian bumps, two classes."""
    g = torch.Generator().manual_seed(seed)

    def draw(n):
        labels = torch.arange(n) % 2
        labels = labels[torch.randperm(n, generator=g)]
        t = torch.rand(n, generator=g) * math.pi
        px = torch.where(labels == 0, t.cos(), 1.0 - t.cos())
        py = torch.where(labels == 0, t.sin(), 0.5 - t.sin())
        px = px + noise_std * torch.randn(n, generator=g)
        py = py + noise_std * torch.randn(n, generator=g)
        # map the point cloud into grid coordinates and render bumps
        cx = (px + 1.5) / 4.0 * (width - 1)
        cy = (py + 1.5) / 3.0 * (height - 1)
        ys = torch.arange(height).reshape(1, height, 1)
        xs = torch.arange(width).reshape(1, 1, width)
        sigma = max(1.0, min(height, width) / 8.0)
        bumps = torch.exp(
            -((xs - cx.reshape(n, 1, 1)) ** 2 + (ys - cy.reshape(n, 1, 1)) ** 2)
            / (2 * sigma ** 2)
        )
        x = bumps.unsqueeze(1).expand(n, channels, height, width).contiguous()
        return x.clamp(0.0, 1.0), labels

    train_x, train_y = draw(n_train)
    test_x, test_y = draw(n_test)
    return Dataset(train_x, train_y, test_x, test_y, classes=2)


def write_tensor(path, tensor: torch.Tensor) -> None:
    """Write one tensor in the MNGT container format."""
    tensor = tensor.contiguous()
    if tensor.dtype not in TAG_FOR_DTYPE:
        raise ValueError(f"unsupported dtype {tensor.dtype}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", tensor.dim()))
        for dim in tensor.shape:
            fh.write(struct.pack("<Q", dim))
        fh.write(struct.pack("<I", TAG_FOR_DTYPE[tensor.dtype]))
        fh.write(tensor.numpy().tobytes())


def read_tensor(path) -> torch.Tensor:
    """Read one tensor from the MNGT container format."""
    import numpy as np

    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: bad magic, not a raw-tensor file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {version}")
        (rank,) = struct.unpack("<I", fh.read(4))
        shape = [struct.unpack("<Q", fh.read(8))[0] for _ in range(rank)]
        (tag,) = struct.unpack("<I", fh.read(4))
        if tag not in DTYPE_TAGS:
            raise ValueError(f"{path}: unknown dtype tag {tag}")
        dtype = DTYPE_TAGS[tag]
        count = int(math.prod(shape)) if shape else 1
        np_dtype = np.float32 if dtype is torch.float32 else np.int64
        payload = fh.read()
    expected = count * np_dtype().itemsize
    if len(payload) != expected:
        raise ValueError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    array = np.frombuffer(payload, dtype=np_dtype).reshape(shape).copy()
    return torch.from_numpy(array)


def load_raw(directory) -> Dataset:
    """Load train/test splits from MNGT files in a directory.

    Expects ``train_x.mngt``, ``train_y.mngt``, ``test_x.mngt``,
    ``test_y.mngt``.
    """
    directory = Path(directory)
    parts = {}
    for name in ("train_x", "train_y", "test_x", "test_y"):
        path = directory / f"{name}.mngt"
        if not path.exists():
            raise FileNotFoundError(f"missing dataset file {path}")
        parts[name] = read_tensor(path)
    for split in ("train", "test"):
        if parts[f"{split}_x"].shape[0] != parts[f"{split}_y"].shape[0]:
            raise ValueError(f"{split}: images and labels disagree on count")
        if parts[f"{split}_x"].dim() != 4:
            raise ValueError(f"{split}_x must be rank 4 (N, C, H, W)")
    classes = int(max(parts["train_y"].max(), parts["test_y"].max()).item()) + 1
    return Dataset(parts["train_x"], parts["train_y"], parts["test_x"], parts["test_y"], classes)


def save_raw(directory, dataset: Dataset) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_tensor(directory / "train_x.mngt", dataset.train_x.float())
    write_tensor(directory / "train_y.mngt", dataset.train_y.long())
    write_tensor(directory / "test_x.mngt", dataset.test_x.float())
    write_tensor(directory / "test_y.mngt", dataset.test_y.long())


def batch_indices(n: int, batch_size: int, seed: int, epoch: int) -> list:
    """Deterministic shuffled batches for one epoch; covers every index once."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    g = torch.Generator().manual_seed(seed * 1_000_003 + epoch)
    perm = torch.randperm(n, generator=g)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]
