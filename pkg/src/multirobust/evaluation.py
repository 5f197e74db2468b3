"""Robustness metrics, the beta ablation driver, and loss-landscape export.

``evaluate`` builds a per-example correctness matrix (clean column plus one
column per attack) and reduces it to clean accuracy, per-attack accuracies,
worst-case (union) accuracy, and two averages: over attacks and over
norm-group worst cases. The matrix itself is returned and persisted so the
reductions stay externally auditable.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import torch

from multirobust.attacks import AttackSpec, SaltPepperSpec, pgd_attack, salt_pepper_attack
from multirobust.losses import cls_loss


@dataclass
class MetricsReport:
    acc_clean: float
    per_attack: dict
    acc_union: float
    acc_avg: float
    acc_avg_norm_groups: float
    n_examples: int
    config_fingerprint: str = ""
    wall_time_seconds: float = 0.0
    phase_seconds: dict = field(default_factory=dict)

    def to_json(self, include_timing: bool = False) -> str:
        payload = {
            "acc_clean": self.acc_clean,
            "per_attack": self.per_attack,
            "acc_union": self.acc_union,
            "acc_avg": self.acc_avg,
            "acc_avg_norm_groups": self.acc_avg_norm_groups,
            "n_examples": self.n_examples,
            "config_fingerprint": self.config_fingerprint,
        }
        if include_timing:
            payload["wall_time_seconds"] = self.wall_time_seconds
            payload["phase_seconds"] = self.phase_seconds
        return json.dumps(payload, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        data = json.loads(text)
        return cls(
            acc_clean=data["acc_clean"],
            per_attack=data["per_attack"],
            acc_union=data["acc_union"],
            acc_avg=data["acc_avg"],
            acc_avg_norm_groups=data["acc_avg_norm_groups"],
            n_examples=data["n_examples"],
            config_fingerprint=data.get("config_fingerprint", ""),
            wall_time_seconds=data.get("wall_time_seconds", 0.0),
            phase_seconds=data.get("phase_seconds", {}),
        )

    def table(self) -> str:
        rows = [("clean", self.acc_clean)]
        rows += sorted(self.per_attack.items())
        rows += [("union", self.acc_union), ("avg", self.acc_avg),
                 ("avg (norm groups)", self.acc_avg_norm_groups)]
        width = max(len(name) for name, _ in rows)
        lines = [f"{name:<{width}}  {acc * 100:6.2f}%" for name, acc in rows]
        return "\n".join(lines)


def run_attack(model, x, y, spec, generator):
    if isinstance(spec, AttackSpec):
        return pgd_attack(model, x, y, spec, generator=generator)
    if isinstance(spec, SaltPepperSpec):
        return salt_pepper_attack(model, x, y, spec, generator=generator)
    raise TypeError(f"unsupported attack spec {type(spec).__name__}")


@torch.no_grad()
def _correct(model, x, y):
    return model(x).argmax(dim=1) == y


def evaluate(
    model,
    x: torch.Tensor,
    y: torch.Tensor,
    attack_suite,
    *,
    batch_size: int = 256,
    seed: int = 0,
    config_fingerprint: str = "",
):
    """Run every attack on every example.

    Returns (report, correctness) where correctness is a bool tensor of shape
    (1 + n_attacks, n_examples): clean row first, then one row per attack in
    suite order.
    """
    attack_suite = list(attack_suite)
    if not attack_suite:
        raise ValueError("attack suite must be nonempty")
    start = time.perf_counter()
    generator = torch.Generator().manual_seed(seed)
    n = x.shape[0]
    rows = []
    clean_rows = []
    for lo in range(0, n, batch_size):
        clean_rows.append(_correct(model, x[lo : lo + batch_size], y[lo : lo + batch_size]))
    rows.append(torch.cat(clean_rows))
    for spec in attack_suite:
        correct = []
        for lo in range(0, n, batch_size):
            xb, yb = x[lo : lo + batch_size], y[lo : lo + batch_size]
            adv = run_attack(model, xb, yb, spec, generator)
            correct.append(_correct(model, adv, yb))
        rows.append(torch.cat(correct))
    correctness = torch.stack(rows)

    per_attack = {
        spec.name: correctness[i + 1].double().mean().item()
        for i, spec in enumerate(attack_suite)
    }
    union = correctness[1:].all(dim=0).double().mean().item()
    avg = sum(per_attack.values()) / len(per_attack)
    groups = {}
    for i, spec in enumerate(attack_suite):
        acc = correctness[i + 1].double().mean().item()
        groups[spec.group] = min(groups.get(spec.group, 1.0), acc)
    avg_groups = sum(groups.values()) / len(groups)

    report = MetricsReport(
        acc_clean=correctness[0].double().mean().item(),
        per_attack=per_attack,
        acc_union=union,
        acc_avg=avg,
        acc_avg_norm_groups=avg_groups,
        n_examples=n,
        config_fingerprint=config_fingerprint,
        wall_time_seconds=time.perf_counter() - start,
    )
    return report, correctness


def write_correctness_csv(path, correctness: torch.Tensor, attack_suite) -> None:
    names = ["clean"] + [spec.name for spec in attack_suite]
    with open(path, "w") as fh:
        fh.write("example," + ",".join(names) + "\n")
        matrix = correctness.to(torch.int64)
        for j in range(matrix.shape[1]):
            fh.write(f"{j}," + ",".join(str(int(v)) for v in matrix[:, j]) + "\n")


def beta_sweep(config, betas):
    """Train one meta-noise run per beta with shared seeds; returns reports."""
    from dataclasses import replace

    from multirobust.experiment import train_experiment

    if not list(betas):
        raise ValueError("betas must be nonempty")
    reports = []
    for beta in betas:
        cfg = replace(config, trainer=replace(config.trainer, beta=float(beta)))
        _, report = train_experiment(cfg, write_artifacts=False)
        reports.append(report)
    return reports


def landscape_directions(model, example, label, seed: int = 0):
    """dir1: normalized loss gradient at the example; dir2: the gradient at a
    random input, orthogonalized against dir1 and normalized."""
    def grad_at(inp):
        inp = inp.detach().requires_grad_(True)
        loss = cls_loss(model(inp), label.reshape(1))
        (g,) = torch.autograd.grad(loss, inp)
        return g.reshape(-1).double()

    g1 = grad_at(example.unsqueeze(0) if example.dim() == 3 else example)
    d1 = g1 / g1.norm().clamp_min(1e-12)
    rand = torch.rand(example.shape, generator=torch.Generator().manual_seed(seed))
    g2 = grad_at(rand.unsqueeze(0) if rand.dim() == 3 else rand)
    g2 = g2 - (g2 @ d1) * d1
    d2 = g2 / g2.norm().clamp_min(1e-12)
    shape = example.shape if example.dim() == 3 else example.shape[1:]
    return d1.reshape(shape), d2.reshape(shape)


def loss_landscape_grid(
    model,
    example: torch.Tensor,
    label: torch.Tensor,
    dir1: torch.Tensor,
    dir2: torch.Tensor,
    extent: float,
    resolution: int,
) -> torch.Tensor:
    """(resolution x resolution) grid of loss(x + a*dir1 + b*dir2).

    Offsets span [-extent, extent]; with odd resolution the central cell is
    exactly the unperturbed loss. Non-finite losses are recorded as NaN
    sentinels rather than dropped.
    """
    if resolution < 3:
        raise ValueError("resolution must be >= 3")
    if example.dim() == 3:
        example = example.unsqueeze(0)
    label = label.reshape(1)
    if extent == 0.0:
        offsets = torch.zeros(resolution, dtype=torch.float64)
    else:
        # built so the middle cell of an odd grid is exactly zero
        offsets = (torch.arange(resolution, dtype=torch.float64) - (resolution - 1) / 2) * (
            2.0 * extent / (resolution - 1)
        )
    grid = torch.full((resolution, resolution), float("nan"), dtype=torch.float64)
    d1 = dir1.to(example.dtype).unsqueeze(0)
    d2 = dir2.to(example.dtype).unsqueeze(0)
    with torch.no_grad():
        for i, a in enumerate(offsets):
            for j, b in enumerate(offsets):
                point = example + float(a) * d1 + float(b) * d2
                loss = cls_loss(model(point), label)
                if torch.isfinite(loss):
                    grid[i, j] = loss.double()
    return grid


def write_grid_csv(path, grid: torch.Tensor) -> None:
    with open(path, "w") as fh:
        for row in grid:
            fh.write(",".join(f"{v.item():.17g}" for v in row) + "\n")
