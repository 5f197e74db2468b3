"""Experiment orchestration: config -> dataset -> training loop -> artifacts.

The loop is resumable at step granularity: data order is a pure function of
(seed, epoch), every other random draw comes from generators captured in the
checkpoint, so an interrupted run continues bit-identically.
"""

from __future__ import annotations

import time
from pathlib import Path

import torch

from multirobust.attacks import PerturbationSet, make_attack
from multirobust.checkpoint import load_checkpoint, save_checkpoint
from multirobust.config import ExperimentConfig, fingerprint, save_config
from multirobust.data import Dataset, batch_indices, load_raw, make_blobs, make_moons
from multirobust.evaluation import evaluate, write_correctness_csv
from multirobust.models import NoiseGenerator, make_classifier
from multirobust.training import LrSchedule, TrainState, lr_at, train_step

CHECKPOINT_NAME = "checkpoint.mngc"


def build_dataset(config: ExperimentConfig) -> Dataset:
    d = config.dataset
    if d.name == "blobs":
        return make_blobs(
            d.n_train, d.n_test, d.channels, d.height, d.width, d.classes,
            seed=config.seeds.data, noise_std=d.noise_std, contrast=d.contrast,
            fragile_amplitude=d.fragile_amplitude, spot_amplitude=d.spot_amplitude,
            spot_count=d.spot_count,
        )
    if d.name == "moons":
        return make_moons(
            d.n_train, d.n_test, d.channels, d.height, d.width,
            seed=config.seeds.data, noise_std=d.noise_std,
        )
    dataset = load_raw(d.path)
    if dataset.in_shape != (d.channels, d.height, d.width):
        raise ValueError(
            f"raw dataset shape {dataset.in_shape} does not match configured "
            f"({d.channels}, {d.height}, {d.width})"
        )
    return dataset


def build_attacks(config: ExperimentConfig, input_dim: int, for_eval: bool = False):
    configs = config.attacks if not for_eval or config.eval_attacks is None else config.eval_attacks
    specs = []
    for a in configs:
        specs.append(
            make_attack(
                a.name,
                input_dim,
                epsilon=a.epsilon,
                steps=a.steps,
                step_size=a.step_size,
                random_init=a.random_init,
                sparsity_fraction=a.sparsity_fraction,
                max_fraction=a.max_fraction,
                trials=a.trials,
                for_eval=for_eval,
            )
        )
    return specs


def build_state(config: ExperimentConfig, dataset: Dataset) -> TrainState:
    in_shape = dataset.in_shape
    model = make_classifier(config.model.arch, in_shape, dataset.classes, seed=config.seeds.init)
    gen = None
    if config.method == "mng_ac" and config.trainer.generator_enabled:
        gen = NoiseGenerator(
            channels=in_shape[0],
            hidden=config.model.generator_hidden,
            seed=config.seeds.init + 1,
        )
    pset = PerturbationSet(build_attacks(config, dataset.input_dim), seed=config.seeds.attack)
    state = TrainState(
        model=model,
        gen=gen,
        pset=pset,
        momentum=config.optimizer.momentum,
        weight_decay=config.optimizer.weight_decay,
        phi_momentum=config.optimizer.phi_momentum,
        phi_weight_decay=config.optimizer.phi_weight_decay,
        alpha_meta=config.trainer.alpha_meta,
        generator_enabled=config.trainer.generator_enabled,
    )
    state.rng_noise.manual_seed(config.seeds.noise)
    return state


def run_training(
    state: TrainState,
    config: ExperimentConfig,
    dataset: Dataset,
    *,
    stop_after_steps: int | None = None,
) -> TrainState:
    """Advance training from the state's current step to the end (or a cap)."""
    n = dataset.train_x.shape[0]
    batch = config.trainer.batch_size
    steps_per_epoch = (n + batch - 1) // batch
    schedule = LrSchedule(config.optimizer.max_lr, config.trainer.epochs)
    total = config.trainer.epochs * steps_per_epoch
    stop = total if stop_after_steps is None else min(total, stop_after_steps)
    epoch_batches = None
    current_epoch = -1
    while state.global_step < stop:
        step = state.global_step
        epoch = step // steps_per_epoch
        if epoch != current_epoch:
            epoch_batches = batch_indices(n, batch, config.seeds.data, epoch)
            current_epoch = epoch
        state.epoch = epoch
        idx = epoch_batches[step % steps_per_epoch]
        x, y = dataset.train_x[idx], dataset.train_y[idx]
        lr = lr_at(schedule, (step + 0.5) / steps_per_epoch)
        train_step(state, config.method, x, y, state.pset, config.trainer.beta, lr)
    state.epoch = state.global_step // steps_per_epoch
    return state


def evaluate_state(state: TrainState, config: ExperimentConfig, dataset: Dataset):
    suite = build_attacks(config, dataset.input_dim, for_eval=True)
    report, correctness = evaluate(
        state.model,
        dataset.test_x,
        dataset.test_y,
        suite,
        seed=config.seeds.attack + 7919,
        config_fingerprint=fingerprint(config),
    )
    report.phase_seconds = dict(state.phase_seconds)
    return report, correctness, suite


def train_experiment(
    config: ExperimentConfig,
    *,
    write_artifacts: bool = True,
    stop_after_steps: int | None = None,
    resume_from: str | None = None,
):
    """Full pipeline: build, (optionally resume), train, evaluate, persist."""
    started = time.perf_counter()
    dataset = build_dataset(config)
    state = build_state(config, dataset)
    if resume_from is not None:
        meta = load_checkpoint(resume_from, state)
        expected = fingerprint(config)
        if meta["config_fingerprint"] and meta["config_fingerprint"] != expected:
            raise ValueError(
                "checkpoint was produced by a different config "
                f"({meta['config_fingerprint'][:12]} != {expected[:12]})"
            )
    run_training(state, config, dataset, stop_after_steps=stop_after_steps)
    report, correctness, suite = evaluate_state(state, config, dataset)
    report.wall_time_seconds = time.perf_counter() - started

    if write_artifacts:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / CHECKPOINT_NAME, state, fingerprint(config))
        save_config(out / "config.json", config)
        (out / "metrics.json").write_text(report.to_json() + "\n")
        (out / "metrics.txt").write_text(report.table() + "\n")
        (out / "run_info.json").write_text(report.to_json(include_timing=True) + "\n")
        write_correctness_csv(out / "correctness.csv", correctness, suite)
    return state, report
