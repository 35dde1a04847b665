"""Dataset construction, label-free sum-rate loss, and the training loop.

Training is unsupervised: the loss is the negative mean sum rate of the
model's own allocations, so the reference solver never appears in a
gradient path. Batches are packed as one disjoint-union graph per step
(instances do not interfere across the union, and the mean of per-instance
sums equals the sum over all union nodes divided by the batch size), which
keeps the tape short.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .channel import ChannelConfig, InterferenceGraph, build_graph, generate_instance
from .errors import CheckpointError, ConfigError, TrainingDivergedError
from .models import Model
from .nn import init_adam, adam_step, load_checkpoint, save_checkpoint
from .wmmse import WmmseSettings, run_wmmse, sum_rate

LOG2_SCALE = 1.0 / math.log(2.0)


@dataclass(frozen=True, eq=False)
class Split:
    """Instances of one role plus their prebuilt graphs."""

    instances: tuple
    graphs: tuple
    seeds: tuple

    def __len__(self):
        return len(self.instances)


@dataclass(frozen=True, eq=False)
class Dataset:
    channel_config: ChannelConfig
    base_seed: int
    train: Split
    val: Split
    test: Split

    @property
    def n(self) -> int:
        return self.channel_config.n


def make_dataset(channel_config: ChannelConfig, counts, base_seed: int) -> Dataset:
    """Generate disjoint train/val/test splits.

    Seeds are consecutive from base_seed: the first counts[0] go to train,
    the next counts[1] to val, the last counts[2] to test.
    """
    counts = tuple(int(c) for c in counts)
    if len(counts) != 3 or any(c < 1 for c in counts):
        raise ConfigError(f"counts must be three positive sizes, got {counts}")
    splits = []
    offset = 0
    for count in counts:
        seeds = tuple(range(base_seed + offset, base_seed + offset + count))
        instances = tuple(
            generate_instance(replace(channel_config, seed=s)) for s in seeds
        )
        graphs = tuple(build_graph(inst) for inst in instances)
        splits.append(Split(instances=instances, graphs=graphs, seeds=seeds))
        offset += count
    return Dataset(
        channel_config=channel_config,
        base_seed=base_seed,
        train=splits[0],
        val=splits[1],
        test=splits[2],
    )


def fresh_split(channel_config: ChannelConfig, count: int, base_seed: int) -> Split:
    """Instances from consecutive seeds starting at base_seed.

    Pick a base seed far from any training range; overlapping ranges
    produce overlapping instances.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    seeds = tuple(range(base_seed, base_seed + count))
    instances = tuple(
        generate_instance(replace(channel_config, seed=s)) for s in seeds
    )
    graphs = tuple(build_graph(inst) for inst in instances)
    return Split(instances=instances, graphs=graphs, seeds=seeds)


def union_graphs(graphs) -> InterferenceGraph:
    """Disjoint union: nodes renumbered blockwise, edges kept within blocks."""
    graphs = list(graphs)
    if not graphs:
        raise ValueError("union of zero graphs")
    node_parts, edge_parts, src_parts, dst_parts = [], [], [], []
    offset = 0
    for g in graphs:
        node_parts.append(g.node_features)
        edge_parts.append(g.edge_features)
        src_parts.append(g.edge_src + offset)
        dst_parts.append(g.edge_dst + offset)
        offset += g.n_nodes
    return InterferenceGraph(
        node_features=np.concatenate(node_parts, axis=0),
        edge_features=np.concatenate(edge_parts, axis=0),
        edge_src=np.concatenate(src_parts),
        edge_dst=np.concatenate(dst_parts),
    )


def node_rates(amplitudes: ad.Tensor, graph: InterferenceGraph) -> ad.Tensor:
    """Per-node Shannon rates, on tape, from raw graph gain features."""
    direct_power_gain = ad.Tensor(graph.node_features[:, 0:1] ** 2)
    noise = ad.Tensor(graph.node_features[:, 1:2])
    edge_power_gain = ad.Tensor(graph.edge_features**2)
    p = ad.mul(amplitudes, amplitudes)
    signal = ad.mul(direct_power_gain, p)
    received = ad.mul(edge_power_gain, ad.gather_rows(p, graph.edge_src))
    interference = ad.scatter_add_rows(received, graph.edge_dst, graph.n_nodes)
    sinr = ad.div(signal, ad.add(interference, noise))
    return ad.mul(ad.log(ad.add(sinr, ad.Tensor(1.0))), ad.Tensor(LOG2_SCALE))


def batch_loss(model, params: dict, graphs, p_max: float) -> ad.Tensor:
    """Negative mean sum rate over the batch, as a scalar on tape."""
    graphs = list(graphs)
    if not graphs:
        raise ValueError("empty batch")
    union = union_graphs(graphs)
    amplitudes = model.amplitudes(params, union, p_max)
    rates = node_rates(amplitudes, union)
    return ad.mul(ad.sum_reduce(rates), ad.Tensor(-1.0 / len(graphs)))


@dataclass(frozen=True)
class TrainConfig:
    """Knobs of one training run; dataset sizes describe the expected splits."""

    model_kind: str = "wugnn"
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    lr_decay: float = 0.5
    lr_decay_every: int = 80
    eval_every: int = 10
    seed: int = 0
    n_train: int = 2000
    n_val: int = 200
    n_test: int = 500

    def __post_init__(self):
        if self.model_kind not in ("wugnn", "gnn_baseline"):
            raise ConfigError(f"unknown model kind {self.model_kind!r}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        for name in ("batch_size", "lr_decay_every", "eval_every", "n_train", "n_val", "n_test"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.lr > 0 or not 0 < self.lr_decay <= 1:
            raise ConfigError("need lr > 0 and 0 < lr_decay <= 1")

    def to_dict(self) -> dict:
        return {
            "model_kind": self.model_kind,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "lr_decay": self.lr_decay,
            "lr_decay_every": self.lr_decay_every,
            "eval_every": self.eval_every,
            "seed": self.seed,
            "n_train": self.n_train,
            "n_val": self.n_val,
            "n_test": self.n_test,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def _copy_params(params: dict) -> dict:
    return {name: ad.Tensor(p.data.copy(), requires_grad=True) for name, p in params.items()}


def mean_sum_rate(model, params: dict, split: Split) -> float:
    """Exact mean sum rate of the model's allocations over a split."""
    total = 0.0
    for inst, graph in zip(split.instances, split.graphs):
        v = model.forward_graph(params, graph, inst)
        total += sum_rate(inst, v)
    return total / len(split.instances)


@dataclass(eq=False)
class TrainResult:
    """Best-validation parameters plus the run's training curve."""

    model: Model
    config: TrainConfig
    channel_config: ChannelConfig
    params: dict
    best_val_rate: float
    initial_val_rate: float
    curve: list  # rows (epoch, train_loss, val_mean_rate or None)

    def save(self, path) -> None:
        meta = {
            "model": self.model.to_meta(),
            "train_config": self.config.to_dict(),
            "channel_config": self.channel_config.to_dict(),
            "best_val_rate": self.best_val_rate,
            "initial_val_rate": self.initial_val_rate,
        }
        save_checkpoint(path, self.params, meta)


def load_trained(path):
    """Load a checkpoint written by TrainResult.save.

    Returns (model, params, meta); the metadata carries the training and
    channel configuration the parameters were fit under.
    """
    params, meta = load_checkpoint(path)
    if "model" not in meta:
        raise CheckpointError("checkpoint at %s lacks model metadata" % (path,))
    model = Model.from_meta(meta["model"])
    return model, params, meta


def write_curve_csv(curve, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_mean_rate"])
        for epoch, train_loss, val_rate in curve:
            writer.writerow([epoch, repr(float(train_loss)), "" if val_rate is None else repr(float(val_rate))])


def train(config: TrainConfig, dataset: Dataset, model: Model = None) -> TrainResult:
    """Shuffled mini-batch Adam on the unsupervised loss.

    Validation runs every eval_every epochs (and on the last epoch); the
    returned parameters are the best-validation snapshot, which includes
    the untrained starting point, so the result never validates below it.
    """
    if model is None:
        model = Model.default(config.model_kind)
    if model.kind != config.model_kind:
        raise ConfigError(f"model kind {model.kind!r} does not match config {config.model_kind!r}")
    if len(dataset.train) != config.n_train or len(dataset.val) != config.n_val:
        raise ConfigError(
            "dataset sizes do not match config: "
            f"train {len(dataset.train)} vs {config.n_train}, val {len(dataset.val)} vs {config.n_val}"
        )
    p_max = dataset.channel_config.p_max

    init_seed, shuffle_seed = np.random.SeedSequence(config.seed).generate_state(2)
    params = model.init(seed=int(init_seed))
    shuffle_rng = np.random.default_rng(int(shuffle_seed))
    adam = init_adam(params, lr=config.lr)

    best_val = mean_sum_rate(model, params, dataset.val)
    initial_val = best_val
    best_params = _copy_params(params)
    curve = []

    for epoch in range(1, config.epochs + 1):
        adam.lr = config.lr * config.lr_decay ** ((epoch - 1) // config.lr_decay_every)
        order = shuffle_rng.permutation(len(dataset.train))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            graphs = [dataset.train.graphs[i] for i in batch]
            with ad.Tape() as tape:
                loss = batch_loss(model, params, graphs, p_max)
            loss_value = float(loss.data)
            if not np.isfinite(loss_value):
                raise TrainingDivergedError(
                    f"non-finite loss {loss_value} at epoch {epoch}, batch {n_batches}"
                )
            ad.backward(tape, loss)
            adam_step(params, adam)
            epoch_loss += loss_value
            n_batches += 1

        val_rate = None
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            val_rate = mean_sum_rate(model, params, dataset.val)
            if val_rate > best_val:
                best_val = val_rate
                best_params = _copy_params(params)
        curve.append((epoch, epoch_loss / n_batches, val_rate))

    return TrainResult(
        model=model,
        config=config,
        channel_config=dataset.channel_config,
        params=best_params,
        best_val_rate=best_val,
        initial_val_rate=initial_val,
        curve=curve,
    )


@dataclass(eq=False)
class EvalReport:
    """Side-by-side model and solver rates over one split."""

    n: int
    count: int
    model_rates: tuple
    wmmse_rates: tuple
    model_mean: float
    wmmse_mean: float
    ratio: float
    model_seconds: float
    wmmse_seconds: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "count": self.count,
            "model_rates": list(self.model_rates),
            "wmmse_rates": list(self.wmmse_rates),
            "model_mean": self.model_mean,
            "wmmse_mean": self.wmmse_mean,
            "ratio": self.ratio,
            "model_seconds": self.model_seconds,
            "wmmse_seconds": self.wmmse_seconds,
        }


def evaluate(model: Model, params: dict, split: Split, wmmse_settings: WmmseSettings = None) -> EvalReport:
    """Rates of the model and of the reference solver on identical instances."""
    if len(split) == 0:
        raise ValueError("cannot evaluate an empty split")
    if wmmse_settings is None:
        wmmse_settings = WmmseSettings()
    model_rates, wmmse_rates = [], []
    model_seconds = 0.0
    wmmse_seconds = 0.0
    for inst, graph in zip(split.instances, split.graphs):
        t0 = time.perf_counter()
        v = model.forward_graph(params, graph, inst)
        model_seconds += time.perf_counter() - t0
        model_rates.append(sum_rate(inst, v))
        t0 = time.perf_counter()
        trace = run_wmmse(inst, max_iter=wmmse_settings.max_iter, tol=wmmse_settings.tol)
        wmmse_seconds += time.perf_counter() - t0
        wmmse_rates.append(trace.final_sum_rate)
    model_mean = float(np.mean(model_rates))
    wmmse_mean = float(np.mean(wmmse_rates))
    return EvalReport(
        n=split.instances[0].n,
        count=len(split),
        model_rates=tuple(model_rates),
        wmmse_rates=tuple(wmmse_rates),
        model_mean=model_mean,
        wmmse_mean=wmmse_mean,
        ratio=model_mean / wmmse_mean,
        model_seconds=model_seconds,
        wmmse_seconds=wmmse_seconds,
    )
