"""Random D2D network instances and their interference-graph view.

A network instance is one snapshot of N transceiver pairs sharing spectrum.
``h[i, j]`` is the amplitude gain from transmitter j to receiver i, so the
diagonal carries the direct links and the off-diagonal entries carry
interference. The graph view turns each pair into a node and each directed
interference link into an edge, which is what the message-passing models
consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError

FADING_MODELS = ("rayleigh",)
NORM_SCHEMES = ("log1p", "identity")


@dataclass(frozen=True)
class ChannelConfig:
    """Generation settings for one family of random instances.

    ``gain_threshold`` drops interference edges whose amplitude gain falls
    below the threshold when building graphs; 0.0 keeps the interference
    graph fully connected.
    """

    n: int
    seed: int = 0
    noise_power: float = 1.0
    p_max: float = 1.0
    fading_model: str = "rayleigh"
    gain_threshold: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if not self.noise_power > 0:
            raise ConfigError(f"noise_power must be > 0, got {self.noise_power}")
        if not self.p_max > 0:
            raise ConfigError(f"p_max must be > 0, got {self.p_max}")
        if self.fading_model not in FADING_MODELS:
            raise ConfigError(f"unknown fading_model {self.fading_model!r}")
        if self.gain_threshold < 0:
            raise ConfigError("gain_threshold must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelConfig":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    """One D2D scenario: amplitude gain matrix plus noise and power budget."""

    n: int
    h: np.ndarray
    noise_power: float
    p_max: float
    seed: int

    def __post_init__(self):
        if self.h.shape != (self.n, self.n):
            raise ConfigError(f"h must be {self.n}x{self.n}, got {self.h.shape}")
        if np.any(self.h < 0):
            raise ConfigError("channel gains are amplitudes and must be >= 0")


@dataclass(frozen=True, eq=False)
class InterferenceGraph:
    """Node/edge view of an instance.

    node_features columns: direct gain h[i, i], noise power, power budget.
    edge_features column: interference gain h[dst, src]. Edge k points from
    transmitter ``edge_src[k]`` into receiver ``edge_dst[k]``.
    """

    node_features: np.ndarray
    edge_features: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edge_src.shape[0]


def _lock(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def generate_instance(config: ChannelConfig) -> NetworkInstance:
    """Sample one instance; bit-identical for identical config."""
    rng = np.random.default_rng(config.seed)
    if config.fading_model == "rayleigh":
        # amplitude of a standard complex Gaussian: Rayleigh with E[h^2] = 1
        re = rng.standard_normal((config.n, config.n))
        im = rng.standard_normal((config.n, config.n))
        h = np.sqrt(re * re + im * im) / np.sqrt(2.0)
    else:  # pragma: no cover - rejected in ChannelConfig
        raise ConfigError(f"unknown fading_model {config.fading_model!r}")
    return NetworkInstance(
        n=config.n,
        h=_lock(h),
        noise_power=float(config.noise_power),
        p_max=float(config.p_max),
        seed=config.seed,
    )


def build_graph(instance: NetworkInstance, gain_threshold: float = 0.0) -> InterferenceGraph:
    """Interference graph of an instance: n nodes, one directed edge per
    off-diagonal gain at or above ``gain_threshold``."""
    n = instance.n
    node_features = np.column_stack(
        [
            np.diag(instance.h),
            np.full(n, instance.noise_power),
            np.full(n, instance.p_max),
        ]
    )
    keep = ~np.eye(n, dtype=bool)
    if gain_threshold > 0.0:
        keep &= instance.h >= gain_threshold
    dst, src = np.nonzero(keep)  # row-major: edges grouped by receiver
    edge_features = instance.h[dst, src].reshape(-1, 1)
    return InterferenceGraph(
        node_features=_lock(node_features),
        edge_features=_lock(edge_features),
        edge_src=_lock(src.astype(np.int64)),
        edge_dst=_lock(dst.astype(np.int64)),
    )


def normalize_features(graph: InterferenceGraph, scheme: str = "log1p") -> InterferenceGraph:
    """Feature transform for model inputs; solver inputs stay raw.

    log1p compresses the gain features (node column 0 and the edge gain)
    and leaves noise power, power budget, and adjacency untouched.
    """
    if scheme not in NORM_SCHEMES:
        raise ConfigError(f"unknown normalization scheme {scheme!r}")
    if scheme == "identity":
        return graph
    node = graph.node_features.copy()
    node[:, 0] = np.log1p(node[:, 0])
    edge = np.log1p(graph.edge_features)
    return InterferenceGraph(
        node_features=_lock(node),
        edge_features=_lock(edge),
        edge_src=graph.edge_src,
        edge_dst=graph.edge_dst,
    )
