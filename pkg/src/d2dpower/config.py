"""TOML run configuration with [channel], [train], and [bench] sections.

Every key is optional except channel.n; missing keys fall back to the
dataclass defaults. Unknown sections or keys are rejected outright so a
typo cannot silently run a different experiment.
"""

from dataclasses import dataclass, fields

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .bench import DEFAULT_SIZES
from .channel import ChannelConfig
from .errors import ConfigError
from .training import TrainConfig
from .wmmse import WmmseSettings


@dataclass(frozen=True)
class BenchConfig:
    """Settings for the scalability and timing sweeps."""

    sizes: tuple = DEFAULT_SIZES
    trials_per_size: int = 50
    repetitions: int = 10
    warmup: int = 2
    wmmse_tol: float = 1e-6
    wmmse_max_iter: int = 100

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))
        if not self.sizes or any(n < 1 for n in self.sizes):
            raise ConfigError(f"sizes must be positive, got {self.sizes}")
        if self.trials_per_size < 1:
            raise ConfigError("trials_per_size must be >= 1")
        if self.repetitions < 5:
            raise ConfigError("repetitions must be >= 5")
        if self.warmup < 1:
            raise ConfigError("warmup must be >= 1")
        if not self.wmmse_tol > 0:
            raise ConfigError("wmmse_tol must be > 0")
        if self.wmmse_max_iter < 1:
            raise ConfigError("wmmse_max_iter must be >= 1")

    def wmmse_settings(self) -> WmmseSettings:
        return WmmseSettings(tol=self.wmmse_tol, max_iter=self.wmmse_max_iter)


@dataclass(frozen=True)
class RunConfig:
    channel: ChannelConfig
    train: TrainConfig
    bench: BenchConfig


def default_config(n: int = 10) -> RunConfig:
    return RunConfig(channel=ChannelConfig(n=n), train=TrainConfig(), bench=BenchConfig())


def _build_section(name: str, raw, cls):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"invalid [{name}] section: {exc}") from exc


def parse_config(text: str) -> RunConfig:
    """Parse TOML text into a RunConfig; reject anything unrecognized."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    known = {"channel", "train", "bench"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    if "channel" not in data or "n" not in data["channel"]:
        raise ConfigError("config must set channel.n")
    return RunConfig(
        channel=_build_section("channel", data["channel"], ChannelConfig),
        train=_build_section("train", data.get("train", {}), TrainConfig),
        bench=_build_section("bench", data.get("bench", {}), BenchConfig),
    )


def load_config(path) -> RunConfig:
    """Read and parse a TOML config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text)
