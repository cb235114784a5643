"""Training and pipeline configuration with reference hyperparameter defaults."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

CONFIG_KEYS = (
    "dim", "gcn_layers", "activation", "neg_samples", "context_radius",
    "bias_b", "batch_size", "lr", "beta1", "beta2", "epochs", "min_freq",
)

ACTIVATIONS = ("relu", "identity", "tanh")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    """Embedding-learning hyperparameters.

    Defaults follow the reference configuration (dim 300, 2 GCN layers,
    5 negatives, bias 2, batch 512, AMSGrad with lr 1e-3).  `desk_scale`
    shrinks dim and batch so the full pipeline runs in minutes.
    """

    dim: int = 300
    gcn_layers: int = 2
    activation: str = "relu"
    neg_samples: int = 5
    context_radius: int = 5
    bias_b: float = 2.0
    batch_size: int = 512
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epochs: int = 100
    min_freq: int = 5
    gcn_enabled: bool = True
    use_kg_loss: bool = True
    use_text_loss: bool = True
    unigram_power_sampling: bool = False

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("beta1/beta2 must lie in [0, 1)")
        if self.bias_b <= 0:
            raise ConfigError("bias_b must be > 0")
        if self.context_radius < 1:
            raise ConfigError("context_radius must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if not (self.use_kg_loss or self.use_text_loss):
            raise ConfigError("cannot disable both KG and text losses")

    @classmethod
    def desk_scale(cls, **overrides) -> "OptimizerConfig":
        """Small-dimension profile for minute-scale end-to-end runs.

        Besides shrinking dim and batch, it uses a single GCN layer with
        more negatives and a higher learning rate: independently trained
        deep spaces lose orthogonal alignability at this scale, and the
        shallower encoder keeps the two spaces Procrustes-compatible.
        """
        defaults = dict(dim=32, batch_size=64, epochs=300,
                        gcn_layers=1, neg_samples=10, lr=0.003)
        defaults.update(overrides)
        return cls(**defaults)


_TYPES = {
    "dim": int, "gcn_layers": int, "neg_samples": int, "context_radius": int,
    "batch_size": int, "epochs": int, "min_freq": int,
    "bias_b": float, "lr": float, "beta1": float, "beta2": float,
    "activation": str,
}


def parse_config_file(path) -> dict:
    """Parse `key = value` lines; unknown keys are rejected."""
    values: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {lineno}: expected key = value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in CONFIG_KEYS:
                raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
            try:
                values[key] = _TYPES[key](value)
            except ValueError as exc:
                raise ConfigError(
                    f"{path}: line {lineno}: bad value for {key}: {value!r}"
                ) from exc
    return values


def load_optimizer_config(path, base: OptimizerConfig | None = None) -> OptimizerConfig:
    base = base or OptimizerConfig()
    return replace(base, **parse_config_file(path))


@dataclass(frozen=True)
class NeighborQuery:
    """Nearest-neighbor retrieval settings for alignment and inference."""

    metric: str = "csls"
    csls_k: int = 10
    k: int = 1

    def __post_init__(self):
        if self.metric not in ("csls", "l2"):
            raise ConfigError(f"unknown metric {self.metric!r}")
        if self.csls_k < 1 or self.k < 1:
            raise ConfigError("csls_k and k must be >= 1")


@dataclass(frozen=True)
class PipelineConfig:
    """Full-pipeline settings: training config plus ablation switches."""

    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig.desk_scale)
    metric: str = "csls"
    csls_k: int = 10
    stop_fraction: float = 0.01
    max_iterations: int = 50
    lexeme_top_f: int = 10000
    seed_fraction: float = 0.3
    no_self_learning: bool = False
    use_seed_lexicon: bool = False
    eval_p: int = 10
    candidate_mode: str = "test"

    def __post_init__(self):
        if not (0 < self.stop_fraction <= 1):
            raise ConfigError("stop_fraction must lie in (0, 1]")
        if not (0 < self.seed_fraction < 1):
            raise ConfigError("seed_fraction must lie in (0, 1)")
        if self.candidate_mode not in ("test", "all"):
            raise ConfigError(f"unknown candidate mode {self.candidate_mode!r}")

    def neighbor_query(self) -> NeighborQuery:
        return NeighborQuery(metric=self.metric, csls_k=self.csls_k)
