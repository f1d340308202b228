from pydantic import BaseModel, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings
from pathlib import Path
from typing import Any, Dict, Literal, Optional

from scn.errors import ConfigError


class Settings(BaseSettings):
    SCN_DATA_DIR: str = "./data"
    SCN_RUNS_DIR: str = "./runs"

    API_HOST: str = "0.0.0.0"
    API_PORT: int = 8000

    LOG_LEVEL: str = "INFO"

    class Config:
        env_file = ".env"
        case_sensitive = True

    @property
    def data_root(self) -> Path:
        return Path(self.SCN_DATA_DIR).expanduser()

    @property
    def runs_root(self) -> Path:
        return Path(self.SCN_RUNS_DIR).expanduser()


settings = Settings()


# 数据集相关的默认值：AT&T 用 4 次路由 / m=2.0，LFW 用 6 次路由 / m=0.2
DATASET_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "att": {"routing_iters": 4, "m": 2.0},
    "synthetic": {"routing_iters": 4, "m": 2.0},
    "lfw": {"routing_iters": 6, "m": 0.2},
}

METRIC_MARGIN_CAP = {"manhattan_exp": 1.0}


class RunConfig(BaseModel):
    model: Literal["scn", "sdropcapnet", "standard"] = "scn"
    dataset: Literal["att", "synthetic", "lfw"] = "att"
    loss: Literal["contrastive", "double_margin"] = "contrastive"
    metric: Literal["euclidean_sq", "manhattan_exp", "cosine"] = "euclidean_sq"

    m: Optional[float] = None
    m_n: float = 0.2
    m_p: float = 0.5

    routing_iters: Optional[int] = None
    epochs: int = 100
    batch_size: int = 32
    alpha: float = 0.001
    optimizer: Literal["amsgrad", "sgd"] = "amsgrad"
    theta1: float = 0.9
    theta2: float = 0.999
    eps: float = 1e-8
    flat_lr: bool = False
    seed: int = 0

    holdout: int = 5
    kfold_k: int = 5
    pairs_per_epoch: int = 2000
    pos_ratio: float = 0.5
    test_pairs: int = 500
    validation_fraction: float = 0.1
    fixed_pairs: bool = False

    dropout_rate: float = 0.2
    concrete_temperature: float = 0.1
    concrete_init_p: float = 0.9
    concrete_reg_weight: float = 0.0
    standard_concrete: bool = False
    detach_routing: bool = False
    normalize_at: Literal["embedding", "capsules"] = "embedding"
    bn_in_capsules: bool = False

    conv_channels: int = 256
    primary_types: int = 32
    primary_dim: int = 8
    face_caps: int = 32
    face_dim: int = 16
    embed_dim: int = 20
    image_size: int = 100

    synth_subjects: int = 40
    synth_per_subject: int = 10

    data_dir: Optional[str] = None
    output_dir: Optional[str] = None

    model_config = {"extra": "forbid", "validate_assignment": False}

    @model_validator(mode="before")
    @classmethod
    def _fill_dataset_defaults(cls, values: Any) -> Any:
        if not isinstance(values, dict):
            return values
        values = dict(values)
        dataset = values.get("dataset") or "att"
        defaults = DATASET_DEFAULTS.get(dataset, DATASET_DEFAULTS["att"])
        for key, default in defaults.items():
            if values.get(key) is None:
                values[key] = default
        if values.get("data_dir") is None:
            values["data_dir"] = settings.SCN_DATA_DIR
        if values.get("output_dir") is None:
            model = values.get("model") or "scn"
            seed = values.get("seed", 0)
            values["output_dir"] = str(settings.runs_root / f"{model}-{dataset}-seed{seed}")
        return values

    @field_validator("epochs", "batch_size", "routing_iters", "pairs_per_epoch", "kfold_k",
                     "conv_channels", "primary_types", "primary_dim", "face_caps", "face_dim",
                     "embed_dim", "synth_subjects", "synth_per_subject")
    @classmethod
    def _positive_int(cls, value: int, info) -> int:
        if value is not None and value < 1:
            raise ValueError(f"{info.field_name} must be >= 1")
        return value

    @field_validator("kfold_k")
    @classmethod
    def _kfold_at_least_two(cls, value: int) -> int:
        if value < 2:
            raise ValueError("k must be ≥ 2")
        return value

    @field_validator("holdout", "test_pairs")
    @classmethod
    def _non_negative(cls, value: int, info) -> int:
        if value < 0:
            raise ValueError(f"{info.field_name} must be >= 0")
        return value

    @field_validator("alpha", "eps", "concrete_temperature", "m", "m_n", "m_p")
    @classmethod
    def _strictly_positive(cls, value: float, info) -> float:
        if value is not None and value <= 0:
            raise ValueError(f"{info.field_name} must be > 0")
        return value

    @field_validator("theta1", "theta2")
    @classmethod
    def _unit_interval_open(cls, value: float, info) -> float:
        if not 0.0 <= value < 1.0:
            raise ValueError(f"{info.field_name} must lie in [0, 1)")
        return value

    @field_validator("pos_ratio")
    @classmethod
    def _ratio(cls, value: float) -> float:
        if not 0.0 <= value <= 1.0:
            raise ValueError("pos_ratio must lie in [0, 1]")
        return value

    @field_validator("dropout_rate", "validation_fraction")
    @classmethod
    def _rate(cls, value: float, info) -> float:
        if not 0.0 <= value < 1.0:
            raise ValueError(f"{info.field_name} must lie in [0, 1)")
        return value

    @field_validator("concrete_init_p")
    @classmethod
    def _probability(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError("concrete_init_p must lie strictly inside (0, 1)")
        return value

    @field_validator("image_size")
    @classmethod
    def _image_size(cls, value: int) -> int:
        # conv1 (9x9/3) 之后还要能放下一个 9x9/3 的主胶囊卷积
        if value < 33:
            raise ValueError("image_size must be >= 33")
        return value

    @model_validator(mode="after")
    def _check_margins(self) -> "RunConfig":
        if self.m_n >= self.m_p:
            raise ValueError(f"m_n ({self.m_n}) must be smaller than m_p ({self.m_p})")
        cap = METRIC_MARGIN_CAP.get(self.metric)
        if cap is not None:
            if self.loss == "contrastive" and self.m > cap:
                raise ValueError(f"margin m={self.m} outside (0, {cap}] for metric {self.metric}")
            if self.loss == "double_margin" and self.m_p > cap:
                raise ValueError(f"margin m_p={self.m_p} outside (0, {cap}] for metric {self.metric}")
        return self

    @property
    def margin(self) -> float:
        return float(self.m)

    @property
    def data_path(self) -> Path:
        return Path(self.data_dir).expanduser()

    @property
    def run_dir(self) -> Path:
        return Path(self.output_dir).expanduser()

    @classmethod
    def build(cls, **values: Any) -> "RunConfig":
        try:
            return cls(**values)
        except ValidationError as e:
            raise ConfigError(_format_validation_error(e)) from e

    @classmethod
    def from_file(cls, path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> "RunConfig":
        """默认值 < 配置文件 < 命令行参数"""
        values: Dict[str, Any] = {}
        if path:
            values.update(parse_flat_config(Path(path).read_text(encoding="utf-8")))
        if overrides:
            values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.build(**values)

    def echo(self) -> str:
        data = self.model_dump()
        lines = [f"{key} = {_format_value(data[key])}" for key in sorted(data)]
        return "\n".join(lines) + "\n"

    def with_updates(self, **updates: Any) -> "RunConfig":
        data = self.model_dump()
        data.update(updates)
        return RunConfig.build(**data)


def parse_flat_config(text: str) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        values[key] = value
    return values


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _format_validation_error(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        loc = ".".join(str(p) for p in item.get("loc", ())) or "config"
        parts.append(f"{loc}: {item.get('msg')}")
    return "; ".join(parts)
