"""Experiment configuration: one validated document drives every pipeline stage."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .baselines import VARIANTS


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataConfig(_Section):
    n_train: int = Field(4000, ge=10, description="toy regression sequences")
    length: int = Field(50, ge=1)
    n_classify: int = Field(2000, ge=10, description="labelled sequences for classifiers and baselines")
    n_classify_test: int = Field(1000, ge=10)


class TrainSection(_Section):
    learning_rate: float = Field(3e-3, gt=0)
    lr_decay: float = Field(0.97, gt=0, le=1)
    batch_size: int = Field(64, ge=1)
    max_epochs: int = Field(100, ge=1)
    patience: int = Field(100, ge=1)
    clip_norm: float = Field(10.0, gt=0)
    l2: float = Field(0.0, ge=0)
    dropout: float = Field(0.0, ge=0, lt=1)
    val_fraction: float = Field(0.1, gt=0, lt=1)
    target_mse: float | None = Field(None, gt=0, description="toy mode: stop once validation MSE is below this")
    state_noise: float = Field(0.0, ge=0)


class FixedPointSection(_Section):
    n_inits: int = Field(300, ge=1)
    max_iters: int = Field(5000, ge=1)
    lr: float = Field(1e-2, gt=0)
    tol: float = Field(1e-6, gt=0, description="strict speed tolerance")
    analysis_tol: float = Field(5e-3, gt=0, description="fallback tier used when fewer than 3 strict points exist")
    merge_radius: float = Field(1e-3, gt=0)
    polish_iters: int = Field(200, ge=0)
    n_init_sequences: int = Field(100, ge=1, description="sequences whose states seed the search")


class AnalysisSection(_Section):
    threshold: float = Field(0.1, gt=0)
    P_visual: int = Field(2, ge=0)
    P_perturb: int = Field(3, ge=0)
    n_pads: int = Field(30, ge=1)
    impulse_samples: int = Field(4, ge=1, description="states per modifier impulse response used as deflection samples")
    floor_frac: float = Field(1e-4, gt=0)
    fit_steps: int = Field(30, ge=1)
    direction: Literal["pc1", "readout"] = "pc1"
    eod_pads: int = Field(50, ge=0)
    n_transient_modes: int = Field(2, ge=0)


class BilinearSection(_Section):
    P: int = Field(3, ge=0)
    P_max: int = Field(6, ge=0)


class BaselineSection(_Section):
    variants: list[Literal[VARIANTS]] = Field(default_factory=lambda: list(VARIANTS))  # type: ignore[valid-type]
    n_trials: int = Field(20, ge=1)
    epochs: int = Field(8, ge=1)
    batch_size: int = Field(64, ge=1)
    P: int = Field(3, ge=1)
    learning_rate: list[float] = [3e-3, 1e-2, 3e-2, 1e-1]
    lr_decay: list[float] = [0.9, 0.95, 1.0]
    beta1: list[float] = [0.8, 0.9, 0.95]
    l2: list[float] = [0.0, 1e-5, 1e-4, 1e-3]
    dropout: list[float] = [0.0, 0.05, 0.1, 0.2]

    def grid(self) -> dict:
        return {k: list(getattr(self, k)) for k in ("learning_rate", "lr_decay", "beta1", "l2", "dropout")}


class ExperimentConfig(_Section):
    mode: Literal["toy", "corpus"] = "toy"
    cell: Literal["vanilla", "gru", "lstm", "ugrnn"] = "gru"
    hidden_size: int = Field(100, ge=1)
    seed: int = Field(0, ge=0)
    out_dir: str = "runs/toy"
    data: DataConfig = Field(default_factory=DataConfig)
    train: TrainSection = Field(default_factory=TrainSection)
    fixed_points: FixedPointSection = Field(default_factory=FixedPointSection)
    analysis: AnalysisSection = Field(default_factory=AnalysisSection)
    bilinear: BilinearSection = Field(default_factory=BilinearSection)
    baseline: BaselineSection = Field(default_factory=BaselineSection)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form (output directory excluded)."""
        d = self.model_dump(mode="json")
        d.pop("out_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


class ConfigError(ValueError):
    pass


def json_schema() -> dict:
    return ExperimentConfig.model_json_schema()


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        msgs = []
        for err in e.errors():
            loc = ".".join(str(x) for x in err["loc"])
            msgs.append(f"{loc}: {err['msg']}")
        raise ConfigError("invalid config: " + "; ".join(msgs)) from None


def load_config(path: str | Path | None, overrides: dict | None = None) -> ExperimentConfig:
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError("config root must be an object")
    data = {**data, **{k: v for k, v in (overrides or {}).items() if v is not None}}
    return parse_config(data)
