"""Pipeline configuration and the trajectory JSON schema.

Config files are TOML. Every key has a default and unknown keys are
rejected::

    seed = 0
    backend = "toy-dirac"        # or "toy-attention"

    [filter]
    family = "butterworth"
    cutoff_spatial = 0.25

    [attention]
    scale = 0.0
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import SchemaError
from .trajectory import BoxSizePolicy, BoxTrack, ScenePlan

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ScheduleConfig(_Strict):
    steps: int = Field(50, ge=1, le=1000)
    beta_start: float = Field(1e-4, gt=0, lt=1)
    beta_end: float = Field(0.02, gt=0, lt=1)


class FilterConfig(_Strict):
    family: Literal["butterworth", "gaussian", "ideal"] = "butterworth"
    cutoff_spatial: float = Field(0.25, gt=0, le=1)
    cutoff_temporal: float = Field(0.25, gt=0, le=1)
    order: int = Field(4, ge=1)


class ReinitConfig(_Strict):
    iterations: int = Field(3, ge=0)
    reinject: bool = False


class NoiseConfig(_Strict):
    flow: Literal["local", "global"] = "local"
    reinit: bool = False


class AttentionConfig(_Strict):
    enabled: bool = True
    scale: float = Field(0.0, ge=-2, le=2)
    self_scale: float = Field(1.0, ge=-2, le=2)
    step_range: Optional[tuple[int, int]] = None
    renormalize: bool = False
    bindings_file: Optional[str] = None


class LlmConfig(_Strict):
    base_url: str = "http://localhost:8000/v1"
    model: str = "llama-3.1-405b-instruct"
    api_key_env: str = "MOVI_LLM_API_KEY"
    temperature: float = Field(0.0, ge=0)
    max_retries: int = Field(3, ge=0)
    timeout: float = Field(60.0, gt=0)
    fewshot: Literal["default", "none"] = "default"


class BoxConfig(_Strict):
    width_frac: float = Field(0.25, gt=0, le=1)
    height_frac: float = Field(0.25, gt=0, le=1)
    overrides: dict[str, tuple[float, float]] = Field(default_factory=dict)

    def policy(self) -> BoxSizePolicy:
        return BoxSizePolicy(self.width_frac, self.height_frac, dict(self.overrides))


class PipelineConfig(_Strict):
    seed: int = 0
    canvas: tuple[int, int] = (512, 320)
    frames: int = Field(16, ge=2)
    latent_scale: int = Field(8, ge=1)
    channels: int = Field(4, ge=1)
    backend: Literal["toy-dirac", "toy-attention"] = "toy-dirac"
    candidates: int = Field(1, ge=1)
    schedule: ScheduleConfig = ScheduleConfig()
    filter: FilterConfig = FilterConfig()
    reinit: ReinitConfig = ReinitConfig()
    noise: NoiseConfig = NoiseConfig()
    attention: AttentionConfig = AttentionConfig()
    llm: LlmConfig = LlmConfig()
    box: BoxConfig = BoxConfig()

    def with_overrides(self, **changes) -> "PipelineConfig":
        return self.model_copy(update={k: v for k, v in changes.items() if v is not None})


def _schema_error(exc: ValidationError, source: str) -> SchemaError:
    first = exc.errors()[0]
    where = ".".join(str(p) for p in first["loc"]) or "<root>"
    return SchemaError(f"{source}: field '{where}': {first['msg']}")


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise SchemaError(f"{path}: invalid TOML: {exc}") from exc
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as exc:
        raise _schema_error(exc, str(path)) from exc


# -- trajectory file ---------------------------------------------------------


class ObjectEntry(_Strict):
    label: str = Field(min_length=1)
    boxes: list[tuple[float, float, float, float]]


class TrajectoryFile(_Strict):
    prompt: str
    canvas: tuple[int, int]
    frames: int = Field(ge=1)
    objects: list[ObjectEntry]

    @field_validator("canvas")
    @classmethod
    def _positive_canvas(cls, v):
        if v[0] < 1 or v[1] < 1:
            raise ValueError("canvas sides must be positive")
        return v

    @model_validator(mode="after")
    def _box_counts(self):
        for i, obj in enumerate(self.objects):
            if len(obj.boxes) != self.frames:
                raise ValueError(f"objects[{i}].boxes has {len(obj.boxes)} entries, expected {self.frames}")
        labels = [o.label for o in self.objects]
        if len(set(labels)) != len(labels):
            raise ValueError("object labels must be unique")
        return self


def plan_from_json(data: dict, source: str = "trajectory") -> ScenePlan:
    try:
        doc = TrajectoryFile.model_validate(data)
    except ValidationError as exc:
        raise _schema_error(exc, source) from exc
    canvas = tuple(doc.canvas)
    try:
        tracks = [BoxTrack(o.label, i, o.boxes, canvas) for i, o in enumerate(doc.objects)]
        return ScenePlan(doc.prompt, tracks, doc.frames, canvas)
    except SchemaError:
        raise
    except ValueError as exc:
        raise SchemaError(f"{source}: {exc}") from exc


def load_plan(path) -> ScenePlan:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
    return plan_from_json(data, str(path))


def save_plan(plan: ScenePlan, path) -> None:
    Path(path).write_text(json.dumps(plan.to_json(), indent=2) + "\n", encoding="utf-8")


class BindingOverride(_Strict):
    label: str
    tokens: list[int]
    scale: float = Field(0.0, ge=-2, le=2)
    self_scale: float = Field(1.0, ge=-2, le=2)


class BindingOverrideFile(_Strict):
    objects: list[BindingOverride]


def load_binding_overrides(path) -> list[BindingOverride]:
    try:
        return BindingOverrideFile.model_validate_json(Path(path).read_text(encoding="utf-8")).objects
    except ValidationError as exc:
        raise _schema_error(exc, str(path)) from exc
