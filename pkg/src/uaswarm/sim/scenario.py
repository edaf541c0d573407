"""Scenario files: a versioned JSON schema checked with pydantic."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..exceptions import ScenarioValidationError

SCHEMA_VERSION = 1

Vec2 = Tuple[float, float]
Vec3 = Tuple[float, float, float]
PosFloat = Annotated[float, Field(gt=0)]
NonNeg = Annotated[float, Field(ge=0)]
Prob = Annotated[float, Field(ge=0, le=1)]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DriftSpec(_Model):
    """``bias`` in (m, m, deg); ``rate`` in (m/s, m/s, deg/s)."""

    kind: Literal["none", "constant", "linear"] = "none"
    bias: Vec3 = (0.0, 0.0, 0.0)
    rate: Vec3 = (0.0, 0.0, 0.0)

    @model_validator(mode="after")
    def _consistent(self):
        if self.kind == "none" and (any(self.bias) or any(self.rate)):
            raise ValueError("kind 'none' takes no bias or rate")
        if self.kind == "constant" and any(self.rate):
            raise ValueError("kind 'constant' takes a bias only")
        if self.kind == "linear" and any(self.bias):
            raise ValueError("kind 'linear' takes a rate only")
        return self


class CircleMotion(_Model):
    kind: Literal["circle"] = "circle"
    center: Vec2 = (0.0, 0.0)
    radius: PosFloat = 5.0
    speed: PosFloat = 1.0
    phase_deg: float = 0.0
    altitude: PosFloat = 3.0


class ExchangeMotion(_Model):
    """Back-and-forth swap between two antipodal points along a thin ellipse."""

    kind: Literal["exchange"] = "exchange"
    half_length: PosFloat = 5.0
    half_width: NonNeg = 0.8
    period: PosFloat = 24.0
    reverse: bool = False
    altitude: PosFloat = 3.0


class PlannerMotion(_Model):
    kind: Literal["planner"] = "planner"
    start: Vec3
    goal: Vec3
    start_yaw_deg: float = 0.0
    goal_yaw_deg: float = 0.0


class AgentSpec(_Model):
    id: Annotated[int, Field(ge=0)]
    radius: PosFloat = 0.3
    motion: Annotated[Union[CircleMotion, ExchangeMotion, PlannerMotion],
                      Field(discriminator="kind")]
    drift: DriftSpec = DriftSpec()
    clock_offset: Annotated[float, Field(ge=0, lt=1)] = 0.0


class LandmarkLayout(_Model):
    """``pads``: jittered flat grid.  ``random``: scattered objects of some height."""

    kind: Literal["pads", "random"] = "pads"
    extent: PosFloat = 12.0
    spacing: PosFloat = 2.0
    jitter: NonNeg = 0.8
    count: Annotated[int, Field(ge=0)] = 120
    size: PosFloat = 0.5
    height_range: Tuple[NonNeg, NonNeg] = (0.0, 0.0)

    @model_validator(mode="after")
    def _heights(self):
        if self.height_range[1] < self.height_range[0]:
            raise ValueError("height_range must be (low, high) with low <= high")
        return self


class TrefoilSpec(_Model):
    center: Vec3 = (0.0, 0.0, 2.5)
    scale: PosFloat = 1.0
    period: PosFloat = 20.0
    phase: float = 0.0
    half_extent: PosFloat = 0.3
    position_sigma: NonNeg = 0.1
    velocity_sigma: NonNeg = 0.01
    acceleration_sigma: NonNeg = 0.003


class DetectorSpec(_Model):
    pixel_sigma: NonNeg = 1.0
    detection_probability: Prob = 0.9
    pitch_deg: Annotated[float, Field(ge=0, le=90)] = 40.0
    fov_deg: Annotated[float, Field(gt=0, lt=180)] = 90.0
    max_range: PosFloat = 12.0
    min_size_px: NonNeg = 4.0
    max_size_px: PosFloat = 400.0


class MappingSpec(_Model):
    sigma_t: PosFloat = 0.1
    stretch: Annotated[float, Field(ge=1)] = 3.0
    kappa: Annotated[int, Field(ge=1)] = 40
    gate: Annotated[float, Field(gt=0, lt=1)] = 0.99
    process_noise: NonNeg = 0.15


class AlignmentSpec(_Model):
    enabled: bool = True
    eps_c: PosFloat = 0.2
    max_trace: PosFloat = 0.5
    max_candidates: Annotated[int, Field(ge=1)] = 200
    min_inliers: Annotated[int, Field(ge=3)] = 6
    max_residual: PosFloat = 0.1


class PlannerSpec(_Model):
    n_starts: Annotated[int, Field(ge=1, le=9)] = 2
    replan_period: PosFloat = 1.5
    use_motion_uncertainty: bool = True
    v_cap: PosFloat = 2.0
    v_limit: PosFloat = 3.0
    horizon_radius: PosFloat = 30.0
    peer_margin: NonNeg = 0.3
    start_delay: NonNeg = 3.0
    goal_reached: PosFloat = 0.15


class ProtocolSpec(_Model):
    delay_check: NonNeg = 0.2
    check_dt: PosFloat = 0.05
    margin: NonNeg = 0.3


class DelaySpec(_Model):
    low: NonNeg = 0.0
    high: NonNeg = 0.1

    @model_validator(mode="after")
    def _order(self):
        if self.high < self.low:
            raise ValueError("high must be >= low")
        return self


class Scenario(_Model):
    schema_version: Literal[1] = SCHEMA_VERSION
    name: str = "scenario"
    seed: Annotated[int, Field(ge=0)] = 0
    duration: PosFloat = 40.0
    frame_rate: PosFloat = 5.0
    alignment_period: PosFloat = 1.0
    sample_dt: PosFloat = 0.02
    agents: Annotated[List[AgentSpec], Field(min_length=1)]
    landmarks: LandmarkLayout = LandmarkLayout()
    obstacles: List[TrefoilSpec] = []
    detector: DetectorSpec = DetectorSpec()
    mapping: MappingSpec = MappingSpec()
    alignment: AlignmentSpec = AlignmentSpec()
    planner: PlannerSpec = PlannerSpec()
    protocol: ProtocolSpec = ProtocolSpec()
    delay: DelaySpec = DelaySpec()
    tags: dict = {}

    @model_validator(mode="after")
    def _ids(self):
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValueError("agent ids must be unique")
        if self.protocol.delay_check < self.delay.high:
            raise ValueError("protocol.delay_check must cover the largest message delay")
        return self

    def with_seed(self, seed):
        return self.model_copy(update={"seed": int(seed)})


def _field_errors(exc: ValidationError):
    out = []
    for e in exc.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        out.append(f"{path}: {e['msg']}")
    return out


def parse_scenario(data) -> Scenario:
    """Validate a dict; raises ``ScenarioValidationError`` listing ``field.path: message``."""
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        raise ScenarioValidationError(_field_errors(exc)) from None


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ScenarioValidationError([f"{path}: no such file"]) from None
    except json.JSONDecodeError as exc:
        raise ScenarioValidationError([f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})"]) \
            from None
    return parse_scenario(data)


def dump_scenario(scenario: Scenario, path=None):
    text = json.dumps(scenario.model_dump(mode="json"), indent=2, sort_keys=True)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def scenario_schema():
    return Scenario.model_json_schema()
