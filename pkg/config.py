"""
Конфигурация запусков (pydantic).

RunConfig хранится в структурированном текстовом виде (JSON) и
восстанавливается без потерь: RunConfig.loads(cfg.dumps()) == cfg.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from utils import env_log_level, env_threads

Variant = Literal["with_correction", "without_correction", "resonant_cancellation"]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class GridSpec(_Model):
    half_width: float = 8.0  # z in [-half_width, half_width]
    points: int = 257  # нечётное: сетка симметрична и содержит z = 0

    @field_validator("points")
    @classmethod
    def _odd(cls, v: int) -> int:
        if v < 5 or v % 2 == 0:
            raise ValueError("grid points must be odd and >= 5")
        return v

    @field_validator("half_width")
    @classmethod
    def _positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("half_width must be positive")
        return v


class DataSpec(_Model):
    """Gaussian test family A1 = amp_a g(z - c_a), B1 = amp_b e^{i phase_b} g(z - c_b)."""
    dimension: Literal[1, 2] = 1
    amp_a: float = 0.1
    amp_b: float = 0.05
    phase_b: float = math.pi / 2  # сдвиг фазы обратной волны
    width: float = 1.0
    center_a: float = 0.0
    center_b: float = 0.0
    coupling: float = 1.0  # lambda
    rho0: float = 2.0
    samples_path: Optional[str] = None  # .npz с массивами z, A1, B1
    grid: GridSpec = Field(default_factory=GridSpec)

    @field_validator("rho0")
    @classmethod
    def _rho0(cls, v: float) -> float:
        if v < 1.0:
            raise ValueError("rho0 must be >= 1")
        return v


class CoeffsConfig(_Model):
    dimension: Literal[1, 2] = 2
    zetas: List[float] = Field(default_factory=lambda: [1.0])
    n_min: int = 0
    n_max: int = 0
    derivative_order: Literal[0, 1, 2] = 0
    method: Literal["quadrature", "closed_form", "symbolic"] = "quadrature"

    @model_validator(mode="after")
    def _range(self) -> "CoeffsConfig":
        if self.n_max < self.n_min:
            raise ValueError("n_max must be >= n_min")
        if any(not z > 0 for z in self.zetas):
            raise ValueError("zeta values must be positive")
        return self


class ProfileConfig(_Model):
    t: float = 10.0
    with_correction: bool = False
    n_max: int = 16
    x_points: int = 2049  # точек по x на отрезке [-t, t]

    @field_validator("t")
    @classmethod
    def _time(cls, v: float) -> float:
        if v < 1.0:
            raise ValueError("profile time must be >= 1")
        return v


# lambda и t_max по умолчанию для residual: lambda |A1|^{p-1} порядка единицы
RESIDUAL_DEFAULTS = {1: (100.0, 1.0e3), 2: (30.0, 300.0)}


class ResidualConfig(_Model):
    variant: Variant = "with_correction"
    coupling: Optional[float] = None  # None: RESIDUAL_DEFAULTS[dimension]
    t_min: float = 10.0
    t_max: Optional[float] = None  # None: RESIDUAL_DEFAULTS[dimension]
    t_count: int = 13
    n_max: int = 16
    q: Optional[float] = None  # None: 2 для with_correction, 0 без поправки
    drop_decades: float = 1.0  # окно подгонки без младшей декады

    @model_validator(mode="after")
    def _window(self) -> "ResidualConfig":
        t_max = 1.0e4 if self.t_max is None else self.t_max
        if not (3.0 <= self.t_min < t_max <= 1.0e4):
            raise ValueError("residual times must satisfy 3 <= t_min < t_max <= 1e4")
        if self.t_count < 3:
            raise ValueError("t_count must be >= 3")
        return self

    def for_dimension(self, dimension: int) -> "ResidualConfig":
        """Заполняет coupling и t_max значениями по умолчанию для размерности."""
        coupling, t_max = RESIDUAL_DEFAULTS[dimension]
        return self.model_validate({
            **self.model_dump(),
            "coupling": coupling if self.coupling is None else self.coupling,
            "t_max": t_max if self.t_max is None else self.t_max,
        })


class SolverConfig(_Model):
    half_width: float = 300.0  # L: периодическая область [-L, L)
    points: int = 8192  # N, степень двойки
    dt: float = 0.025
    coupling: float = 1.0  # lambda
    t_start: float = 50.0  # T
    t_end: float = 200.0
    dealias: bool = False  # правило 2/3
    snapshots: int = 7  # число выходных моментов, включая T и T_end
    blowup_factor: float = 10.0

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points

    @model_validator(mode="after")
    def _invariants(self) -> "SolverConfig":
        n = self.points
        if n < 8 or n & (n - 1):
            raise ValueError("solver points must be a power of two")
        if not self.half_width > self.t_end:
            raise ValueError("half_width must exceed t_end (light cone inside the domain)")
        if not (0.0 < self.dt <= 0.5 * self.spacing):
            raise ValueError("dt must satisfy 0 < dt <= grid spacing / 2")
        if not (1.0 <= self.t_start < self.t_end):
            raise ValueError("need 1 <= t_start < t_end")
        if self.snapshots < 2:
            raise ValueError("snapshots must be >= 2")
        return self


class CheckConfig(_Model):
    target: Literal["all", "elliptic", "coeffs", "assumption", "roundtrip"] = "all"


class RunConfig(_Model):
    command: Optional[Literal["coeffs", "profile", "residual", "solve", "check"]] = None
    seed: int = 0
    threads: int = 1
    output_dir: str = "results"
    log_level: str = "WARNING"
    data: DataSpec = Field(default_factory=DataSpec)
    coeffs: CoeffsConfig = Field(default_factory=CoeffsConfig)
    profile: ProfileConfig = Field(default_factory=ProfileConfig)
    residual: ResidualConfig = Field(default_factory=ResidualConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    check: CheckConfig = Field(default_factory=CheckConfig)

    @field_validator("threads")
    @classmethod
    def _threads(cls, v: int) -> int:
        if v < 1:
            raise ValueError("threads must be >= 1")
        return v

    def dumps(self) -> str:
        return self.model_dump_json(indent=2)

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        return cls.model_validate_json(text)


def load_run_config(path: Path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        return RunConfig.loads(f.read())


def save_run_config(cfg: RunConfig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(cfg.dumps())
        f.write("\n")
    return path


def resolve_environment(cfg: RunConfig) -> RunConfig:
    """Переменные окружения перекрывают threads и log_level."""
    update = {}
    threads = env_threads()
    if threads is not None:
        update["threads"] = threads
    level = env_log_level()
    if level is not None:
        update["log_level"] = level
    return cfg.model_copy(update=update) if update else cfg
