"""
Псевдоспектральный решатель 1D уравнения Клейна-Гордона и эксперимент с финальными данными.

    u_tt - u_xx + u = lambda |u|^2 u   на [-L, L) с периодическими условиями.

Схема Странга: половина точного линейного шага (поворот в Фурье),
нелинейный толчок u_t += dt N(u) при замороженном u, ещё половина
линейного шага. Толчок точен для своего подпотока, поэтому схема
обратима: шаг +dt, затем -dt возвращает исходное состояние.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.integrate import cumulative_trapezoid

from errors import DomainError, InstabilityError, ShapeError
from hyperbolic import norm_change_of_variables, residual_field, sum_dt, sum_values
from profiles import FinalData, PhasePair, profile_terms

logger = logging.getLogger(__name__)

POWER = 3                   # кубическая нелинейность 1D
ENVELOPE_MARGIN = 5.0
ENVELOPE_POINTS = 25
ENVELOPE_ATOL = 1e-9
SMALLNESS = 0.1             # ||u - u~|| <= 0.1 ||u~(T)||
COMPLEXNESS = 0.3           # min ||Im u|| >= 0.3 (||A1||^2 + ||B1||^2)^{1/2}


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """x_j = -L + j h, h = 2L/N; волновые числа k = 2 pi fftfreq(N, h)."""
    half_width: float
    points: int

    def __post_init__(self) -> None:
        if self.points < 8 or self.points & (self.points - 1):
            raise DomainError(f"grid size must be a power of two, got {self.points!r}")
        if not self.half_width > 0.0:
            raise DomainError(f"half width must be positive, got {self.half_width!r}")

    @classmethod
    def from_config(cls, config) -> "SpectralGrid":
        return cls(float(config.half_width), int(config.points))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points

    @cached_property
    def x(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.points)

    @cached_property
    def k(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.points, d=self.spacing)

    @cached_property
    def omega(self) -> np.ndarray:
        """<xi> = sqrt(1 + xi^2)."""
        return np.sqrt(1.0 + self.k * self.k)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        return np.abs(self.k) < (2.0 / 3.0) * np.max(np.abs(self.k))

    def l2(self, values: np.ndarray) -> float:
        return math.sqrt(float(np.sum(np.abs(values) ** 2)) * self.spacing)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values).real) * self.spacing

    def dx(self, u: np.ndarray) -> np.ndarray:
        return np.fft.ifft(1j * self.k * np.fft.fft(u))


@dataclass(frozen=True, eq=False)
class EvolutionState:
    t: float
    u: np.ndarray
    ut: np.ndarray

    def __post_init__(self) -> None:
        u = np.asarray(self.u, dtype=complex)
        ut = np.asarray(self.ut, dtype=complex)
        if u.shape != ut.shape or u.ndim != 1:
            raise ShapeError(f"u {u.shape} and u_t {ut.shape} must be equal one-dimensional arrays")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "ut", ut)
        object.__setattr__(self, "t", float(self.t))

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.u)))


def half_kg_variables(state: EvolutionState, grid: SpectralGrid) -> Tuple[np.ndarray, np.ndarray]:
    """phi_+- = (u +- i <nabla>^{-1} u_t) / 2."""
    u_hat = np.fft.fft(state.u)
    inv = np.fft.fft(state.ut) / grid.omega
    return np.fft.ifft(0.5 * (u_hat + 1j * inv)), np.fft.ifft(0.5 * (u_hat - 1j * inv))


def state_from_half_kg(phi_plus: np.ndarray, phi_minus: np.ndarray, t: float,
                       grid: SpectralGrid) -> EvolutionState:
    """Обратное отображение: u = phi_+ + phi_-, u_t = -i <nabla> (phi_+ - phi_-)."""
    diff = np.fft.fft(np.asarray(phi_plus) - np.asarray(phi_minus))
    return EvolutionState(t, np.asarray(phi_plus) + np.asarray(phi_minus), np.fft.ifft(-1j * grid.omega * diff))


def linear_propagator(state: EvolutionState, dt: float, grid: SpectralGrid) -> EvolutionState:
    """phi_+- -> e^{-+ i <xi> dt} phi_+- (точно в Фурье)."""
    phi_p, phi_m = half_kg_variables(state, grid)
    rot = np.exp(-1j * grid.omega * dt)
    phi_p = np.fft.ifft(rot * np.fft.fft(phi_p))
    phi_m = np.fft.ifft(np.conj(rot) * np.fft.fft(phi_m))
    return state_from_half_kg(phi_p, phi_m, state.t + dt, grid)


def energy(state: EvolutionState, coupling: float, grid: SpectralGrid, power: int = POWER) -> float:
    """E = 1/2 int (|u_t|^2 + |u_x|^2 + |u|^2) - lambda/(p+1) int |u|^{p+1}."""
    dens = np.abs(state.ut) ** 2 + np.abs(grid.dx(state.u)) ** 2 + np.abs(state.u) ** 2
    return 0.5 * grid.integrate(dens) - coupling / (power + 1) * grid.integrate(np.abs(state.u) ** (power + 1))


class KleinGordonSplitStep:
    """
    Шаг Странга для u_tt - u_xx + u = lambda |u|^{p-1} u.

    Линейная часть - точная матрица поворота пары (u^, u_t^):
        [[cos(w s), sin(w s)/w], [-w sin(w s), cos(w s)]], w = <xi>.
    """

    def __init__(self, grid: SpectralGrid, coupling: float, power: int = POWER, dealias: bool = False) -> None:
        self.grid = grid
        self.coupling = float(coupling)
        self.power = power
        self.dealias = dealias
        self._dt: Optional[float] = None
        self._half: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = None

    def set_timestep(self, dt: float) -> None:
        if dt == self._dt:
            return
        w = self.grid.omega
        s = 0.5 * dt
        c, sn = np.cos(w * s), np.sin(w * s)
        self._half = (c, sn / w, -w * sn, c)
        self._dt = dt

    def _linear(self, u: np.ndarray, ut: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        e00, e01, e10, e11 = self._half
        u_hat, ut_hat = np.fft.fft(u), np.fft.fft(ut)
        return np.fft.ifft(e00 * u_hat + e01 * ut_hat), np.fft.ifft(e10 * u_hat + e11 * ut_hat)

    def nonlinear(self, u: np.ndarray) -> np.ndarray:
        n = self.coupling * np.abs(u) ** (self.power - 1) * u
        if self.dealias:
            n = np.fft.ifft(np.fft.fft(n) * self.grid.dealias_mask)
        return n

    def step(self, state: EvolutionState, dt: float) -> EvolutionState:
        self.set_timestep(dt)
        u, ut = self._linear(state.u, state.ut)
        if self.coupling != 0.0:
            ut = ut + dt * self.nonlinear(u)
        u, ut = self._linear(u, ut)
        return EvolutionState(state.t + dt, u, ut)

    def __call__(self, state: EvolutionState, dt: float) -> EvolutionState:
        return self.step(state, dt)


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: Tuple[EvolutionState, ...]
    energy_times: np.ndarray
    energies: np.ndarray
    steps: int

    @property
    def times(self) -> Tuple[float, ...]:
        return tuple(s.t for s in self.states)

    @property
    def energy_deviation(self) -> float:
        """max |E - E0| / |E0| по всем шагам."""
        e0 = self.energies[0]
        return float(np.max(np.abs(self.energies - e0)) / max(abs(e0), 1e-300))

    @property
    def energy_drift(self) -> float:
        """Относительный дрейф энергии на единицу времени."""
        span = abs(self.energy_times[-1] - self.energy_times[0])
        return self.energy_deviation / span if span > 0.0 else 0.0


def evolve(config, initial: EvolutionState, output_times: Optional[Sequence[float]] = None,
           grid: Optional[SpectralGrid] = None) -> Trajectory:
    """
    Эволюция от initial.t через все output_times (в одном направлении по времени).

    Шаг подгоняется так, чтобы каждый выходной момент попадал точно:
    n = ceil(|dT| / dt) шагов длины dT / n. Энергия записывается на каждом шаге.
    """
    grid = grid or SpectralGrid.from_config(config)
    if initial.u.shape != (grid.points,):
        raise ShapeError(f"state of size {initial.u.size} on a grid of {grid.points} points")
    if output_times is None:
        output_times = np.linspace(initial.t, config.t_end, config.snapshots)
    targets = [float(t) for t in output_times]
    if not targets:
        raise DomainError("no output times requested")
    sign = 1.0 if targets[-1] >= initial.t else -1.0
    if any(sign * (b - a) < 0.0 for a, b in zip([initial.t] + targets, targets)):
        raise DomainError("output times must be monotone in one direction from the initial time")

    stepper = KleinGordonSplitStep(grid, config.coupling, dealias=config.dealias)
    limit = config.blowup_factor * max(initial.sup, 1e-300)
    state = initial
    states: List[EvolutionState] = []
    times = [state.t]
    energies = [energy(state, config.coupling, grid)]
    steps = 0
    for target in targets:
        span = target - state.t
        n = int(math.ceil(abs(span) / config.dt - 1e-9)) if span != 0.0 else 0
        h = span / n if n else 0.0
        for _ in range(n):
            state = stepper.step(state, h)
            steps += 1
            sup = state.sup
            if not math.isfinite(sup) or sup > limit:
                raise InstabilityError(
                    f"blow-up at t={state.t:.6g}: sup|u|={sup:.3e} exceeds {config.blowup_factor:g} x initial",
                    t=state.t, sup_norm=sup)
            times.append(state.t)
            energies.append(energy(state, config.coupling, grid))
        state = EvolutionState(target, state.u, state.ut)
        states.append(state)
    traj = Trajectory(tuple(states), np.asarray(times), np.asarray(energies), steps)
    logger.info("evolve: %d steps to t=%g, energy drift %.3e per unit time", steps, state.t, traj.energy_drift)
    return traj


# ---------------------------------------------------------------------------
# Эксперимент с финальными данными
# ---------------------------------------------------------------------------

def profile_state(data: FinalData, phases: PhasePair, t: float, grid: SpectralGrid,
                  with_correction: bool = True, n_max: int = 16) -> EvolutionState:
    """u(t) = u~(t), u_t(t) = d_t u~(t) (аналитическая производная профиля) на x-сетке решателя."""
    if data.dimension != 1:
        raise DomainError("time evolution is implemented for the 1D equation only")
    if t < 1.0:
        raise DomainError(f"profile time must be >= 1, got {t!r}")
    terms = profile_terms(data, phases, with_correction, n_max)
    return EvolutionState(t, sum_values(terms, t, grid.x), sum_dt(terms, t, grid.x))


class ExperimentReport(BaseModel):
    times: List[float]
    error_tilde: List[float]  # ||u - u~||
    error_ap: List[float]  # ||u - u_ap||
    v_norms: List[float]  # ||v_ap||
    im_norms: List[float]  # ||Im u||
    profile_norms: List[float]  # ||u~||
    envelope: List[float]  # 5 int_T^t ||(box+1)u~ - N(u~)|| ds
    reference: float  # (||A1||^2 + ||B1||^2)^{1/2}
    energy_drift: float
    steps: int
    tracking_ok: bool
    smallness_ok: bool
    complexness_ok: Optional[bool] = None  # None: |A1| == |B1|, критерий неприменим
    passed: bool
    config: Optional[Dict] = Field(default=None)

    def rows(self) -> List[Tuple[float, ...]]:
        return list(zip(self.times, self.error_tilde, self.error_ap, self.v_norms, self.im_norms,
                        self.profile_norms, self.envelope))


def residual_envelope(data: FinalData, phases: PhasePair, t_start: float, times: Sequence[float],
                      points: int = ENVELOPE_POINTS, n_max: int = 16) -> np.ndarray:
    """ENVELOPE_MARGIN * int_T^t r(s) ds в моментах times; r на логарифмической сетке, трапеция."""
    t_end = max(times)
    samples = np.geomspace(t_start, t_end, points) if t_end > t_start else np.array([t_start, t_start])
    r = np.array([norm_change_of_variables(residual_field(data, phases, "with_correction", s, n_max), s, data.grid)
                  for s in samples])
    integral = cumulative_trapezoid(r, samples, initial=0.0)
    return ENVELOPE_MARGIN * np.interp(np.asarray(times, dtype=float), samples, integral)


def final_value_experiment(config, data: FinalData, phases: PhasePair, n_max: int = 16,
                           envelope_points: int = ENVELOPE_POINTS) -> ExperimentReport:
    """
    u(T) = u~(T), u_t(T) = d_t u~(T), эволюция до T_end; на каждом снимке
    ||u - u~||, ||u - u_ap||, ||Im u|| и огибающая Дюамеля по невязке.
    """
    if data.dimension != 1:
        raise DomainError("final-value experiment runs in 1D only")
    if not math.isclose(config.coupling, data.coupling, rel_tol=0.0, abs_tol=1e-15):
        raise DomainError(f"solver coupling {config.coupling!r} differs from data coupling {data.coupling!r}")
    grid = SpectralGrid.from_config(config)
    T = float(config.t_start)
    initial = profile_state(data, phases, T, grid, True, n_max)
    snapshots = np.linspace(T, config.t_end, config.snapshots)
    traj = evolve(config, initial, snapshots, grid)

    tilde = profile_terms(data, phases, True, n_max)
    ap = profile_terms(data, phases, False, n_max)
    err_t, err_a, v_n, im_n, prof = [], [], [], [], []
    for state in traj.states:
        u_tilde = sum_values(tilde, state.t, grid.x)
        u_ap = sum_values(ap, state.t, grid.x)
        err_t.append(grid.l2(state.u - u_tilde))
        err_a.append(grid.l2(state.u - u_ap))
        v_n.append(grid.l2(u_tilde - u_ap))
        im_n.append(grid.l2(state.u.imag))
        prof.append(grid.l2(u_tilde))

    envelope = residual_envelope(data, phases, T, traj.times, envelope_points, n_max)
    reference = math.sqrt(data.grid.l2(data.A1) ** 2 + data.grid.l2(data.B1) ** 2)
    tracking_ok = bool(np.all(np.asarray(err_t) <= envelope + ENVELOPE_ATOL))
    smallness_ok = bool(max(err_t) <= SMALLNESS * prof[0])
    a, b = np.abs(data.A1), np.abs(data.B1)
    differs = bool(np.any(np.abs(a - b) > 1e-6 * max(float(np.max(a)), float(np.max(b)), 1e-300)))
    complexness_ok = bool(min(im_n) >= COMPLEXNESS * reference) if differs else None
    passed = tracking_ok and smallness_ok and complexness_ok is not False
    logger.info("final-value run: max||u-u~||=%.3e, envelope=%.3e, min||Im u||=%.3e",
                max(err_t), float(envelope[-1]), min(im_n))
    return ExperimentReport(
        times=[float(t) for t in traj.times], error_tilde=err_t, error_ap=err_a, v_norms=v_n,
        im_norms=im_n, profile_norms=prof, envelope=envelope.tolist(), reference=reference,
        energy_drift=traj.energy_drift, steps=traj.steps, tracking_ok=tracking_ok,
        smallness_ok=smallness_ok, complexness_ok=complexness_ok, passed=passed)
