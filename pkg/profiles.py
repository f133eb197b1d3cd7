"""
Асимптотические профили модифицированного рассеяния.

Цепочка: финальные данные (phi0, phi1) -> амплитуды (A1, B1) ->
отношение zeta и относительная фаза alpha -> фазовые поправки S_A, S_B ->
u_ap и поправка v_ap.

u_ap = t^{-d/2} [A1(mu) e^{i theta + i S_A log t} + B1(mu) e^{-i theta + i S_B log t}],
v_ap = t^{-d/2-1} sum_m [A_m e^{i(2m-1) theta + ...} + B_m e^{-i(2m-1) theta + ...}].

Все слагаемые строятся как hyperbolic.ProfileTerm; FinalData кэширует
их для каждой пары фаз, поэтому повторные вычисления невязки по t
не пересчитывают коэффициенты L_n.
"""
from __future__ import annotations

import itertools
import logging
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.interpolate import CubicSpline
from scipy.ndimage import distance_transform_edt

from coeffs import POWER, ln_quadrature_report
from errors import DegenerateDataError, DomainError, KGError, ShapeError
from hyperbolic import (AmplitudePhase, ProfileField, ProfileTerm, ZGrid, norm_change_of_variables,
                        sum_values)

logger = logging.getLogger(__name__)

__all__ = [
    "FinalData", "PhasePair", "ProfileField", "CorrectionSpec", "AssumptionReport", "ImBound",
    "PhaseDiagnostics", "amplitudes_from_final_data", "final_data_from_initial", "canonical_data",
    "data_from_spec", "zeta_and_alpha", "phase_pair", "correction_spec", "profile_terms",
    "uap_eval", "vap_eval", "u_tilde_eval", "weighted_sobolev_norm", "validate_assumption",
    "im_l2_lower_bound", "phase_derivative_diagnostics", "spatial_points",
]

THETA_FLOOR = 1e-8          # относительный порог |A1| для частного |B1| / |A1|
RATIO_FLOOR = 1e-6          # min(|A1|,|B1|)/max ниже этого: L_{-1}(r)/r = 3/2 + O(r^2)
SPLINE_THRESHOLD = 256      # больше уникальных отношений: L_n из сплайн-таблицы
SPLINE_NODES = 513
DEFAULT_NMAX = 16
CORE_LEVEL = 1e-3           # ядро носителя для разностных оценок zeta
SUP_GROWTH = 1.05
NORM_GROWTH = 1.5
SOBOLEV_CAP = 1e12


# ---------------------------------------------------------------------------
# Типы
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PhasePair:
    """S_A, S_B на z-сетке (вещественные, множитель при log t)."""
    S_A: np.ndarray
    S_B: np.ndarray

    def __post_init__(self) -> None:
        for name in ("S_A", "S_B"):
            arr = np.asarray(getattr(self, name))
            if np.iscomplexobj(arr):
                if np.any(arr.imag != 0.0):
                    raise DomainError(f"{name} must be real")
                arr = arr.real
            object.__setattr__(self, name, np.asarray(arr, dtype=float))
        if self.S_A.shape != self.S_B.shape:
            raise ShapeError(f"S_A {self.S_A.shape} and S_B {self.S_B.shape} differ in shape")

    @property
    def total(self) -> np.ndarray:
        return self.S_A + self.S_B


@dataclass(frozen=True, eq=False)
class CorrectionSpec:
    """
    Коэффициенты v_ap.

    1D: только m = 2, A_2 = -(lambda/8) A1^2 conj(B1), B_2 = -(lambda/8) conj(A1) B1^2.
    2D: A_m, B_m для 2 <= m <= n_max.
    """
    dimension: int
    n_max: int
    A: Dict[int, np.ndarray]
    B: Dict[int, np.ndarray]

    def sup_norms(self) -> Dict[int, float]:
        return {m: float(max(np.max(np.abs(self.A[m])), np.max(np.abs(self.B[m])))) for m in sorted(self.A)}

    def _build(self, grid: ZGrid, phases: PhasePair, scale: Callable[[int], float], tag: str) -> List[ProfileTerm]:
        power = grid.dimension / 2.0 + 1.0
        out: List[ProfileTerm] = []
        for m in sorted(self.A):
            k = 2 * m - 1
            s = scale(m)
            phase_a = m * phases.S_A - (m - 1) * phases.S_B
            phase_b = -(m - 1) * phases.S_A + m * phases.S_B
            for osc, amp, phase, name in ((k, self.A[m], phase_a, "A"), (-k, self.B[m], phase_b, "B")):
                if tag == "v":
                    h = AmplitudePhase.from_samples(grid, amp, phase)
                else:
                    h = AmplitudePhase(grid, np.asarray(s * amp, dtype=complex), phase)
                out.append(ProfileTerm(power, osc, h, f"{tag}:{name}_{m}"))
        return out

    def terms(self, grid: ZGrid, phases: PhasePair) -> List[ProfileTerm]:
        """Слагаемые v_ap (с производными по z для (box + 1) и d/dt)."""
        return self._build(grid, phases, lambda m: 1.0, "v")

    def nonresonant_terms(self, grid: ZGrid, phases: PhasePair) -> List[ProfileTerm]:
        """Моды N_nr: (1 - (2m-1)^2) A_m и (1 - (2m-1)^2) B_m."""
        return self._build(grid, phases, lambda m: 1.0 - (2 * m - 1) ** 2, "N_nr")


@dataclass(frozen=True, eq=False)
class FinalData:
    """Амплитуды рассеяния A1, B1 на z-сетке вместе с lambda и rho0."""
    dimension: int
    grid: ZGrid
    A1: np.ndarray
    B1: np.ndarray
    coupling: float = 1.0
    rho0: float = 2.0
    _cache: Dict[tuple, tuple] = field(default_factory=dict, init=False, repr=False)
    _lock: threading.RLock = field(default_factory=threading.RLock, init=False, repr=False)

    def __post_init__(self) -> None:
        if self.dimension not in POWER:
            raise DomainError(f"dimension must be 1 or 2, got {self.dimension!r}")
        if self.grid.dimension != self.dimension:
            raise ShapeError(f"{self.grid.dimension}D grid for {self.dimension}D data")
        A1 = np.asarray(self.A1, dtype=complex)
        B1 = np.asarray(self.B1, dtype=complex)
        if A1.shape != self.grid.shape or B1.shape != self.grid.shape:
            raise ShapeError(f"A1 {A1.shape} / B1 {B1.shape} do not match grid {self.grid.shape}")
        if not (np.all(np.isfinite(A1)) and np.all(np.isfinite(B1))):
            raise DomainError("final data must be finite")
        if not self.rho0 >= 1.0:
            raise DomainError(f"rho0 must be >= 1, got {self.rho0!r}")
        object.__setattr__(self, "A1", A1)
        object.__setattr__(self, "B1", B1)
        object.__setattr__(self, "coupling", float(self.coupling))
        object.__setattr__(self, "rho0", float(self.rho0))

    @property
    def power(self) -> int:
        return POWER[self.dimension]

    def with_coupling(self, coupling: float) -> "FinalData":
        return FinalData(self.dimension, self.grid, self.A1, self.B1, coupling, self.rho0)

    def _memo(self, key: tuple, phases: PhasePair, build: Callable[[], object]):
        full = key + (id(phases),)
        with self._lock:
            hit = self._cache.get(full)
            if hit is None or hit[0] is not phases:
                hit = (phases, build())
                self._cache[full] = hit
            return hit[1]

    def u_ap_terms(self, phases: PhasePair) -> List[ProfileTerm]:
        def build() -> List[ProfileTerm]:
            a = self.dimension / 2.0
            return [
                ProfileTerm(a, 1, AmplitudePhase.from_samples(self.grid, self.A1, phases.S_A), "u_ap:A1"),
                ProfileTerm(a, -1, AmplitudePhase.from_samples(self.grid, self.B1, phases.S_B), "u_ap:B1"),
            ]
        return self._memo(("u_ap",), phases, build)

    def resonant_terms(self, phases: PhasePair) -> List[ProfileTerm]:
        """N_r: 2<z> S_A A1 на e^{i theta}, -2<z> S_B B1 на e^{-i theta}."""
        def build() -> List[ProfileTerm]:
            a = self.dimension / 2.0 + 1.0
            c = self.grid.bracket
            return [
                ProfileTerm(a, 1, AmplitudePhase(self.grid, 2.0 * c * phases.S_A * self.A1, phases.S_A), "N_r:A"),
                ProfileTerm(a, -1, AmplitudePhase(self.grid, -2.0 * c * phases.S_B * self.B1, phases.S_B), "N_r:B"),
            ]
        return self._memo(("N_r",), phases, build)

    def correction(self, phases: PhasePair, n_max: int = DEFAULT_NMAX) -> CorrectionSpec:
        n_max = 2 if self.dimension == 1 else int(n_max)
        return self._memo(("spec", n_max), phases, lambda: correction_spec(self, phases, n_max))

    def correction_terms(self, phases: PhasePair, n_max: int = DEFAULT_NMAX) -> List[ProfileTerm]:
        n_max = 2 if self.dimension == 1 else int(n_max)
        return self._memo(("v", n_max), phases,
                          lambda: self.correction(phases, n_max).terms(self.grid, phases))

    def nonresonant_terms(self, phases: PhasePair, n_max: int = DEFAULT_NMAX) -> List[ProfileTerm]:
        n_max = 2 if self.dimension == 1 else int(n_max)
        return self._memo(("N_nr", n_max), phases,
                          lambda: self.correction(phases, n_max).nonresonant_terms(self.grid, phases))


# ---------------------------------------------------------------------------
# Финальные данные
# ---------------------------------------------------------------------------

def amplitudes_from_final_data(phi0_hat: np.ndarray, phi1_hat: np.ndarray,
                               grid: ZGrid) -> Tuple[np.ndarray, np.ndarray]:
    """
    A1(mu) = (e^{-i d pi/4}/2) <mu>^{d/2} (<mu> phi0^(mu) + i phi1^(mu)),
    B1(mu) = (e^{+i d pi/4}/2) <mu>^{d/2} (<mu> phi0^(-mu) - i phi1^(-mu)).

    Спектры заданы на симметричной z-сетке, phi^(-mu) - отражение массива.
    """
    phi0_hat = np.asarray(phi0_hat, dtype=complex)
    phi1_hat = np.asarray(phi1_hat, dtype=complex)
    if phi0_hat.shape != phi1_hat.shape or phi0_hat.shape != grid.shape:
        raise ShapeError(f"spectra {phi0_hat.shape}/{phi1_hat.shape} do not match grid {grid.shape}")
    if not grid.symmetric_axis:
        raise ShapeError("amplitude map needs a grid symmetric about zero")
    d = grid.dimension
    c = grid.bracket
    weight = 0.5 * c ** (d / 2.0)
    rot = np.exp(-0.25j * d * math.pi)
    A1 = rot * weight * (c * phi0_hat + 1j * phi1_hat)
    B1 = np.conj(rot) * weight * (c * np.flip(phi0_hat) - 1j * np.flip(phi1_hat))
    return A1, B1


def _fourier(phi: np.ndarray, x: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Унитарное преобразование (2pi)^{-d/2} int e^{-i x mu} phi dx прямой суммой (тензорно в 2D)."""
    dx = float(x[1] - x[0])
    M = np.exp(-1j * np.outer(mu, x)) * dx / math.sqrt(2.0 * math.pi)
    if phi.ndim == 1:
        return M @ phi
    return M @ phi @ M.T


def final_data_from_initial(phi0: np.ndarray, phi1: np.ndarray, x: np.ndarray, grid: ZGrid,
                            coupling: float = 1.0, rho0: float = 2.0) -> FinalData:
    """(phi0, phi1) на равномерной x-сетке (тензорной в 2D) -> FinalData на z-сетке."""
    phi0 = np.asarray(phi0, dtype=complex)
    phi1 = np.asarray(phi1, dtype=complex)
    x = np.asarray(x, dtype=float)
    expected = (x.size,) * grid.dimension
    if phi0.shape != expected or phi1.shape != expected:
        raise ShapeError(f"initial data {phi0.shape}/{phi1.shape} do not match x-grid {expected}")
    A1, B1 = amplitudes_from_final_data(_fourier(phi0, x, grid.axis), _fourier(phi1, x, grid.axis), grid)
    return FinalData(grid.dimension, grid, A1, B1, coupling, rho0)


def _gaussian(grid: ZGrid, width: float, center: float) -> np.ndarray:
    r2 = sum((z - center if i == 0 else z) ** 2 for i, z in enumerate(grid.coords))
    return np.exp(-0.5 * r2 / (width * width))


def canonical_data(dimension: int = 1, amp_a: float = 0.1, amp_b: float = 0.05,
                   phase_b: float = math.pi / 2, width: float = 1.0, center_a: float = 0.0,
                   center_b: float = 0.0, coupling: float = 1.0, rho0: float = 2.0,
                   grid: Optional[ZGrid] = None) -> FinalData:
    """Гауссово семейство: A1 = amp_a g(z - c_a), B1 = amp_b e^{i phase_b} g(z - c_b); сдвиг по первой оси."""
    if width <= 0.0:
        raise DomainError(f"width must be positive, got {width!r}")
    grid = grid or ZGrid.symmetric(8.0, 257 if dimension == 1 else 129, dimension)
    A1 = amp_a * _gaussian(grid, width, center_a)
    B1 = amp_b * np.exp(1j * phase_b) * _gaussian(grid, width, center_b)
    return FinalData(dimension, grid, A1, B1, coupling, rho0)


def data_from_spec(spec) -> FinalData:
    """FinalData из config.DataSpec: гауссово семейство или .npz с массивами z, A1, B1."""
    if spec.samples_path:
        path = Path(spec.samples_path)
        if not path.exists():
            raise DomainError(f"samples file not found: {path}")
        with np.load(path) as npz:
            missing = {"z", "A1", "B1"} - set(npz.files)
            if missing:
                raise ShapeError(f"{path} lacks arrays {sorted(missing)}")
            grid = ZGrid(spec.dimension, npz["z"])
            return FinalData(spec.dimension, grid, npz["A1"], npz["B1"], spec.coupling, spec.rho0)
    grid = ZGrid.symmetric(spec.grid.half_width, spec.grid.points, spec.dimension)
    return canonical_data(spec.dimension, spec.amp_a, spec.amp_b, spec.phase_b, spec.width,
                          spec.center_a, spec.center_b, spec.coupling, spec.rho0, grid)


# ---------------------------------------------------------------------------
# Отношение и фазы
# ---------------------------------------------------------------------------

def zeta_and_alpha(A1: np.ndarray, B1: np.ndarray,
                   theta_floor: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    zeta = |B1|/|A1|, alpha = arg(A1 conj(B1)) там, где |A1| > theta_floor;
    остальные точки берут значение ближайшей допустимой точки сетки.
    По умолчанию theta_floor = 1e-8 max|A1|.
    """
    A1 = np.asarray(A1, dtype=complex)
    B1 = np.asarray(B1, dtype=complex)
    if A1.shape != B1.shape:
        raise ShapeError(f"A1 {A1.shape} and B1 {B1.shape} differ in shape")
    a = np.abs(A1)
    top = float(np.max(a, initial=0.0))
    if top == 0.0:
        raise DegenerateDataError("A1 vanishes identically: no forward wave")
    if theta_floor is None:
        theta_floor = THETA_FLOOR * top
    elif not theta_floor > 0.0:
        raise DomainError(f"theta_floor must be positive, got {theta_floor!r}")
    valid = a > theta_floor
    if not np.any(valid):
        raise DegenerateDataError(f"|A1| never exceeds the floor {theta_floor:g}")
    safe = np.where(valid, a, 1.0)
    zeta = np.where(valid, np.abs(B1) / safe, 0.0)
    alpha = np.where(valid, np.angle(A1 * np.conj(B1)), 0.0)
    if not np.all(valid):
        idx = distance_transform_edt(~valid, return_distances=False, return_indices=True)
        nearest = tuple(idx)
        zeta = zeta[nearest]
        alpha = alpha[nearest]
    return zeta, alpha


@dataclass(frozen=True, eq=False)
class _Dominant:
    """Разложение относительно большей из двух волн: r = min/max in [RATIO_FLOOR, 1]."""
    a_form: np.ndarray      # |B1| <= |A1|
    ratio: np.ndarray
    size: np.ndarray        # max(|A1|, |B1|)
    lead: np.ndarray        # A1 или B1, смотря какая больше
    rotation: np.ndarray    # e^{i alpha}


def _dominant(data: FinalData) -> _Dominant:
    a = np.abs(data.A1)
    b = np.abs(data.B1)
    a_form = b <= a
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(a_form, b / a, a / b)
    ratio = np.clip(np.nan_to_num(ratio, nan=1.0), RATIO_FLOOR, 1.0)
    prod = data.A1 * np.conj(data.B1)
    mag = np.abs(prod)
    rotation = np.where(mag > 0.0, prod / np.where(mag > 0.0, mag, 1.0), 1.0 + 0.0j)
    return _Dominant(a_form, ratio, np.maximum(a, b), np.where(a_form, data.A1, data.B1), rotation)


def _ln_values(ns: Sequence[int], ratio: np.ndarray) -> np.ndarray:
    """L_n(r) (2D) для массива r в [RATIO_FLOOR, 1]; shape ratio.shape + (len(ns),)."""
    ns = tuple(int(n) for n in ns)
    unique, inverse = np.unique(ratio.ravel(), return_inverse=True)

    def row(r: float) -> List[float]:
        vals = ln_quadrature_report(ns, r, 2).values
        return [vals[n] for n in ns]

    if unique.size <= SPLINE_THRESHOLD:
        values = np.array([row(float(r)) for r in unique]).reshape(unique.size, len(ns))
    else:
        # узлы сгущаются к r = 1, где L_n теряет гладкость
        s = np.linspace(0.0, 1.0, SPLINE_NODES)
        nodes = 1.0 - (1.0 - RATIO_FLOOR) * (1.0 - s) ** 2
        table = np.array([row(float(r)) for r in nodes])
        logger.debug("L_n: %d unique ratios, spline table on %d nodes", unique.size, SPLINE_NODES)
        values = CubicSpline(nodes, table, axis=0)(unique)
    return values[np.ravel(inverse)].reshape(ratio.shape + (len(ns),))


def phase_pair(data: FinalData) -> PhasePair:
    """
    1D: S_A = (lambda/2)<z>^{-1}(|A1|^2 + 2|B1|^2), S_B = -(lambda/2)<z>^{-1}(2|A1|^2 + |B1|^2).
    2D: S_A = (lambda/2)<z>^{-1} L_0(zeta)|A1|, S_B = -(lambda/2)<z>^{-1} L_0(1/zeta)|B1|.

    В 2D формулы записаны через r = min/max, так что точки с A1 = 0 или
    B1 = 0 дают пределы 3/4 и 1/2 без отдельной ветки.
    """
    k = 0.5 * data.coupling / data.grid.bracket
    if data.dimension == 1:
        a2 = np.abs(data.A1) ** 2
        b2 = np.abs(data.B1) ** 2
        return PhasePair(k * (a2 + 2.0 * b2), -k * (2.0 * a2 + b2))
    dom = _dominant(data)
    L = _ln_values((0, -1), dom.ratio)
    l0 = L[..., 0]
    # L_{-1}(1) = L_0(1); одна и та же величина даёт S_A + S_B = 0 точно
    lm1 = np.where(dom.ratio == 1.0, l0, L[..., 1])
    scale = k * dom.size
    major = scale * l0
    minor = scale * (lm1 / dom.ratio)
    return PhasePair(np.where(dom.a_form, major, minor), np.where(dom.a_form, -minor, -major))


def correction_spec(data: FinalData, phases: PhasePair, n_max: int = DEFAULT_NMAX) -> CorrectionSpec:
    """
    Коэффициенты поправки v_ap, c_m = 1/(1 - (2m-1)^2), e^{i alpha} = A1 conj(B1)/|A1 B1|.

    |B1| <= |A1|: A_m = c_m lambda L_{m-1}(r)|A1|A1 e^{i(m-1)alpha}, B_m = c_m lambda L_{-m}(r)|A1|A1 e^{-im alpha};
    иначе роли волн меняются местами.
    """
    lam = data.coupling
    if data.dimension == 1:
        A2 = -(lam / 8.0) * data.A1 ** 2 * np.conj(data.B1)
        B2 = -(lam / 8.0) * np.conj(data.A1) * data.B1 ** 2
        return CorrectionSpec(1, 2, {2: A2}, {2: B2})
    n_max = int(n_max)
    if n_max < 2:
        raise DomainError(f"2D correction needs n_max >= 2, got {n_max!r}")
    ms = list(range(2, n_max + 1))
    ns = [m - 1 for m in ms] + [-m for m in ms]
    column = {n: j for j, n in enumerate(ns)}
    dom = _dominant(data)
    L = _ln_values(ns, dom.ratio)
    base = lam * dom.size ** (data.power - 1) * dom.lead
    rot = dom.rotation
    A: Dict[int, np.ndarray] = {}
    B: Dict[int, np.ndarray] = {}
    for m in ms:
        c_m = 1.0 / (1.0 - (2 * m - 1) ** 2)
        near = c_m * L[..., column[m - 1]] * base
        far = c_m * L[..., column[-m]] * base
        A[m] = np.where(dom.a_form, near * rot ** (m - 1), far * rot ** m)
        B[m] = np.where(dom.a_form, far * np.conj(rot) ** m, near * np.conj(rot) ** (m - 1))
    logger.debug("correction: n_max=%d, sup|A_n_max|=%.3e", n_max, float(np.max(np.abs(A[n_max]))))
    return CorrectionSpec(2, n_max, A, B)


def profile_terms(data: FinalData, phases: PhasePair, with_correction: bool = False,
                  n_max: int = DEFAULT_NMAX) -> List[ProfileTerm]:
    """Слагаемые u_ap (и v_ap при with_correction)."""
    terms = list(data.u_ap_terms(phases))
    if with_correction:
        terms += data.correction_terms(phases, n_max)
    return terms


# ---------------------------------------------------------------------------
# Поля в пространстве (t, x)
# ---------------------------------------------------------------------------

def spatial_points(t: float, points: int, dimension: int = 1):
    """Равномерная x-сетка на [-t, t] (тензорная в 2D, индексация ij)."""
    axis = np.linspace(-t, t, points)
    if dimension == 1:
        return axis
    return tuple(np.meshgrid(axis, axis, indexing="ij"))


def _field(terms: Sequence[ProfileTerm], data: FinalData, t: float, x, kind: str,
           points: int) -> ProfileField:
    if t < 1.0:
        raise DomainError(f"profile time must be >= 1, got {t!r}")
    if x is None:
        x = spatial_points(t, points, data.dimension)
    return ProfileField(t, x, sum_values(terms, t, x), kind, data.grid.cone_cut)


def uap_eval(data: FinalData, phases: PhasePair, t: float, x=None, points: int = 2049) -> ProfileField:
    """u_ap(t, x); вне |x| < t(1 - eps_cone) значения равны нулю."""
    return _field(data.u_ap_terms(phases), data, t, x, "u_ap", points)


def vap_eval(data: FinalData, phases: PhasePair, spec: CorrectionSpec, t: float, x=None,
             points: int = 2049) -> ProfileField:
    return _field(spec.terms(data.grid, phases), data, t, x, "v_ap", points)


def u_tilde_eval(data: FinalData, phases: PhasePair, t: float, x=None, n_max: int = DEFAULT_NMAX,
                 points: int = 2049) -> ProfileField:
    """u~ = u_ap + v_ap."""
    return _field(profile_terms(data, phases, True, n_max), data, t, x, "u_tilde", points)


# ---------------------------------------------------------------------------
# Нормы и проверки
# ---------------------------------------------------------------------------

def weighted_sobolev_norm(f: np.ndarray, k: int, s: float, grid: ZGrid) -> float:
    """sum_{|alpha| <= k} ||<z>^s d^alpha f||_{L^2}, производные спектральные."""
    if k not in (0, 1, 2):
        raise DomainError(f"derivative order k must be 0, 1 or 2, got {k!r}")
    f = np.asarray(f)
    if f.shape != grid.shape:
        raise ShapeError(f"samples {f.shape} do not match grid {grid.shape}")
    weight = grid.bracket ** s
    total = 0.0
    for alpha in itertools.product(range(k + 1), repeat=grid.dimension):
        if sum(alpha) <= k:
            total += grid.l2(weight * grid.derivative(f, alpha))
    return total


class AssumptionReport(BaseModel):
    ratio_ok: bool
    zeta_min: Optional[float] = None
    zeta_max: Optional[float] = None  # None: |B1| > 0 там, где A1 = 0
    split: bool = False  # носители A1 и B1 не пересекаются
    derivative_status: Literal["bounded", "unbounded_allowed", "violated", "degenerate"]
    sobolev_ok: bool
    norms: Dict[str, float] = Field(default_factory=dict)
    passed: bool
    notes: List[str] = Field(default_factory=list)


def _derivative_stats(zeta: np.ndarray, core: np.ndarray, spacing: float) -> Dict[str, float]:
    first = np.gradient(zeta, spacing)
    first = [first] if zeta.ndim == 1 else list(first)
    second_sq = np.zeros_like(zeta)
    for g in first:
        gg = np.gradient(g, spacing)
        for h in ([gg] if zeta.ndim == 1 else gg):
            second_sq += h * h
    grad = np.sqrt(sum(g * g for g in first))
    hess = np.sqrt(second_sq)
    cell = spacing ** zeta.ndim
    return {
        "sup1": float(np.max(grad[core], initial=0.0)),
        "sup2": float(np.max(hess[core], initial=0.0)),
        "l4": float((np.sum(grad[core] ** 4) * cell) ** 0.25),
        "l2": float(math.sqrt(np.sum(hess[core] ** 2) * cell)),
    }


def _derivative_status(zeta: np.ndarray, core: np.ndarray, grid: ZGrid) -> Tuple[str, Dict[str, float]]:
    """
    Сравнение разностных производных zeta на сетке h и 2h.

    sup не растёт (<= 5%) -> bounded; sup растёт, но L^4 нормы dzeta и
    L^2 нормы d^2 zeta почти нет (<= 1.5x) -> unbounded_allowed; иначе violated.
    """
    coarse = (slice(None, None, 2),) * zeta.ndim
    fine = _derivative_stats(zeta, core, grid.spacing)
    rough = _derivative_stats(zeta[coarse], core[coarse], 2.0 * grid.spacing)
    flat = 1e-8 * (1.0 + float(np.max(np.abs(zeta[core]), initial=0.0)))
    norms = {f"dzeta_{k}_h": v for k, v in fine.items()}
    norms.update({f"dzeta_{k}_2h": v for k, v in rough.items()})

    def steady(key: str, factor: float) -> bool:
        return fine[key] <= flat or fine[key] <= factor * rough[key]

    if steady("sup1", SUP_GROWTH) and steady("sup2", SUP_GROWTH):
        return "bounded", norms
    if steady("l4", NORM_GROWTH) and steady("l2", NORM_GROWTH):
        return "unbounded_allowed", norms
    return "violated", norms


def validate_assumption(data: FinalData) -> AssumptionReport:
    """
    Проверка условий на данные: (i) rho0^{-1}|A1| <= |B1| <= rho0|A1| на носителе,
    (ii) эвристика конечности производных zeta, (iii) конечность H^{2,2} норм A1, B1.
    Исключений не бросает: всё попадает в отчёт.
    """
    a = np.abs(data.A1)
    b = np.abs(data.B1)
    top = float(max(np.max(a, initial=0.0), np.max(b, initial=0.0)))
    notes: List[str] = []
    norms: Dict[str, float] = {}
    floor = THETA_FLOOR * top
    support = (a > floor) | (b > floor)
    rho = data.rho0
    slack = 1e-12
    if np.any(support):
        ok = (b[support] * rho >= a[support] * (1.0 - slack)) & (b[support] <= rho * a[support] * (1.0 + slack))
        ratio_ok = bool(np.all(ok))
    else:
        ratio_ok = False
        notes.append("final data vanish identically")
    both = (a > floor) & (b > floor)
    split = bool(not ratio_ok and np.any(support) and not np.any(both))
    if split:
        notes.append("supports of A1 and B1 are disjoint: split assumption applies")

    zeta_min = zeta_max = None
    if np.any(a > floor):
        quot = b[a > floor] / a[a > floor]
        zeta_min = float(np.min(quot))
        zeta_max = None if np.any((a <= floor) & (b > floor)) else float(np.max(quot))

    try:
        zeta, _ = zeta_and_alpha(data.A1, data.B1)
        core = a > CORE_LEVEL * float(np.max(a))
        status, growth = _derivative_status(zeta, core, data.grid)
        norms.update(growth)
    except KGError as exc:
        status = "degenerate"
        notes.append(str(exc))

    sobolev_ok = True
    for name, f in (("A1", data.A1), ("B1", data.B1)):
        value = weighted_sobolev_norm(f, 2, 2.0, data.grid)
        norms[f"H22_{name}"] = value
        sobolev_ok = sobolev_ok and math.isfinite(value) and value < SOBOLEV_CAP
    if status == "unbounded_allowed":
        notes.append("zeta derivatives grow under refinement while their L^4 / L^2 norms stay finite")

    passed = ratio_ok and status in ("bounded", "unbounded_allowed") and sobolev_ok
    report = AssumptionReport(ratio_ok=ratio_ok, zeta_min=zeta_min, zeta_max=zeta_max, split=split,
                              derivative_status=status, sobolev_ok=sobolev_ok, norms=norms,
                              passed=passed, notes=notes)
    logger.info("assumption check: ratio_ok=%s derivatives=%s sobolev_ok=%s", ratio_ok, status, sobolev_ok)
    return report


@dataclass(frozen=True)
class ImBound:
    minimum: float
    norms: Tuple[float, ...]
    applicable: bool
    reference: float  # (||A1||^2 + ||B1||^2)^{1/2}


def im_l2_lower_bound(data: FinalData, phases: PhasePair, t_list: Sequence[float],
                      n_max: int = DEFAULT_NMAX) -> ImBound:
    """min_t ||Im u~(t)||_{L^2_x}; критерий применим, только если |A1| != |B1| на множестве меры > 0."""
    ts = [float(t) for t in t_list]
    if not ts or min(ts) < 1.0:
        raise DomainError("t samples must be non-empty and >= 1")
    grid = data.grid
    a = np.abs(data.A1)
    b = np.abs(data.B1)
    tol = 1e-6 * float(max(np.max(a), np.max(b), 1e-300))
    applicable = bool(np.count_nonzero(np.abs(a - b) > tol) > 0)
    terms = profile_terms(data, phases, True, n_max)
    norms = tuple(norm_change_of_variables(sum_values(terms, t).imag, t, grid) for t in ts)
    reference = math.sqrt(grid.l2(data.A1) ** 2 + grid.l2(data.B1) ** 2)
    return ImBound(float(min(norms)), norms, applicable, reference)


@dataclass(frozen=True)
class PhaseDiagnostics:
    grad_a: float  # ||<z>^3 grad S_A||_{L^4}
    hess_a: float  # ||<z>^5 |A1| d^2 S_A||_{L^2}
    grad_b: float
    hess_b: float


def phase_derivative_diagnostics(data: FinalData, phases: PhasePair) -> PhaseDiagnostics:
    grid = data.grid
    c = grid.bracket

    def pair(S: np.ndarray, amp: np.ndarray) -> Tuple[float, float]:
        grad = np.sqrt(sum(g * g for g in grid.gradient(S)))
        hess = grid.hessian(S)
        frob = np.sqrt(sum(hess[i][j] ** 2 for i in range(grid.dimension) for j in range(grid.dimension)))
        l4 = grid.integrate((c ** 3 * grad) ** 4) ** 0.25
        return float(l4), grid.l2(c ** 5 * np.abs(amp) * frob)

    ga, ha = pair(phases.S_A, data.A1)
    gb, hb = pair(phases.S_B, data.B1)
    return PhaseDiagnostics(ga, ha, gb, hb)
