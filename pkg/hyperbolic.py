"""
Гиперболические координаты внутри светового конуса и оператор (box + 1).

t = tau cosh(sigma), x = tau sinh(sigma) (в 2D x = tau sinh(sigma) (cos w, sin w)),
theta = -tau, mu = sinh(sigma) (omega).

Профиль задаётся набором слагаемых t^{-a} Amp(mu) e^{ik theta + i S(mu) log t}.
Для каждого слагаемого (box + 1) вычисляется аналитически через
разложение на f1, f2, R1, R2; производные амплитуд и фаз по z берутся
спектрально на равномерной z-сетке. Норма L^2_x считается заменой
переменных x = t z / <z> прямо на z-сетке, без интерполяции.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from errors import CapabilityError, DomainError, FitError, OutsideConeError, ShapeError

if TYPE_CHECKING:
    from profiles import FinalData, PhasePair

logger = logging.getLogger(__name__)

T_RANGE = (3.0, 1.0e4)
VARIANTS = ("with_correction", "without_correction", "resonant_cancellation")
DEFAULT_Q = {"with_correction": 2.0, "without_correction": 0.0, "resonant_cancellation": 2.0}
# окна приёмки показателя p при q по умолчанию
DECAY_WINDOWS = {
    (1, "with_correction"): (1.8, 2.3), (1, "without_correction"): (0.85, 1.15),
    (2, "with_correction"): (1.7, 2.4), (2, "without_correction"): (0.8, 1.2),
}

Points = Union[np.ndarray, Tuple[np.ndarray, np.ndarray]]


# ---------------------------------------------------------------------------
# z-сетка
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ZGrid:
    """Uniform symmetric grid in z = mu, tensor product in 2D (ij indexing)."""
    dimension: int
    axis: np.ndarray

    def __post_init__(self) -> None:
        if self.dimension not in (1, 2):
            raise DomainError(f"dimension must be 1 or 2, got {self.dimension!r}")
        axis = np.asarray(self.axis, dtype=float)
        if axis.ndim != 1 or axis.size < 5:
            raise ShapeError("grid axis must be one-dimensional with at least 5 points")
        if not np.allclose(np.diff(axis), axis[1] - axis[0], rtol=1e-9, atol=0.0):
            raise ShapeError("grid axis must be uniform")
        object.__setattr__(self, "axis", axis)

    @classmethod
    def symmetric(cls, half_width: float, points: int, dimension: int = 1) -> "ZGrid":
        return cls(dimension, np.linspace(-half_width, half_width, points))

    @property
    def spacing(self) -> float:
        return float(self.axis[1] - self.axis[0])

    @property
    def half_width(self) -> float:
        return float(np.max(np.abs(self.axis)))

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.axis.size,) * self.dimension

    @property
    def symmetric_axis(self) -> bool:
        return bool(np.allclose(self.axis, -self.axis[::-1], rtol=0.0, atol=1e-12 * self.half_width))

    @cached_property
    def coords(self) -> Tuple[np.ndarray, ...]:
        if self.dimension == 1:
            return (self.axis,)
        return tuple(np.meshgrid(self.axis, self.axis, indexing="ij"))

    @cached_property
    def radius2(self) -> np.ndarray:
        return sum(z * z for z in self.coords)

    @cached_property
    def bracket(self) -> np.ndarray:
        """<z> = sqrt(1 + |z|^2)."""
        return np.sqrt(1.0 + self.radius2)

    @property
    def cone_cut(self) -> float:
        """eps_cone such that |x| <= t (1 - eps_cone) is |mu| <= half_width."""
        z = self.half_width
        return 1.0 - z / math.sqrt(1.0 + z * z)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values) * self.spacing ** self.dimension)

    def l2(self, values: np.ndarray) -> float:
        return math.sqrt(self.integrate(np.abs(values) ** 2))

    @cached_property
    def _wavenumbers(self) -> Tuple[np.ndarray, ...]:
        k = 2.0 * np.pi * np.fft.fftfreq(self.axis.size, d=self.spacing)
        if self.dimension == 1:
            return (k,)
        return tuple(np.meshgrid(k, k, indexing="ij"))

    def derivative(self, f: np.ndarray, order: Sequence[int]) -> np.ndarray:
        """Спектральная производная d^{order} f (данные должны затухать к краям сетки)."""
        order = tuple(order)
        if len(order) != self.dimension:
            raise ShapeError(f"derivative order {order} does not match dimension {self.dimension}")
        if not any(order):
            return np.array(f, copy=True)
        multiplier = np.ones(self.shape, dtype=complex)
        for k, a in zip(self._wavenumbers, order):
            multiplier = multiplier * (1j * k) ** a
        out = np.fft.ifftn(np.fft.fftn(f) * multiplier)
        return out.real if np.isrealobj(f) else out

    def gradient(self, f: np.ndarray) -> List[np.ndarray]:
        eye = np.eye(self.dimension, dtype=int)
        return [self.derivative(f, row) for row in eye]

    def hessian(self, f: np.ndarray) -> List[List[np.ndarray]]:
        eye = np.eye(self.dimension, dtype=int)
        out = [[None] * self.dimension for _ in range(self.dimension)]
        for i in range(self.dimension):
            for j in range(i, self.dimension):
                out[i][j] = out[j][i] = self.derivative(f, eye[i] + eye[j])
        return out

    def radial(self, grad: Sequence[np.ndarray]) -> np.ndarray:
        """z . grad."""
        return sum(z * g for z, g in zip(self.coords, grad))

    def image_points(self, t: float) -> Points:
        """x = t z / <z>: точки в пространстве, куда отображается z-сетка в момент t."""
        pts = tuple(t * z / self.bracket for z in self.coords)
        return pts[0] if self.dimension == 1 else pts


# ---------------------------------------------------------------------------
# Координаты
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HyperbolicPoint:
    tau: Union[float, np.ndarray]
    sigma: Union[float, np.ndarray]
    omega: Optional[Union[float, np.ndarray]] = None

    @property
    def theta(self):
        return -self.tau

    @property
    def mu(self):
        if self.omega is None:
            return np.sinh(self.sigma)
        r = np.sinh(self.sigma)
        return r * np.cos(self.omega), r * np.sin(self.omega)


def _radius(x) -> np.ndarray:
    if isinstance(x, tuple):
        return np.hypot(np.asarray(x[0], dtype=float), np.asarray(x[1], dtype=float))
    return np.abs(np.asarray(x, dtype=float))


def to_hyperbolic(t: float, x) -> HyperbolicPoint:
    """(t, x) -> (tau, sigma[, omega]); x - число/массив (1D) или пара массивов (2D)."""
    t = float(t)
    r = _radius(x)
    if not np.all(r < t):
        raise OutsideConeError(f"point outside the light cone: max |x| = {float(np.max(r))!r} >= t = {t!r}")
    tau = np.sqrt((t - r) * (t + r))
    sigma = 0.5 * np.log((t + r) / (t - r))
    if isinstance(x, tuple):
        omega = np.mod(np.arctan2(x[1], x[0]), 2.0 * np.pi)
        return HyperbolicPoint(tau, sigma, omega)
    return HyperbolicPoint(tau, np.sign(np.asarray(x, dtype=float)) * sigma)


def from_hyperbolic(p: HyperbolicPoint):
    t = p.tau * np.cosh(p.sigma)
    if p.omega is None:
        return t, p.tau * np.sinh(p.sigma)
    r = p.tau * np.sinh(p.sigma)
    return t, (r * np.cos(p.omega), r * np.sin(p.omega))


def norm_change_of_variables(values: np.ndarray, t: float, grid: ZGrid) -> float:
    """||v(t)||_{L^2_x} = t^{d/2} || <z>^{-(d+2)/2} v(z, t/<z>) ||_{L^2_z}."""
    d = grid.dimension
    weight = grid.bracket ** (-(d + 2) / 2.0)
    return t ** (d / 2.0) * grid.l2(weight * values)


# ---------------------------------------------------------------------------
# Амплитуда с фазой и разложение (box + 1)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AmplitudePhase:
    """H(z, tau) = Amp(z) exp(i S(z) (log tau + log <z>)) с производными по z."""
    grid: ZGrid
    amp: np.ndarray
    phase: np.ndarray
    amp_grad: Optional[List[np.ndarray]] = None
    amp_hess: Optional[List[List[np.ndarray]]] = None
    phase_grad: Optional[List[np.ndarray]] = None
    phase_hess: Optional[List[List[np.ndarray]]] = None

    @classmethod
    def from_samples(cls, grid: ZGrid, amp: np.ndarray, phase: np.ndarray) -> "AmplitudePhase":
        amp = np.asarray(amp, dtype=complex)
        phase = np.asarray(phase, dtype=float)
        if amp.shape != grid.shape or phase.shape != grid.shape:
            raise ShapeError(f"samples {amp.shape}/{phase.shape} do not match grid {grid.shape}")
        return cls(grid, amp, phase, grid.gradient(amp), grid.hessian(amp),
                   grid.gradient(phase), grid.hessian(phase))

    @property
    def has_derivatives(self) -> bool:
        return None not in (self.amp_grad, self.amp_hess, self.phase_grad, self.phase_hess)

    def log_t(self, tau) -> np.ndarray:
        return np.log(tau) + np.log(self.grid.bracket)

    def value(self, tau) -> np.ndarray:
        return self.amp * np.exp(1j * self.phase * self.log_t(tau))


@dataclass(frozen=True, eq=False)
class BoxComponents:
    n: int
    m: float
    tau: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    R1: np.ndarray
    R2: np.ndarray

    def assemble(self, t: float, dimension: int) -> np.ndarray:
        """t^{-d/2-1} e^{in tau}(f1+f2) + t^{-d/2-1-m} e^{in tau} R1 + t^{-d/2-2-m} e^{in tau} R2."""
        osc = np.exp(1j * self.n * self.tau)
        base = -dimension / 2.0 - 1.0
        return osc * (t ** base * (self.f1 + self.f2)
                      + t ** (base - self.m) * self.R1
                      + t ** (base - 1.0 - self.m) * self.R2)


def _spatial_part(h: AmplitudePhase, tau, m: float) -> np.ndarray:
    """Delta K + z^T (nabla^2 K) z для K = <z>^{-m} H при фиксированном tau."""
    g = h.grid
    d = g.dimension
    z = g.coords
    c2 = 1.0 + g.radius2
    ell = 0.5 * np.log(c2)
    log_t = np.log(tau) + ell
    grad_ell = [zi / c2 for zi in z]
    S = h.phase
    psi_grad = [1j * h.phase_grad[i] * log_t + (1j * S - m) * grad_ell[i] for i in range(d)]
    e = np.exp(1j * S * log_t - m * ell)
    lap = np.zeros(g.shape, dtype=complex)
    quad = np.zeros(g.shape, dtype=complex)
    for i in range(d):
        for j in range(d):
            hess_ell = (1.0 / c2 if i == j else 0.0) - 2.0 * z[i] * z[j] / (c2 * c2)
            psi_hess = (1j * h.phase_hess[i][j] * log_t
                        + 1j * (h.phase_grad[i] * grad_ell[j] + grad_ell[i] * h.phase_grad[j])
                        + (1j * S - m) * hess_ell)
            k_hess = e * (h.amp_hess[i][j] + h.amp_grad[i] * psi_grad[j] + psi_grad[i] * h.amp_grad[j]
                          + h.amp * (psi_hess + psi_grad[i] * psi_grad[j]))
            if i == j:
                lap = lap + k_hess
            quad = quad + z[i] * z[j] * k_hess
    return lap + quad


def box_decompose(n: int, m: float, h: AmplitudePhase, tau, dimension: Optional[int] = None) -> BoxComponents:
    """
    Компоненты (box + 1)[t^{-d/2-m} e^{in tau} H(z, tau)]:

    f1 = (1 - n^2) (tau <z>)^{1-m} H,   f2 = 2in (tau <z>)^{1-m} H_tau,
    R1 = m <z> (-2in H - 2 H_tau + (m+1) H / tau),
    R2 = <z>^2 tau^2 H_tautau + (d/2)(d/2+1) H - <z>^{2+m} (Delta K + z^T nabla^2 K z).
    """
    d = h.grid.dimension
    if dimension is not None and dimension != d:
        raise ShapeError(f"amplitude table is {d}D, requested {dimension}D")
    if not h.has_derivatives:
        raise CapabilityError("box decomposition needs first and second z-derivatives of amplitude and phase")
    tau = np.broadcast_to(np.asarray(tau, dtype=float), h.grid.shape)
    c = h.grid.bracket
    H = h.value(tau)
    S = h.phase
    H_tau = 1j * S * H / tau
    H_tautau = (-S * S - 1j * S) * H / (tau * tau)
    scale = (tau * c) ** (1.0 - m)
    f1 = (1.0 - n * n) * scale * H
    f2 = 2j * n * scale * H_tau
    R1 = m * c * (-2j * n * H - 2.0 * H_tau + (m + 1.0) * H / tau)
    R2 = (c * c * tau * tau * H_tautau + (d / 2.0) * (d / 2.0 + 1.0) * H
          - c ** (2.0 + m) * _spatial_part(h, tau, m))
    return BoxComponents(n, m, tau, f1, f2, R1, R2)


# ---------------------------------------------------------------------------
# Слагаемые профиля
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProfileField:
    """Значения поля в момент t; вне конуса |x| < t(1 - cone_cut) ровно ноль."""
    t: float
    x: Points
    values: np.ndarray
    kind: str
    cone_cut: float


@dataclass(frozen=True, eq=False)
class ProfileTerm:
    """t^{-power} Amp(mu) exp(i osc theta + i S(mu) log t)."""
    power: float
    osc: int
    h: AmplitudePhase
    label: str = ""

    @property
    def grid(self) -> ZGrid:
        return self.h.grid

    @property
    def m(self) -> float:
        return self.power - self.grid.dimension / 2.0

    def _phase_factor(self, t: float, theta, S) -> np.ndarray:
        return t ** (-self.power) * np.exp(1j * self.osc * theta + 1j * S * math.log(t))

    def value(self, t: float) -> np.ndarray:
        """На z-сетке: в точках x = t z / <z>, где theta = -t / <z>."""
        c = self.grid.bracket
        return self._phase_factor(t, -t / c, self.h.phase) * self.h.amp

    def dt(self, t: float) -> np.ndarray:
        """Аналитическая производная по t при фиксированном x, на z-сетке."""
        g = self.grid
        c = g.bracket
        rho_amp = g.radial(self.h.amp_grad)
        rho_phase = g.radial(self.h.phase_grad)
        amp, S = self.h.amp, self.h.phase
        bracket = (-self.power * amp / t - (c * c / t) * rho_amp
                   + 1j * amp * (-self.osc * c - (c * c / t) * rho_phase * math.log(t) + S / t))
        return self._phase_factor(t, -t / c, S) * bracket

    def box(self, t: float) -> np.ndarray:
        """(box + 1) слагаемого на z-сетке."""
        tau = t / self.grid.bracket
        parts = box_decompose(-self.osc, self.m, self.h, tau)
        return parts.assemble(t, self.grid.dimension)

    # --- вне сетки: интерполяция по mu ---

    @cached_property
    def _splines(self) -> Dict[str, object]:
        g = self.grid
        amp_grad = self.h.amp_grad if self.h.amp_grad is not None else g.gradient(self.h.amp)
        phase_grad = self.h.phase_grad if self.h.phase_grad is not None else g.gradient(self.h.phase)
        tables = {
            "amp": self.h.amp,
            "phase": self.h.phase.astype(complex),
            "rho_amp": g.radial(amp_grad),
            "rho_phase": g.radial(phase_grad).astype(complex),
        }
        if g.dimension == 1:
            return {k: CubicSpline(g.axis, v) for k, v in tables.items()}
        return {k: (RectBivariateSpline(g.axis, g.axis, v.real), RectBivariateSpline(g.axis, g.axis, v.imag))
                for k, v in tables.items()}

    def _interp(self, name: str, mu) -> np.ndarray:
        spline = self._splines[name]
        if self.grid.dimension == 1:
            return spline(mu)
        re, im = spline
        return re.ev(mu[0], mu[1]) + 1j * im.ev(mu[0], mu[1])

    def _local(self, t: float, x):
        r = _radius(x)
        inside = r < t * (1.0 - self.grid.cone_cut)
        tau = np.sqrt(np.where(inside, (t - r) * (t + r), 1.0))
        if self.grid.dimension == 1:
            mu = np.where(inside, np.asarray(x, dtype=float) / tau, 0.0)
        else:
            mu = tuple(np.where(inside, np.asarray(xi, dtype=float) / tau, 0.0) for xi in x)
        return inside, tau, mu

    def value_at(self, t: float, x) -> np.ndarray:
        inside, tau, mu = self._local(t, x)
        amp = self._interp("amp", mu)
        S = self._interp("phase", mu).real
        return np.where(inside, self._phase_factor(t, -tau, S) * amp, 0.0)

    def dt_at(self, t: float, x) -> np.ndarray:
        """d/dt при фиксированном x: d_t theta = -t/tau, d_t mu = -mu t / tau^2."""
        inside, tau, mu = self._local(t, x)
        amp = self._interp("amp", mu)
        S = self._interp("phase", mu).real
        rho_amp = self._interp("rho_amp", mu)
        rho_phase = self._interp("rho_phase", mu).real
        w = t / (tau * tau)
        bracket = (-self.power * amp / t - w * rho_amp
                   + 1j * amp * (-self.osc * t / tau - w * rho_phase * math.log(t) + S / t))
        return np.where(inside, self._phase_factor(t, -tau, S) * bracket, 0.0)


def sum_values(terms: Sequence[ProfileTerm], t: float, x=None) -> np.ndarray:
    if not terms:
        raise DomainError("empty term list")
    if x is None:
        return sum(term.value(t) for term in terms)
    return sum(term.value_at(t, x) for term in terms)


def sum_dt(terms: Sequence[ProfileTerm], t: float, x=None) -> np.ndarray:
    if x is None:
        return sum(term.dt(t) for term in terms)
    return sum(term.dt_at(t, x) for term in terms)


def nonlinearity(u: np.ndarray, coupling: float, power: int) -> np.ndarray:
    """N(u) = lambda |u|^{p-1} u."""
    return coupling * np.abs(u) ** (power - 1) * u


# ---------------------------------------------------------------------------
# Резонансное расщепление и невязка
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ResonantSplit:
    full: ProfileField
    resonant: ProfileField
    nonresonant: ProfileField

    @property
    def defect(self) -> np.ndarray:
        return self.full.values - self.resonant.values - self.nonresonant.values


def resonant_split(data: "FinalData", phases: "PhasePair", t: float, x=None,
                   n_max: int = 16) -> ResonantSplit:
    """
    N(u_ap) = N_r + N_nr.

    N_r = t^{-d/2-1} [2<mu> S_A A1 e^{i theta + i S_A log t} - 2<mu> S_B B1 e^{-i theta + i S_B log t}],
    N_nr - моды e^{+-i(2n-1) theta}, n >= 2 (в 2D до n_max).
    Без x поля считаются на образе z-сетки.
    """
    if t < 1.0:
        raise DomainError(f"time must be >= 1, got {t!r}")
    grid = data.grid
    u = sum_values(data.u_ap_terms(phases), t, x)
    full = nonlinearity(u, data.coupling, data.power)
    resonant = sum_values(data.resonant_terms(phases), t, x)
    nonres_terms = data.nonresonant_terms(phases, n_max)
    nonresonant = sum_values(nonres_terms, t, x) if nonres_terms else np.zeros_like(full)
    points = grid.image_points(t) if x is None else x
    eps = grid.cone_cut
    return ResonantSplit(
        ProfileField(t, points, full, "N_full", eps),
        ProfileField(t, points, resonant, "N_r", eps),
        ProfileField(t, points, nonresonant, "N_nr", eps),
    )


def residual_field(data: "FinalData", phases: "PhasePair", variant: str, t: float,
                   n_max: int = 16) -> np.ndarray:
    """(box + 1) u~ - N(u~) на z-сетке; resonant_cancellation: (box + 1) u_ap - N_r."""
    if variant not in VARIANTS:
        raise DomainError(f"unknown residual variant {variant!r}")
    terms = list(data.u_ap_terms(phases))
    if variant == "with_correction":
        terms += data.correction_terms(phases, n_max)
    box = sum(term.box(t) for term in terms)
    if variant == "resonant_cancellation":
        return box - sum_values(data.resonant_terms(phases), t)
    return box - nonlinearity(sum_values(terms, t), data.coupling, data.power)


@dataclass(frozen=True)
class ResidualReport:
    variant: str
    t_samples: Tuple[float, ...]
    norms: Tuple[float, ...]
    q: float
    p: Optional[float] = None
    C: Optional[float] = None
    window: Optional[Tuple[float, float]] = None
    n_max: int = 16

    def rows(self) -> List[Tuple[float, float]]:
        return list(zip(self.t_samples, self.norms))


def fit_decay(ts: Sequence[float], norms: Sequence[float], q: float) -> Tuple[float, float]:
    """log r = log C - p log t + q log log t при фиксированном q; возвращает (C, p)."""
    ts = np.asarray(ts, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if ts.size < 3 or np.any(norms <= 0.0) or np.any(ts <= 1.0):
        raise FitError("decay fit needs at least 3 positive samples with t > 1")
    design = np.column_stack([np.ones_like(ts), -np.log(ts)])
    target = np.log(norms) - q * np.log(np.log(ts))
    coef, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < 2:
        raise FitError("decay fit is rank deficient")
    return float(math.exp(coef[0])), float(coef[1])


def residual_norms(data: "FinalData", phases: "PhasePair", variant: str, t_list: Sequence[float],
                   n_max: int = 16, q: Optional[float] = None, drop_decades: float = 1.0,
                   threads: int = 1) -> ResidualReport:
    """
    ||(box + 1) u~ - N(u~)||_{L^2_x}(t) и подгонка C t^{-p} (log t)^q.

    Окно подгонки: t >= t_min * 10^{drop_decades}. При плохой обусловленности
    FitError несёт отчёт с сырыми нормами.
    """
    ts = np.asarray(t_list, dtype=float)
    if ts.size == 0 or np.any(np.diff(ts) <= 0.0):
        raise DomainError("t samples must be strictly increasing")
    if ts[0] < T_RANGE[0] or ts[-1] > T_RANGE[1]:
        raise DomainError(f"t samples must lie in [{T_RANGE[0]:g}, {T_RANGE[1]:g}]")
    if variant not in VARIANTS:
        raise DomainError(f"unknown residual variant {variant!r}")
    q = DEFAULT_Q[variant] if q is None else float(q)

    def one(t: float) -> float:
        return norm_change_of_variables(residual_field(data, phases, variant, t, n_max), t, data.grid)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        norms = tuple(pool.map(one, ts.tolist()))
    report = ResidualReport(variant, tuple(ts.tolist()), norms, q, n_max=n_max)

    t_lo = ts[0] * 10.0 ** drop_decades
    mask = ts >= t_lo * (1.0 - 1e-12)
    if np.count_nonzero(mask) < 3:
        raise FitError(f"fit window t >= {t_lo:g} holds fewer than 3 samples", report)
    try:
        C, p = fit_decay(ts[mask], np.asarray(norms)[mask], q)
    except FitError as exc:
        raise FitError(str(exc), report) from exc
    logger.info("residual %s: p=%.3f (q=%g) over [%g, %g]", variant, p, q, ts[mask][0], ts[mask][-1])
    return ResidualReport(variant, report.t_samples, norms, q, p, C,
                          (float(ts[mask][0]), float(ts[mask][-1])), n_max)
