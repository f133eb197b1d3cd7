"""
Коэффициенты резонансного разложения L_n(zeta).

N(1 + zeta e^{-i Theta}) = sum_n L_n(zeta) e^{i n Theta}, нелинейность без
множителя lambda: |w|^2 w в 1D (кубическая) и |w| w в 2D (квадратичная).

Три независимых способа:
- квадратура (трапеция по периоду через FFT, удвоение узлов);
- замкнутые формулы через K, E для L_0 и его производных (2D);
- символьная таблица (1D, многочлены numpy).
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate

from elliptic import ellip_KE_of_zeta
from errors import AccuracyError, DomainError

logger = logging.getLogger(__name__)

NODES_START = 64
NODES_CAP = 2 ** 20
QUAD_TOL = 1e-12
ONE_BRANCH = 1e-4          # |zeta - 1| below this: closed forms go to quadrature
UNDERFLOW_FLOOR = 1e-14
GRID_GAP = 1e-3            # uniform_bound_check keeps zeta this far from 1

Method = Literal["quadrature", "closed_form", "symbolic"]

# степень нелинейности p: |u|^{p-1} u
POWER = {1: 3, 2: 2}

# 1D: |w|^2 w = sum L_n e^{in Theta}, n in {-2, -1, 0, 1}
CUBIC_TABLE: Dict[int, Polynomial] = {
    -2: Polynomial([0.0, 0.0, 1.0]),
    -1: Polynomial([0.0, 2.0, 0.0, 1.0]),
    0: Polynomial([1.0, 0.0, 2.0]),
    1: Polynomial([0.0, 1.0]),
}


def _check_dimension(dimension: int) -> int:
    if dimension not in POWER:
        raise DomainError(f"dimension must be 1 or 2, got {dimension!r}")
    return dimension


def _check_zeta(zeta: float) -> float:
    zeta = float(zeta)
    if not math.isfinite(zeta) or zeta <= 0.0:
        raise DomainError(f"ratio zeta must be positive, got {zeta!r}")
    return zeta


@dataclass(frozen=True)
class QuadratureResult:
    """Результат квадратуры: значения по n, мнимый остаток, число узлов."""
    values: Dict[int, float]
    im_residue: float
    nodes: int


@dataclass(frozen=True)
class CoeffTable:
    dimension: int
    ns: Tuple[int, ...]
    zeta: float
    values: Dict[int, float]
    method: Method
    derivative_order: int = 0
    im_residue: float = 0.0

    def __getitem__(self, n: int) -> float:
        return self.values.get(n, 0.0) if self.dimension == 1 else self.values[n]

    def rows(self) -> List[Tuple[int, float, float, str, float]]:
        """Строки CSV: n, zeta, value, method, im_residue."""
        return [(n, self.zeta, self.values[n], self.method, self.im_residue) for n in self.ns]


# ---------------------------------------------------------------------------
# Квадратура
# ---------------------------------------------------------------------------

def _samples(zeta: float, dimension: int, nodes: int, order: int = 0) -> np.ndarray:
    """d^order/dzeta^order of |w|^{p-1} w at the trapezoid nodes, w = 1 + zeta e^{-i Theta}."""
    theta = 2.0 * np.pi * np.arange(nodes) / nodes
    return _integrand(theta, zeta, dimension, order)


def _integrand(theta: np.ndarray, zeta: float, dimension: int, order: int) -> np.ndarray:
    q = 0.5 * (POWER[dimension] - 1)
    e = np.exp(-1j * theta)
    w = 1.0 + zeta * e
    r = 1.0 + zeta * zeta + 2.0 * zeta * np.cos(theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = r ** q
        if order == 0:
            return g * w
        dr = 2.0 * (zeta + np.cos(theta))
        g1 = q * r ** (q - 1.0) * dr
        if order == 1:
            return g1 * w + g * e
        g2 = q * (q - 1.0) * r ** (q - 2.0) * dr * dr + 2.0 * q * r ** (q - 1.0)
        return g2 * w + 2.0 * g1 * e


def _start_nodes(ns: Sequence[int]) -> int:
    need = 4 * max((abs(n) for n in ns), default=0)
    nodes = NODES_START
    while nodes < need:
        nodes *= 2
    return nodes


def _coefficients(samples: np.ndarray, ns: Sequence[int]) -> np.ndarray:
    spectrum = np.fft.fft(samples) / samples.size
    return spectrum[np.asarray(ns, dtype=int) % samples.size]


def ln_quadrature_report(ns: Iterable[int], zeta: float, dimension: int, order: int = 0,
                         nodes: Optional[int] = None) -> QuadratureResult:
    """
    Трапеция на периоде с удвоением узлов от 64 до 2^20.

    Сходимость: последовательные значения совпадают до 1e-12 (в масштабе
    среднего |f|). Если nodes задан, считается ровно на этой сетке, что
    нужно для согласованных разностных шаблонов по zeta.
    """
    ns = tuple(int(n) for n in ns)
    zeta = _check_zeta(zeta)
    _check_dimension(dimension)
    if nodes is not None:
        f = _samples(zeta, dimension, nodes, order)
        c = _coefficients(f, ns)
        return QuadratureResult(dict(zip(ns, c.real.tolist())), float(np.max(np.abs(c.imag), initial=0.0)), nodes)

    n_nodes = _start_nodes(ns)
    f = _samples(zeta, dimension, n_nodes, order)
    prev = _coefficients(f, ns)
    change = float("inf")
    while n_nodes < NODES_CAP:
        n_nodes *= 2
        f = _samples(zeta, dimension, n_nodes, order)
        cur = _coefficients(f, ns)
        scale = max(1.0, float(np.mean(np.abs(f))))
        change = float(np.max(np.abs(cur - prev), initial=0.0))
        if change <= QUAD_TOL * scale:
            logger.debug("L_n quadrature: zeta=%g d=%d converged at %d nodes", zeta, dimension, n_nodes)
            return QuadratureResult(dict(zip(ns, cur.real.tolist())),
                                    float(np.max(np.abs(cur.imag), initial=0.0)), n_nodes)
        prev = cur
    raise AccuracyError(
        f"L_n quadrature at zeta={zeta!r}, d={dimension} not converged at {NODES_CAP} nodes "
        f"(last change {change:.3e})", nodes=NODES_CAP, last_change=change)


def ln_quadrature(n: int, zeta: float, dimension: int) -> float:
    """L_n(zeta) = (1/2pi) int_0^{2pi} |w|^{p-1} w e^{-in Theta} dTheta."""
    return ln_quadrature_report((n,), zeta, dimension).values[int(n)]


def cubic_coeff(n: int, zeta: float, order: int = 0) -> float:
    """1D table: zeta^2, zeta^3 + 2 zeta, 1 + 2 zeta^2, zeta for n = -2..1; zero otherwise."""
    poly = CUBIC_TABLE.get(int(n))
    if poly is None:
        return 0.0
    return float(poly.deriv(order)(zeta)) if order else float(poly(zeta))


def ln_exact_at_one(n: int, dimension: int = 2) -> float:
    """L_n(1) in closed form: -16 (-1)^n / (pi m (m^2 - 4)), m = 2n + 1 (2D)."""
    if _check_dimension(dimension) == 1:
        return cubic_coeff(n, 1.0)
    m = 2 * int(n) + 1
    sign = -1.0 if n % 2 == 0 else 1.0
    return sign * 16.0 / (math.pi * m * (m * m - 4))


def ln_table(ns: Iterable[int], zeta: float, dimension: int, derivative_order: int = 0,
             method: Method = "quadrature") -> CoeffTable:
    """Таблица L_n^{(k)}(zeta) по списку n выбранным методом."""
    ns = tuple(int(n) for n in ns)
    zeta = _check_zeta(zeta)
    _check_dimension(dimension)
    if derivative_order not in (0, 1, 2):
        raise DomainError(f"derivative order must be 0, 1 or 2, got {derivative_order!r}")

    if method == "symbolic":
        if dimension != 1:
            raise DomainError("symbolic table exists only for the 1D cubic nonlinearity")
        values = {n: cubic_coeff(n, zeta, derivative_order) for n in ns}
        return CoeffTable(dimension, ns, zeta, values, method, derivative_order)

    if method == "closed_form":
        if dimension != 2 or any(n != 0 for n in ns):
            raise DomainError("closed form covers only L_0 of the 2D nonlinearity")
        value = l0_closed(zeta) if derivative_order == 0 else l0_deriv(zeta, derivative_order)
        return CoeffTable(dimension, ns, zeta, {0: value}, method, derivative_order)

    report = ln_quadrature_report(ns, zeta, dimension, order=derivative_order)
    return CoeffTable(dimension, ns, zeta, report.values, "quadrature", derivative_order, report.im_residue)


def ln_matrix(ns: Sequence[int], zetas: np.ndarray, dimension: int) -> np.ndarray:
    """L_n(zeta_j) для массива zeta: shape zetas.shape + (len(ns),). Повторы считаются один раз."""
    zetas = np.asarray(zetas, dtype=float)
    ns = tuple(int(n) for n in ns)
    flat = zetas.ravel()
    unique, inverse = np.unique(flat, return_inverse=True)
    out = np.empty((unique.size, len(ns)))
    for j, z in enumerate(unique):
        if dimension == 1:
            out[j] = [cubic_coeff(n, z) for n in ns]
        else:
            vals = ln_quadrature_report(ns, z, dimension).values
            out[j] = [vals[n] for n in ns]
    return out[inverse].reshape(zetas.shape + (len(ns),))


# ---------------------------------------------------------------------------
# Замкнутые формулы для L_0 (2D)
# ---------------------------------------------------------------------------

def _l0_closed_raw(zeta: np.ndarray) -> np.ndarray:
    K, E = ellip_KE_of_zeta(zeta)
    return ((1.0 + zeta) * (7.0 + zeta ** 2) * E - (1.0 + zeta) * (1.0 - zeta) ** 2 * K) / (3.0 * math.pi)


def _l0_d1_raw(zeta: np.ndarray) -> np.ndarray:
    K, E = ellip_KE_of_zeta(zeta)
    return ((zeta + 1.0) * (zeta ** 2 + 1.0) * E - (zeta + 1.0) * (zeta - 1.0) ** 2 * K) / (math.pi * zeta)


def _l0_d2_raw(zeta: np.ndarray) -> np.ndarray:
    K, E = ellip_KE_of_zeta(zeta)
    return ((zeta + 1.0) * (2.0 * zeta ** 2 - 1.0) * E
            - (zeta - 1.0) * (2.0 * zeta ** 2 + 1.0) * K) / (math.pi * zeta ** 2)


def _l0_under_integral(zeta: float, order: int) -> float:
    """(1/pi) int_0^pi Re d^k/dzeta^k (|w| w) dTheta; подынтегральное выражение ограничено и при zeta = 1."""
    def real_part(theta: float) -> float:
        return float(np.real(_integrand(np.array([theta]), zeta, 2, order))[0])

    value, _ = integrate.quad(real_part, 0.0, math.pi, epsabs=1e-14, epsrel=1e-13, limit=200)
    return value / math.pi


def _branch(zeta: Union[float, np.ndarray], closed, near_one) -> Union[float, np.ndarray]:
    arr = np.asarray(zeta, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise DomainError("ratio zeta must be finite and positive")
    z = arr.ravel()
    near = np.abs(z - 1.0) < ONE_BRANCH
    out = np.empty_like(z)
    if np.any(~near):
        out[~near] = closed(z[~near])
    for j in np.flatnonzero(near):
        out[j] = near_one(float(z[j]))
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def l0_closed(zeta: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    L_0(zeta) = (1+zeta)(7+zeta^2)/(3 pi) E(k) - (1+zeta)(1-zeta)^2/(3 pi) K(k), k = k(zeta).

    При |zeta - 1| < 1e-4 произведение (1-zeta)^2 K не вычисляется,
    значение берётся из квадратуры.
    """
    return _branch(zeta, _l0_closed_raw, lambda z: ln_quadrature(0, z, 2))


def l0_deriv(zeta: Union[float, np.ndarray], order: int) -> Union[float, np.ndarray]:
    """L_0'(zeta), L_0''(zeta) по замкнутым формулам; около zeta = 1 дифференцирование под интегралом."""
    if order == 1:
        return _branch(zeta, _l0_d1_raw, lambda z: _l0_under_integral(z, 1))
    if order == 2:
        return _branch(zeta, _l0_d2_raw, lambda z: _l0_under_integral(z, 2))
    raise DomainError(f"derivative order must be 1 or 2, got {order!r}")


def l0_third_deriv_probe(h: float) -> float:
    """
    |L_0'''(1 + h)| центральной разностью замкнутой формулы L_0''.

    L_0'' содержит (zeta - 1) K(k), поэтому третья производная растёт как |log h|.
    """
    h = float(h)
    if not (1e-10 <= h <= 1e-2):
        raise DomainError(f"probe step must lie in [1e-10, 1e-2], got {h!r}")
    step = 0.25 * h
    zeta = 1.0 + h
    upper = float(_l0_d2_raw(np.array(zeta + step)))
    lower = float(_l0_d2_raw(np.array(zeta - step)))
    return abs(upper - lower) / (2.0 * step)


def l0_asymptotic(zeta: float) -> float:
    """Главные члены: 1 + 3 zeta^2 / 4 при малых zeta, 3 zeta / 2 при больших."""
    zeta = _check_zeta(zeta)
    return 1.0 + 0.75 * zeta * zeta if zeta < 1.0 else 1.5 * zeta


# ---------------------------------------------------------------------------
# Тождества и диагностика
# ---------------------------------------------------------------------------

def reflection_residual(n: int, zeta: float, dimension: int) -> float:
    """|zeta^{-p} L_{-n}(zeta) - L_{n-1}(1/zeta)|, p = 3 (1D) или 2 (2D)."""
    zeta = _check_zeta(zeta)
    power = POWER[_check_dimension(dimension)]
    if dimension == 1:
        left = cubic_coeff(-n, zeta)
        right = cubic_coeff(n - 1, 1.0 / zeta)
    else:
        left = ln_quadrature(-n, zeta, 2)
        right = ln_quadrature(n - 1, 1.0 / zeta, 2)
    return abs(zeta ** (-power) * left - right)


@dataclass(frozen=True)
class DecayFit:
    """Наклон log|L_n| против log n и нижняя константа min <n>^3 |L_n|."""
    zeta: float
    slope: float
    intercept: float
    ns: Tuple[int, ...]
    values: Tuple[float, ...]
    n_used: int
    underflow: bool
    lower_constant: float


def decay_fit(zeta: float, n_max: int, dimension: int = 2, n_min: int = 4) -> DecayFit:
    """
    МНК-наклон log|L_n(zeta)| по log n на n in [n_min, n_max].

    Значения ниже 1e-14 отбрасываются; если точек не осталось, наклон -inf
    (суперполиномиальное убывание) и в лог пишется предупреждение.
    """
    zeta = _check_zeta(zeta)
    if n_max < 16:
        raise DomainError(f"decay fit needs n_max >= 16, got {n_max!r}")
    ns = tuple(range(n_min, n_max + 1))
    report = ln_quadrature_report(ns, zeta, dimension)
    values = np.array([report.values[n] for n in ns])
    magnitude = np.abs(values)
    keep = magnitude > UNDERFLOW_FLOOR
    weights = np.sqrt(1.0 + np.asarray(ns, dtype=float) ** 2) ** 3
    lower = float(np.min(weights[keep] * magnitude[keep])) if np.any(keep) else 0.0
    if np.count_nonzero(keep) < 2:
        logger.warning("decay_fit: all |L_n(%g)| below %.0e on [%d, %d]; treating as super-polynomial",
                       zeta, UNDERFLOW_FLOOR, n_min, n_max)
        return DecayFit(zeta, -math.inf, math.nan, ns, tuple(values.tolist()), 0, True, lower)
    if not np.all(keep):
        logger.info("decay_fit: dropped %d coefficients below %.0e", int(np.count_nonzero(~keep)), UNDERFLOW_FLOOR)
    log_n = np.log(np.asarray(ns, dtype=float)[keep])
    slope, intercept = np.polyfit(log_n, np.log(magnitude[keep]), 1)
    return DecayFit(zeta, float(slope), float(intercept), ns, tuple(values.tolist()),
                    int(np.count_nonzero(keep)), not bool(np.all(keep)), lower)


@dataclass(frozen=True)
class UniformBound:
    """max по сетке <n>^{3-k} |L_n^{(k)}(zeta)| для k = 0, 1, 2."""
    rho0: float
    n_max: int
    zetas: Tuple[float, ...]
    maxima: Dict[int, float] = field(default_factory=dict)


def _zeta_grid(rho0: float, count: int) -> np.ndarray:
    s = np.linspace(-1.0, 1.0, count)
    grid = rho0 ** s
    return grid[np.abs(grid - 1.0) >= GRID_GAP]


def _bound_row(zeta: float, ns: Tuple[int, ...]) -> Dict[int, float]:
    scale = max(1.0, zeta)
    h1 = 1e-5 * scale
    h2 = min(1e-3 * scale, abs(zeta - 1.0) / 4.0)
    # одна сетка узлов на весь шаблон
    nodes = max(ln_quadrature_report(ns, z, 2).nodes for z in (zeta - h2, zeta + h2))

    def at(z: float) -> np.ndarray:
        vals = ln_quadrature_report(ns, z, 2, nodes=nodes).values
        return np.array([vals[n] for n in ns])

    center = at(zeta)
    d1 = (at(zeta + h1) - at(zeta - h1)) / (2.0 * h1)
    d2 = (at(zeta + h2) - 2.0 * center + at(zeta - h2)) / (h2 * h2)
    if 0 in ns:
        d2[ns.index(0)] = l0_deriv(zeta, 2)
    bracket = np.sqrt(1.0 + np.asarray(ns, dtype=float) ** 2)
    return {k: float(np.max(bracket ** (3 - k) * np.abs(d))) for k, d in enumerate((center, d1, d2))}


def uniform_bound_check(rho0: float, n_max: int, zeta_count: int = 21,
                        zetas: Optional[Sequence[float]] = None, threads: int = 1) -> UniformBound:
    """
    Проверка равномерной оценки коэффициентов на [1/rho0, rho0] без окрестности 1.

    Производные по zeta: центральные разности значений квадратуры на общей
    сетке узлов; для n = 0, k = 2 используется замкнутая формула.
    """
    rho0 = float(rho0)
    if not (1.0 < rho0 <= 10.0):
        raise DomainError(f"rho0 must lie in (1, 10], got {rho0!r}")
    if zetas is None:
        grid = _zeta_grid(rho0, zeta_count)
    else:
        grid = np.asarray(sorted(float(z) for z in zetas), dtype=float)
        grid = grid[(grid >= 1.0 / rho0) & (grid <= rho0) & (np.abs(grid - 1.0) >= GRID_GAP)]
    ns = tuple(range(-n_max, n_max + 1))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(lambda z: _bound_row(float(z), ns), grid))
    maxima = {k: max((row[k] for row in rows), default=0.0) for k in (0, 1, 2)}
    return UniformBound(rho0, n_max, tuple(grid.tolist()), maxima)


def complexness_discriminant(zeta: float) -> float:
    """L_0(zeta) - zeta L_0(1/zeta); знак совпадает со знаком zeta - 1."""
    zeta = _check_zeta(zeta)
    return float(l0_closed(zeta)) - zeta * float(l0_closed(1.0 / zeta))


def discriminant_integral(zeta: float) -> float:
    """(4(zeta^2-1)/pi) int_0^{pi/2} cos^2 / (sqrt(1+zeta^2+2 zeta cos) + sqrt(1+zeta^2-2 zeta cos))."""
    zeta = _check_zeta(zeta)
    a = 1.0 + zeta * zeta
    b = 2.0 * zeta

    def kernel(theta: float) -> float:
        c = math.cos(theta)
        return c * c / (math.sqrt(a + b * c) + math.sqrt(max(a - b * c, 0.0)))

    value, _ = integrate.quad(kernel, 0.0, math.pi / 2.0, epsabs=1e-14, epsrel=1e-13)
    return 4.0 * (zeta * zeta - 1.0) / math.pi * value


@dataclass(frozen=True)
class KernelBound:
    value: float
    exact: float
    bound: float


def kernel_integral_bound(zeta: float) -> KernelBound:
    """
    int_0^pi |zeta + cos| / (1 + zeta^2 + 2 zeta cos) и оценка 2 pi / (1 + zeta).

    Точное значение: (2/zeta) arcsin(zeta) при zeta < 1, pi/2 при zeta = 1, pi/zeta при zeta > 1.
    """
    zeta = _check_zeta(zeta)

    def kernel(theta: float) -> float:
        c = math.cos(theta)
        return abs(zeta + c) / (1.0 + zeta * zeta + 2.0 * zeta * c)

    points = [math.acos(-zeta)] if zeta < 1.0 else None
    value, _ = integrate.quad(kernel, 0.0, math.pi, points=points, epsabs=1e-12, epsrel=1e-11, limit=400)
    if zeta < 1.0:
        exact = 2.0 * math.asin(zeta) / zeta
    elif zeta == 1.0:
        exact = math.pi / 2.0
    else:
        exact = math.pi / zeta
    return KernelBound(value, exact, 2.0 * math.pi / (1.0 + zeta))
