"""
Полные эллиптические интегралы K и E через AGM.

K(k) = pi / (2 AGM(1, k')), E(k) = K(k) (1 - sum 2^{n-1} c_n^2).
Модуль принимает скаляры и numpy-массивы; отображение zeta -> k
вычисляет дополнительный модуль k' = |1 - zeta| / (1 + zeta) без
вычитания близких чисел.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy import integrate

from errors import AccuracyError, DivergenceError, DomainError

logger = logging.getLogger(__name__)

TOLERANCE = 1e-13
MAX_ITER = 64
LN4 = math.log(4.0)

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class Modulus:
    """Modulus k in [0, 1] together with its complement k' = sqrt(1 - k^2)."""
    k: float
    kp: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.k <= 1.0) or not (0.0 <= self.kp <= 1.0):
            raise DomainError(f"modulus out of range: k={self.k!r}, k'={self.kp!r}")

    @classmethod
    def from_k(cls, k: float) -> "Modulus":
        k = float(k)
        if not (0.0 <= k <= 1.0):
            raise DomainError(f"modulus k={k!r} outside [0, 1]")
        return cls(k=k, kp=math.sqrt((1.0 - k) * (1.0 + k)))

    @classmethod
    def from_zeta(cls, zeta: float) -> "Modulus":
        return cls(k=float(k_of_zeta(zeta)), kp=float(kp_of_zeta(zeta)))


def _as_array(value: ArrayLike) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(value, dtype=float)
    return arr, arr.ndim == 0


def _unwrap(arr: np.ndarray, scalar: bool) -> ArrayLike:
    return float(arr) if scalar else arr


def _check_k(k: np.ndarray, allow_one: bool) -> None:
    if not np.all(np.isfinite(k)):
        raise DomainError("modulus must be finite")
    upper_ok = k <= 1.0 if allow_one else k < 1.0
    if np.any(k < 0.0) or not np.all(upper_ok):
        if not allow_one and np.any(k == 1.0) and np.all((k >= 0.0) & (k <= 1.0)):
            raise DivergenceError("K(k) diverges at k = 1")
        bound = "[0, 1]" if allow_one else "[0, 1)"
        raise DomainError(f"modulus outside {bound}: min={k.min()!r}, max={k.max()!r}")


def _agm_KE(k: np.ndarray, kp: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Одна AGM-итерация даёт K и E одновременно. k = 1 -> K = inf, E = 1."""
    singular = kp == 0.0
    b = np.where(singular, 1.0, kp)
    a = np.ones_like(b)
    c = np.where(singular, 0.0, k)
    power = 0.5
    s = power * c * c
    for _ in range(MAX_ITER):
        done = bool(np.all(np.abs(a - b) <= TOLERANCE * a))
        c = 0.5 * (a - b)
        a, b = 0.5 * (a + b), np.sqrt(a * b)
        power *= 2.0
        s = s + power * c * c
        if done:
            break
    else:
        raise AccuracyError(f"AGM did not converge in {MAX_ITER} iterations", nodes=MAX_ITER)
    K = np.pi / (2.0 * a)
    E = K * (1.0 - s)
    K = np.where(singular, np.inf, K)
    E = np.where(singular, 1.0, E)
    return K, E


def ellip_KE(k: ArrayLike, kp: Optional[ArrayLike] = None) -> Tuple[ArrayLike, ArrayLike]:
    """
    K(k) и E(k) из одного прогона AGM.

    kp можно передать явно, если дополнительный модуль известен точнее,
    чем sqrt(1 - k^2) (например, из zeta). При k = 1 K возвращается как inf;
    публичные ellip_K/ellip_E превращают это в исключение.
    """
    k_arr, scalar = _as_array(k)
    _check_k(k_arr, allow_one=True)
    if kp is None:
        kp_arr = np.sqrt((1.0 - k_arr) * (1.0 + k_arr))
    else:
        kp_arr = np.broadcast_to(np.asarray(kp, dtype=float), k_arr.shape)
    K, E = _agm_KE(k_arr, kp_arr)
    return _unwrap(K, scalar), _unwrap(E, scalar)


def ellip_K(k: Union[ArrayLike, Modulus]) -> ArrayLike:
    """K(k) = int_0^{pi/2} (1 - k^2 sin^2)^{-1/2}, 0 <= k < 1."""
    if isinstance(k, Modulus):
        if k.kp == 0.0:
            raise DivergenceError("K(k) diverges at k = 1")
        return ellip_KE(k.k, k.kp)[0]
    k_arr, _ = _as_array(k)
    _check_k(k_arr, allow_one=False)
    return ellip_KE(k)[0]


def ellip_E(k: Union[ArrayLike, Modulus]) -> ArrayLike:
    """E(k) = int_0^{pi/2} (1 - k^2 sin^2)^{1/2}, 0 <= k <= 1; E(1) = 1 exactly."""
    if isinstance(k, Modulus):
        return ellip_KE(k.k, k.kp)[1]
    return ellip_KE(k)[1]


def quadrature_KE(k: float) -> Tuple[float, float]:
    """Эталон: K(k), E(k) адаптивной квадратурой определяющих интегралов (только для проверок)."""
    k = float(k)
    _check_k(np.asarray([k]), allow_one=False)
    opts = dict(epsabs=1e-14, epsrel=1e-14, limit=200)
    K, _ = integrate.quad(lambda th: 1.0 / math.sqrt(1.0 - (k * math.sin(th)) ** 2), 0.0, math.pi / 2, **opts)
    E, _ = integrate.quad(lambda th: math.sqrt(1.0 - (k * math.sin(th)) ** 2), 0.0, math.pi / 2, **opts)
    return K, E


def _check_zeta(zeta: np.ndarray) -> None:
    if not np.all(np.isfinite(zeta)) or np.any(zeta <= 0.0):
        raise DomainError("ratio zeta must be finite and positive")


def k_of_zeta(zeta: ArrayLike) -> ArrayLike:
    """k(zeta) = 2 sqrt(zeta) / (1 + zeta); k(zeta) = k(1/zeta)."""
    z, scalar = _as_array(zeta)
    _check_zeta(z)
    return _unwrap(2.0 * np.sqrt(z) / (1.0 + z), scalar)


def kp_of_zeta(zeta: ArrayLike) -> ArrayLike:
    """Complementary modulus |1 - zeta| / (1 + zeta)."""
    z, scalar = _as_array(zeta)
    _check_zeta(z)
    return _unwrap(np.abs(1.0 - z) / (1.0 + z), scalar)


def ellip_KE_of_zeta(zeta: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
    """(K, E) at k(zeta); K is inf at zeta = 1."""
    return ellip_KE(k_of_zeta(zeta), kp_of_zeta(zeta))


def log_singularity_bracket(k: float) -> Tuple[float, float]:
    """
    Двусторонняя оценка K(k) / |log(1 - k)| около k = 1.

    K(k) - log(4/k') убывает от pi/2 - log 4 до 0, поэтому
    log(4/k') <= K(k) <= log(4/k') + pi/2 - log 4.
    """
    k = float(k)
    if not (0.9 < k < 1.0):
        raise DomainError(f"bracket needs 0.9 < k < 1, got {k!r}")
    kp = math.sqrt((1.0 - k) * (1.0 + k))
    lead = math.log(4.0 / kp)
    denom = abs(math.log1p(-k))
    return lead / denom, (lead + math.pi / 2.0 - LN4) / denom
