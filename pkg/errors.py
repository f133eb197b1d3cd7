"""
Иерархия исключений kgscatter.

Все численные ошибки наследуются от KGError, чтобы CLI мог отличить
численный сбой (код 1) от ошибки использования (код 2).
"""
from __future__ import annotations

from typing import Any, Optional


class KGError(Exception):
    """Base class for every error raised by the numerical modules."""


class DomainError(KGError, ValueError):
    """Argument outside the domain of an operation."""


class OutsideConeError(DomainError):
    """Point (t, x) with |x| >= t."""


class DivergenceError(KGError, ArithmeticError):
    """Quantity is infinite at the requested argument (K at k = 1)."""


class AccuracyError(KGError):
    """Quadrature did not converge before the node cap."""

    def __init__(self, message: str, nodes: int = 0, last_change: float = float("nan")) -> None:
        super().__init__(message)
        self.nodes = nodes
        self.last_change = last_change


class InstabilityError(KGError):
    """Evolution blew up: sup|u| exceeded the allowed multiple of its initial value."""

    def __init__(self, message: str, t: float = float("nan"), sup_norm: float = float("nan")) -> None:
        super().__init__(message)
        self.t = t
        self.sup_norm = sup_norm


class FitError(KGError):
    """Decay fit is ill-conditioned. The raw report is kept on the exception."""

    def __init__(self, message: str, report: Optional[Any] = None) -> None:
        super().__init__(message)
        self.report = report


class ShapeError(KGError, ValueError):
    """Sample arrays live on different grids."""


class DegenerateDataError(KGError, ValueError):
    """Final data carries no forward wave (A1 vanishes identically)."""


class CapabilityError(KGError):
    """An amplitude table lacks the derivative data an operation needs."""
