"""Regularised logarithmic coupling ``g_eps[m] = ln(eps + m)`` and its integrability bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import FieldTrajectory, GridSpec, ScalarField, integrate, lp_norm


class PositivityError(ValueError):
    """``m + eps`` is not strictly positive somewhere."""

    def __init__(self, msg: str, frame: int | None = None):
        super().__init__(msg if frame is None else f"{msg} (time level {frame})")
        self.frame = frame


@dataclass(frozen=True)
class EpsSchedule:
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("empty eps schedule")
        if any(not np.isfinite(v) or v <= 0 for v in vals):
            raise ValueError("eps values must be positive and finite")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            raise ValueError("eps schedule must be strictly decreasing")
        object.__setattr__(self, "values", vals)

    def __iter__(self):
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)


def _check_positive(vals: np.ndarray, eps: float, frame: int | None = None) -> np.ndarray:
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    shifted = vals + eps
    if np.min(shifted) <= 0.0:
        raise PositivityError(f"m + eps has minimum {np.min(shifted):.3e} <= 0", frame)
    return shifted


def g_eps_array(m: np.ndarray, eps: float, frame: int | None = None) -> np.ndarray:
    return np.log(_check_positive(np.asarray(m, dtype=float), eps, frame))


def g_eps(m: ScalarField, eps: float) -> ScalarField:
    return ScalarField(m.grid, g_eps_array(m.values, eps))


def g_eps_trajectory(m_traj: FieldTrajectory, eps: float) -> FieldTrajectory:
    out = np.empty_like(m_traj.frames)
    for k, fr in enumerate(m_traj.frames):
        out[k] = g_eps_array(fr, eps, frame=k + m_traj.start)
    return FieldTrajectory(m_traj.grid, out, m_traj.start)


def g_norm_linf_lp(m_traj: FieldTrajectory, eps: float, p: float) -> float:
    """``max_t || ln(m + eps) ||_{L^p}``."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    g = g_eps_trajectory(m_traj, eps)
    return max(lp_norm(fr, p, m_traj.grid) for fr in g.frames)


def inverse_mass(m: ScalarField | np.ndarray, eps: float, grid: GridSpec | None = None) -> float:
    """``integral 1 / (m + eps)``."""
    vals, grid = (m.values, m.grid) if isinstance(m, ScalarField) else (np.asarray(m), grid)
    return integrate(1.0 / _check_positive(vals, eps), grid)


def concavity_threshold(p: float) -> float:
    """``A = e^(1 - p)``: ``(ln z)^p`` is concave for ``z > 1/A = e^(p - 1)``."""
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    return float(np.exp(1.0 - p))


def log_power_second_derivative(z: np.ndarray, p: float) -> np.ndarray:
    """Closed form ``p (ln z)^(p-2) z^-2 (p - 1 - ln z)`` for ``z > 1``."""
    lz = np.log(z)
    return p * lz ** (p - 2.0) / z**2 * (p - 1.0 - lz)


@dataclass(frozen=True)
class LogIntegrability:
    """Per-frame ``integral |ln(m+eps)|^p`` split on ``{m + eps <= 1}`` / ``{m + eps > 1}``."""

    total: np.ndarray
    low: np.ndarray
    high: np.ndarray


def log_integrability(m_traj: FieldTrajectory, eps: float, p: float) -> LogIntegrability:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    grid = m_traj.grid
    n = len(m_traj)
    total, low, high = np.empty(n), np.empty(n), np.empty(n)
    for k, fr in enumerate(m_traj.frames):
        shifted = _check_positive(fr, eps, k + m_traj.start)
        powered = np.abs(np.log(shifted)) ** p
        below = shifted <= 1.0
        low[k] = integrate(np.where(below, powered, 0.0), grid)
        high[k] = integrate(np.where(below, 0.0, powered), grid)
        total[k] = low[k] + high[k]
    return LogIntegrability(total, low, high)


def low_part_constant(m_traj: FieldTrajectory, eps: float, p: float) -> float:
    """Smallest ``kappa`` with ``low <= kappa (1 + [ln integral 1/(m+eps)]_+^p)`` on every frame."""
    li = log_integrability(m_traj, eps, p)
    inv = np.array([inverse_mass(fr, eps, m_traj.grid) for fr in m_traj.frames])
    bound = 1.0 + np.maximum(np.log(inv), 0.0) ** p
    return float(np.max(li.low / bound))
