"""Model Hamiltonian ``H(x, p) = a(x) (1 + |p|^2)^(gamma/2) + V(x)`` and its calculus.

Spatial coefficients are truncated Fourier series, so ``D_x H`` is analytic.
Points ``x`` and momenta ``p`` are arrays whose leading axis has length ``d``;
trailing axes broadcast.  For ``d = 1`` plain scalars are accepted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class FourierSeries:
    """``c0 + sum_j A_j * trig(2 pi k_j . x)`` on ``T^d``; ``trig`` is cos or sin."""

    d: int
    const: float = 0.0
    terms: tuple[tuple[float, str, tuple[int, ...]], ...] = ()

    def __post_init__(self) -> None:
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        if not math.isfinite(self.const):
            raise ValueError("non-finite constant term")
        clean = []
        for amp, kind, k in self.terms:
            k = tuple(int(v) for v in np.atleast_1d(k))
            if kind not in ("cos", "sin"):
                raise ValueError(f"term kind must be 'cos' or 'sin', got {kind!r}")
            if len(k) != self.d:
                raise ValueError(f"wavevector {k} does not have {self.d} components")
            if not math.isfinite(amp):
                raise ValueError("non-finite Fourier amplitude")
            clean.append((float(amp), kind, k))
        object.__setattr__(self, "terms", tuple(clean))

    @classmethod
    def constant(cls, d: int, value: float) -> FourierSeries:
        return cls(d, float(value))

    @classmethod
    def parse(cls, text: str, d: int) -> FourierSeries:
        """Parse ``"1.0; 0.1 cos 1; -0.2 sin 0 1"`` (first item is the constant).

        Each further item is ``amplitude kind k_1 ... k_d``.
        """
        items = [s.strip() for s in text.split(";") if s.strip()]
        if not items:
            raise ValueError("empty Fourier specification")
        const = float(items[0])
        terms = []
        for item in items[1:]:
            parts = item.split()
            if len(parts) != 2 + d:
                raise ValueError(f"cannot parse Fourier term {item!r} for d={d}")
            terms.append((float(parts[0]), parts[1], tuple(int(v) for v in parts[2:])))
        return cls(d, const, tuple(terms))

    def format(self) -> str:
        out = [repr(self.const)]
        for amp, kind, k in self.terms:
            out.append(" ".join([repr(amp), kind, *map(str, k)]))
        return "; ".join(out)

    def _phase(self, x: np.ndarray, k: tuple[int, ...]) -> np.ndarray:
        return TWO_PI * sum(kj * x[j] for j, kj in enumerate(k))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape[1:], self.const)
        for amp, kind, k in self.terms:
            ph = self._phase(x, k)
            out = out + amp * (np.cos(ph) if kind == "cos" else np.sin(ph))
        return out

    def grad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for amp, kind, k in self.terms:
            ph = self._phase(x, k)
            dtrig = -np.sin(ph) if kind == "cos" else np.cos(ph)
            for j, kj in enumerate(k):
                out[j] = out[j] + amp * TWO_PI * kj * dtrig
        return out

    def bounds(self) -> tuple[float, float]:
        """Crude but safe bounds ``const -/+ sum |A_j|``."""
        s = sum(abs(a) for a, _, _ in self.terms)
        return self.const - s, self.const + s


@dataclass(frozen=True)
class HamiltonianParams:
    a: FourierSeries
    V: FourierSeries
    gamma: float

    def __post_init__(self) -> None:
        if self.a.d != self.V.d:
            raise ValueError("a and V live in different dimensions")
        if not (math.isfinite(self.gamma) and self.gamma >= 1.0):
            raise ValueError(f"gamma must be >= 1, got {self.gamma}")
        n = 64
        x1 = (np.arange(n) + 0.5) / n
        xs = np.stack(np.meshgrid(*([x1] * self.d), indexing="ij"))
        if np.min(self.a(xs)) <= 0.0:
            raise ValueError("coefficient a(x) must be strictly positive")

    @property
    def d(self) -> int:
        return self.a.d

    @classmethod
    def model(cls, d: int = 1, gamma: float = 1.2, a: float | str = 1.0, V: float | str = 0.0) -> HamiltonianParams:
        def series(spec):
            return FourierSeries.parse(spec, d) if isinstance(spec, str) else FourierSeries.constant(d, spec)

        return cls(series(a), series(V), gamma)

    def max_a(self) -> float:
        return self.a.bounds()[1]

    def H(self, x, p) -> np.ndarray:
        return eval_H(self, x, p)

    def DpH(self, x, p) -> np.ndarray:
        return eval_DpH(self, x, p)


def _as_vec(z, d: int) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if d == 1 and (z.ndim == 0 or z.shape[0] != 1):
        z = z[None]
    if z.shape[0] != d:
        raise ValueError(f"expected leading axis of length {d}, got shape {z.shape}")
    return z


def _sq(p: np.ndarray) -> np.ndarray:
    return np.sum(p * p, axis=0)


def eval_H(params: HamiltonianParams, x, p) -> np.ndarray:
    x, p = _as_vec(x, params.d), _as_vec(p, params.d)
    return params.a(x) * (1.0 + _sq(p)) ** (0.5 * params.gamma) + params.V(x)


def eval_DpH(params: HamiltonianParams, x, p) -> np.ndarray:
    x, p = _as_vec(x, params.d), _as_vec(p, params.d)
    g = params.gamma
    return params.a(x) * g * (1.0 + _sq(p)) ** (0.5 * g - 1.0) * p


def eval_DxH(params: HamiltonianParams, x, p) -> np.ndarray:
    x, p = _as_vec(x, params.d), _as_vec(p, params.d)
    return params.a.grad(x) * (1.0 + _sq(p)) ** (0.5 * params.gamma) + params.V.grad(x)


def eval_DppH(params: HamiltonianParams, x, p) -> np.ndarray:
    """Momentum Hessian, shape ``(d, d, ...)``."""
    x, p = _as_vec(x, params.d), _as_vec(p, params.d)
    g = params.gamma
    s = 1.0 + _sq(p)
    base = params.a(x) * g * s ** (0.5 * g - 1.0)
    eye = np.eye(params.d).reshape((params.d, params.d) + (1,) * (p.ndim - 1))
    return base * (eye + (g - 2.0) * p[:, None] * p[None, :] / s)


def drift_speed_bound(params: HamiltonianParams, grad_bound: float) -> float:
    """Upper bound of ``|D_pH(x, p)|`` over ``|p| <= grad_bound``."""
    g = params.gamma
    s = np.linspace(0.0, grad_bound, 257)
    speed = g * s * (1.0 + s * s) ** (0.5 * g - 1.0)
    return float(params.max_a() * np.max(speed))


# ---------------------------------------------------------------------------
# Legendre transform


class LegendreError(RuntimeError):
    def __init__(self, msg: str, last_iterate: np.ndarray):
        super().__init__(msg)
        self.last_iterate = last_iterate


def _radial_speed(a: np.ndarray, gamma: float, s: np.ndarray) -> np.ndarray:
    return a * gamma * s * (1.0 + s * s) ** (0.5 * gamma - 1.0)


def _radial_speed_prime(a: np.ndarray, gamma: float, s: np.ndarray) -> np.ndarray:
    return a * gamma * (1.0 + s * s) ** (0.5 * gamma - 2.0) * (1.0 + (gamma - 1.0) * s * s)


def legendre_lagrangian(params: HamiltonianParams, x, v, *, return_momentum: bool = False,
                        tol: float = 1e-13, max_iter: int = 200):
    """``L(x, v) = sup_p (-v.p - H(x, p))``.

    ``H(x, .)`` depends on ``|p|`` only, so the maximiser is ``p* = -s v/|v|``
    with ``s >= 0`` the root of ``|D_pH|(s) = |v|``.  That scalar concave
    problem is solved by Newton steps kept inside a bisection bracket.
    """
    x, v = _as_vec(x, params.d), _as_vec(v, params.d)
    x, v = np.broadcast_arrays(x, v)
    a = params.a(x)
    speed = np.sqrt(_sq(v))
    g = params.gamma
    if g <= 1.0 and np.any(speed >= a * g):
        raise LegendreError("velocity outside the range of D_pH for gamma = 1", speed)

    lo = np.zeros_like(speed)
    hi = np.ones_like(speed)
    for _ in range(200):
        short = _radial_speed(a, g, hi) < speed
        if not np.any(short):
            break
        hi = np.where(short, 2.0 * hi, hi)
    s = 0.5 * (lo + hi)
    converged = False
    for _ in range(max_iter):
        f = _radial_speed(a, g, s) - speed
        lo = np.where(f < 0, s, lo)
        hi = np.where(f > 0, s, hi)
        if np.all(np.abs(f) <= tol * (1.0 + speed)):
            converged = True
            break
        step = s - f / _radial_speed_prime(a, g, s)
        inside = (step > lo) & (step < hi)
        s = np.where(inside, step, 0.5 * (lo + hi))
    if not converged:
        raise LegendreError("Legendre maximisation did not converge", s)

    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(speed > 0, v / np.where(speed > 0, speed, 1.0), 0.0)
    p_star = -s * unit
    L = speed * s - a * (1.0 + s * s) ** (0.5 * g) - params.V(x)
    if return_momentum:
        return L, p_star
    return L


# ---------------------------------------------------------------------------
# assumption audit


@dataclass
class AssumptionReport:
    flags: dict[str, str] = field(default_factory=dict)
    constants: dict[str, float] = field(default_factory=dict)
    worst: dict[str, tuple] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def passed(self, name: str) -> bool:
        return self.flags.get(name) == "pass"

    @property
    def all_passed(self) -> bool:
        return all(v == "pass" for v in self.flags.values())

    def failures(self) -> list[str]:
        return [k for k, v in self.flags.items() if v == "fail"]


def _momentum_samples(d: int, R: float, n_radial: int) -> np.ndarray:
    r = np.linspace(0.0, R, n_radial)
    if d == 1:
        return np.concatenate([-r[:0:-1], r])[None]
    ang = np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False)
    rr, aa = np.meshgrid(r, ang, indexing="ij")
    return np.stack([(rr * np.cos(aa)).ravel(), (rr * np.sin(aa)).ravel()])


def check_assumptions(params: HamiltonianParams, R: float = 50.0, n_x: int = 16,
                      n_radial: int = 101) -> AssumptionReport:
    """Sample-based audit of the structural hypotheses on ``H``.

    Constants are fitted as the smallest values making each inequality hold on
    the samples.  A2 is fitted in the two-constant form
    ``D_pH.p - H >= c H - C``: ``c`` is the smallest ratio ``(D_pH.p - H)/H``
    on the outer half of the momentum box and ``C`` the smallest offset.
    """
    if R <= 0:
        raise ValueError("momentum radius must be positive")
    d = params.d
    rep = AssumptionReport()
    x1 = (np.arange(n_x) + 0.5) / n_x
    xs = np.stack(np.meshgrid(*([x1] * d), indexing="ij")).reshape(d, -1)
    ps = _momentum_samples(d, R, n_radial)
    X = np.repeat(xs[:, :, None], ps.shape[1], axis=2)
    P = np.repeat(ps[:, None, :], xs.shape[1], axis=1)
    pn = np.sqrt(_sq(P))
    H = eval_H(params, X, P)
    DpH = eval_DpH(params, X, P)

    def argworst(arr):
        idx = np.unravel_index(int(np.argmax(arr)), arr.shape)
        return tuple(float(v) for v in X[(slice(None), *idx)]), tuple(float(v) for v in P[(slice(None), *idx)])

    # A1: strict convexity by finite-difference Hessian, coercivity, H >= 0, growth
    delta = 1e-3 * np.maximum(1.0, pn)
    hess = np.zeros((d, d) + pn.shape)
    for i in range(d):
        for j in range(d):
            ei = np.zeros((d, 1, 1)); ei[i] = 1.0
            ej = np.zeros((d, 1, 1)); ej[j] = 1.0
            hess[i, j] = (eval_H(params, X, P + delta * (ei + ej)) - eval_H(params, X, P + delta * (ei - ej))
                          - eval_H(params, X, P - delta * (ei - ej)) + eval_H(params, X, P - delta * (ei + ej))) / (4 * delta**2)
    eigs = np.linalg.eigvalsh(np.moveaxis(hess, (0, 1), (-2, -1)))
    min_eig = float(np.min(eigs))
    rep.constants["A1_min_hessian_eig"] = min_eig
    outer = np.isclose(pn, R)
    inner = np.isclose(pn, pn[0][np.argmin(np.abs(pn[0] - R / 2))])
    ratio_outer = float(np.min(H[outer] / R))
    ratio_inner = float(np.min(H[inner] / pn[inner]))
    coercive = ratio_outer > ratio_inner
    growth_C = float(np.max(H / (1.0 + pn**params.gamma)))
    rep.constants["A1_growth_C"] = growth_C
    rep.constants["A1_min_H"] = float(np.min(H))
    convex = min_eig > 0.0
    nonneg = float(np.min(H)) >= 0.0
    rep.flags["A1"] = "pass" if (convex and coercive and nonneg) else "fail"
    if not convex:
        rep.notes.append(f"A1: Hessian not positive definite (min eigenvalue {min_eig:.3e})")
    if not coercive:
        rep.notes.append(f"A1: H/|p| does not grow between |p|={R/2:g} and |p|={R:g}")
    if not nonneg:
        rep.notes.append("A1: H takes negative values; shift V to restore H >= 0")
    if d <= 2:
        rep.notes.append(f"A1 is stated for d > 2; this run uses d = {d}")
    rep.worst["A1"] = argworst(-eigs.min(axis=-1))

    # A2: D_pH.p - H >= c H - C
    lhs = np.sum(DpH * P, axis=0) - H
    big = pn >= 0.5 * R
    c = float(np.min(lhs[big] / H[big]))
    C2 = float(max(0.0, np.max(c * H - lhs)))
    rep.constants["A2_c"] = c
    rep.constants["A2_C"] = C2
    rep.flags["A2"] = "pass" if c > 0 else "fail"
    rep.worst["A2"] = argworst(c * H - lhs)

    # A3: |D_pH|^2 <= C + C |p|^(2(gamma - 1))
    r3 = _sq(DpH) / (1.0 + pn ** (2.0 * (params.gamma - 1.0)))
    rep.constants["A3_C"] = float(np.max(r3))
    rep.flags["A3"] = "pass" if np.isfinite(rep.constants["A3_C"]) else "fail"
    rep.worst["A3"] = argworst(r3)

    # A4: |D_xH| <= C H + C
    DxH = eval_DxH(params, X, P)
    denom = H + 1.0
    if np.any(denom <= 0):
        rep.flags["A4"] = "fail"
        rep.notes.append("A4: H + 1 <= 0 somewhere; inequality cannot hold")
    else:
        r4 = np.sqrt(_sq(DxH)) / denom
        rep.constants["A4_C"] = float(np.max(r4))
        rep.flags["A4"] = "pass"
        rep.worst["A4"] = argworst(r4)

    # A5: exact check on the stored exponent
    g = Fraction(params.gamma)
    rep.flags["A5"] = "pass" if Fraction(1) < g < Fraction(5, 4) else "fail"
    if rep.flags["A5"] == "fail":
        rep.notes.append(f"A5: gamma = {params.gamma} outside (1, 5/4)")
    return rep


def quadratic_params(d: int = 1) -> HamiltonianParams:
    """``H = |p|^2 / 2``, the ``gamma = 2, a = 1/2, V = -1/2`` member of the family."""
    return HamiltonianParams(FourierSeries.constant(d, 0.5), FourierSeries.constant(d, -0.5), 2.0)

