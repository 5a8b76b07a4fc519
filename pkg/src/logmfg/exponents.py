"""Exact-rational feasibility witnesses for the two exponent lemmas.

All arithmetic is done in :class:`fractions.Fraction`, so the relations are
checked with zero tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from fractions import Fraction
from numbers import Rational

Number = int | Fraction | str


class PreconditionError(ValueError):
    """Inputs violate the lemma's hypothesis."""


def as_fraction(x: Number) -> Fraction:
    """Exact conversion; floats are refused so that no rounding sneaks in."""
    if isinstance(x, float):
        raise TypeError(f"pass exact rationals (int, Fraction or 'num/den'), got float {x!r}")
    if isinstance(x, (int, Rational, str)):
        return Fraction(x)
    raise TypeError(f"cannot convert {type(x).__name__} to a fraction")


def fraction_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def sobolev_conjugate(d: int) -> Fraction:
    """``2* = 2d / (d - 2)``, defined for ``d >= 3``."""
    if d < 3:
        raise PreconditionError(f"2* = 2d/(d-2) needs d >= 3, got d = {d}")
    return Fraction(2 * d, d - 2)


def _dimension(d: Number) -> int:
    f = as_fraction(d)
    if f.denominator != 1:
        raise PreconditionError(f"d must be an integer, got {d}")
    if f < 3:
        raise PreconditionError(f"d must be >= 3, got {f}")
    return int(f)


class _Witness:
    def relations(self) -> dict[str, bool]:
        raise NotImplementedError

    def failures(self) -> list[str]:
        return [k for k, ok in self.relations().items() if not ok]

    def verify(self) -> bool:
        return not self.failures()

    def as_strings(self) -> dict[str, str]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = fraction_str(v) if isinstance(v, Fraction) else str(v)
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.as_strings().items())


@dataclass(frozen=True)
class ExponentWitnessA(_Witness):
    d: int
    q: Fraction
    b: Fraction
    lam: Fraction
    M: Fraction
    Q: Fraction
    a: Fraction
    kappa: Fraction
    nu_tilde: Fraction
    sobolev_conj: Fraction

    def relations(self) -> dict[str, bool]:
        s = self.sobolev_conj
        return {
            "M >= 1": self.M >= 1,
            "a >= 1": self.a >= 1,
            "Q >= q": self.Q >= self.q,
            "0 < kappa < 1": 0 < self.kappa < 1,
            "0 < nu_tilde < 1": 0 < self.nu_tilde < 1,
            "2* = 2d/(d-2)": s == Fraction(2 * self.d, self.d - 2),
            "1/M = lam/b": 1 / self.M == self.lam / self.b,
            "1/Q = 1 - lam + lam/a": 1 / self.Q == 1 - self.lam + self.lam / self.a,
            "1/a = 1 - kappa + 2 kappa/(2* nu_tilde)":
                1 / self.a == 1 - self.kappa + 2 * self.kappa / (s * self.nu_tilde),
            "kappa b/nu_tilde <= 1": self.kappa * self.b / self.nu_tilde <= 1,
        }


@dataclass(frozen=True)
class ExponentWitnessB(_Witness):
    d: int
    lam: Fraction
    p: Fraction
    q_tilde: Fraction
    theta: Fraction
    nu_bar: Fraction
    b: Fraction

    def relations(self) -> dict[str, bool]:
        s = sobolev_conjugate(self.d)
        return {
            "1/p + 1/q_tilde = 1/2": 1 / self.p + 1 / self.q_tilde == Fraction(1, 2),
            "q_tilde >= 1": self.q_tilde >= 1,
            "theta = nu_bar/(2 - nu_bar)": self.theta == self.nu_bar / (2 - self.nu_bar),
            "0 < theta < 1": 0 < self.theta < 1,
            "0 < nu_bar < 1": 0 < self.nu_bar < 1,
            "2/(q_tilde (2 - nu_bar)) = 1 - theta + 2 theta/(2* nu_bar)":
                2 / (self.q_tilde * (2 - self.nu_bar)) == 1 - self.theta + 2 * self.theta / (s * self.nu_bar),
            "1 < b < 2 lam p/d": 1 < self.b < 2 * self.lam * self.p / self.d,
        }


def techlem_hypothesis(d: int, q: Fraction, b: Fraction, lam: Fraction) -> str | None:
    """Reason the hypothesis fails, or ``None`` if it holds."""
    if q < 1 or b < 1:
        return "q and b must be >= 1"
    if not 0 < lam < 1:
        return "lam must lie in (0, 1)"
    bound = d * b / (b * d - 2 * lam)
    if not q < bound:
        return f"q = {q} must be below db/(bd - 2 lam) = {bound}"
    return None


def _witness_a(d: int, q: Fraction, b: Fraction, lam: Fraction, kappa: Fraction, nu: Fraction) -> ExponentWitnessA:
    s = sobolev_conjugate(d)
    a = 1 / (1 - kappa + 2 * kappa / (s * nu))
    Q = 1 / (1 - lam + lam / a)
    return ExponentWitnessA(d, q, b, lam, b / lam, Q, a, kappa, nu, s)


def feasible_techlem(d: Number, q: Number, b: Number, lam: Number, max_depth: int = 256,
                     kappa_steps: int = 16) -> ExponentWitnessA:
    """Witness ``(M, Q, a, kappa, nu_tilde)`` for the interpolation lemma.

    ``nu_tilde`` runs through ``1 - 2^-k`` (starting above ``(d-2)/d``) and
    ``kappa`` through ``j/kappa_steps * nu_tilde/b``; the first pair whose
    relations all verify is returned.  Under the hypothesis the choice
    ``kappa = nu_tilde/b`` becomes feasible once ``nu_tilde`` is close enough
    to 1, so the search terminates.
    """
    dd = _dimension(d)
    q, b, lam = as_fraction(q), as_fraction(b), as_fraction(lam)
    why = techlem_hypothesis(dd, q, b, lam)
    if why is not None:
        raise PreconditionError(why)
    floor = Fraction(dd - 2, dd)
    for k in range(1, max_depth + 1):
        nu = 1 - Fraction(1, 2**k)
        if nu <= floor:
            continue
        top = nu / b
        for j in range(1, kappa_steps + 1):
            kappa = top * Fraction(j, kappa_steps)
            if not kappa < 1:
                break
            w = _witness_a(dd, q, b, lam, kappa, nu)
            if w.verify():
                return w
    raise RuntimeError(f"no witness found to depth {max_depth}; hypothesis margin too thin for the search")


def lem61_hypothesis(d: int, lam: Fraction, p: Fraction) -> str | None:
    if not 0 < lam < 1:
        return "lam must lie in (0, 1)"
    lower = max(Fraction(d) / (2 * lam), Fraction(d))
    if not p > lower:
        return f"p = {p} must exceed max(d/(2 lam), d) = {lower}"
    return None


def feasible_lem61(d: Number, lam: Number, p: Number) -> ExponentWitnessB:
    """Closed-form witness ``(q_tilde, theta, nu_bar, b)`` for the bootstrap lemma, verified exactly."""
    dd = _dimension(d)
    lam, p = as_fraction(lam), as_fraction(p)
    why = lem61_hypothesis(dd, lam, p)
    if why is not None:
        raise PreconditionError(why)
    q_tilde = 2 * p / (p - 2)
    nu_bar = (dd - p + dd * p) / (dd * p)
    theta = nu_bar / (2 - nu_bar)
    b = (1 + 2 * lam * p / dd) / 2
    w = ExponentWitnessB(dd, lam, p, q_tilde, theta, nu_bar, b)
    bad = w.failures()
    if bad:
        raise RuntimeError(f"closed-form witness failed {bad}; this is a defect")
    return w


def write_witness(path, witness: _Witness) -> None:
    with open(path, "w") as fh:
        fh.write(witness.to_text())


def read_witness(path) -> dict[str, Fraction]:
    out = {}
    with open(path) as fh:
        for line in fh:
            if line.strip():
                k, v = (s.strip() for s in line.split("=", 1))
                out[k] = Fraction(v)
    return out
