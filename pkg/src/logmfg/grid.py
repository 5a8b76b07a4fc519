"""Periodic grids on the unit flat torus and the discrete calculus used by every solver.

Fields live on a uniform cell-centred grid with ``n`` cells per axis, so cell
``i`` has centre ``(i + 1/2) h`` with ``h = 1/n``.  Arrays are indexed
``values[i_1, ..., i_d]`` where axis ``k`` corresponds to coordinate ``x_k``.
Vector fields carry a leading axis of length ``d``.

Discrete integration by parts
-----------------------------
The compact Laplacian pairs exactly with the *forward* difference:

    sum_i f_i (lap g)_i h^d = - sum_k sum_i (D+_k f)_i (D+_k g)_i h^d

which is what :func:`dirichlet_form` evaluates.  The central gradient pairs
exactly with the wide (2h) Laplacian instead, so it is not used for this
identity.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

FIELD_MAGIC = b"MFGF"
PARTICLE_MAGIC = b"MFGP"
DUMP_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic space-time grid on ``T^d x [0, T]``."""

    d: int
    n: int
    nt: int
    T: float

    def __post_init__(self) -> None:
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        if self.n < 4:
            raise ValueError(f"n must be >= 4, got {self.n}")
        if self.nt < 1:
            raise ValueError(f"nt must be >= 1, got {self.nt}")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"T must be positive and finite, got {self.T}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt + 1)

    def coords(self) -> np.ndarray:
        """Cell centres, shape ``(d, n, ..., n)``."""
        x1 = (np.arange(self.n) + 0.5) * self.h
        return np.stack(np.meshgrid(*([x1] * self.d), indexing="ij"))

    def refined(self, factor: int = 2) -> GridSpec:
        return GridSpec(self.d, self.n * factor, self.nt * factor, self.T)

    def with_(self, **changes) -> GridSpec:
        kw = dict(d=self.d, n=self.n, nt=self.nt, T=self.T)
        kw.update(changes)
        return GridSpec(**kw)


@dataclass(frozen=True)
class ScalarField:
    """One real value per cell of ``grid``."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite values")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: GridSpec, func) -> ScalarField:
        return cls(grid, np.broadcast_to(func(grid.coords()), grid.shape))

    @classmethod
    def constant(cls, grid: GridSpec, value: float) -> ScalarField:
        return cls(grid, np.full(grid.shape, float(value)))


@dataclass(frozen=True)
class FieldTrajectory:
    """Frames of a field at time levels ``start, start + 1, ..., grid.nt``.

    A full trajectory has ``start == 0`` and ``nt + 1`` frames; adjoint runs
    begin at a later level.
    """

    grid: GridSpec
    frames: np.ndarray
    start: int = 0

    def __post_init__(self) -> None:
        fr = np.asarray(self.frames, dtype=float)
        expected = (self.grid.nt - self.start + 1, *self.grid.shape)
        if not 0 <= self.start <= self.grid.nt:
            raise ValueError(f"start level {self.start} outside [0, {self.grid.nt}]")
        if fr.shape != expected:
            raise ValueError(f"trajectory shape {fr.shape}, expected {expected}")
        if not np.all(np.isfinite(fr)):
            bad = int(np.argwhere(~np.isfinite(fr))[0, 0]) + self.start
            raise ValueError(f"trajectory has non-finite values at time level {bad}")
        fr = fr.copy()
        fr.flags.writeable = False
        object.__setattr__(self, "frames", fr)

    def __len__(self) -> int:
        return self.frames.shape[0]

    def frame(self, level: int) -> ScalarField:
        """Field at absolute time level ``level``."""
        return ScalarField(self.grid, self.frames[level - self.start])

    def times(self) -> np.ndarray:
        return self.grid.times()[self.start :]

    @classmethod
    def constant_in_time(cls, field_: ScalarField) -> FieldTrajectory:
        g = field_.grid
        return cls(g, np.broadcast_to(field_.values, (g.nt + 1, *g.shape)))


# ---------------------------------------------------------------------------
# discrete calculus on raw arrays (last d axes are spatial)


def _axes(d: int, ndim: int) -> range:
    return range(ndim - d, ndim)


def central_diff(u: np.ndarray, h: float, d: int) -> np.ndarray:
    return np.stack([(np.roll(u, -1, ax) - np.roll(u, 1, ax)) / (2 * h) for ax in _axes(d, u.ndim)])


def forward_diff(u: np.ndarray, h: float, d: int) -> np.ndarray:
    return np.stack([(np.roll(u, -1, ax) - u) / h for ax in _axes(d, u.ndim)])


def backward_diff(u: np.ndarray, h: float, d: int) -> np.ndarray:
    return np.stack([(u - np.roll(u, 1, ax)) / h for ax in _axes(d, u.ndim)])


def laplacian_array(u: np.ndarray, h: float, d: int) -> np.ndarray:
    out = np.zeros_like(u)
    for ax in _axes(d, u.ndim):
        out += np.roll(u, -1, ax) - 2.0 * u + np.roll(u, 1, ax)
    return out / h**2


def central_div(w: np.ndarray, h: float, d: int) -> np.ndarray:
    """Central divergence of a vector field ``w`` with leading axis ``d``."""
    out = np.zeros_like(w[0])
    for k, ax in enumerate(_axes(d, w[0].ndim)):
        out += (np.roll(w[k], -1, ax) - np.roll(w[k], 1, ax)) / (2 * h)
    return out


# ---------------------------------------------------------------------------
# public operations on ScalarField


def gradient(f: ScalarField, mode: str = "central"):
    """Periodic gradient.

    ``mode="central"`` returns an array of shape ``(d, *grid.shape)``.
    ``mode="upwind-pair"`` returns ``(forward, backward)`` one-sided differences.
    """
    g = f.grid
    if mode == "central":
        return central_diff(f.values, g.h, g.d)
    if mode == "upwind-pair":
        return forward_diff(f.values, g.h, g.d), backward_diff(f.values, g.h, g.d)
    raise ValueError(f"unknown gradient mode {mode!r}")


def laplacian(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, laplacian_array(f.values, f.grid.h, f.grid.d))


def integrate(f: ScalarField | np.ndarray, grid: GridSpec | None = None) -> float:
    """Midpoint (= trapezoid on the periodic grid) quadrature, ``h^d * sum``."""
    if isinstance(f, ScalarField):
        return float(f.grid.cell_volume * np.sum(f.values))
    if grid is None:
        raise TypeError("grid is required when integrating a raw array")
    return float(grid.cell_volume * np.sum(f))


def lp_norm(f: ScalarField | np.ndarray, p: float, grid: GridSpec | None = None) -> float:
    if p < 1:
        raise ValueError(f"p must be >= 1 or inf, got {p}")
    vals = f.values if isinstance(f, ScalarField) else np.asarray(f)
    grid = f.grid if isinstance(f, ScalarField) else grid
    if np.isinf(p):
        return float(np.max(np.abs(vals)))
    return integrate(np.abs(vals) ** p, grid) ** (1.0 / p)


def dirichlet_form(f: ScalarField, g: ScalarField) -> float:
    """``sum_k integral D+_k f * D+_k g``; equals ``-integrate(f * laplacian(g))`` exactly."""
    grid = f.grid
    df = forward_diff(f.values, grid.h, grid.d)
    dg = forward_diff(g.values, grid.h, grid.d)
    return integrate(np.sum(df * dg, axis=0), grid)


# ---------------------------------------------------------------------------
# binary dumps


def _write_header(fh: BinaryIO, magic: bytes, d: int, n: int, nt: int) -> None:
    fh.write(_HEADER.pack(magic, DUMP_VERSION, d, n, nt))


def _read_header(fh: BinaryIO, magic: bytes) -> tuple[int, int, int]:
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise ValueError("truncated dump header")
    got, version, d, n, nt = _HEADER.unpack(raw)
    if got != magic:
        raise ValueError(f"bad magic {got!r}, expected {magic!r}")
    if version != DUMP_VERSION:
        raise ValueError(f"unsupported dump version {version}")
    return d, n, nt


def write_field_dump(path: str | Path, data: ScalarField | FieldTrajectory) -> None:
    """Write ``MFGF`` header then little-endian float64 values, time-major, row-major.

    The ``nt`` header slot holds ``frames - 1`` (0 for a single field).
    """
    if isinstance(data, ScalarField):
        arr = data.values[None]
    else:
        arr = data.frames
    grid = data.grid
    with open(path, "wb") as fh:
        _write_header(fh, FIELD_MAGIC, grid.d, grid.n, arr.shape[0] - 1)
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_field_dump(path: str | Path) -> tuple[int, int, np.ndarray]:
    """Return ``(d, n, frames)`` where ``frames`` has shape ``(nt + 1, n, ..., n)``."""
    with open(path, "rb") as fh:
        d, n, nt = _read_header(fh, FIELD_MAGIC)
        data = np.frombuffer(fh.read(), dtype="<f8")
    expected = (nt + 1) * n**d
    if data.size != expected:
        raise ValueError(f"dump holds {data.size} values, header implies {expected}")
    return d, n, data.reshape((nt + 1,) + (n,) * d).astype(float)


def write_particle_dump(path: str | Path, positions: np.ndarray) -> None:
    """``positions`` has shape ``(frames, N, d)``; header slots are (d, N, frames - 1)."""
    frames, N, d = positions.shape
    with open(path, "wb") as fh:
        _write_header(fh, PARTICLE_MAGIC, d, N, frames - 1)
        fh.write(np.ascontiguousarray(positions, dtype="<f8").tobytes())


def read_particle_dump(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        d, N, nt = _read_header(fh, PARTICLE_MAGIC)
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != (nt + 1) * N * d:
        raise ValueError("particle dump size does not match header")
    return data.reshape(nt + 1, N, d).astype(float)

