"""Monte Carlo agents driven by the extracted feedback, for cross-checking the PDE solution."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .grid import FieldTrajectory, GridSpec, ScalarField, read_particle_dump, write_particle_dump
from .hamiltonian import legendre_lagrangian
from .hjb import extract_control
from .log_coupling import g_eps_array
from .mfg import MFGProblem, MFGSolution

CHUNK = 4096
CONTROLS = ("optimal", "zero")


@dataclass(frozen=True)
class ParticleEnsemble:
    """Saved positions, shape ``(frames, N, d)``, all in ``[0, 1)^d``."""

    positions: np.ndarray
    seed: int
    control: str = "optimal"

    def __post_init__(self) -> None:
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 3 or pos.shape[1] < 1:
            raise ValueError("positions must have shape (frames, N, d) with N >= 1")
        if np.any(pos < 0.0) or np.any(pos >= 1.0):
            raise ValueError("positions must be wrapped into [0, 1)^d")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def N(self) -> int:
        return self.positions.shape[1]

    @property
    def d(self) -> int:
        return self.positions.shape[2]

    def dump(self, path) -> None:
        write_particle_dump(path, self.positions)

    @classmethod
    def load(cls, path, seed: int = -1, control: str = "optimal") -> ParticleEnsemble:
        return cls(read_particle_dump(path), seed, control)


def wrap(x: np.ndarray) -> np.ndarray:
    """Map into ``[0, 1)``; guards the ``-tiny % 1 == 1.0`` rounding case."""
    y = np.mod(x, 1.0)
    return np.where(y >= 1.0, 0.0, y)


def periodic_interp(values: np.ndarray, pts: np.ndarray, n: int, d: int) -> np.ndarray:
    """Multilinear periodic interpolation of cell-centred ``values`` at ``pts`` (shape ``(N, d)``).

    ``values`` may carry leading axes; the result has shape ``(*leading, N)``.
    """
    s = pts * n - 0.5
    i0 = np.floor(s).astype(np.int64)
    w = s - i0
    out = 0.0
    for corner in range(2**d):
        idx, weight = [], 1.0
        for k in range(d):
            bit = (corner >> k) & 1
            idx.append((i0[:, k] + bit) % n)
            weight = weight * (w[:, k] if bit else 1.0 - w[:, k])
        out = out + weight * values[(Ellipsis, *idx)]
    return out


def sample_density(m: np.ndarray, grid: GridSpec, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling of the piecewise-constant density ``m``.

    The first uniform picks the cell through the cumulative cell masses, the
    remaining ``d`` place the point uniformly inside it; in 1-d this is the
    exact inverse CDF.
    """
    mass = np.maximum(np.asarray(m, float).ravel(), 0.0)
    cdf = np.cumsum(mass)
    cdf /= cdf[-1]
    cell = np.minimum(np.searchsorted(cdf, uniforms[:, 0], side="right"), cdf.size - 1)
    ijk = np.stack(np.unravel_index(cell, grid.shape), axis=1)
    return wrap((ijk + uniforms[:, 1:]) * grid.h)


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, chunk])))


def _chunks(N: int) -> list[tuple[int, int, int]]:
    return [(c, lo, min(lo + CHUNK, N)) for c, lo in enumerate(range(0, N, CHUNK))]


def velocity_frames(solution: MFGSolution, problem: MFGProblem, control: str) -> np.ndarray:
    """Grid velocities ``(frames, d, ...)``; frame ``n + 1`` drives step ``n``, as in the density solver."""
    if control == "optimal":
        return extract_control(solution.u_traj, problem.params)
    if control == "zero":
        return np.zeros((len(solution.u_traj), solution.grid.d, *solution.grid.shape))
    raise ValueError(f"control must be one of {CONTROLS}, got {control!r}")


def _simulate_chunk(seed: int, chunk: int, count: int, m0: np.ndarray, vel: np.ndarray, grid: GridSpec) -> np.ndarray:
    rng = _chunk_rng(seed, chunk)
    out = np.empty((grid.nt + 1, count, grid.d))
    x = sample_density(m0, grid, rng.random((count, grid.d + 1)))
    out[0] = x
    sig = math.sqrt(2.0 * grid.dt)
    for n in range(grid.nt):
        v = periodic_interp(vel[n + 1], x, grid.n, grid.d).T
        x = wrap(x + grid.dt * v + sig * rng.standard_normal((count, grid.d)))
        out[n + 1] = x
    return out


def simulate(solution: MFGSolution, problem: MFGProblem, N: int, seed: int, *, control: str = "optimal",
             threads: int = 1) -> ParticleEnsemble:
    """Euler-Maruyama for ``dx = v dt + sqrt(2) dW`` with ``v = -D_pH(x, Du)`` interpolated from the grid.

    Random numbers come from one counter-based stream per chunk of
    ``CHUNK`` particles keyed by ``(seed, chunk index)``, so the result does
    not depend on ``threads``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    grid = solution.grid
    vel = velocity_frames(solution, problem, control)
    m0 = problem.m0.values
    chunks = _chunks(N)

    def run(c):
        idx, lo, hi = c
        return _simulate_chunk(seed, idx, hi - lo, m0, vel, grid)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return ParticleEnsemble(np.concatenate(parts, axis=1), seed, control)


def histogram(points: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Counting-measure density on the solver grid; integrates to 1 exactly (up to rounding)."""
    idx = np.minimum((points * grid.n).astype(np.int64), grid.n - 1)
    flat = np.ravel_multi_index(tuple(idx.T), grid.shape)
    counts = np.bincount(flat, minlength=grid.n**grid.d).reshape(grid.shape)
    return counts / (points.shape[0] * grid.cell_volume)


def density_mismatch(ensemble: ParticleEnsemble, m_traj: FieldTrajectory) -> np.ndarray:
    """Per-frame discrete L1 distance between the particle histogram and ``m``."""
    grid = m_traj.grid
    if ensemble.positions.shape[0] != len(m_traj) or ensemble.d != grid.d:
        raise ValueError("ensemble frames do not match the density trajectory")
    return np.array([np.sum(np.abs(histogram(x, grid) - m)) * grid.cell_volume
                     for x, m in zip(ensemble.positions, m_traj.frames)])


def resampling_baseline(m: ScalarField | np.ndarray, grid: GridSpec, N: int, seed: int, reps: int = 8) -> float:
    """Mean L1 histogram distance for ``N`` exact samples of ``m``: the pure sampling-noise floor."""
    vals = m.values if isinstance(m, ScalarField) else np.asarray(m)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0xB45E])))
    dists = []
    for _ in range(reps):
        pts = sample_density(vals, grid, rng.random((N, grid.d + 1)))
        dists.append(np.sum(np.abs(histogram(pts, grid) - vals)) * grid.cell_volume)
    return float(np.mean(dists))


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    stderr: float
    count: int
    reference: float

    @property
    def gap(self) -> float:
        return abs(self.mean - self.reference)


def particle_costs(ensemble: ParticleEnsemble, solution: MFGSolution, problem: MFGProblem) -> np.ndarray:
    """Per-particle ``sum_n dt [L(x_n, v_n) + ln(m + eps)(x_n, t_n)] + uT(x_T)``."""
    grid = solution.grid
    if ensemble.positions.shape[0] != grid.nt + 1:
        raise ValueError("ensemble does not hold every time level")
    vel = velocity_frames(solution, problem, ensemble.control)
    pos = ensemble.positions
    cost = np.zeros(ensemble.N)
    for n in range(grid.nt):
        x = pos[n]
        v = periodic_interp(vel[n + 1], x, grid.n, grid.d)
        g = periodic_interp(g_eps_array(solution.m_traj.frames[n], solution.eps, n), x, grid.n, grid.d)
        cost += grid.dt * (legendre_lagrangian(problem.params, x.T, v) + g)
    return cost + periodic_interp(problem.uT.values, pos[-1], grid.n, grid.d)


def empirical_cost(ensemble: ParticleEnsemble, solution: MFGSolution, problem: MFGProblem,
                   bucket: tuple[np.ndarray, np.ndarray] | None = None) -> CostEstimate:
    """Mean realised cost of particles starting in the box ``bucket = (lower, upper)``.

    The comparator is ``u(., 0)`` interpolated at those particles' starting
    points, i.e. the value function averaged over the bucket under ``m0``.
    """
    grid = solution.grid
    start = ensemble.positions[0]
    if bucket is None:
        mask = np.ones(ensemble.N, dtype=bool)
    else:
        lo, hi = (np.broadcast_to(np.asarray(b, float), (grid.d,)) for b in bucket)
        mask = np.all((start >= lo) & (start < hi), axis=1)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("no particle starts in the bucket")
    costs = particle_costs(ensemble, solution, problem)[mask]
    ref = float(np.mean(periodic_interp(solution.u_traj.frames[0], start[mask], grid.n, grid.d)))
    se = float(np.std(costs, ddof=1) / math.sqrt(count)) if count > 1 else float("inf")
    return CostEstimate(float(np.mean(costs)), se, count, ref)
