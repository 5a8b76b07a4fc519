"""INI-style run configuration.

One file per run; every section is optional and every key has a default.
Unknown sections or keys are rejected with their line number.  See
``README.md`` for the full schema and ``configs/`` at the repository root
for ready-made files.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from .grid import GridSpec, ScalarField
from .hamiltonian import FourierSeries, HamiltonianParams
from .log_coupling import EpsSchedule
from .mfg import MFGProblem, PicardOptions, normalized_density


class ConfigError(ValueError):
    """Configuration problem; the message names the section, key and line."""


@dataclass(frozen=True)
class ProblemSection:
    d: int = 1
    n: int = 64
    nt: int = 100
    T: float = 0.5
    gamma: float = 1.2
    a: str = "1.0"
    V: str = "0.0"
    m0: str = "1.0"
    uT: str = "0.0"
    eps: float = 0.0
    eps_schedule: tuple[float, ...] = ()


@dataclass(frozen=True)
class SolverSection:
    omega: float = 0.5
    tol: float = 1e-8
    max_iter: int = 200
    alpha: str = "auto"
    alpha_safety: float = 1.25
    linear_solver_tol: float = 1e-10


@dataclass(frozen=True)
class HarnessSection:
    p: float = 2.0
    q: float = 2.0
    nu: float = 0.5
    x0: tuple[tuple[int, ...], ...] = ()
    tau: tuple[int, ...] = ()


@dataclass(frozen=True)
class ParticlesSection:
    N: int = 100_000
    seed: int = 0
    control: str = "optimal"
    bucket_lower: tuple[float, ...] = ()
    bucket_upper: tuple[float, ...] = ()


@dataclass(frozen=True)
class OutputSection:
    directory: str = "run"
    formats: tuple[str, ...] = ("csv", "dump")


@dataclass(frozen=True)
class MMSSection:
    equations: tuple[str, ...] = ("hjb", "fp")
    sizes: tuple[int, ...] = (32, 64, 128)
    steps: tuple[int, ...] = (160, 320, 640)
    dt_factor: float = 0.5
    reference_factor: int = 16


@dataclass(frozen=True)
class ExponentsSection:
    lemma: str = "both"
    d: str = "3"
    q: str = "1"
    b: str = "1"
    lam: str = "1/2"
    p: str = "4"


SECTIONS = {
    "problem": ProblemSection,
    "solver": SolverSection,
    "harness": HarnessSection,
    "particles": ParticlesSection,
    "output": OutputSection,
    "mms": MMSSection,
    "exponents": ExponentsSection,
}


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSection = field(default_factory=ProblemSection)
    solver: SolverSection = field(default_factory=SolverSection)
    harness: HarnessSection = field(default_factory=HarnessSection)
    particles: ParticlesSection = field(default_factory=ParticlesSection)
    output: OutputSection = field(default_factory=OutputSection)
    mms: MMSSection = field(default_factory=MMSSection)
    exponents: ExponentsSection = field(default_factory=ExponentsSection)
    source: str = "<defaults>"

    # -- builders ----------------------------------------------------------

    def grid(self) -> GridSpec:
        p = self.problem
        return GridSpec(p.d, p.n, p.nt, p.T)

    def hamiltonian(self) -> HamiltonianParams:
        p = self.problem
        return HamiltonianParams(FourierSeries.parse(p.a, p.d), FourierSeries.parse(p.V, p.d), p.gamma)

    def build_problem(self) -> MFGProblem:
        p = self.problem
        grid = self.grid()
        m0 = FourierSeries.parse(p.m0, p.d)
        uT = FourierSeries.parse(p.uT, p.d)
        return MFGProblem(grid, self.hamiltonian(), normalized_density(grid, m0),
                          ScalarField.from_function(grid, uT), p.eps)

    def picard_options(self) -> PicardOptions:
        s = self.solver
        alpha = None if s.alpha == "auto" else float(s.alpha)
        return PicardOptions(omega=s.omega, tol=s.tol, max_iter=s.max_iter, alpha=alpha,
                             alpha_safety=s.alpha_safety, linear_solver_tol=s.linear_solver_tol)

    def schedule(self) -> EpsSchedule:
        if not self.problem.eps_schedule:
            raise ConfigError(f"{self.source}: [problem] eps_schedule is required for this command")
        return EpsSchedule(self.problem.eps_schedule)


# ---------------------------------------------------------------------------
# parsing


def _line_index(text: str) -> dict[tuple[str, str | None], int]:
    """``(section, key) -> line``; ``(section, None)`` is the header line."""
    out: dict[tuple[str, str | None], int] = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.fullmatch(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            out.setdefault((section, None), no)
            continue
        key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
        if section is not None:
            out.setdefault((section, key), no)
    return out


def _split(text: str, sep: str = ",") -> list[str]:
    return [s.strip() for s in text.split(sep) if s.strip()]


def _convert(name: str, typ, raw: str):
    if typ in ("int", int):
        return int(raw)
    if typ in ("float", float):
        return float(raw)
    if typ in ("str", str):
        return raw.strip()
    if name in ("eps_schedule", "bucket_lower", "bucket_upper"):
        return tuple(float(v) for v in _split(raw.replace(";", ",")))
    if name in ("tau", "sizes", "steps"):
        return tuple(int(v) for v in _split(raw))
    if name in ("formats", "equations"):
        return tuple(_split(raw))
    if name == "x0":
        return tuple(tuple(int(v) for v in item.split()) for item in _split(raw, ";"))
    raise TypeError(f"no converter for {name}")


def _check_section(name: str, sec) -> None:
    if name == "problem":
        if sec.eps < 0:
            raise ValueError("eps must be >= 0")
    elif name == "particles":
        if sec.N < 1:
            raise ValueError("N must be >= 1")
        if sec.control not in ("optimal", "zero"):
            raise ValueError("control must be 'optimal' or 'zero'")
        if len(sec.bucket_lower) != len(sec.bucket_upper):
            raise ValueError("bucket_lower and bucket_upper need the same length")
    elif name == "solver":
        if sec.alpha != "auto":
            float(sec.alpha)
    elif name == "mms":
        bad = set(sec.equations) - {"hjb", "fp"}
        if bad:
            raise ValueError(f"unknown MMS equations {sorted(bad)}")
        if len(sec.sizes) < 2 or len(sec.steps) < 2:
            raise ValueError("order studies need at least two levels")
    elif name == "exponents":
        if sec.lemma not in ("techlem", "lem61", "both"):
            raise ValueError("lemma must be techlem, lem61 or both")
    elif name == "output":
        bad = set(sec.formats) - {"csv", "dump"}
        if bad:
            raise ValueError(f"unknown output formats {sorted(bad)}")


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Parse configuration text; raises :class:`ConfigError` with line/key diagnostics."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str  # keep key case (T, V, N, uT)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    lines = _line_index(text)
    sections = {}
    for name in cp.sections():
        where = f"{source}:{lines.get((name, None), '?')}"
        if name not in SECTIONS:
            raise ConfigError(f"{where}: unknown section [{name}]; expected one of {sorted(SECTIONS)}")
        cls = SECTIONS[name]
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in cp.items(name):
            kline = f"{source}:{lines.get((name, key.lower()), '?')}"
            if key not in known:
                raise ConfigError(f"{kline}: unknown key '{key}' in [{name}]; expected one of {sorted(known)}")
            try:
                kwargs[key] = _convert(key, known[key].type, raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{kline}: bad value for [{name}] {key} = {raw!r}: {exc}") from exc
        sec = cls(**kwargs)
        try:
            _check_section(name, sec)
        except ValueError as exc:
            raise ConfigError(f"{where}: [{name}] {exc}") from exc
        sections[name] = sec
    cfg = RunConfig(**sections, source=source)
    p = cfg.problem
    checks = [
        ("problem", ("d", "n", "nt", "T"), cfg.grid),
        ("problem", ("a", "V", "gamma"), cfg.hamiltonian),
        ("problem", ("m0",), lambda: FourierSeries.parse(p.m0, p.d)),
        ("problem", ("uT",), lambda: FourierSeries.parse(p.uT, p.d)),
        ("problem", ("eps_schedule",), lambda: p.eps_schedule and EpsSchedule(p.eps_schedule)),
        ("solver", ("omega", "tol", "max_iter", "alpha_safety"), cfg.picard_options),
    ]
    for name, keys, build in checks:
        try:
            build()
        except ValueError as exc:
            present = [k for k in keys if (name, k.lower()) in lines]
            named = [k for k in present if re.search(rf"\b{re.escape(k)}\b", str(exc))]
            present = named or present
            no =lines.get((name, present[0].lower())) if present else lines.get((name, None), "?")
            raise ConfigError(f"{source}:{no}: [{name}] {'/'.join(keys)}: {exc}") from exc
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


def format_config(cfg: RunConfig) -> str:
    """Render back to INI; ``parse_config(format_config(c))`` reproduces ``c``."""
    out = []
    for name in SECTIONS:
        sec = getattr(cfg, name)
        out.append(f"[{name}]")
        for f in fields(sec):
            v = getattr(sec, f.name)
            if f.name == "x0":
                v = "; ".join(" ".join(map(str, t)) for t in v)
            elif isinstance(v, tuple):
                v = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            out.append(f"{f.name} = {v}")
        out.append("")
    return "\n".join(out)
