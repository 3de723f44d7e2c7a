"""Configuration-driven experiments: node set, solve, reference, error tables.

A configuration is an INI file with one section per stage::

    [nodes]
    configuration = halton      ; halton | uniform | waldron | waldron+lines | rbf-fig1

    [market]
    r = 0.03

    [shepard]
    q = 30

    [time]
    M = 20
    scheme = bdf2

Missing keys take the defaults of :class:`ExperimentConfig`; the resolved
configuration is written next to every report.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import geometry
from .assembly import SpatialSystem, assemble
from .covering import build_covering
from .fdref import FDSolution, fd_interpolate, fd_solve
from .model import MarketParams
from .rbf import rbf_assemble, rbf_nodeset_fig1
from .shepard import MultinodeShepard, ShepardParams
from .timestepper import SCHEME_ORDER, Trajectory, full_state, run

CONFIGURATIONS = ("halton", "uniform", "waldron", "waldron+lines", "rbf-fig1")
ERROR_HEADER = "step,t,E_mean_MS,E_max_MS,E_mean_RBF,E_max_RBF"


class ExperimentError(RuntimeError):
    """A failure inside one pipeline stage; ``module`` names the stage."""

    def __init__(self, module: str, cause: BaseException):
        self.module = module
        self.cause = cause
        super().__init__(f"[{module}] {cause}")


def _stage(module: str, fn: Callable, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ExperimentError:
        raise
    except Exception as exc:
        raise ExperimentError(module, exc) from exc


@dataclass(frozen=True)
class ExperimentConfig:
    configuration: str = "halton"
    halton_total: int = 5000
    halton_boundary: int = 141
    halton_gap: float = 0.2
    uniform_degree: int = 70
    waldron_net: int = 7
    waldron_cell: int = 10
    waldron_cells: str = "uniform"
    line_nodes: int = 52
    market: MarketParams = field(default_factory=MarketParams)
    mu: int = 4
    p: int = 2
    q: int = 30
    M: int = 20
    scheme: str = "bdf2"
    grid_resolution: int = 64
    reference_N: int = 512
    reference_M: int = 520
    rbf: bool = True
    rbf_shape: float | None = None
    output: str = "results"

    def __post_init__(self):
        if self.configuration not in CONFIGURATIONS:
            raise ValueError(f"unknown node configuration {self.configuration!r}")
        if self.scheme not in SCHEME_ORDER:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.mu <= 2 or self.mu % 2:
            raise ValueError("mu must be an even integer greater than 2")
        if self.p < 1 or self.q < 0:
            raise ValueError("need p >= 1 and q >= 0")
        if self.M < 2 or self.grid_resolution < 2:
            raise ValueError("need M >= 2 and grid_resolution >= 2")
        if self.reference_M % self.M:
            raise ValueError("reference_M must be a multiple of M")
        if self.rbf_shape is not None and not self.rbf_shape > 0:
            raise ValueError("rbf_shape must be positive")

    # INI layout: section -> keys of this dataclass (market keys go to MarketParams)
    SECTIONS = {
        "nodes": ("configuration", "halton_total", "halton_boundary", "halton_gap",
                  "uniform_degree", "waldron_net", "waldron_cell", "waldron_cells",
                  "line_nodes"),
        "shepard": ("mu", "p", "q"),
        "time": ("M", "scheme"),
        "errors": ("grid_resolution", "reference_N", "reference_M"),
        "baseline": ("rbf", "rbf_shape"),
        "output": ("output",),
    }

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        cp.optionxform = str
        cp.read_string(text)
        known = {"market", *cls.SECTIONS}
        unknown = [s for s in cp.sections() if s not in known]
        if unknown:
            raise ValueError(f"unknown config section(s): {', '.join(unknown)}")
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for section, keys in cls.SECTIONS.items():
            if not cp.has_section(section):
                continue
            for key, raw in cp.items(section):
                if key not in keys:
                    raise ValueError(f"unknown key {key!r} in [{section}]")
                kwargs[key] = _parse(raw, types[key])
        if cp.has_section("market"):
            mfields = {f.name for f in dataclasses.fields(MarketParams)}
            mkw = {}
            for key, raw in cp.items("market"):
                if key not in mfields:
                    raise ValueError(f"unknown key {key!r} in [market]")
                mkw[key] = float(raw)
            kwargs["market"] = MarketParams(**mkw)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_ini(Path(path).read_text())

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        for section, keys in self.SECTIONS.items():
            cp[section] = {k: _format(getattr(self, k)) for k in keys}
            if section == "nodes":
                cp["market"] = {k: repr(v) for k, v in dataclasses.asdict(self.market).items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _parse(raw: str, kind):
    kind = str(kind)
    raw = raw.strip()
    if "None" in kind and raw.lower() in ("", "none", "auto"):
        return None
    if kind.startswith("bool"):
        return raw.lower() in ("1", "true", "yes", "on")
    if kind.startswith("int"):
        return int(raw)
    if kind.startswith("float"):
        return float(raw)
    return raw


def _format(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ErrorReport:
    """Per-step errors (index l-1 holds time level l) plus run diagnostics."""

    times: np.ndarray
    E_mean: np.ndarray
    E_max: np.ndarray
    conditions: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def steps(self) -> np.ndarray:
        return np.arange(1, len(self.times) + 1)

    def stability_ratio(self) -> float:
        return float(self.E_mean.max() / self.E_mean.min())


def evaluation_grid(resolution: int) -> np.ndarray:
    """Lattice of spacing 8/resolution with ``x + y <= 8 - 8/resolution``."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    h = geometry.SIDE / resolution
    i, j = np.meshgrid(np.arange(resolution), np.arange(resolution), indexing="ij")
    keep = (i + j) <= resolution - 1
    return h * np.column_stack([i[keep], j[keep]]).astype(float)


def measure_errors(trajectory: Trajectory, system: SpatialSystem, evaluator,
                   reference, grid) -> ErrorReport:
    """Absolute errors at the grid for every time level after the first.

    `evaluator` maps full nodal vectors to grid values (a matrix or a
    callable); `reference` is an :class:`FDSolution` or a callable
    ``(grid, t) -> values``.
    """
    grid = np.asarray(grid, dtype=float)
    apply = evaluator if callable(evaluator) else (lambda v: evaluator @ v)
    means, maxes = [], []
    for l in range(1, len(trajectory.times)):
        t = trajectory.times[l]
        u = apply(full_state(system, trajectory.states[l], t))
        if isinstance(reference, FDSolution):
            try:
                ref = fd_interpolate(reference, grid, t)
            except KeyError as exc:
                raise ValueError(f"reference has no level at t={t:g}") from exc
        else:
            ref = reference(grid, t)
        err = np.abs(np.asarray(u) - ref)
        means.append(err.mean())
        maxes.append(err.max())
    return ErrorReport(trajectory.times[1:].copy(), np.array(means), np.array(maxes),
                       dict(trajectory.conditions))


def build_nodes(config: ExperimentConfig) -> geometry.NodeSet:
    c = config.configuration
    if c == "halton":
        return geometry.halton_nodeset(config.halton_total, config.halton_boundary,
                                       config.halton_gap)
    if c == "uniform":
        return geometry.uniform_nodeset(config.uniform_degree)
    if c == "rbf-fig1":
        return rbf_nodeset_fig1()
    base = geometry.waldron_nodeset(config.waldron_net, config.waldron_cell,
                                    config.waldron_cells)
    if c == "waldron":
        return base
    return geometry.enrich_with_lines(base, per_line=config.line_nodes)


def _reference_key(config: ExperimentConfig) -> str:
    blob = f"{dataclasses.asdict(config.market)}|{config.reference_N}|{config.reference_M}|{config.M}"
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def reference_solution(config: ExperimentConfig, cache_dir=None) -> FDSolution:
    """FD reference storing the levels of the M-step grid (cached on disk if asked)."""
    stride = config.reference_M // config.M
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"reference-{_reference_key(config)}.npz"
        if path.exists():
            with np.load(path) as z:
                return FDSolution(int(z["N"]), z["times"], z["values"], int(z["M_fd"]))
    sol = fd_solve(config.market, config.reference_N, config.reference_M,
                   save_steps=range(0, config.reference_M + 1, stride))
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, N=sol.N, times=sol.times, values=sol.values, M_fd=sol.M_fd)
        tmp.replace(path)
    return sol


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    nodes: geometry.NodeSet
    ms: ErrorReport
    rbf: ErrorReport | None
    system: SpatialSystem
    surface: np.ndarray          # columns x, y, MS value, reference, |error| at t = T
    reference: FDSolution | None = None


def run_experiment(config: ExperimentConfig, out_dir=None, cache_dir=None,
                   reference: FDSolution | None = None) -> ExperimentResult:
    """Run the full pipeline and, if `out_dir` is given, write the artifacts.

    Tables are deterministic; wall-clock timings go to a separate file.
    """
    timings = {}
    tick = time.perf_counter()

    def lap(name):
        nonlocal tick
        now = time.perf_counter()
        timings[name] = now - tick
        tick = now

    nodes = _stage("geometry-nodes", build_nodes, config)
    lap("nodes")
    cov = _stage("covering", build_covering, nodes, config.p, config.q)
    lap("covering")
    basis = _stage("shepard-basis", MultinodeShepard, nodes, cov, ShepardParams(mu=config.mu))
    system = _stage("assembly", assemble, basis, nodes, config.market)
    lap("assembly")
    traj = _stage("timestepper", run, system, config.M, config.scheme)
    lap("timestepper")
    if reference is None:
        reference = _stage("fd-reference", reference_solution, config, cache_dir)
    lap("reference")
    grid = evaluation_grid(config.grid_resolution)
    E = _stage("shepard-basis", basis.eval_matrix, grid)
    ms = _stage("experiment-cli", measure_errors, traj, system, E, reference, grid)
    ms.counts = {"interior": nodes.n_interior, "farfield": nodes.n_farfield,
                 "total": nodes.n, "eval_points": len(grid), "q_max_used": int(np.max(cov.q_used))}
    lap("errors_ms")

    rbf_report = None
    if config.rbf:
        rnodes = rbf_nodeset_fig1()
        rsys, rmodel = _stage("rbf-baseline", rbf_assemble, rnodes, config.rbf_shape,
                              config.market)
        rtraj = _stage("timestepper", run, rsys, config.M, config.scheme)
        rbf_report = _stage("experiment-cli", measure_errors, rtraj, rsys,
                            rmodel.eval_matrix(grid), reference, grid)
        rbf_report.counts = {"interior": rnodes.n_interior, "farfield": rnodes.n_farfield,
                             "shape": rmodel.shape}
        rbf_report.conditions["interpolation"] = rmodel.condition
        lap("rbf")

    T = traj.times[-1]
    u = E @ full_state(system, traj.states[-1], T)
    ref = fd_interpolate(reference, grid, T)
    surface = np.column_stack([grid, u, ref, np.abs(u - ref)])
    ms.timings = timings
    result = ExperimentResult(config, nodes, ms, rbf_report, system, surface, reference)
    if out_dir is not None:
        write_artifacts(result, Path(out_dir))
    return result


def error_table(ms: ErrorReport, rbf: ErrorReport | None = None) -> str:
    lines = [ERROR_HEADER]
    for k, t in enumerate(ms.times):
        r = ("nan", "nan") if rbf is None else (f"{rbf.E_mean[k]:.4e}", f"{rbf.E_max[k]:.4e}")
        lines.append(f"{k + 1},{t:.4e},{ms.E_mean[k]:.4e},{ms.E_max[k]:.4e},{r[0]},{r[1]}")
    return "\n".join(lines) + "\n"


def write_artifacts(result: ExperimentResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(result.config.to_ini())
    (out / "errors.csv").write_text(error_table(result.ms, result.rbf))
    with open(out / "nodes.txt", "w") as fh:
        geometry.write_nodeset(result.nodes, fh)
    summary = dict(result.system.sparsity())
    summary.update(result.ms.counts)
    summary.update({f"cond_order{k}": f"{v:.4e}" for k, v in sorted(result.ms.conditions.items())})
    if result.rbf is not None:
        summary.update({f"rbf_{k}": v for k, v in result.rbf.counts.items()})
        summary.update({f"rbf_cond_{k}": f"{v:.4e}" for k, v in result.rbf.conditions.items()})
    (out / "summary.txt").write_text("".join(f"{k} = {v}\n" for k, v in summary.items()))
    np.savetxt(out / "surface.csv", result.surface, fmt="%.10e", delimiter=",",
               header="x,y,ms,reference,abs_error", comments="")
    (out / "timings.txt").write_text(
        "".join(f"{k} = {v:.3f}\n" for k, v in result.ms.timings.items()))


def write_reference(solution: FDSolution, out: Path) -> None:
    """One ``x y value`` file per stored time level."""
    out.mkdir(parents=True, exist_ok=True)
    for s, t in enumerate(solution.times):
        with open(out / f"reference_{s:03d}.txt", "w") as fh:
            fh.write(f"# t = {t!r}\n")
            solution.write_slice(fh, t)
