"""Deterministic Monte Carlo experiments for LASSO false-alarm control.

Each trial draws its noise from a seed derived by hashing
``(master_seed, K, snr in centi-dB, trial_index)``, so a cell's statistics
do not depend on how trials are scheduled across threads.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, svgplot
from .detect import (
    DetectionReport,
    GammaTooLargeError,
    incoherence_gamma,
    make_report,
    max_offsupport_norm,
    min_h_for,
    threshold_detect,
)
from .dictionary import ChirpSpec, Dictionary, build_chirp_dictionary
from .lasso import SolverConfig, lasso_solve, lipschitz_constant, truncate_small
from .scene import NoiseSpec, TargetScene, matched_filter, snr_db_to_sigma, synthesize_measurement

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "DemoSpec",
    "CellResult",
    "ExperimentResult",
    "TrialInvalidError",
    "CellError",
    "ExperimentError",
    "load_config",
    "paper_config",
    "trial_seed",
    "run_trial",
    "run_cell",
    "run_experiment",
    "emit_results",
    "run_demo",
    "local_maxima",
]


class TrialInvalidError(RuntimeError):
    """The LASSO solve of a trial did not certify convergence."""


class CellError(RuntimeError):
    def __init__(self, K, snr_db, message):
        super().__init__(f"cell K={K} snr_db={snr_db:g}: {message}")
        self.K = K
        self.snr_db = snr_db


class ExperimentError(RuntimeError):
    def __init__(self, errors: Sequence[CellError]):
        super().__init__("; ".join(str(e) for e in errors))
        self.errors = list(errors)


@dataclass(frozen=True)
class DemoSpec:
    positions: Tuple[int, ...]
    amplitudes: Tuple[float, ...]
    snr_db: float
    trial_index: int = 0
    window: Tuple[int, int] = (1, 1)
    gamma: Optional[float] = None


@dataclass(frozen=True)
class ExperimentConfig:
    M: int = 108
    N: int = 250
    length_L: float = 25.0
    bandwidth_B: float = 1.0
    complex_valued: bool = True
    positions: Tuple[int, ...] = (100, 104, 133)
    amplitudes: Tuple[float, ...] = (1.0, 1.0, 1.0)
    k_values: Tuple[int, ...] = (1, 2, 3)
    snr_db: Tuple[float, ...] = (19.0, 22.0, 25.0, 28.0, 31.0, 33.0)
    failure_p: float = 0.1
    trials_per_cell: int = 100
    master_seed: int = 20131
    gamma_source: str = "supplied"
    supplied_gammas: Optional[Tuple[float, ...]] = (0.8272, 0.8332, 0.8338)
    gamma_norm: str = "rowsum"
    truncation_ratio: float = 0.1
    noise_family: str = "gaussian"
    variance_convention: str = "total"
    max_iterations: int = 200_000
    duality_gap_tol: float = 1e-9
    kkt_tol: float = 1e-7
    demos: Dict[str, DemoSpec] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.trials_per_cell < 1:
            raise ValueError("trials_per_cell must be at least 1")
        if len(self.amplitudes) != len(self.positions):
            raise ValueError("one amplitude per position is required")
        for p in self.positions:
            if not 1 <= p <= self.N:
                raise ValueError(f"target position {p} outside [1, {self.N}]")
        for K in self.k_values:
            if not 1 <= K <= len(self.positions):
                raise ValueError(f"K={K} exceeds the {len(self.positions)} listed positions")
        if self.gamma_source not in ("computed", "supplied"):
            raise ValueError("gamma_source must be 'computed' or 'supplied'")
        if self.gamma_source == "supplied":
            if self.supplied_gammas is None or len(self.supplied_gammas) != len(self.k_values):
                raise ValueError("supplied_gammas needs one value per entry of k_values")
        if not 0 < self.failure_p < 1:
            raise ValueError("failure_p must lie in (0, 1)")

    @property
    def chirp(self) -> ChirpSpec:
        return ChirpSpec(self.length_L, self.bandwidth_B, self.complex_valued)

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(
            max_iterations=self.max_iterations,
            duality_gap_tol=self.duality_gap_tol,
            kkt_tol=self.kkt_tol,
            truncation_ratio=self.truncation_ratio,
        )

    def scene(self, K: int) -> TargetScene:
        return TargetScene(self.N, self.positions[:K], self.amplitudes[:K])

    def dictionary(self) -> Dictionary:
        return build_chirp_dictionary(self.chirp, self.M, self.N)

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("demos")
        return _jsonable(d)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


_SECTIONS = {
    "dictionary": ("M", "N", "length_L", "bandwidth_B", "complex_valued"),
    "scenario": ("positions", "amplitudes", "k_values"),
    "experiment": (
        "snr_db", "failure_p", "trials_per_cell", "master_seed", "gamma_source",
        "supplied_gammas", "gamma_norm", "truncation_ratio",
    ),
    "noise": ("family", "variance_convention"),
    "solver": ("max_iterations", "duality_gap_tol", "kkt_tol"),
}


def config_from_dict(doc: dict) -> ExperimentConfig:
    kw = {}
    for section, keys in _SECTIONS.items():
        body = doc.get(section, {})
        unknown = set(body) - set(keys)
        if unknown:
            raise ValueError(f"unknown keys in [{section}]: {sorted(unknown)}")
        for k in keys:
            if k in body:
                name = "noise_family" if (section, k) == ("noise", "family") else k
                v = body[k]
                kw[name] = tuple(v) if isinstance(v, list) else v
    demos = {}
    for name, body in doc.get("demo", {}).items():
        demos[name] = DemoSpec(
            positions=tuple(body["positions"]),
            amplitudes=tuple(body["amplitudes"]),
            snr_db=float(body["snr_db"]),
            trial_index=int(body.get("trial_index", 0)),
            window=tuple(body.get("window", (1, 1))),
            gamma=body.get("gamma"),
        )
    return ExperimentConfig(demos=demos, **kw)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    cfg = config_from_dict(doc)
    env = os.environ.get("SPARSEDET_SEED")
    if env is not None:
        cfg = replace(cfg, master_seed=int(env))
    return cfg


def paper_config() -> ExperimentConfig:
    """The shipped configuration reproducing the published simulation."""
    text = resources.files("sparsedet").joinpath("data/paper.toml").read_text(encoding="utf-8")
    return config_from_dict(tomllib.loads(text))


def trial_seed(master_seed: int, K: int, snr_db: float, trial_index: int) -> int:
    """Stable 64-bit seed from the trial's coordinates (BLAKE2b)."""
    centi_db = int(round(snr_db * 100))
    payload = struct.pack("<qqqq", int(master_seed), int(K), centi_db, int(trial_index))
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def run_trial(
    A: Dictionary,
    scene: TargetScene,
    noise: NoiseSpec,
    h: float,
    cfg: Optional[SolverConfig] = None,
    trial_index: int = 0,
    lipschitz: Optional[float] = None,
) -> DetectionReport:
    """Synthesize one measurement, solve LASSO at ``h``, truncate and score.

    Raises
    ------
    TrialInvalidError
        If the solver did not certify convergence.
    """
    cfg = cfg or SolverConfig()
    rec = synthesize_measurement(A, scene, noise, trial_index)
    sol = lasso_solve(A, rec.y, h, cfg, lipschitz=lipschitz)
    if not sol.converged:
        raise TrialInvalidError(
            f"LASSO did not converge (iterations={sol.iterations}, gap={sol.duality_gap:.3g}, kkt={sol.kkt_residual:.3g})"
        )
    raw = tuple(int(i) + 1 for i in np.flatnonzero(sol.x))
    x = truncate_small(sol.x, h, cfg.truncation_ratio)
    rec_support = tuple(int(i) + 1 for i in np.flatnonzero(x))
    pre = make_report(raw, scene.support, "lasso", h)
    return make_report(
        rec_support,
        scene.support,
        "lasso",
        h,
        L_fa_pre_truncation=pre.L_fa,
        hits_pre_truncation=pre.hits,
        diagnostics={
            "iterations": sol.iterations,
            "duality_gap": sol.duality_gap,
            "kkt_residual": sol.kkt_residual,
            "objective": sol.objective,
        },
    )


@dataclass(frozen=True)
class CellResult:
    K: int
    snr_db: float
    sigma: float
    gamma_used: float
    h_used: float
    trial_count: int
    failure_count: int
    empirical_failure_p: float
    mean_detection: float
    per_target_pd: Tuple[float, ...]
    hit_counts: Tuple[int, ...]
    failure_count_pre_truncation: int
    mean_detection_pre_truncation: float
    max_solver_iterations: int

    def row(self) -> dict:
        d = asdict(self)
        d["per_target_pd"] = ";".join(repr(v) for v in self.per_target_pd)
        d["hit_counts"] = ";".join(str(v) for v in self.hit_counts)
        return d


CELL_FIELDS = [
    "K", "snr_db", "sigma", "gamma_used", "h_used", "trial_count", "failure_count",
    "empirical_failure_p", "mean_detection", "per_target_pd", "hit_counts",
    "failure_count_pre_truncation", "mean_detection_pre_truncation", "max_solver_iterations",
]


def cell_gamma(config: ExperimentConfig, K: int, A: Optional[Dictionary] = None) -> float:
    if config.gamma_source == "supplied":
        return float(config.supplied_gammas[config.k_values.index(K)])
    A = A if A is not None else config.dictionary()
    return incoherence_gamma(A, config.positions[:K], norm=config.gamma_norm)


def cell_h(config: ExperimentConfig, K: int, snr_db: float, A: Optional[Dictionary] = None) -> Tuple[float, float, float]:
    """(sigma, gamma, h) for one grid cell."""
    A = A if A is not None else config.dictionary()
    sigma = snr_db_to_sigma(snr_db)
    gamma = cell_gamma(config, K, A)
    norm = max_offsupport_norm(A, config.positions[:K])
    h = min_h_for(sigma, gamma, config.N, K, config.failure_p, norm)
    return sigma, gamma, h


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def run_cell(
    config: ExperimentConfig,
    K: int,
    snr_db: float,
    A: Optional[Dictionary] = None,
    threads: int = 1,
    lipschitz: Optional[float] = None,
) -> CellResult:
    """Run every trial of one (K, SNR) cell and aggregate the counts."""
    A = A if A is not None else config.dictionary()
    try:
        sigma, gamma, h = cell_h(config, K, snr_db, A)
    except GammaTooLargeError as exc:
        raise CellError(K, snr_db, str(exc)) from exc
    if lipschitz is None:
        lipschitz = lipschitz_constant(A.entries.conj().T @ A.entries)
    scene = config.scene(K)
    solver = config.solver

    def one(t):
        noise = NoiseSpec(
            sigma,
            family=config.noise_family,
            complex_valued=config.complex_valued,
            seed=trial_seed(config.master_seed, K, snr_db, t),
            variance_convention=config.variance_convention,
        )
        return run_trial(A, scene, noise, h, solver, trial_index=t, lipschitz=lipschitz)

    try:
        reports = _map(one, range(config.trials_per_cell), threads)
    except TrialInvalidError as exc:
        raise CellError(K, snr_db, str(exc)) from exc

    n = len(reports)
    failures = sum(r.L_fa > 0 for r in reports)
    failures_pre = sum(r.L_fa_pre_truncation > 0 for r in reports)
    hits = np.sum([r.hits for r in reports], axis=0).astype(int)
    hits_pre = np.sum([r.hits_pre_truncation for r in reports], axis=0).astype(int)
    return CellResult(
        K=K,
        snr_db=float(snr_db),
        sigma=sigma,
        gamma_used=gamma,
        h_used=h,
        trial_count=n,
        failure_count=int(failures),
        empirical_failure_p=failures / n,
        mean_detection=float(hits.sum()) / (K * n),
        per_target_pd=tuple(int(c) / n for c in hits),
        hit_counts=tuple(int(c) for c in hits),
        failure_count_pre_truncation=int(failures_pre),
        mean_detection_pre_truncation=float(hits_pre.sum()) / (K * n),
        max_solver_iterations=max(r.diagnostics["iterations"] for r in reports),
    )


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    h_table: List[List[float]]
    cells: List[CellResult]
    software_version: str = __version__
    runtime_s: float = 0.0

    def cell(self, K: int, snr_db: float) -> CellResult:
        for c in self.cells:
            if c.K == K and c.snr_db == float(snr_db):
                return c
        raise KeyError((K, snr_db))

    def to_json(self) -> str:
        # Runtime is deliberately absent so the file is reproducible.
        doc = {
            "software_version": self.software_version,
            "config": self.config.echo(),
            "h_table": {
                "k_values": list(self.config.k_values),
                "snr_db": list(self.config.snr_db),
                "values": self.h_table,
            },
            "cells": [_jsonable(asdict(c)) for c in self.cells],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def run_experiment(config: ExperimentConfig, threads: int = 1, progress=None) -> ExperimentResult:
    """Evaluate every (K, SNR) cell; deterministic for any ``threads``."""
    t0 = time.perf_counter()
    A = config.dictionary()
    lip = lipschitz_constant(A.entries.conj().T @ A.entries)
    h_table, cells, errors = [], [], []
    for K in config.k_values:
        row = []
        for snr in config.snr_db:
            try:
                row.append(cell_h(config, K, snr, A)[2])
            except GammaTooLargeError:
                row.append(float("inf"))
            try:
                cells.append(run_cell(config, K, snr, A, threads=threads, lipschitz=lip))
            except CellError as exc:
                errors.append(exc)
                continue
            if progress:
                progress(cells[-1])
        h_table.append(row)
    if errors:
        raise ExperimentError(errors)
    return ExperimentResult(config, h_table, cells, __version__, time.perf_counter() - t0)


def _csv_text(header, rows) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def h_table_csv(result: ExperimentResult) -> str:
    header = ["K"] + [f"{s:g}" for s in result.config.snr_db]
    rows = [[K] + [repr(float(v)) for v in vals] for K, vals in zip(result.config.k_values, result.h_table)]
    return _csv_text(header, rows)


def cells_csv(result: ExperimentResult) -> str:
    rows = []
    for c in result.cells:
        d = c.row()
        rows.append([repr(d[k]) if isinstance(d[k], float) else d[k] for k in CELL_FIELDS])
    return _csv_text(CELL_FIELDS, rows)


def curves_svg(result: ExperimentResult) -> str:
    fail = svgplot.Panel(
        title="Empirical probability of any false alarm",
        xlabel="SNR (dB)",
        ylabel="P(L_fa > 0)",
        ylim=(0.0, 1.0),
        hlines=[(result.config.failure_p, f"p = {result.config.failure_p:g}")],
    )
    det = svgplot.Panel(
        title="Mean detection probability of all targets",
        xlabel="SNR (dB)",
        ylabel="mean P_D",
        ylim=(0.0, 1.05),
    )
    for K in result.config.k_values:
        cs = sorted((c for c in result.cells if c.K == K), key=lambda c: c.snr_db)
        xs = [c.snr_db for c in cs]
        fail.series.append(svgplot.Series(xs, [c.empirical_failure_p for c in cs], f"K = {K}", marker="circle"))
        det.series.append(svgplot.Series(xs, [c.mean_detection for c in cs], f"K = {K}", marker="circle"))
    if not result.cells:
        lo, hi = (min(result.config.snr_db), max(result.config.snr_db)) if result.config.snr_db else (0.0, 1.0)
        fail.xlim = det.xlim = (lo, hi) if hi > lo else (lo - 1, lo + 1)
    return svgplot.render([fail, det])


def emit_results(result: ExperimentResult, out_dir, demos: bool = True) -> List[Path]:
    """Write CSV/JSON/SVG outputs into ``out_dir`` and return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "h_table.csv": h_table_csv(result),
        "cells.csv": cells_csv(result),
        "experiment.json": result.to_json(),
        "curves.svg": curves_svg(result),
    }
    if demos:
        for name in sorted(result.config.demos):
            files[f"demo_{name}.svg"] = demo_svg(run_demo(result.config, name))
    written = []
    for name, text in files.items():
        p = out / name
        p.write_text(text, encoding="utf-8", newline="\n")
        written.append(p)
    (out / "timing.json").write_text(json.dumps({"runtime_s": result.runtime_s}) + "\n", encoding="utf-8")
    return written


def local_maxima(values, window: Tuple[int, int]) -> List[int]:
    """1-based cells in the inclusive ``window`` that are strict local maxima.

    A cell qualifies if it exceeds its left neighbour and is at least its
    right neighbour (so a flat top counts once).
    """
    v = np.asarray(values, dtype=float)
    lo, hi = window
    out = []
    for cell in range(max(lo, 1), min(hi, v.size) + 1):
        i = cell - 1
        left = v[i - 1] if i > 0 else -np.inf
        right = v[i + 1] if i + 1 < v.size else -np.inf
        if v[i] > left and v[i] >= right:
            out.append(cell)
    return out


@dataclass
class DemoResult:
    name: str
    spec: DemoSpec
    scene: TargetScene
    y: np.ndarray
    matched: np.ndarray
    x: np.ndarray
    h: float
    gamma: float
    recovered: Tuple[int, ...]
    mf_maxima: List[int]


def run_demo(config: ExperimentConfig, name: str) -> DemoResult:
    """Single noisy realisation comparing matched filtering with LASSO."""
    if name not in config.demos:
        raise KeyError(f"no demo named {name!r} in config (have {sorted(config.demos)})")
    spec = config.demos[name]
    A = config.dictionary()
    scene = TargetScene(config.N, spec.positions, spec.amplitudes)
    K = scene.K
    sigma = snr_db_to_sigma(spec.snr_db)
    gamma = spec.gamma if spec.gamma is not None else incoherence_gamma(A, spec.positions, norm=config.gamma_norm)
    h = min_h_for(sigma, gamma, config.N, K, config.failure_p, max_offsupport_norm(A, spec.positions))
    noise = NoiseSpec(
        sigma,
        family=config.noise_family,
        complex_valued=config.complex_valued,
        seed=trial_seed(config.master_seed, K, spec.snr_db, spec.trial_index),
        variance_convention=config.variance_convention,
    )
    rec = synthesize_measurement(A, scene, noise, spec.trial_index)
    sol = lasso_solve(A, rec.y, h, config.solver)
    if not sol.converged:
        raise TrialInvalidError(f"demo {name}: LASSO did not converge")
    x = truncate_small(sol.x, h, config.truncation_ratio)
    b = matched_filter(A, rec.y)
    return DemoResult(
        name, spec, scene, rec.y, b, x, h, gamma,
        tuple(int(i) + 1 for i in np.flatnonzero(x)),
        local_maxima(np.abs(b), spec.window),
    )


def demo_svg(d: DemoResult) -> str:
    lo, hi = d.spec.window
    cells = np.arange(lo, hi + 1)
    mf = np.abs(d.matched[cells - 1])
    xmag = np.abs(d.x)
    rec = [c for c in d.recovered if lo <= c <= hi]
    truth = [(c, abs(a)) for c, a in zip(d.scene.support, d.scene.amplitudes) if lo <= c <= hi]
    panel = svgplot.Panel(
        title=f"{d.name}: matched filter vs LASSO (SNR {d.spec.snr_db:g} dB)",
        xlabel="range cell",
        ylabel="magnitude",
        xlim=(float(lo), float(hi)),
        hlines=[(d.h, f"h = {d.h:.4f}")],
    )
    panel.series.append(svgplot.Series(cells, mf, "matched filter", dashed=True, color="#555555"))
    panel.series.append(svgplot.Series([c for c, _ in truth], [a for _, a in truth], "truth", line=False, marker="cross", color="#d62728"))
    panel.series.append(svgplot.Series(rec, [xmag[c - 1] for c in rec], "LASSO", line=False, marker="circle", color="#1f77b4"))
    return svgplot.render([panel])
