"""Fixed-point drivers: fine-grid reference iteration and the adaptive iterative LOD.

Both use the relative Euclidean norm of the algebraic nonlinear residual,
``|B(u) u - F| / |F|``; for the LOD the residual is tested with the coarse
basis, ``|P^T (B(u) u - F)| / |P^T F|`` with ``u`` the fine representation of
the multiscale iterate.
"""

from __future__ import annotations

import csv
import logging
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from kerrlod.corrector import ElementCorrector, assemble_lod_system, compute_element_corrector
from kerrlod.fem import (
    SingularSystemError,
    blin_from_weights,
    energy_norm,
    nonlinear_weight,
    prolongation_matrix,
    sparse_solve,
)
from kerrlod.indicator import compute_factors, evaluate_indicator, mark_elements
from kerrlod.interpolation import build_IH

log = logging.getLogger(__name__)

UPDATE_MODES = ("adaptive", "always", "never")


@dataclass
class IterationConfig:
    max_iters: int = 20
    residual_tol: float = 1e-12
    ell: int = 2
    tol: float = 0.5
    tol_mode: str = "relative"  # "relative": tol is the factor zeta_tol; "fixed": absolute tol
    update: str = "adaptive"  # "always" recomputes every corrector, "never" freezes after m = 1
    workers: int = 1
    initial: np.ndarray | None = None  # coarse start vector (LOD) or fine start vector (reference)
    divergence_threshold: float = 1e6

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if self.update not in UPDATE_MODES:
            raise ValueError(f"update must be one of {UPDATE_MODES}")
        if self.tol_mode not in ("relative", "fixed"):
            raise ValueError("tol_mode must be 'relative' or 'fixed'")
        if self.ell < 0:
            raise ValueError("ell must be non-negative")


@dataclass
class IterationRecord:
    iteration: int
    residual: float
    updated: int = 0
    updated_fraction: float = 0.0
    max_indicator: float = float("nan")
    tol: float = float("nan")
    abs_error: float = float("nan")
    rel_error: float = float("nan")
    wall_time: float = 0.0


@dataclass
class IterationReport:
    method: str
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    diverged: bool = False
    message: str = ""
    indicators: list[np.ndarray] = field(default_factory=list)  # per iteration, per element
    marked: list[np.ndarray] = field(default_factory=list)
    final_correctors: list | None = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r.residual for r in self.records])

    @property
    def rel_errors(self) -> np.ndarray:
        return np.array([r.rel_error for r in self.records])

    @property
    def min_rel_error(self) -> float:
        errs = self.rel_errors
        return float(np.nanmin(errs)) if np.any(np.isfinite(errs)) else float("nan")

    @property
    def final_rel_error(self) -> float:
        return float(self.records[-1].rel_error) if self.records else float("nan")

    def rows(self) -> list[dict]:
        return [asdict(r) for r in self.records]

    def to_csv(self, path) -> None:
        fields = list(IterationRecord.__dataclass_fields__)
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["method", *fields])
            writer.writeheader()
            for row in self.rows():
                writer.writerow({"method": self.method, **{k: repr(v) for k, v in row.items()}})


def energy_error(u_ref: np.ndarray, u_approx: np.ndarray, k: float) -> tuple[float, float]:
    ref = energy_norm(u_ref, k)
    if ref == 0:
        raise ValueError("reference has zero energy norm")
    err = energy_norm(np.asarray(u_ref) - np.asarray(u_approx), k)
    return err, err / ref


def _fine_matrix(problem, u):
    w = nonlinear_weight(u, problem.n, problem.eps).values
    k = problem.k
    return blin_from_weights(problem.A, k * k * (problem.n.values + w), k), w


def solve_fine_reference(problem, cfg: IterationConfig | None = None):
    """Fixed-point iteration B_lin(u^{m-1}; u^m, v) = (f, v) on the fine grid."""
    cfg = cfg or IterationConfig(max_iters=100)
    F = problem.load
    fnorm = np.linalg.norm(F)
    u = np.zeros(problem.hierarchy.fine.num_nodes, dtype=complex) if cfg.initial is None else np.asarray(cfg.initial, dtype=complex)
    report = IterationReport("fine_reference")
    S, _ = _fine_matrix(problem, u)
    for m in range(1, cfg.max_iters + 1):
        t0 = time.perf_counter()
        try:
            u = sparse_solve(S, F)
        except SingularSystemError as exc:
            report.message = f"iteration {m}: {exc}"
            report.diverged = True
            break
        S, _ = _fine_matrix(problem, u)
        res = float(np.linalg.norm(S @ u - F) / fnorm)
        report.records.append(IterationRecord(m, res, wall_time=time.perf_counter() - t0))
        log.info("reference iteration %d: residual %.3e", m, res)
        if res <= cfg.residual_tol:
            report.converged = True
            break
        if not np.isfinite(res) or res > cfg.divergence_threshold:
            report.diverged = True
            report.message = f"residual grew to {res:.3e}"
            break
    if not report.converged and not report.message:
        report.message = f"no convergence in {cfg.max_iters} iterations (last residual {report.residuals[-1]:.3e})"
    return u, report


# corrector computations, optionally in worker processes

_CTX: dict = {}


def _init_worker(ctx):
    _CTX.clear()
    _CTX.update(ctx)


def _corrector_job(args):
    elements, weight = args
    c = _CTX
    out = []
    for t in elements:
        corr = compute_element_corrector(c["hier"], c["op"], t, c["ell"], weight, c["A"], c["n"], c["k"])
        corr.factors = compute_factors(corr, c["hier"])
        out.append(corr)
    return out


class CorrectorPool:
    """Computes element correctors and their indicator factors, serially or in worker processes.

    Results are always returned ordered by element index.
    """

    def __init__(self, ctx: dict, workers: int = 1):
        self.ctx = ctx
        self.workers = max(int(workers), 1)
        self._executor = None
        if self.workers > 1:
            method = "fork" if "fork" in multiprocessing.get_all_start_methods() else None
            self._executor = ProcessPoolExecutor(
                self.workers, mp_context=multiprocessing.get_context(method), initializer=_init_worker, initargs=(ctx,)
            )

    def compute(self, elements, weight) -> list[ElementCorrector]:
        elements = sorted(int(t) for t in elements)
        if not elements:
            return []
        if self._executor is None:
            _init_worker(self.ctx)
            return _corrector_job((elements, weight))
        chunks = [c.tolist() for c in np.array_split(elements, min(len(elements), 4 * self.workers)) if len(c)]
        out = []
        for part in self._executor.map(_corrector_job, [(c, weight) for c in chunks]):
            out.extend(part)
        return out

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def default_workers() -> int:
    return int(os.environ.get("KERRLOD_WORKERS", "1"))


def solve_adaptive_lod(problem, cfg: IterationConfig | None = None, reference: np.ndarray | None = None,
                       use_correctors: bool = True):
    """Adaptive iterative Petrov-Galerkin LOD.

    Returns the fine representations of the iterates and the report. With
    ``use_correctors=False`` the same driver runs the plain coarse FEM.
    """
    cfg = cfg or IterationConfig()
    hier = problem.hierarchy
    k = problem.k
    nt = hier.coarse.num_elements
    P = prolongation_matrix(hier.coarse, hier.fine)
    x0 = np.zeros(hier.coarse.num_nodes, dtype=complex) if cfg.initial is None else np.asarray(cfg.initial, dtype=complex)
    u_prev = P @ x0
    w_prev = nonlinear_weight(u_prev, problem.n, problem.eps).values
    load_c = P.T @ problem.load
    lnorm = np.linalg.norm(load_c)

    method = "fem" if not use_correctors else {"adaptive": "lod_adaptive", "always": "lod_full", "never": "lod_frozen"}[cfg.update]
    report = IterationReport(method)
    iterates = []
    correctors: list[ElementCorrector | None] = [None] * nt
    ctx = dict(hier=hier, op=build_IH(hier) if use_correctors else None, ell=cfg.ell, A=problem.A, n=problem.n, k=k)

    with CorrectorPool(ctx, cfg.workers if use_correctors else 1) as pool:
        for m in range(1, cfg.max_iters + 1):
            t0 = time.perf_counter()
            E = np.full(nt, np.inf)
            tol_used = np.inf
            if not use_correctors:
                marked = np.zeros(nt, dtype=bool)
            elif m == 1:
                marked, tol_used = mark_elements(E, cfg.tol, cfg.tol_mode, first=True)
            else:
                E = np.array([evaluate_indicator(c.factors, w_prev, c.weight_snapshot) for c in correctors])
                if cfg.update == "always":
                    marked = np.ones(nt, dtype=bool)
                elif cfg.update == "never":
                    marked = np.zeros(nt, dtype=bool)
                else:
                    marked, tol_used = mark_elements(E, cfg.tol, cfg.tol_mode)
            for c in pool.compute(np.flatnonzero(marked), w_prev):
                correctors[c.element] = c

            sys = assemble_lod_system(hier, correctors if use_correctors else None, w_prev, problem.A, problem.n, k,
                                      problem.load)
            try:
                x = sparse_solve(sys.matrix, sys.load)
            except SingularSystemError as exc:
                report.diverged = True
                report.message = f"iteration {m}: coarse system singular ({exc}); check kH resolution"
                break
            u = sys.basis @ x
            S_new, w_new = _fine_matrix(problem, u)
            res = float(np.linalg.norm(P.T @ (S_new @ u - problem.load)) / lnorm)

            rec = IterationRecord(
                m,
                res,
                updated=int(marked.sum()),
                updated_fraction=float(marked.mean()),
                max_indicator=float(np.max(E)) if nt and use_correctors else float("nan"),
                tol=float(tol_used),
            )
            if reference is not None:
                rec.abs_error, rec.rel_error = energy_error(reference, u, k)
            rec.wall_time = time.perf_counter() - t0
            report.records.append(rec)
            report.indicators.append(E)
            report.marked.append(marked)
            iterates.append(u)
            log.info("%s iteration %d: residual %.3e, updated %d/%d", method, m, res, rec.updated, nt)

            u_prev, w_prev = u, w_new
            if res <= cfg.residual_tol:
                report.converged = True
                break
            if not np.isfinite(res) or res > cfg.divergence_threshold:
                report.diverged = True
                report.message = f"residual grew to {res:.3e}"
                break
    if not report.converged and not report.message:
        report.message = f"no convergence in {cfg.max_iters} iterations"
    report.final_correctors = correctors if use_correctors else None
    return iterates, report


def solve_fem(problem, cfg: IterationConfig | None = None, reference=None):
    """Coarse Q1 FEM fixed-point iteration (the LOD driver with zero correctors)."""
    return solve_adaptive_lod(problem, cfg, reference, use_correctors=False)


def write_field(path, level, values: np.ndarray) -> None:
    """Structured-grid text dump: header ``nx ny`` then one ``re im`` line per node, x fastest."""
    n = level.cells_per_axis + 1
    values = np.asarray(values, dtype=complex)
    with open(path, "w") as fh:
        fh.write(f"{n} {n}\n")
        for v in values:
            fh.write(f"{float(v.real)!r} {float(v.imag)!r}\n")


def read_field(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    nx, ny = (int(t) for t in lines[0].split())
    data = np.array([[float(t) for t in line.split()] for line in lines[1:]])
    if data.shape != (nx * ny, 2):
        raise ValueError(f"{path}: expected {nx * ny} complex values")
    return data[:, 0] + 1j * data[:, 1]
