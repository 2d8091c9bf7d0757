"""Command-line driver: single runs, H-convergence studies and tolerance sweeps.

Configs are plain ``key = value`` files (``#`` comments); every key can also
be given as a ``--key value`` flag, which wins over the file. A run manifest
(JSON) written by ``run`` is accepted as a config as well.

Exit codes: 0 ok, 2 config error, 3 non-convergence, 4 IO error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import sys
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from kerrlod.mesh import MeshError, build_hierarchy
from kerrlod.problems import SCENARIOS, get_scenario
from kerrlod.solver import IterationConfig, default_workers, solve_adaptive_lod, solve_fem, solve_fine_reference, write_field

log = logging.getLogger("kerrlod")

METHODS = ("fem", "lod_adaptive", "lod_frozen", "lod_full", "fine_reference")
EXIT_OK, EXIT_CONFIG, EXIT_NONCONV, EXIT_IO = 0, 2, 3, 4
KH_LIMIT = 4.0  # warn when k*H exceeds this: the coarse resolution condition is likely violated


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: str = "example1"
    seed: int = 3
    H_exp: int = 3
    eta_exp: int = 5
    h_exp: int = 7
    ell: int = 2
    method: str = "lod_adaptive"
    max_iters: int = 20
    residual_tol: float = 1e-12
    tol: float = 0.5
    tol_mode: str = "relative"
    reference_max_iters: int = 100
    linear: bool = False  # drop the Kerr term (eps = 0)
    k: float | None = None  # overrides the scenario wave number
    workers: int = 1
    output: str = "out"

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario: unknown {self.scenario!r}, choose from {sorted(SCENARIOS)}")
        if self.method not in METHODS:
            raise ConfigError(f"method: unknown {self.method!r}, choose from {METHODS}")
        try:
            build_hierarchy(self.H_exp, self.eta_exp, self.h_exp)
        except MeshError as exc:
            raise ConfigError(f"hierarchy: {exc}") from exc
        try:
            self.iteration_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        k = self.k if self.k is not None else get_scenario(self.scenario, self.seed).k
        if k * 2.0**-self.H_exp > KH_LIMIT:
            warnings.warn(f"k*H = {k * 2.0 ** -self.H_exp:.2f} is large; the coarse problem may be unstable")

    def iteration_config(self, **kw) -> IterationConfig:
        update = {"lod_adaptive": "adaptive", "lod_full": "always", "lod_frozen": "never"}.get(self.method, "adaptive")
        args = dict(max_iters=self.max_iters, residual_tol=self.residual_tol, ell=self.ell, tol=self.tol,
                    tol_mode=self.tol_mode, update=update, workers=self.workers)
        args.update(kw)
        return IterationConfig(**args)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def reference_key(self) -> str:
        """Hash of everything the fine reference depends on."""
        keys = ("scenario", "seed", "eta_exp", "h_exp", "residual_tol", "reference_max_iters", "linear", "k")
        blob = json.dumps({key: getattr(self, key) for key in keys}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _field_types() -> dict:
    hints = {"int": int, "float": float, "str": str, "bool": bool, "float | None": float}
    return {f.name: (hints[f.type], f.type.endswith("None")) for f in fields(RunConfig)}


def _parse_value(key: str, raw: str):
    types = _field_types()
    if key not in types:
        raise ConfigError(f"unknown key {key!r}")
    typ, optional = types[key]
    raw = raw.strip()
    if optional and raw.lower() in ("", "none"):
        return None
    if typ is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return typ(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {typ.__name__}, got {raw!r}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        try:
            out[key] = _parse_value(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return out


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
        if p.suffix == ".json":
            data = json.loads(text)
            values = data.get("config", data)
        else:
            values = parse_config_text(text, str(path))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    values.setdefault("workers", default_workers())
    unknown = set(values) - set(_field_types())
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}")
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def format_config(cfg: RunConfig) -> str:
    return "".join(f"{key} = {value}\n" for key, value in cfg.to_dict().items())


# problems and references


def make_problem(cfg: RunConfig, H_exp: int | None = None):
    scen = get_scenario(cfg.scenario, cfg.seed)
    if cfg.k is not None:
        scen = dataclasses.replace(scen, k=cfg.k)
    prob = scen.discretize(build_hierarchy(cfg.H_exp if H_exp is None else H_exp, cfg.eta_exp, cfg.h_exp))
    return prob.linear() if cfg.linear else prob


def fine_reference(cfg: RunConfig, cache_dir: Path | None = None):
    """Fine reference solution, cached on disk keyed by the reference hash."""
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"reference_{cfg.reference_key()}.npy"
        if path.exists():
            return np.load(path)
    prob = make_problem(cfg)
    u, report = solve_fine_reference(prob, IterationConfig(max_iters=cfg.reference_max_iters, residual_tol=cfg.residual_tol))
    if not report.converged:
        warnings.warn(f"fine reference: {report.message}")
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.save(path, u)
    return u


def run_method(cfg: RunConfig, H_exp: int | None = None, reference=None, **iter_kw):
    prob = make_problem(cfg, H_exp)
    if cfg.method == "fine_reference":
        u, report = solve_fine_reference(
            prob, IterationConfig(max_iters=cfg.reference_max_iters, residual_tol=cfg.residual_tol)
        )
        return [u], report
    icfg = cfg.iteration_config(**iter_kw)
    if cfg.method == "fem":
        return solve_fem(prob, icfg, reference)
    return solve_adaptive_lod(prob, icfg, reference)


def manifest(cfg: RunConfig, report=None, extra: dict | None = None) -> dict:
    out = {"config": cfg.to_dict(), "reference_key": cfg.reference_key()}
    if report is not None:
        out.update(converged=report.converged, iterations=report.iterations, message=report.message)
    out.update(extra or {})
    return out


def run_single(cfg: RunConfig, with_reference: bool = False) -> tuple[Path, object]:
    """Writes iteration_report.csv, solution.txt and manifest.json; returns the output dir and report."""
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    reference = fine_reference(cfg, out / "cache") if with_reference and cfg.method != "fine_reference" else None
    iterates, report = run_method(cfg, reference=reference)
    report.to_csv(out / "iteration_report.csv")
    if iterates:
        write_field(out / "solution.txt", make_problem(cfg).hierarchy.fine, iterates[-1])
    (out / "manifest.json").write_text(json.dumps(manifest(cfg, report), indent=2))
    return out, report


def eoc(H: list[float], errors: list[float]) -> list[float]:
    """Empirical orders between consecutive mesh sizes (nan for the first)."""
    out = [float("nan")]
    for i in range(1, len(H)):
        out.append(math.log(errors[i - 1] / errors[i]) / math.log(H[i - 1] / H[i]))
    return out


def fitted_order(H, errors) -> float:
    """Least-squares slope of log(error) against log(H)."""
    return float(np.polyfit(np.log(H), np.log(errors), 1)[0])


STUDY_FIELDS = ["H", "method", "min_error", "final_error", "iterations", "max_updated_fraction",
                "updated_fractions", "eoc"]


def run_convergence_study(cfg: RunConfig, H_exps: list[int], methods: list[str]) -> list[dict]:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    reference = fine_reference(cfg, out / "cache")
    rows = []
    for method in methods:
        mcfg = dataclasses.replace(cfg, method=method)
        H_vals, errs, part = [], [], []
        for He in sorted(H_exps):
            _, report = run_method(mcfg, He, reference)
            fr = [r.updated_fraction for r in report.records]
            H_vals.append(2.0**-He)
            errs.append(report.min_rel_error)
            part.append({
                "H": 2.0**-He,
                "method": method,
                "min_error": report.min_rel_error,
                "final_error": report.final_rel_error,
                "iterations": report.iterations,
                "max_updated_fraction": max(fr[1:], default=0.0),
                "updated_fractions": ";".join(repr(f) for f in fr),
            })
            log.info("study %s H=2^-%d: min error %.4e", method, He, report.min_rel_error)
        for row, e in zip(part, eoc(H_vals, errs)):
            row["eoc"] = e
        rows.extend(part)
    write_rows(out / "study.csv", STUDY_FIELDS, rows)
    (out / "manifest.json").write_text(json.dumps(manifest(cfg, extra={"H_exps": H_exps, "methods": methods}), indent=2))
    return rows


SWEEP_FIELDS = ["tol", "tol_abs", "iteration", "rel_error", "updated"]


def indicator_unit(cfg: RunConfig, reference=None) -> float:
    """Tolerance unit for sweeps: half the largest indicator at iteration 2 of the always-update run.

    With this unit ``tol = 2`` leaves every corrector frozen after the first step.
    """
    _, report = run_method(dataclasses.replace(cfg, method="lod_full"), reference=reference, max_iters=2)
    return report.records[1].max_indicator / 2


def run_tolerance_sweep(cfg: RunConfig, tols: list[float], unit: float | None = None) -> list[dict]:
    """Fixed-tolerance runs at one H; ``tols`` are in multiples of ``unit`` (auto when None)."""
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    reference = fine_reference(cfg, out / "cache")
    if unit is None:
        unit = indicator_unit(cfg, reference)
    rows = []
    mcfg = dataclasses.replace(cfg, method="lod_adaptive", tol_mode="fixed")
    for t in tols:
        _, report = run_method(mcfg, reference=reference, tol=t * unit)
        for r in report.records:
            rows.append({"tol": t, "tol_abs": t * unit, "iteration": r.iteration, "rel_error": r.rel_error,
                         "updated": r.updated})
    write_rows(out / "sweep.csv", SWEEP_FIELDS, rows)
    (out / "manifest.json").write_text(json.dumps(manifest(cfg, extra={"tols": tols, "unit": unit}), indent=2))
    return rows


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def read_rows(path) -> list[dict]:
    """Reads a CSV written by this module back with numeric columns as numbers."""

    def conv(v):
        for typ in (int, float):
            try:
                return typ(v)
            except ValueError:
                pass
        return v

    with open(path, newline="") as fh:
        return [{k: conv(v) for k, v in row.items()} for row in csv.DictReader(fh)]


# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kerrlod", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("config", nargs="?", help="key = value config file or run manifest")
        for f in fields(RunConfig):
            typ, _ = _field_types()[f.name]
            p.add_argument(f"--{f.name}", dest=f.name, default=None, type=str if typ is bool else typ)
        return p

    run = common(sub.add_parser("run", help="single run"))
    run.add_argument("--with-reference", action="store_true", help="compute energy errors against a fine reference")
    study = common(sub.add_parser("study", help="convergence in H"))
    study.add_argument("--H-list", default="2,3,4,5", help="comma separated coarse exponents")
    study.add_argument("--methods", default="lod_adaptive,fem")
    sweep = common(sub.add_parser("sweep", help="tolerance sweep at fixed H"))
    sweep.add_argument("--tols", default="0,0.0625,0.125,0.25,0.5,1,2")
    sweep.add_argument("--unit", type=float, default=None, help="absolute tolerance unit (default: from indicators)")
    common(sub.add_parser("print-config", help="print the resolved config"))
    return parser


def _overrides(args) -> dict:
    out = {}
    for f in fields(RunConfig):
        raw = getattr(args, f.name)
        if raw is not None:
            out[f.name] = _parse_value(f.name, raw) if isinstance(raw, str) else raw
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.verb == "print-config":
            sys.stdout.write(format_config(cfg))
            return EXIT_OK
        if args.verb == "run":
            out, report = run_single(cfg, with_reference=args.with_reference)
            print(f"{cfg.method}: {report.iterations} iterations, residual {report.residuals[-1]:.3e} -> {out}")
            failed = report.diverged or (cfg.method == "fine_reference" and not report.converged)
            return EXIT_NONCONV if failed else EXIT_OK
        if args.verb == "study":
            H_exps = [int(s) for s in args.H_list.split(",")]
            methods = args.methods.split(",")
            bad = set(methods) - set(METHODS[:-1])
            if bad:
                raise ConfigError(f"--methods: unknown {sorted(bad)}")
            rows = run_convergence_study(cfg, H_exps, methods)
            for r in rows:
                print(f"{r['method']:>13s} H={r['H']:<8g} min {r['min_error']:.4e} final {r['final_error']:.4e} eoc {r['eoc']:.2f}")
            return EXIT_OK
        if args.verb == "sweep":
            tols = [float(s) for s in args.tols.split(",")]
            rows = run_tolerance_sweep(cfg, tols, args.unit)
            for t in tols:
                errs = [r["rel_error"] for r in rows if r["tol"] == t]
                print(f"tol={t:<8g} min error {min(errs):.4e}")
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
