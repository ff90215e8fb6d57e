"""Experiment drivers producing table rows (lists of dicts) and their CSV/JSON output."""
from __future__ import annotations

import csv
import json
import math
import platform
import time
from pathlib import Path

import numpy as np
import scipy
import sympy

from . import __version__, fem, krylov, rom, spla
from .config import ExperimentConfig
from .mesh import build_mesh, write_mesh_text
from .rom import PipelineError
from .sources import builtin_problem

NO_RATE = "\u2014"  # shown in place of a rate when errors are at rounding level
RATE_FLOOR = 1e-13


def _phase(name, fn):
    try:
        return fn()
    except PipelineError:
        raise
    except Exception as exc:  # noqa: BLE001 - relabelled for the CLI
        raise PipelineError(name, exc) from exc


def _rom_config(cfg: ExperimentConfig, level: int) -> rom.RomConfig:
    return rom.RomConfig(
        problem=builtin_problem(cfg.source, cfg.dim), level=level, degree=cfg.degree, T=cfg.T,
        dt_rule=cfg.dt_rule, method=cfg.method, ell=cfg.ell, tol=cfg.tol, tol_svd=cfg.tol_svd,
        m=cfg.m, tol_mode=cfg.tol_mode,
    )


def _level_columns(dim: int, level: int) -> dict:
    spacing = 2.0**-level
    return {"level": level, "h/sqrt2": spacing, "h": math.sqrt(dim) * spacing}


def rate(coarse: float, fine: float) -> float | str:
    """``log2(coarse / fine)``, or a dash when either error is at rounding level."""
    if coarse <= RATE_FLOOR or fine <= RATE_FLOOR:
        return NO_RATE
    return math.log2(coarse / fine)


def run_fom_timing(cfg: ExperimentConfig) -> list[dict]:
    rows = []
    for level in cfg.level_list:
        disc = _phase("discretize", lambda: rom.discretize(_rom_config(cfg, level)))
        _, seconds = _phase("fom", lambda: rom.solve_fom(disc.M, disc.A, disc.source, disc.b0, disc.grid, keep="final"))
        rows.append({**_level_columns(cfg.dim, level), "n_dofs": disc.space.n_dofs,
                     "N_T": disc.grid.N_T, "wall_seconds": seconds,
                     "assembly_seconds": disc.seconds})
    return rows


def run_rom_accuracy(cfg: ExperimentConfig) -> list[dict]:
    rows = []
    for level in cfg.level_list:
        disc = _phase("discretize", lambda: rom.discretize(_rom_config(cfg, level)))
        res = rom.reduced_solve(disc.M, disc.A, disc.source, disc.b0, disc.grid, method=cfg.method,
                                ell=cfg.ell, tol=cfg.tol, tol_svd=cfg.tol_svd, tol_mode=cfg.tol_mode)
        fom_final, fom_seconds = _phase(
            "fom", lambda: rom.solve_fom(disc.M, disc.A, disc.source, disc.b0, disc.grid, keep="final"))
        rom_seconds = res.diagnostics["seconds"]
        rows.append({
            **_level_columns(cfg.dim, level),
            "r": res.diagnostics["r"],
            "wall_seconds": rom_seconds,
            "fom_seconds": fom_seconds,
            "time_ratio": rom_seconds / fom_seconds,
            "rom_total_seconds": rom_seconds + disc.seconds,
            "fom_total_seconds": fom_seconds + disc.seconds,
            "l2_gap_vs_fom": fem.l2_norm(disc.M, fom_final - res.final),
        })
    return rows


def run_convergence(cfg: ExperimentConfig) -> list[dict]:
    rows = []
    prev = None
    for level in cfg.level_list:
        rcfg = _rom_config(cfg, level)
        if not rcfg.problem.has_exact:
            raise PipelineError("setup", ValueError(f"source {cfg.source!r} has no exact solution"))
        start = time.perf_counter()
        disc = _phase("discretize", lambda: rom.discretize(rcfg))
        res = rom.reduced_solve(disc.M, disc.A, disc.source, disc.b0, disc.grid, method=cfg.method,
                                ell=cfg.ell, tol=cfg.tol, tol_svd=cfg.tol_svd, tol_mode=cfg.tol_mode)
        seconds = time.perf_counter() - start
        p, T = rcfg.problem, cfg.T
        l2, h1 = _phase("error", lambda: fem.error_norms(
            disc.space, res.final, lambda *x: p.u_exact(T, *x), lambda *x: p.grad_exact(T, *x)))
        rows.append({
            **_level_columns(cfg.dim, level),
            "N_T": disc.grid.N_T,
            "r": res.diagnostics["r"],
            "l2_error": l2,
            "l2_rate": NO_RATE if prev is None else rate(prev[0], l2),
            "h1_error": h1,
            "h1_rate": NO_RATE if prev is None else rate(prev[1], h1),
            "wall_seconds": seconds,
        })
        prev = (l2, h1)
    return rows


def decay_eigenvalues(cfg: ExperimentConfig, level: int) -> np.ndarray:
    """Eigenvalues (descending) of the ``ell x ell`` Gram matrix of the source's Krylov sequence."""
    disc = _phase("discretize", lambda: rom.discretize(_rom_config(cfg, level)))
    B = np.column_stack([disc.b0, disc.source.space_loads])
    b = B[:, np.any(B != 0.0, axis=0)]
    if b.shape[1] != 1:
        raise PipelineError("setup", ValueError("decay study needs a single nonzero data column"))
    factor = _phase("factorize", lambda: spla.factorize(disc.A))
    U = krylov.krylov_sequence(factor, disc.M, b[:, 0], cfg.ell)
    K = np.zeros((0, 0))
    for i in range(1, cfg.ell + 1):
        K = krylov.gram_extend(K, U[:, :i], disc.A)
    return spla.sym_eig(K)[1]


def run_decay(cfg: ExperimentConfig) -> list[krylov.DecayRecord]:
    return krylov.decay_report(decay_eigenvalues(cfg, cfg.levels[1]))


def run_exactness(cfg: ExperimentConfig) -> list[dict]:
    """FOM and ROM with a source built from a few discrete eigenfunctions.

    The source is the finite element function ``sum_j c_j phi_j``, so its
    load vector is ``M Phi c``.
    """
    rows = []
    cap = cfg.dense_cap_mb * 2**20
    for level in cfg.level_list:
        space = fem.function_space(build_mesh(cfg.dim, level), cfg.degree)
        M, A = fem.assemble_operators(space)
        idx = np.array(cfg.eig_indices)
        lam, phi = _phase("eigen", lambda: fem.discrete_eigenpairs(M, A, int(idx.max()) + 1, cap))
        g = phi[:, idx] @ np.array(cfg.eig_coeffs)
        source = rom.exact_source(M @ g)
        b0 = np.zeros(space.n_dofs)
        grid = rom.TimeGrid.from_rule(cfg.T, space.mesh.spacing, cfg.degree, cfg.dt_rule)
        res = rom.reduced_solve(M, A, source, b0, grid, method=cfg.method, ell=cfg.ell,
                                tol=cfg.tol, tol_svd=cfg.tol_svd, tol_mode=cfg.tol_mode)
        fom_traj, _ = _phase("fom", lambda: rom.solve_fom(M, A, source, b0, grid))
        gaps = [fem.l2_norm(M, u - res.Q @ a) for u, a in zip(fom_traj, res.trajectory)]
        peak = max(fem.l2_norm(M, u) for u in fom_traj)
        rows.append({
            **_level_columns(cfg.dim, level),
            "eigenvalues": " ".join(f"{v:.10g}" for v in lam[idx]),
            "r": res.diagnostics["r"],
            "max_gap": max(gaps),
            "max_rel_gap": max(gaps) / peak if peak > 0 else 0.0,
        })
    return rows


RUNNERS = {
    "fom-timing": run_fom_timing,
    "rom-accuracy": run_rom_accuracy,
    "convergence": run_convergence,
    "decay": run_decay,
    "exactness": run_exactness,
}


def _format(value):
    if isinstance(value, float):
        return repr(value)
    return value


def write_rows(rows: list[dict], path: str | Path) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _format(v) for k, v in row.items()})


def versions() -> dict:
    return {"kryrom": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "sympy": sympy.__version__}


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one experiment, write ``<experiment>.csv`` and ``manifest.json`` under ``cfg.out``.

    Returns the manifest.
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.dump_mesh:
        for level in cfg.level_list:
            write_mesh_text(build_mesh(cfg.dim, level), out / f"mesh_{cfg.dim}d_level{level}.txt")
    start = time.perf_counter()
    result = RUNNERS[cfg.experiment](cfg)
    seconds = time.perf_counter() - start
    csv_path = out / f"{cfg.experiment}.csv"
    if cfg.experiment == "decay":
        krylov.write_decay_csv(result, csv_path)
        rows = [vars(rec) for rec in result]
    else:
        write_rows(result, csv_path)
        rows = result
    manifest = {
        "experiment": cfg.experiment,
        "config": cfg.as_dict(),
        "versions": versions(),
        "total_seconds": seconds,
        "table": csv_path.name,
        "levels": [{**_level_columns(cfg.dim, lv)} for lv in cfg.level_list],
        "rows": rows,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_json_default))
    return manifest


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")
