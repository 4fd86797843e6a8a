"""Error metrics, convergence tables and stability diagnostics.

Relative errors at the terminal time follow the weighted conventions of the
solver: e_a uses the energy norm sqrt(v' A v) and e_l2 the weighted mass
norm sqrt(v' S v), both evaluated on the fine grid after prolongation.
The reference is a fine-grid run of the same scheme, cached on disk keyed
by everything that determines it.
"""

import hashlib
import os
import time
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.linalg as la
from matplotlib.figure import Figure

from . import cem, fem, solver
from .grid import build_hierarchy

__all__ = [
    "AnalysisError",
    "ErrorReport",
    "ConvergenceTable",
    "StudySpec",
    "StabilityReport",
    "compute_errors",
    "run_convergence_study",
    "estimate_inverse_constant",
    "cfl_boundary_scan",
    "energy_functional",
    "ReferenceCache",
    "CSV_HEADER",
]

CSV_HEADER = "H,m,alpha,e_l2,e_a,dt,T,source,field_hash,wall_seconds"


class AnalysisError(RuntimeError):
    pass


@dataclass
class ErrorReport:
    e_l2: float
    e_a: float
    abs_l2: float
    abs_a: float
    H: float
    m: int
    ell: int
    alpha: float
    dt: float
    T: float
    source: str
    field_hash: str
    wall_seconds: float = 0.0

    def csv_row(self):
        return (
            f"{self.H:.5e},{self.m},{self.alpha:.5e},{self.e_l2:.5e},{self.e_a:.5e},"
            f"{self.dt:.5e},{self.T:.5e},{self.source},{self.field_hash},"
            f"{self.wall_seconds:.5e}"
        )


def _norm(op, v):
    return float(np.sqrt(max(v @ (op @ v), 0.0)))


def compute_errors(traj, ref_traj, fine_ops, meta=None):
    """Relative and absolute terminal-time errors of traj against ref_traj."""
    if abs(traj.T - ref_traj.T) > 1e-12 * max(traj.T, 1.0):
        raise AnalysisError(f"terminal times differ: {traj.T} vs {ref_traj.T}")
    if fine_ops.S_full is None:
        raise AnalysisError("fine operators lack the weighted mass form")
    diff = ref_traj.final_full - traj.final_full
    abs_a = _norm(fine_ops.A_full, diff)
    abs_l2 = _norm(fine_ops.S_full, diff)
    den_a = _norm(fine_ops.A_full, ref_traj.final_full)
    den_l2 = _norm(fine_ops.S_full, ref_traj.final_full)
    if den_a < 1e-14 or den_l2 < 1e-14:
        raise AnalysisError("reference solution norm is below 1e-14")
    meta = meta or {}
    return ErrorReport(
        e_l2=abs_l2 / den_l2,
        e_a=abs_a / den_a,
        abs_l2=abs_l2,
        abs_a=abs_a,
        H=meta.get("H", np.nan),
        m=meta.get("m", -1),
        ell=meta.get("ell", -1),
        alpha=meta.get("alpha", np.nan),
        dt=traj.dt,
        T=traj.T,
        source=meta.get("source", ""),
        field_hash=meta.get("field_hash", ""),
        wall_seconds=traj.wall_seconds,
    )


def energy_functional(alpha, fine_ops, u_full, u_dot_full):
    """sqrt(alpha)*||u_t|| + ||u||_a from fine-grid representatives."""
    return float(
        np.sqrt(alpha) * _norm(fine_ops.M_full, u_dot_full)
        + _norm(fine_ops.A_full, u_full)
    )


def estimate_inverse_constant(basis, hier):
    """Empirical C_inv: H times the largest singular ratio of gradient to
    value norms over the reduced space (kappa==1 stiffness vs plain mass)."""
    k1 = fem.assemble_stiffness(hier.fine, np.ones(hier.fine.n_cells)).matrix
    k1_ms = (basis.R.T @ (k1 @ basis.R)).toarray()
    k1_ms = 0.5 * (k1_ms + k1_ms.T)
    m_ms = 0.5 * (basis.M_ms + basis.M_ms.T)
    p = basis.p
    mu_max = la.eigh(k1_ms, m_ms, eigvals_only=True, subset_by_index=(p - 1, p - 1))[0]
    return float(hier.coarse.H * np.sqrt(max(mu_max, 0.0)))


# --------------------------------------------------------------------------
# reference cache

class ReferenceCache:
    """Disk cache of fine-grid reference trajectories."""

    def __init__(self, directory):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)
        self.hits = 0
        self.misses = 0

    def _key(self, field_hash, source, alpha, dt, T, nx, ny, init):
        raw = f"{field_hash}|{source}|{alpha!r}|{dt!r}|{T!r}|{nx}|{ny}|{init}"
        return hashlib.sha256(raw.encode()).hexdigest()[:24]

    def get_or_run(self, hier, field, problem, config, fine_ops):
        key = self._key(
            field.content_hash(), problem.source.name, problem.alpha,
            config.dt, problem.T, hier.fine.nx, hier.fine.ny, config.init,
        )
        path = os.path.join(self.directory, key + ".npz")
        if os.path.exists(path):
            data = np.load(path)
            self.hits += 1
            return solver.Trajectory(
                label="fine", dt=config.dt, n_steps=int(data["n_steps"]), T=problem.T,
                final=data["final"], final_full=data["final_full"],
                energy_steps=data["energy_steps"], energy=data["energy"],
                dissipated=data["dissipated"], source_work=data["source_work"],
                u0_norm=float(data["u0_norm"]), u1_norm=float(data["u1_norm"]),
                wall_seconds=float(data["wall_seconds"]),
            )
        traj = solver.reference_solve(hier, field, problem, config, fine_ops=fine_ops)
        self.misses += 1
        np.savez_compressed(
            path,
            n_steps=traj.n_steps, final=traj.final, final_full=traj.final_full,
            energy_steps=traj.energy_steps, energy=traj.energy,
            dissipated=traj.dissipated, source_work=traj.source_work,
            u0_norm=traj.u0_norm, u1_norm=traj.u1_norm, wall_seconds=traj.wall_seconds,
        )
        return traj


def reference_dt_auto(alpha, hier, field, cap):
    """Largest snapped step below both the cap and the provable fine-grid
    stability bound (with margin)."""
    lam = solver.fine_stability_bound(hier, field)
    dt_stab = float(np.sqrt(2.0 * alpha / lam))
    return solver.snap_dt(min(cap, 0.95 * dt_stab))


# --------------------------------------------------------------------------
# convergence studies

@dataclass
class StudySpec:
    nx: int
    ny: int
    rows: list            # [(Nx, m), ...]; Ny = Nx
    alphas: list
    source: str
    field: object
    dt: float
    T: float
    ell: int = 3
    pou_kind: str = "bilinear"
    init: str = "zero"
    delta: float = 0.0
    threads: int = 1
    cache_dir: str = ".qgdms_cache"
    dt_auto: bool = True
    max_cells: int | None = None


@dataclass
class ConvergenceTable:
    rows: list                 # (H, m) keys in order
    alphas: list
    cells: dict                # (row_index, alpha) -> ErrorReport
    partial: bool = False
    meta: dict = dc_field(default_factory=dict)

    def to_csv(self, path):
        with open(path, "w", encoding="ascii") as fh:
            fh.write(CSV_HEADER + "\n")
            for r in range(len(self.rows)):
                for a in self.alphas:
                    rep = self.cells.get((r, a))
                    if rep is not None:
                        fh.write(rep.csv_row() + "\n")

    def column(self, alpha, attr="e_a"):
        return [getattr(self.cells[(r, alpha)], attr) for r in range(len(self.rows))]

    def plot_svg(self, path, attr="e_a"):
        fig = Figure(figsize=(5.0, 4.0))
        ax = fig.subplots()
        hs = [h for h, _ in self.rows]
        for a in self.alphas:
            vals = [getattr(self.cells[(r, a)], attr) for r in range(len(self.rows))
                    if (r, a) in self.cells]
            ax.loglog(hs[: len(vals)], vals, "o-", label=f"alpha={a:g}")
        ax.set_xlabel("H")
        ax.set_ylabel(attr)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
        fig.savefig(path, format="svg")


def run_convergence_study(spec):
    """One basis build per (H, m) row, one cached reference per alpha, one
    coarse solve per cell."""
    field = spec.field
    field_hash = field.content_hash()
    cache = ReferenceCache(spec.cache_dir)
    src = solver.get_source(spec.source) if isinstance(spec.source, str) else spec.source

    rows_meta = []
    cells = {}
    partial = False
    cell_budget = spec.max_cells if spec.max_cells is not None else np.inf
    n_done = 0

    ref_cache_local = {}

    for r, (Nx, m) in enumerate(spec.rows):
        try:
            hier = build_hierarchy(spec.nx, spec.ny, Nx, Nx)
            pou = fem.build_partition_of_unity(hier, field, spec.pou_kind)
            fine_ops = solver.assemble_fine_operators(hier, field, pou)
            aux = cem.build_auxiliary_space(hier, field, pou, spec.ell, threads=spec.threads)
            basis = cem.build_multiscale_basis(
                hier, field, pou, aux, m, threads=spec.threads,
                operators=(fine_ops.A_full, fine_ops.M_full),
            )
            c_inv = estimate_inverse_constant(basis, hier)
            space = solver.make_reduced_space(basis, fine_ops)
        except Exception as exc:
            raise AnalysisError(f"row (Nx={Nx}, m={m}) failed: {exc}") from exc
        rows_meta.append({"H": hier.coarse.H, "m": m, "Lambda": basis.Lambda,
                          "sigma_aux": basis.sigma_aux, "c_inv_emp": c_inv,
                          "basis_seconds": basis.build_seconds})

        for a in spec.alphas:
            if n_done >= cell_budget:
                partial = True
                break
            t0 = time.perf_counter()
            verdict = solver.check_cfl(a, field.beta, c_inv, hier.coarse.H, spec.dt, spec.delta)
            dt_coarse = spec.dt
            if not verdict.passed and spec.dt_auto:
                dt_coarse = solver.snap_dt(0.95 * verdict.dt_max)
                verdict = solver.check_cfl(a, field.beta, c_inv, hier.coarse.H, dt_coarse, spec.delta)
            problem = solver.QgdProblem(alpha=a, source=src, T=spec.T)
            cfg = solver.LeapfrogConfig(dt=dt_coarse, delta=spec.delta, cfl=verdict,
                                        energy_stride=max(1, int(round(spec.T / dt_coarse)) // 50),
                                        init=spec.init)
            traj = solver.leapfrog_solve(space, problem, cfg)
            if traj.blowup:
                partial = True
                continue

            if a not in ref_cache_local:
                dt_ref = reference_dt_auto(a, hier, field, dt_coarse) if spec.dt_auto else spec.dt
                ref_cfg = solver.LeapfrogConfig(
                    dt=dt_ref, init=spec.init,
                    energy_stride=max(1, int(round(spec.T / dt_ref)) // 50),
                )
                ref_cache_local[a] = cache.get_or_run(hier, field, problem, ref_cfg, fine_ops)
            ref = ref_cache_local[a]

            rep = compute_errors(traj, ref, fine_ops, meta={
                "H": hier.coarse.H, "m": m, "ell": spec.ell, "alpha": a,
                "source": src.name, "field_hash": field_hash,
            })
            rep.wall_seconds = time.perf_counter() - t0
            cells[(r, a)] = rep
            n_done += 1
        if n_done >= cell_budget and (r + 1) < len(spec.rows):
            partial = True
            break

    return ConvergenceTable(
        rows=[(np.hypot(1.0 / Nx, 1.0 / Nx), m) for Nx, m in spec.rows],
        alphas=list(spec.alphas),
        cells=cells,
        partial=partial,
        meta={"rows": rows_meta, "field_hash": field_hash, "source": src.name,
              "dt": spec.dt, "T": spec.T, "ell": spec.ell},
    )


# --------------------------------------------------------------------------
# CFL boundary scan

@dataclass
class StabilityReport:
    dt_values: list
    blew_up: list
    predicted_dt: float
    empirical_critical: float | None

    def to_csv(self, path):
        with open(path, "w", encoding="ascii") as fh:
            fh.write("dt,blowup,predicted_dt\n")
            for dt, b in zip(self.dt_values, self.blew_up):
                fh.write(f"{dt:.5e},{int(b)},{self.predicted_dt:.5e}\n")


def cfl_boundary_scan(space, alpha, beta, c_inv_emp, H, dt_list, steps=4000, seed=0, delta=0.0):
    """Run f=0 with a fixed random start at each dt and flag blow-ups.

    The empirical critical step is the smallest dt that blew up; the
    prediction is the slack-zero step from the stability inequality.
    """
    predicted = solver.check_cfl(alpha, beta, c_inv_emp, H, dt_list[0], delta).dt_max
    rng = np.random.default_rng(seed)
    u0_full = np.zeros(space.fine_ops.hier.fine.n_nodes)
    interior = space.fine_ops.interior
    u0_full[interior] = rng.standard_normal(len(interior))
    blew = []
    for dt in dt_list:
        problem = solver.QgdProblem(
            alpha=alpha, source=solver.get_source("zero"), T=dt * steps, u0=u0_full
        )
        cfg = solver.LeapfrogConfig(
            dt=dt, n_steps=steps, allow_unstable=True, init="elliptic_taylor",
            energy_stride=steps,
        )
        traj = solver.leapfrog_solve(space, problem, cfg)
        blew.append(bool(traj.blowup))
    unstable = [dt for dt, b in zip(dt_list, blew) if b]
    empirical = min(unstable) if unstable else None
    return StabilityReport(list(dt_list), blew, float(predicted), empirical)
