"""Leapfrog time integration of  u_t + alpha*u_tt - div(kappa grad u) = f.

Central differences approximate both time derivatives at step n, so the
stiffness acts on the known iterate and the left-hand operator is a scaled
mass matrix factored once per run.  The same loop serves the reduced
multiscale space (dense operators) and the full fine space (sparse), which
is what makes the fine-space run the bit-exact reference.
"""

import time
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .fem import assemble_mass, assemble_stiffness, cell_load_vector, q1_mass, q1_stiffness
from .coefficient import load_raster

__all__ = [
    "CflViolationError",
    "SolverError",
    "CflVerdict",
    "check_cfl",
    "QgdProblem",
    "LeapfrogConfig",
    "Trajectory",
    "Source",
    "SumSource",
    "get_source",
    "FineOperators",
    "assemble_fine_operators",
    "make_fine_space",
    "make_reduced_space",
    "init_steps",
    "leapfrog_solve",
    "reference_solve",
    "fine_stability_bound",
    "snap_dt",
]


class SolverError(RuntimeError):
    pass


class CflViolationError(SolverError):
    """Raised when a run is requested with a failed CFL check and no override."""


@dataclass(frozen=True)
class CflVerdict:
    alpha: float
    beta: float
    c_inv_emp: float
    H: float
    dt: float
    delta: float
    slack: float
    passed: bool
    dt_max: float


def check_cfl(alpha, beta, c_inv_emp, H, dt, delta=0.0):
    """Stability slack alpha - 0.5*beta*C^2*H^-2*dt^2, compared against delta."""
    rate = 0.5 * beta * c_inv_emp**2 / H**2
    slack = alpha - rate * dt * dt
    dt_max = float(np.sqrt(max(alpha - delta, 0.0) / rate)) if rate > 0 else np.inf
    return CflVerdict(alpha, beta, c_inv_emp, H, dt, delta, slack, slack >= delta, dt_max)


def snap_dt(dt):
    """Largest step of the form {1, 2, 5} * 10^k not exceeding dt."""
    if dt <= 0:
        raise SolverError(f"time step must be positive, got {dt}")
    k = np.floor(np.log10(dt))
    for mant in (5.0, 2.0, 1.0):
        cand = mant * 10.0**k
        if cand <= dt * (1 + 1e-12):
            return float(cand)
    return float(10.0 ** (k - 1) * 5.0)


# --------------------------------------------------------------------------
# sources

class Source:
    """Separable space-time source f(x, y, t) = spatial(x, y) * factor(t)."""

    def __init__(self, name, spatial, time_factor, cellwise=False):
        self.name = name
        self._spatial = spatial
        self.time_factor = time_factor
        self.cellwise = cellwise

    def spatial_load_full(self, hier, m_full):
        """Full-grid load vector of the spatial profile (time factor 1)."""
        fine = hier.fine
        if self.cellwise:
            cx = (np.tile(np.arange(fine.nx), fine.ny) + 0.5) * fine.hx
            cy = (np.repeat(np.arange(fine.ny), fine.nx) + 0.5) * fine.hy
            return cell_load_vector(fine, self._spatial(cx, cy))
        return m_full @ self._spatial(fine.node_x, fine.node_y)


class SumSource:
    """Pointwise sum of sources; exercises the non-separable load path."""

    def __init__(self, parts):
        self.name = "+".join(p.name for p in parts)
        self.parts = list(parts)
        self.time_factor = None

    def load_full(self, hier, m_full, t):
        out = None
        for p in self.parts:
            b = p.spatial_load_full(hier, m_full) * p.time_factor(t)
            out = b if out is None else out + b
        return out


class RasterSource:
    """Cell-constant spatial profile read from a raster file, constant in time."""

    def __init__(self, path):
        self.name = f"raster:{path}"
        self.field = load_raster(path)
        self.time_factor = lambda t: 1.0

    def spatial_load_full(self, hier, m_full):
        self.field.check_mesh(hier.fine)
        return cell_load_vector(hier.fine, self.field.cell_values())


def _sine_profile(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def get_source(name, alpha=None):
    """Named source registry; raster:PATH reads a cell-wise profile."""
    if name == "zero":
        return Source("zero", lambda x, y: np.zeros_like(x), lambda t: 0.0)
    if name == "static_sine":
        return Source("static_sine", _sine_profile, lambda t: 1.0)
    if name == "time_sine":
        return Source("time_sine", _sine_profile, lambda t: float(np.sin(np.pi * t)))
    if name == "manufactured_quadratic":
        # matches u(t, x) = t^2 sin(pi x1) sin(pi x2) for kappa == 1
        if alpha is None:
            raise SolverError("manufactured_quadratic needs alpha")
        return Source(
            "manufactured_quadratic",
            _sine_profile,
            lambda t: 2.0 * t + 2.0 * alpha + 2.0 * np.pi**2 * t * t,
        )
    if name.startswith("raster:"):
        return RasterSource(name.split(":", 1)[1])
    raise SolverError(f"unknown source {name!r}")


# --------------------------------------------------------------------------
# problem, configuration, spaces

@dataclass
class QgdProblem:
    alpha: float
    source: object
    T: float
    u0: np.ndarray | None = None  # full-grid nodal vectors, zero on the boundary
    v0: np.ndarray | None = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise SolverError(f"alpha must be positive, got {self.alpha}")
        if self.T <= 0:
            raise SolverError(f"terminal time must be positive, got {self.T}")


@dataclass
class LeapfrogConfig:
    dt: float
    n_steps: int | None = None
    delta: float = 0.0
    energy_stride: int = 1
    snapshot_stride: int = 0
    blowup_threshold: float | None = None
    allow_unstable: bool = False
    init: str = "zero"
    cfl: CflVerdict | None = None

    def resolve_steps(self, T):
        n = self.n_steps if self.n_steps is not None else int(round(T / self.dt))
        if n < 1:
            raise SolverError(f"dt={self.dt} exceeds terminal time {T}")
        if abs(n * self.dt - T) > 1e-12 * max(abs(T), 1.0):
            raise SolverError(f"dt={self.dt} does not divide T={T} (N={n})")
        return n


@dataclass
class Trajectory:
    label: str
    dt: float
    n_steps: int
    T: float
    final: np.ndarray
    final_full: np.ndarray
    energy_steps: np.ndarray
    energy: np.ndarray
    dissipated: np.ndarray
    source_work: np.ndarray
    u0_norm: float
    u1_norm: float
    blowup: bool = False
    blowup_step: int | None = None
    snapshots: dict = dc_field(default_factory=dict)
    wall_seconds: float = 0.0

    def energy_balance_residual(self):
        """E_n + dissipated_n - source_work_n - E_1; identically zero in exact
        arithmetic for the scheme."""
        return self.energy + self.dissipated - self.source_work - self.energy[0]

    def energy_csv(self, path):
        with open(path, "w", encoding="ascii") as fh:
            fh.write("step,time,energy,dissipated,source_work,balance_residual\n")
            res = self.energy_balance_residual()
            for k, n in enumerate(self.energy_steps):
                fh.write(
                    f"{n},{n * self.dt:.5e},{self.energy[k]:.5e},"
                    f"{self.dissipated[k]:.5e},{self.source_work[k]:.5e},{res[k]:.5e}\n"
                )


@dataclass
class FineOperators:
    """Full-grid operators shared by spaces, loads and error metrics."""

    hier: object
    A_full: sparse.csr_matrix
    M_full: sparse.csr_matrix
    S_full: sparse.csr_matrix | None
    beta: float

    @property
    def interior(self):
        return self.hier.fine.interior_dofs


def assemble_fine_operators(hier, field, pou=None):
    field.check_mesh(hier.fine)
    kappa = field.cell_values()
    a_full = assemble_stiffness(hier.fine, kappa).matrix
    m_full = assemble_mass(hier.fine).matrix
    s_full = None
    if pou is not None:
        s_full = assemble_mass(hier.fine, pou.kappa_tilde, tag="weighted_mass_s").matrix
    return FineOperators(hier, a_full, m_full, s_full, field.beta)


class _Space:
    """Shared behavior: restriction/prolongation via R, cached factorizations."""

    def __init__(self, label, R, fine_ops):
        self.label = label
        self.R = R
        self.fine_ops = fine_ops
        self._solve_a = None

    @property
    def dim(self):
        return self.R.shape[1]

    def restrict_load(self, b_full):
        return self.R.T @ b_full

    def prolong(self, coeffs):
        return self.R @ coeffs


class FineSpace(_Space):
    def __init__(self, fine_ops):
        dofs = fine_ops.interior
        n = fine_ops.hier.fine.n_nodes
        R = sparse.csc_matrix(
            (np.ones(len(dofs)), (dofs, np.arange(len(dofs)))), shape=(n, len(dofs))
        )
        super().__init__("fine", R, fine_ops)
        self.A = fine_ops.A_full[dofs][:, dofs].tocsr()
        self.M = fine_ops.M_full[dofs][:, dofs].tocsr()
        self._solve_m = spla.factorized(self.M.tocsc())

    def apply_A(self, u):
        return self.A @ u

    def apply_M(self, u):
        return self.M @ u

    def solve_M(self, rhs):
        # one refinement step keeps the long-run energy balance at 1e-10
        x = self._solve_m(rhs)
        return x + self._solve_m(rhs - self.M @ x)

    def solve_A(self, rhs):
        if self._solve_a is None:
            self._solve_a = spla.factorized(self.A.tocsc())
        return self._solve_a(rhs)


class ReducedSpace(_Space):
    def __init__(self, basis, fine_ops):
        super().__init__(f"ms(m={basis.m},ell={basis.ell})", basis.R, fine_ops)
        self.basis = basis
        self.A = basis.A_ms
        self.M = basis.M_ms
        self._cho_m = la.cho_factor(basis.M_ms)

    def apply_A(self, u):
        return self.A @ u

    def apply_M(self, u):
        return self.M @ u

    def solve_M(self, rhs):
        x = la.cho_solve(self._cho_m, rhs)
        return x + la.cho_solve(self._cho_m, rhs - self.M @ x)

    def solve_A(self, rhs):
        if self._solve_a is None:
            self._solve_a = la.lu_factor(self.A)
        return la.lu_solve(self._solve_a, rhs)


def make_fine_space(fine_ops):
    return FineSpace(fine_ops)


def make_reduced_space(basis, fine_ops):
    return ReducedSpace(basis, fine_ops)


def fine_stability_bound(hier, field):
    """Provable upper bound for the largest (A, M) eigenvalue on the fine grid.

    Cell-wise Courant bound: max over cells of kappa_c times the largest
    generalized eigenvalue of the single-cell stiffness/mass pair.
    """
    fine = hier.fine
    cell_eig = la.eigh(
        q1_stiffness(fine.hx, fine.hy), q1_mass(fine.hx, fine.hy), eigvals_only=True
    )[-1]
    return float(field.beta * cell_eig)


# --------------------------------------------------------------------------
# initialization and the main loop

def init_steps(problem, space, policy, dt):
    """First two iterates.  'zero' starts from rest; 'elliptic_taylor' takes
    the energy projection of u0 and a second-order Taylor step for u1."""
    if policy == "zero":
        z = np.zeros(space.dim)
        return z, z.copy()
    if policy != "elliptic_taylor":
        raise SolverError(f"unknown init policy {policy!r}")
    fine_ops = space.fine_ops
    n = fine_ops.hier.fine.n_nodes
    u0 = problem.u0 if problem.u0 is not None else np.zeros(n)
    v0 = problem.v0 if problem.v0 is not None else np.zeros(n)
    c0 = space.solve_A(space.R.T @ (fine_ops.A_full @ u0))
    v0c = space.solve_M(space.R.T @ (fine_ops.M_full @ v0))
    b0 = _load_at(problem.source, space, 0.0)
    w = space.solve_M(b0 - space.apply_M(v0c) - space.apply_A(c0)) / problem.alpha
    return c0, c0 + dt * v0c + 0.5 * dt * dt * w


def _load_at(source, space, t):
    if getattr(source, "time_factor", None) is not None:
        b_space = space.restrict_load(
            source.spatial_load_full(space.fine_ops.hier, space.fine_ops.M_full)
        )
        return b_space * source.time_factor(t)
    return space.restrict_load(source.load_full(space.fine_ops.hier, space.fine_ops.M_full, t))


def leapfrog_solve(space, problem, config):
    """March the fully discrete scheme to T on the given space.

    Records the discrete energy E_n = 0.5*(alpha*||(u^n-u^{n-1})/dt||^2
    + a(u^{n-1}, u^n)) at the configured stride together with the running
    dissipation and source-work sums that close its exact balance.
    """
    t_start = time.perf_counter()
    dt = config.dt
    n_steps = config.resolve_steps(problem.T)
    if config.cfl is not None and not config.cfl.passed and not config.allow_unstable:
        raise CflViolationError(
            f"CFL slack {config.cfl.slack:.3e} < delta {config.cfl.delta:.3e} "
            f"at dt={dt:.3e} (dt_max={config.cfl.dt_max:.3e})"
        )

    alpha = problem.alpha
    hier = space.fine_ops.hier
    m_full = space.fine_ops.M_full
    separable = getattr(problem.source, "time_factor", None) is not None
    if separable:
        b_space = space.restrict_load(problem.source.spatial_load_full(hier, m_full))
        tf = problem.source.time_factor

    u_prev, u_cur = init_steps(problem, space, config.init, dt)
    u0_norm = float(np.linalg.norm(u_prev))
    u1_norm = float(np.linalg.norm(u_cur))
    threshold = config.blowup_threshold
    if threshold is None:
        threshold = 1e12 * (1.0 + np.max(np.abs(u_cur), initial=0.0))

    c1 = 1.0 / (2.0 * dt) + alpha / (dt * dt)
    c2 = 2.0 * alpha / (dt * dt)
    c3 = 1.0 / (2.0 * dt) - alpha / (dt * dt)

    m_prev = space.apply_M(u_prev)
    m_cur = space.apply_M(u_cur)
    # compensated sums: the energy balance is checked to 1e-10 over 1e5 steps
    diss_sum = 0.0
    diss_carry = 0.0
    work_sum = 0.0
    work_carry = 0.0
    e_steps, e_vals, e_diss, e_work = [], [], [], []
    snapshots = {}
    blowup = False
    blowup_step = None

    def record(n, a_on_cur):
        # E_n needs a(u^{n-1}, u^n); a_on_cur = A u^n is at hand in the loop
        kin = 0.5 * alpha * float((u_cur - u_prev) @ (m_cur - m_prev)) / (dt * dt)
        pot = 0.5 * float(u_prev @ a_on_cur)
        e_steps.append(n)
        e_vals.append(kin + pot)
        e_diss.append(diss_sum)
        e_work.append(work_sum)

    stride = max(config.energy_stride, 1)
    a_cur = space.apply_A(u_cur)
    record(1, a_cur)
    if config.snapshot_stride:
        snapshots[1] = u_cur.copy()

    for n in range(1, n_steps):
        b_n = b_space * tf(n * dt) if separable else _load_at(problem.source, space, n * dt)
        rhs = b_n - a_cur + c2 * m_cur + c3 * m_prev
        u_next = space.solve_M(rhs) / c1
        m_next = space.apply_M(u_next)

        v = u_next - u_prev
        inc = float(v @ (m_next - m_prev)) / (4.0 * dt) - diss_carry
        tot = diss_sum + inc
        diss_carry = (tot - diss_sum) - inc
        diss_sum = tot
        inc = 0.5 * float(b_n @ v) - work_carry
        tot = work_sum + inc
        work_carry = (tot - work_sum) - inc
        work_sum = tot

        u_prev, u_cur = u_cur, u_next
        m_prev, m_cur = m_cur, m_next
        a_cur = space.apply_A(u_cur)

        if np.max(np.abs(u_cur)) > threshold:
            blowup = True
            blowup_step = n + 1
            record(n + 1, a_cur)
            break
        if (n + 1 - 1) % stride == 0 or n + 1 == n_steps:
            record(n + 1, a_cur)
        if config.snapshot_stride and ((n + 1) % config.snapshot_stride == 0 or n + 1 == n_steps):
            snapshots[n + 1] = u_cur.copy()

    return Trajectory(
        label=space.label,
        dt=dt,
        n_steps=n_steps,
        T=problem.T,
        final=u_cur,
        final_full=space.prolong(u_cur),
        energy_steps=np.array(e_steps),
        energy=np.array(e_vals),
        dissipated=np.array(e_diss),
        source_work=np.array(e_work),
        u0_norm=u0_norm,
        u1_norm=u1_norm,
        blowup=blowup,
        blowup_step=blowup_step,
        snapshots=snapshots,
        wall_seconds=time.perf_counter() - t_start,
    )


def reference_solve(hier, field, problem, config, fine_ops=None):
    """Fine-grid run of the same scheme; the ground truth for error metrics."""
    if fine_ops is None:
        fine_ops = assemble_fine_operators(hier, field)
    return leapfrog_solve(make_fine_space(fine_ops), problem, config)
