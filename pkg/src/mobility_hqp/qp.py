"""Dense least-squares QP solver and the strict-priority cascade.

Every level is a problem of the form

    min_x  1/2 ||A x - b||^2
    s.t.   C x <= d
           E x  = f

solved with a primal active-set method. Lower levels inherit the
constraints of the higher ones plus the equality ``A_k x = A_k x_k*`` that
freezes the task value reached at level ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_TOLERANCE = 1e-8
DEFAULT_MAX_ITERATIONS = 10_000


class QpError(RuntimeError):
    """Base class for solver failures. ``level`` is set by the cascade."""

    def __init__(self, message: str, level: int | None = None):
        super().__init__(message)
        self.level = level

    def __str__(self) -> str:
        msg = super().__str__()
        return msg if self.level is None else f"level {self.level}: {msg}"


class Infeasible(QpError):
    pass


class MaxIterations(QpError):
    pass


class IllConditioned(QpError):
    pass


class DimensionMismatch(ValueError):
    pass


def _as_matrix(m, ncols: int, name: str) -> np.ndarray:
    if m is None:
        return np.zeros((0, ncols))
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.size == 0:
        return np.zeros((0, ncols))
    if m.shape[1] != ncols:
        raise DimensionMismatch(f"{name} has {m.shape[1]} columns, expected {ncols}")
    return m


def _as_vector(v, nrows: int, name: str) -> np.ndarray:
    if v is None:
        v = np.zeros(0)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != nrows:
        raise DimensionMismatch(f"{name} has {v.shape[0]} entries, expected {nrows}")
    return v


@dataclass(frozen=True)
class QpProblem:
    """One least-squares level with its constraints. Missing blocks are empty."""

    A: np.ndarray
    b: np.ndarray
    C: np.ndarray | None = None
    d: np.ndarray | None = None
    E: np.ndarray | None = None
    f: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        s = A.shape[1]
        b = _as_vector(self.b, A.shape[0], "b")
        C = _as_matrix(self.C, s, "C")
        d = _as_vector(self.d, C.shape[0], "d")
        E = _as_matrix(self.E, s, "E")
        f = _as_vector(self.f, E.shape[0], "f")
        for name, arr in zip("AbCdEf", (A, b, C, d, E, f)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.A.shape[1]


@dataclass
class QpSolution:
    x: np.ndarray
    residuals: list[float]
    kkt_residual: float
    iterations: int
    active_set: tuple[int, ...] = ()
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass(frozen=True)
class TaskLevel:
    """A priority level: objective blocks plus constraints introduced here."""

    A: np.ndarray
    b: np.ndarray
    C: np.ndarray | None = None
    d: np.ndarray | None = None
    E: np.ndarray | None = None
    f: np.ndarray | None = None
    name: str = ""


@dataclass
class HierarchyStack:
    levels: list[TaskLevel]
    dim: int

    def __post_init__(self):
        if not self.levels:
            raise ValueError("hierarchy needs at least one level")
        for k, lvl in enumerate(self.levels, start=1):
            for blk in (lvl.A, lvl.C, lvl.E):
                if blk is not None and np.size(blk) and np.atleast_2d(blk).shape[1] != self.dim:
                    raise DimensionMismatch(f"level {k} block has wrong column count")


def weighted_stack_level(tasks) -> tuple[np.ndarray, np.ndarray]:
    """Stack ``(weight, A, b)`` triples into one least-squares block.

    Rows are scaled by sqrt(weight) so the stacked cost equals the weighted
    sum of the individual costs.
    """
    tasks = list(tasks)
    if not tasks:
        raise ValueError("no tasks to stack")
    ncols = np.atleast_2d(tasks[0][1]).shape[1]
    rows, rhs = [], []
    for w, A, b in tasks:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[1] != ncols:
            raise DimensionMismatch(f"task block has {A.shape[1]} columns, expected {ncols}")
        if A.shape[0] != b.shape[0]:
            raise DimensionMismatch("task matrix and vector row counts differ")
        if not w > 0:
            raise ValueError(f"task weight must be positive, got {w}")
        sw = np.sqrt(w)
        rows.append(sw * A)
        rhs.append(sw * b)
    return np.vstack(rows), np.concatenate(rhs)


def _null_space(M: np.ndarray, dim: int) -> np.ndarray:
    if M.shape[0] == 0:
        return np.eye(dim)
    _, sv, vt = np.linalg.svd(M)
    rank = int(np.sum(sv > 1e-10 * max(1.0, sv[0])))
    return vt[rank:].T


def _active_set(H, g, C, d, E, f, x, tol, max_iter, iter_offset=0):
    """Primal active-set iterations from a feasible ``x``.

    Returns ``(x, working, multipliers, iterations)``. The reduced Newton
    system is solved in the least-squares sense; for least-squares objectives
    the reduced gradient always lies in the range of the reduced Hessian, so
    this yields a minimiser over the current face even when it is singular.
    """
    n = x.shape[0]
    working: list[int] = []
    step_tol = 1e-12
    on_face_min = False  # a full unblocked step already minimised over the current face
    for it in range(max_iter):
        M = np.vstack([E, C[working]]) if working else E
        Z = _null_space(M, n)
        grad = H @ x + g
        if Z.shape[1]:
            u = np.linalg.lstsq(Z.T @ H @ Z, -(Z.T @ grad), rcond=None)[0]
            p = Z @ u
        else:
            p = np.zeros(n)
        if not np.all(np.isfinite(p)):
            raise IllConditioned("non-finite step in active-set iteration")

        if on_face_min or np.linalg.norm(p) <= step_tol * (1.0 + np.linalg.norm(x)):
            on_face_min = False
            if M.shape[0]:
                lam = np.linalg.lstsq(M.T, -grad, rcond=None)[0]
            else:
                lam = np.zeros(0)
            lam_ineq = lam[E.shape[0]:]
            if lam_ineq.size == 0 or lam_ineq.min() >= -tol:
                return x, working, lam, it + 1 + iter_offset
            working.pop(int(np.argmin(lam_ineq)))
            continue

        Cp = C @ p
        alpha, blocking = 1.0, None
        slack = d - C @ x
        for i in np.flatnonzero(Cp > 1e-14):
            if i in working:
                continue
            a = max(slack[i], 0.0) / Cp[i]
            if a < alpha:
                alpha, blocking = a, int(i)
        x = x + alpha * p
        if blocking is not None:
            working.append(blocking)
        else:
            on_face_min = True
    raise MaxIterations(f"active set did not converge in {max_iter} iterations")


def _feasible_start(C, d, E, f, x0, tol, max_iter):
    n = C.shape[1] if C.size else E.shape[1]
    candidates = [np.zeros(n)] if x0 is None else [np.asarray(x0, float), np.zeros(n)]
    for x in candidates:
        if E.shape[0]:
            x = x - np.linalg.lstsq(E, E @ x - f, rcond=None)[0]
            if np.max(np.abs(E @ x - f)) > tol:
                raise Infeasible("equality constraints are inconsistent")
        if C.shape[0] == 0 or np.max(C @ x - d) <= 0.0:
            return x, 0

    # Phase 1: min 1/2 t^2 s.t. C x - t <= d, E x = f over (x, t).
    viol = max(np.max(C @ x - d), 0.0)
    z = np.append(x, viol)
    Cz = np.hstack([C, -np.ones((C.shape[0], 1))])
    Ez = np.hstack([E, np.zeros((E.shape[0], 1))])
    Hz = np.zeros((n + 1, n + 1))
    Hz[-1, -1] = 1.0
    gz = np.zeros(n + 1)
    z, _, _, iters = _active_set(Hz, gz, Cz, d, Ez, f, z, tol, max_iter)
    if z[-1] > tol:
        raise Infeasible(f"no point satisfies the constraints (max violation {z[-1]:.3g})")
    x = z[:-1]
    return x, iters


def kkt_residuals(problem: QpProblem, x: np.ndarray, active: tuple[int, ...], lam: np.ndarray):
    """Stationarity, primal violation and complementarity at ``x``.

    Stationarity is scaled by the size of the objective gradient terms.
    """
    A, b, C, d, E, f = problem.A, problem.b, problem.C, problem.d, problem.E, problem.f
    r = A @ x - b
    grad = A.T @ r
    ne = E.shape[0]
    mu, lam_i = lam[:ne], lam[ne:]
    stat = grad + E.T @ mu + C[list(active)].T @ lam_i if active else grad + E.T @ mu
    scale = max(1.0, np.abs(A.T @ b).max(initial=0.0), np.abs(A.T @ (A @ x)).max(initial=0.0))
    stationarity = np.abs(stat).max(initial=0.0) / scale
    violation = max(
        np.max(C @ x - d, initial=0.0),
        np.abs(E @ x - f).max(initial=0.0),
    )
    compl = np.abs(lam_i * (C[list(active)] @ x - d[list(active)])).max(initial=0.0) if active else 0.0
    dual = max(0.0, -lam_i.min(initial=0.0))
    return stationarity, violation, compl, dual


def solve_qp(
    problem: QpProblem,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    x0: np.ndarray | None = None,
) -> QpSolution:
    A, b, C, d, E, f = problem.A, problem.b, problem.C, problem.d, problem.E, problem.f

    # Zero rows carry no information beyond a feasibility check.
    cn = np.linalg.norm(C, axis=1)
    if np.any((cn == 0) & (d < -tolerance)):
        raise Infeasible("constraint 0 <= d with negative d")
    en = np.linalg.norm(E, axis=1)
    if np.any((en == 0) & (np.abs(f) > tolerance)):
        raise Infeasible("equality 0 = f with nonzero f")
    keep_c = np.flatnonzero(cn > 0)
    Cr, dr = C[keep_c], d[keep_c]
    Er, fr = E[en > 0], f[en > 0]

    H = A.T @ A
    g = -A.T @ b
    if np.abs(H).max(initial=0.0) > 1e150:
        raise IllConditioned("objective entries overflow")

    x, it0 = _feasible_start(Cr, dr, Er, fr, x0, tolerance, max_iterations)
    x, working, lam, iters = _active_set(H, g, Cr, dr, Er, fr, x, tolerance, max_iterations - it0, it0)
    if not np.all(np.isfinite(x)):
        raise IllConditioned("solution is not finite")

    active = tuple(int(keep_c[i]) for i in working)
    reduced = QpProblem(A, b, Cr, dr, Er, fr)
    stat, viol, compl, dual = kkt_residuals(reduced, x, tuple(working), lam)
    return QpSolution(
        x=x,
        residuals=[float(np.linalg.norm(A @ x - b))],
        kkt_residual=float(max(stat, viol, compl, dual)),
        iterations=iters,
        active_set=active,
        multipliers=lam,
    )


def solve_hierarchy(
    stack: HierarchyStack,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    x0: np.ndarray | None = None,
) -> QpSolution:
    """Solve the levels in priority order, freezing each achieved task value."""
    s = stack.dim
    Cs, ds, Es, fs = [], [], [], []
    achieved: list[float] = []
    x = x0
    sol = None
    total_iters = 0
    for k, lvl in enumerate(stack.levels, start=1):
        if lvl.C is not None and np.size(lvl.C):
            Cs.append(np.atleast_2d(lvl.C))
            ds.append(np.asarray(lvl.d, float).reshape(-1))
        if lvl.E is not None and np.size(lvl.E):
            Es.append(np.atleast_2d(lvl.E))
            fs.append(np.asarray(lvl.f, float).reshape(-1))
        prob = QpProblem(
            lvl.A,
            lvl.b,
            np.vstack(Cs) if Cs else np.zeros((0, s)),
            np.concatenate(ds) if ds else np.zeros(0),
            np.vstack(Es) if Es else np.zeros((0, s)),
            np.concatenate(fs) if fs else np.zeros(0),
        )
        try:
            sol = solve_qp(prob, tolerance, max_iterations, x0=x)
        except QpError as exc:
            exc.level = k
            raise
        total_iters += sol.iterations
        x = sol.x
        achieved.append(sol.residuals[0])
        A_k = np.atleast_2d(np.asarray(lvl.A, float))
        if A_k.size:
            Es.append(A_k)
            fs.append(A_k @ x)

    assert sol is not None
    sol.residuals = achieved
    sol.iterations = total_iters
    return sol


def level_residuals(stack: HierarchyStack, x: np.ndarray) -> list[float]:
    return [float(np.linalg.norm(np.atleast_2d(l.A) @ x - np.asarray(l.b, float))) for l in stack.levels]
