"""Independent reference computations used by the tests.

Nothing here imports the solver or kinematics code under test.
"""

import itertools

import numpy as np


def box_qp_grid(A, b, lower, upper, final_step=1e-3):
    """Minimise ||A x - b||^2 over a box by coarse-to-fine grid search.

    Each pass scans a 9-point-per-axis grid around the incumbent and shrinks
    the spacing by four until it reaches ``final_step``.
    """
    A, b = np.asarray(A, float), np.asarray(b, float)
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    s = A.shape[1]
    axes = [np.linspace(lo, hi, 21) for lo, hi in zip(lower, upper)]
    step = (upper - lower) / 20
    best = _scan(A, b, axes)
    while np.max(step) > final_step:
        step = np.maximum(step / 4, final_step)
        axes = [np.clip(best[i] + step[i] * np.arange(-4, 5), lower[i], upper[i]) for i in range(s)]
        best = _scan(A, b, axes)
    return best


def _scan(A, b, axes):
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    cost = np.sum((grid @ A.T - b) ** 2, axis=1)
    return grid[np.argmin(cost)]


def box_qp_enumerate(A, b, lower, upper):
    """Exact box-constrained least squares by enumerating active sets."""
    A, b = np.asarray(A, float), np.asarray(b, float)
    s = A.shape[1]
    best, best_cost = None, np.inf
    for pattern in itertools.product((-1, 0, 1), repeat=s):
        x = np.zeros(s)
        fixed = [i for i in range(s) if pattern[i] != 0]
        free = [i for i in range(s) if pattern[i] == 0]
        for i in fixed:
            x[i] = lower[i] if pattern[i] < 0 else upper[i]
        if free:
            x[free] = np.linalg.lstsq(A[:, free], b - A[:, fixed] @ x[fixed], rcond=None)[0]
        if np.all(x >= np.asarray(lower) - 1e-12) and np.all(x <= np.asarray(upper) + 1e-12):
            cost = np.sum((A @ x - b) ** 2)
            if cost < best_cost - 1e-14:
                best, best_cost = x, cost
    return best


def dh_matrix(theta, a, alpha, d):
    """Rot_z(theta) Trans_z(d) Trans_x(a) Rot_x(alpha) as four explicit products."""
    c, s = np.cos(theta), np.sin(theta)
    rz = np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1.0]])
    tz = np.eye(4)
    tz[2, 3] = d
    tx = np.eye(4)
    tx[0, 3] = a
    ca, sa = np.cos(alpha), np.sin(alpha)
    rx = np.array([[1.0, 0, 0, 0], [0, ca, -sa, 0], [0, sa, ca, 0], [0, 0, 0, 1]])
    return rz @ tz @ tx @ rx


def human_table(q, ls, lh, lr):
    """The human upper-limb parameter table as (theta, a, alpha, d) tuples."""
    hp = np.pi / 2
    return [
        (q[0], ls[2], -hp, -ls[1]),
        (q[1], 0.0, hp, -ls[0]),
        (q[2] + hp, 0.0, hp, 0.0),
        (q[3] - hp, -lh[0], hp, -lh[2]),
        (q[4] + np.pi, 0.0, hp, -lh[1]),
        (q[5] + hp, -lr[1], hp, -lr[2]),
        (q[6] + hp, 0.0, hp, -lr[0]),
        (q[7], 0.0, 0.0, 0.0),
    ]


def human_fk_oracle(q, ls, lh, lr):
    T = np.eye(4)
    for row in human_table(q, ls, lh, lr):
        T = T @ dh_matrix(*row)
    return T


def jerk_bruteforce(v, dt):
    v = np.atleast_2d(np.asarray(v, float).T).T
    total = 0.0
    for k in range(1, len(v) - 1):
        j = (v[k + 1] - 2 * v[k] + v[k - 1]) / dt**2
        total += float(np.sum(j * j))
    return dt * total


def project_grid(p0, normals, bounds, half_width=0.3, step=1e-3, final_step=1e-5):
    """Closest feasible point to ``p0`` by grid search.

    A full scan of the cube at ``step`` is followed by local rescans around
    the incumbent that shrink the spacing until it reaches ``final_step``.
    """
    p0 = np.asarray(p0, float)
    best = _project_scan(p0, p0, normals, bounds, np.arange(-half_width, half_width + step / 2, step))
    while best is not None and step > final_step:
        ax = np.arange(-4 * step, 4 * step + step / 8, step / 4)
        for _ in range(20):  # rescan until the incumbent settles
            prev, best = best, _project_scan(p0, best, normals, bounds, ax)
            if np.array_equal(best, prev):
                break
        step /= 4
    return best


def _project_scan(p0, centre, normals, bounds, ax):
    best, best_d = None, np.inf
    # scan plane by plane to keep memory small
    for dx in ax:
        gy, gz = np.meshgrid(ax, ax, indexing="ij")
        pts = np.stack([np.full(gy.size, centre[0] + dx), centre[1] + gy.ravel(), centre[2] + gz.ravel()], axis=1)
        ok = np.all(pts @ np.asarray(normals).T >= np.asarray(bounds) - 1e-12, axis=1)
        if not np.any(ok):
            continue
        d = np.sum((pts[ok] - p0) ** 2, axis=1)
        i = np.argmin(d)
        if d[i] < best_d:
            best, best_d = pts[ok][i], d[i]
    return best


def fd_jacobian(fk_matrix, q, h=1e-6):
    """Central-difference geometric Jacobian of a 4x4-valued FK function.

    Angular rows come from the rotation vector of ``R(q + h) R(q - h)^T``.
    """
    from scipy.spatial.transform import Rotation

    q = np.asarray(q, float)
    J = np.zeros((6, q.size))
    for i, e in enumerate(np.eye(q.size)):
        plus, minus = fk_matrix(q + h * e), fk_matrix(q - h * e)
        J[:3, i] = (plus[:3, 3] - minus[:3, 3]) / (2 * h)
        J[3:, i] = Rotation.from_matrix(plus[:3, :3] @ minus[:3, :3].T).as_rotvec() / (2 * h)
    return J
