"""Viscous N-link swimmers under resistive force theory.

The body frame sits at the centroid of the link midpoints and is aligned with
the mean link orientation.  For a body velocity ``xi = (xi_x, xi_y, xi_theta)``
and joint velocities ``rdot``, every link's midpoint velocity and angular rate
are linear in ``q = (xi, rdot)``; the drag dissipation is then the quadratic
form ``q^T M_full q``.  Force balance on the free body (``dP/dxi = 0``) gives
the local connection ``xi = -A rdot`` with ``A = M_xixi^-1 M_xir`` and the
reduced power metric is the Schur complement of ``M_xixi``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import JointLimitError, SingularConfigurationError
from .gait_space import GaitParams, ShapeTrajectory, circle_gait, fourier_basis, phase_generator, uniform_phase
from .system import SystemModel

MAX_CONDITION = 1e12
DEFAULT_JOINT_LIMIT = 3.0
DEFAULT_SAMPLES = 64
CHUNK = 60000


@dataclass(frozen=True)
class SwimmerGeometry:
    n_links: int = 3
    link_length: Optional[float] = None  # defaults to 1 / n_links (unit total length)
    c_long: float = 1.0
    drag_ratio: float = 2.0  # lateral / longitudinal drag per unit length
    joint_limit: float = DEFAULT_JOINT_LIMIT

    def __post_init__(self):
        if self.n_links < 2:
            raise ValueError("a swimmer needs at least two links")
        if self.link_length is None:
            object.__setattr__(self, "link_length", 1.0 / self.n_links)
        for name in ("link_length", "c_long", "drag_ratio", "joint_limit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def n_joints(self) -> int:
        return self.n_links - 1

    @property
    def c_lat(self) -> float:
        return self.c_long * self.drag_ratio


@dataclass(frozen=True)
class GroupDisplacement:
    x: float
    y: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    def inverse(self) -> "GroupDisplacement":
        c, s = np.cos(self.theta), np.sin(self.theta)
        return GroupDisplacement(-(c * self.x + s * self.y), s * self.x - c * self.y, wrap_angle(-self.theta))


def wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2.0 * np.pi)


def _check_shapes(geom, r):
    bad = np.abs(r) > geom.joint_limit
    if bad.any():
        idx = np.argwhere(bad.any(axis=-1))[0]
        raise JointLimitError(f"shape {r[tuple(idx)]!r} outside joint limit {geom.joint_limit}")


def link_kinematics(geom: SwimmerGeometry, r):
    """Link orientations and midpoints in the body frame, with their shape Jacobians.

    Returns ``theta (B, N)``, ``dtheta (N, n)``, ``c (B, N, 2)``, ``dc (B, N, 2, n)``.
    """
    r = np.atleast_2d(np.asarray(r, dtype=float))
    B, n = r.shape
    N = n + 1
    L = geom.link_length
    beta = np.concatenate([np.zeros((B, 1)), np.cumsum(r, axis=1)], axis=1)
    dbeta = (np.arange(n)[None, :] < np.arange(N)[:, None]).astype(float)
    mean_beta = beta.mean(axis=1)
    dmean = dbeta.mean(axis=0)
    theta = beta - mean_beta[:, None]
    dtheta = dbeta - dmean[None, :]

    e = np.stack([np.cos(beta), np.sin(beta)], axis=-1)
    eperp = np.stack([-np.sin(beta), np.cos(beta)], axis=-1)
    seg = 0.5 * L * (e[:, :-1] + e[:, 1:])
    P = np.concatenate([np.zeros((B, 1, 2)), np.cumsum(seg, axis=1)], axis=1)
    de = eperp[..., None] * dbeta[None, :, None, :]
    dseg = 0.5 * L * (de[:, :-1] + de[:, 1:])
    dP = np.concatenate([np.zeros((B, 1, 2, n)), np.cumsum(dseg, axis=1)], axis=1)
    Q = P - P.mean(axis=1, keepdims=True)
    dQ = dP - dP.mean(axis=1, keepdims=True)

    ct, st = np.cos(mean_beta)[:, None], np.sin(mean_beta)[:, None]

    def rot(v):  # rotate by -mean_beta; v has shape (B, N, 2, ...)
        extra = (slice(None), slice(None)) + (None,) * (v.ndim - 3)
        cx, sx = ct[extra], st[extra]
        return np.stack([cx * v[:, :, 0] + sx * v[:, :, 1], -sx * v[:, :, 0] + cx * v[:, :, 1]], axis=2)

    c = rot(Q)
    swapped = np.stack([Q[:, :, 1], -Q[:, :, 0]], axis=2)
    dc = rot(dQ) + rot(swapped)[..., None] * dmean[None, None, None, :]
    return theta, dtheta, c, dc


def drag_form(geom: SwimmerGeometry, r) -> np.ndarray:
    """Dissipation quadratic form over ``(xi, rdot)``, shape ``(B, 3+n, 3+n)``."""
    theta, dtheta, c, dc = link_kinematics(geom, r)
    B, N = theta.shape
    n = N - 1
    L = geom.link_length
    eb = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    nb = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
    J = np.zeros((B, N, 3, 3 + n))
    J[:, :, 0, 0:2] = eb
    J[:, :, 0, 2] = eb[..., 1] * c[..., 0] - eb[..., 0] * c[..., 1]
    J[:, :, 0, 3:] = (eb[..., None] * dc).sum(axis=2)
    J[:, :, 1, 0:2] = nb
    J[:, :, 1, 2] = nb[..., 1] * c[..., 0] - nb[..., 0] * c[..., 1]
    J[:, :, 1, 3:] = (nb[..., None] * dc).sum(axis=2)
    J[:, :, 2, 2] = 1.0
    J[:, :, 2, 3:] = dtheta[None]
    D = np.array([geom.c_long * L, geom.c_lat * L, geom.c_lat * L**3 / 12.0])
    X = (J * np.sqrt(D)[:, None]).reshape(B, 3 * N, 3 + n)
    return np.matmul(np.swapaxes(X, 1, 2), X)


def _connection_and_metric(geom, r, check_condition=True):
    r = np.atleast_2d(np.asarray(r, dtype=float))
    _check_shapes(geom, r)
    Mf = drag_form(geom, r)
    Mxx, Mxr, Mrr = Mf[:, :3, :3], Mf[:, :3, 3:], Mf[:, 3:, 3:]
    if check_condition:
        # cond <= |M|_F^3 / det for SPD 3x3; eigenvalues only where the bound is inconclusive
        bound = np.linalg.norm(Mxx, axis=(1, 2)) ** 3 / np.linalg.det(Mxx)
        bad = ~((bound > 0) & (bound <= MAX_CONDITION))
        if bad.any():
            ev = np.linalg.eigvalsh(Mxx[bad])
            cond = ev[:, -1] / np.maximum(ev[:, 0], np.finfo(float).tiny)
            bad[bad] = ~(cond <= MAX_CONDITION)
        if bad.any():
            i = int(np.argmax(bad))
            raise SingularConfigurationError(f"force balance singular at shape {r[i]!r}", shape=r[i], index=i)
    A = np.linalg.solve(Mxx, Mxr)
    metric = Mrr - np.einsum("bki,bkj->bij", Mxr, A)
    return A, 0.5 * (metric + np.swapaxes(metric, 1, 2))


def local_connection_batch(geom: SwimmerGeometry, r) -> np.ndarray:
    return _connection_and_metric(geom, r)[0]


def power_metric_batch(geom: SwimmerGeometry, r) -> np.ndarray:
    return _connection_and_metric(geom, r)[1]


def local_connection(geom: SwimmerGeometry, r) -> np.ndarray:
    """3 x n matrix ``A(r)`` with body velocity ``xi = -A(r) rdot``."""
    return local_connection_batch(geom, np.asarray(r, dtype=float)[None, :])[0]


def power_metric(geom: SwimmerGeometry, r) -> np.ndarray:
    return power_metric_batch(geom, np.asarray(r, dtype=float)[None, :])[0]


def body_velocity_batch(geom, r, rdot):
    """``xi = -A(r) rdot`` and ``rdot^T M(r) rdot`` for stacked samples ``(..., n)``."""
    r = np.asarray(r, dtype=float)
    rdot = np.asarray(rdot, dtype=float)
    lead = r.shape[:-1]
    n = r.shape[-1]
    rf, vf = r.reshape(-1, n), rdot.reshape(-1, n)
    xi = np.empty((rf.shape[0], 3))
    power = np.empty(rf.shape[0])
    for start in range(0, rf.shape[0], CHUNK):
        sl = slice(start, start + CHUNK)
        A, M = _connection_and_metric(geom, rf[sl])
        xi[sl] = -np.einsum("bij,bj->bi", A, vf[sl])
        power[sl] = np.einsum("bi,bij,bj->b", vf[sl], M, vf[sl])
    return xi.reshape(lead + (3,)), power.reshape(lead)


def _spectral_poses(xi, dphi, path: bool):
    """Net pose, and optionally the pose at every sample, from the trigonometric interpolant.

    The heading is ``w phi`` plus a periodic part; each Fourier mode ``k`` of
    ``u = exp(i theta_periodic) (xi_x + i xi_y)`` integrates against
    ``exp(i w phi)`` in closed form.  Returns ``(heading, position, total
    heading, total position)`` with positions as complex numbers; the path
    arrays are ``None`` unless requested.
    """
    S = xi.shape[-2]
    k = np.fft.fftfreq(S, d=1.0 / S)
    T = S * dphi
    phi = np.arange(S) * dphi
    Xt = np.fft.fft(xi[..., 2], axis=-1)
    omega = Xt[..., 0].real / S * (2.0 * np.pi / T)
    with np.errstate(divide="ignore", invalid="ignore"):
        integ = np.where(k != 0, 1.0 / (1j * k * 2.0 * np.pi / T), 0.0)
    if S % 2 == 0:
        integ[S // 2] = 0.0
    Ct = Xt * integ
    periodic = np.fft.ifft(Ct, axis=-1).real - (Ct.sum(axis=-1).real / S)[..., None]

    u = np.exp(1j * periodic) * (xi[..., 0] + 1j * xi[..., 1])
    U = np.fft.fft(u, axis=-1) / S
    freq = k * (2.0 * np.pi / T)
    if S % 2 == 0:
        U = np.concatenate([U, U[..., S // 2:S // 2 + 1]], axis=-1)
        U[..., S // 2] *= 0.5
        U[..., -1] *= 0.5
        freq = np.concatenate([freq, [-freq[S // 2]]])
    rate = omega[..., None] + freq
    # int_0^T exp(i c t) dt = T exp(i c T / 2) sinc(c T / 2pi)
    weights = T * np.exp(0.5j * rate * T) * np.sinc(rate * T / (2.0 * np.pi))
    total_pos = (U * weights).sum(axis=-1)
    total_heading = omega * T
    if not path:
        return None, None, total_heading, total_pos

    heading = omega[..., None] * phi + periodic
    # position(phi_j) = sum_k U_k (exp(i c_k phi_j) - 1) / (i c_k); the mode with
    # |c_k| below half the base frequency is evaluated in the stable sinc form
    base = 2.0 * np.pi / T
    near = np.abs(rate) < 0.5 * base
    with np.errstate(divide="ignore", invalid="ignore"):
        C = np.where(near, 0.0, U / (1j * rate))
    grid = C[..., :S].copy()
    if S % 2 == 0:
        grid[..., S // 2] += C[..., S]
    position = np.fft.ifft(grid, axis=-1) * S * np.exp(1j * omega[..., None] * phi) - C.sum(axis=-1)[..., None]
    idx = np.argmax(near, axis=-1)
    Un = np.take_along_axis(U, idx[..., None], axis=-1) * near.any(axis=-1, keepdims=True)
    cn = np.take_along_axis(rate, idx[..., None], axis=-1)
    position = position + Un * phi * np.exp(0.5j * cn * phi) * np.sinc(cn * phi / (2.0 * np.pi))
    return heading, position, total_heading, total_pos


def reconstruct(xi, dphi: float, method: str = "spectral") -> np.ndarray:
    """Net pose ``(x, y, theta)`` over one cycle from body velocities on a periodic uniform grid.

    ``xi`` has shape ``(..., S, 3)``.  The heading obeys an autonomous
    equation, so the pose splits into ``theta(phi) = int xi_theta`` and
    ``x + i y = int exp(i theta) (xi_x + i xi_y) dphi``.

    ``method="spectral"`` (default) integrates the trigonometric interpolant of
    the samples exactly.  ``method="rk4"`` is classical RK4 on
    ``(x, y, theta)`` with steps spanning two grid intervals so that odd
    samples serve as midpoints (``S`` even).
    """
    xi = np.asarray(xi, dtype=float)
    if method == "rk4":
        return _reconstruct_rk4(xi, dphi)
    if method != "spectral":
        raise ValueError(f"unknown reconstruction method {method!r}")
    _, _, th, z = _spectral_poses(xi, dphi, path=False)
    return np.stack([z.real, z.imag, wrap_angle(th)], axis=-1)


def start_averaged_displacement(xi, dphi: float) -> np.ndarray:
    """Net displacement averaged over every starting phase of the cycle.

    Starting the cycle at phase ``phi0`` conjugates the net pose by the pose
    reached at ``phi0``; when the net rotation or the body heading along the
    cycle are nonzero the body-frame translation depends on ``phi0``.  The
    average over all starting phases depends only on the closed curve.
    Returns ``(..., 3)`` with the (start-independent) net rotation last.
    """
    xi = np.asarray(xi, dtype=float)
    heading, position, th, z = _spectral_poses(xi, dphi, path=True)
    # translation of h^-1 g h is R(-theta_h) (t_g + (R_g - I) t_h)
    shifted = np.exp(-1j * heading) * (z[..., None] + (np.exp(1j * th[..., None]) - 1.0) * position)
    mean = shifted.mean(axis=-1)
    return np.stack([mean.real, mean.imag, wrap_angle(th)], axis=-1)


def _reconstruct_rk4(xi, dphi):
    S = xi.shape[-2]
    if S % 2:
        raise ValueError("RK4 reconstruction needs an even number of samples")
    a = xi[..., 0::2, :]
    m = xi[..., 1::2, :]
    b = np.roll(a, -1, axis=-2)
    H = 2.0 * dphi
    dtheta = H / 6.0 * (a[..., 2] + 4.0 * m[..., 2] + b[..., 2])
    theta = np.cumsum(dtheta, axis=-1) - dtheta

    def rotate(angle, v):
        c, s = np.cos(angle), np.sin(angle)
        return np.stack([c * v[..., 0] - s * v[..., 1], s * v[..., 0] + c * v[..., 1]], axis=-1)

    k1 = rotate(theta, a)
    k2 = rotate(theta + 0.5 * H * a[..., 2], m)
    k3 = rotate(theta + 0.5 * H * m[..., 2], m)
    k4 = rotate(theta + H * m[..., 2], b)
    xy = (H / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).sum(axis=-2)
    return np.concatenate([xy, wrap_angle(dtheta.sum(axis=-1))[..., None]], axis=-1)


def _dphi(traj: ShapeTrajectory) -> float:
    return 2.0 * np.pi / traj.n_samples


def net_displacement(geom: SwimmerGeometry, traj: ShapeTrajectory) -> GroupDisplacement:
    """Cycle-end pose relative to the cycle-start body frame."""
    xi, _ = _traj_velocity(geom, traj)
    x, y, th = reconstruct(xi, _dphi(traj))
    return GroupDisplacement(float(x), float(y), float(th))


def pathlength_cost(geom: SwimmerGeometry, traj: ShapeTrajectory) -> float:
    """Metric-weighted pathlength by trapezoidal quadrature over the periodic samples."""
    _, power = _traj_velocity(geom, traj)
    return float(np.sqrt(np.maximum(power, 0.0)).sum() * _dphi(traj))


def _traj_velocity(geom, traj):
    try:
        return body_velocity_batch(geom, traj.r, traj.rdot)
    except SingularConfigurationError as exc:
        raise SingularConfigurationError(f"singular sample at phase index {exc.index}: {exc}",
                                         shape=exc.shape, index=exc.index) from exc


def _bracket(u, v):
    """se(2) Lie bracket of (x, y, theta) vectors."""
    return np.stack([
        -u[..., 2] * v[..., 1] + v[..., 2] * u[..., 1],
        u[..., 2] * v[..., 0] - v[..., 2] * u[..., 0],
        np.zeros(np.broadcast_shapes(u.shape, v.shape)[:-1]),
    ], axis=-1)


def shape_planes(n_joints: int):
    return [(i, j) for i in range(n_joints) for j in range(i + 1, n_joints)]


def constraint_curvature_batch(geom: SwimmerGeometry, r, h: float = 1e-5) -> np.ndarray:
    """Curvature ``D(-A)`` per shape plane ``(i, j)``, shape ``(B, n_planes, 3)``.

    For a small counterclockwise loop in plane ``(i, j)`` the net displacement
    is approximately the enclosed area times this vector.
    """
    r = np.atleast_2d(np.asarray(r, dtype=float))
    B, n = r.shape
    offsets = np.concatenate([np.eye(n), -np.eye(n)]) * h
    probes = (r[:, None, :] + offsets[None]).reshape(-1, n)
    Ap = local_connection_batch(geom, probes).reshape(B, 2, n, 3, n)
    dA = (Ap[:, 0] - Ap[:, 1]) / (2.0 * h)  # dA[b, k, :, col] = dA[:, col] / dr_k
    A = local_connection_batch(geom, r)
    out = []
    for i, j in shape_planes(n):
        ext = dA[:, i, :, j] - dA[:, j, :, i]
        out.append(-ext + _bracket(A[:, :, i], A[:, :, j]))
    return np.stack(out, axis=1)


def constraint_curvature(geom: SwimmerGeometry, r) -> np.ndarray:
    """One 3-vector per shape plane; a single vector for two-joint swimmers."""
    out = constraint_curvature_batch(geom, np.asarray(r, dtype=float)[None, :])[0]
    return out[0] if out.shape[0] == 1 else out


class SwimmerModel(SystemModel):
    """Fourier-parametrized gaits of a viscous swimmer; ``g`` is the net x displacement."""

    def __init__(self, geometry: SwimmerGeometry, order: int = 3, n_samples: int = DEFAULT_SAMPLES, **kwargs):
        super().__init__(**kwargs)
        if n_samples % 2 or n_samples < 8 * order:
            raise ValueError("n_samples must be even and at least 8 * order")
        self.geometry = geometry
        self.order = order
        self.n_samples = n_samples
        self.n_joints = geometry.n_joints
        self.n_params = self.n_joints * (2 * order + 1)
        self.name = {3: "three_link", 4: "four_link"}.get(geometry.n_links, f"{geometry.n_links}_link")
        self._value, self._deriv = fourier_basis(order, uniform_phase(n_samples))

    def gait(self, p) -> GaitParams:
        return GaitParams.from_vector(p, self.n_joints, self.order)

    def _shapes(self, P):
        C = np.asarray(P, dtype=float).reshape(-1, self.n_joints, 2 * self.order + 1)
        r = np.einsum("sk,mjk->msj", self._value, C)
        rdot = np.einsum("sk,mjk->msj", self._deriv, C)
        return r, rdot

    def evaluate_full(self, P):
        """Net ``(x, y, theta)`` and cost for a batch of parameter vectors."""
        r, rdot = self._shapes(np.atleast_2d(P))
        xi, power = body_velocity_batch(self.geometry, r, rdot)
        dphi = 2.0 * np.pi / self.n_samples
        disp = start_averaged_displacement(xi, dphi)
        cost = np.sqrt(np.maximum(power, 0.0)).sum(axis=-1) * dphi
        return disp, cost

    def evaluate_batch(self, P):
        disp, cost = self.evaluate_full(P)
        return np.column_stack([disp[:, 0], cost])

    def trivial_directions(self, p):
        return phase_generator(p, self.n_joints, self.order)[None, :]

    def initial_guess(self) -> np.ndarray:
        """Unit circle in the first two joints, or a travelling wave for longer chains."""
        if self.n_joints == 2:
            p = circle_gait(2, self.order, 1.0).to_vector()
        else:
            c = np.zeros((self.n_joints, 2 * self.order + 1))
            lag = np.pi / self.n_joints
            for j in range(self.n_joints):
                c[j, 1] = np.cos(j * lag)
                c[j, 2] = np.sin(j * lag)
            p = c.ravel()
        if self.displacement(p) < 0:
            p = p.reshape(self.n_joints, -1)
            p[:, 2::2] *= -1.0
            p = p.ravel()
        return p

    def shape_samples(self, p, n_samples):
        phi = uniform_phase(n_samples)
        value, deriv = fourier_basis(self.order, phi)
        C = np.asarray(p, dtype=float).reshape(self.n_joints, -1)
        return phi, value @ C.T, deriv @ C.T
