"""Second-order dynamic movement primitive over the 6-dof pose error.

The transformation system regulates the pose error ``e_p`` of the camera
relative to its goal frame through the acceleration of the goal-frame
twist:

    tau^2 xi_dot = -Gamma e_p - tau Lambda xi + Theta^T Psi(z_p, z_o)

with ``Gamma = diag(a_v b_v I, a_w b_w I)``, ``Lambda = diag(a_v I, a_w I)``
and a learned forcing term gated by two exponential phase clocks.  With the
critical-damping choice ``a = 4 b`` the unforced system converges without
overshoot, which is what the gain certificate checks.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import IllPosedLearningError
from .geometry import (
    Pose,
    StateX,
    Twist,
    UnitQuaternion,
    pose_error,
    quat_derivative,
    quat_exp,
    quat_log,
)

MODEL_FORMAT = "dmp-model"
MODEL_VERSION = 1
DEMO_HEADER = (
    ["t"]
    + [f"e_p_{i}" for i in range(6)]
    + [f"xi_{i}" for i in range(6)]
    + [f"xi_dot_{i}" for i in range(6)]
)


@dataclass(frozen=True)
class DmpGains:
    """Stiffness/damping pairs, phase decay rates and the time constant."""

    alpha_v: float
    beta_v: float
    alpha_omega: float
    beta_omega: float
    alpha_zp: float
    alpha_zo: float
    tau: float

    def __post_init__(self):
        for name in ("alpha_v", "beta_v", "alpha_omega", "beta_omega",
                     "alpha_zp", "alpha_zo", "tau"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def gamma(self) -> np.ndarray:
        """Stiffness matrix Gamma, 6x6 diagonal."""
        return np.diag(
            [self.alpha_v * self.beta_v] * 3 + [self.alpha_omega * self.beta_omega] * 3
        )

    def lam(self) -> np.ndarray:
        """Damping matrix Lambda, 6x6 diagonal."""
        return np.diag([self.alpha_v] * 3 + [self.alpha_omega] * 3)


def canonical(t: float, t0: float, alpha_z: float, tau: float) -> float:
    """Phase clock z(t) = exp(-alpha_z (t - t0) / tau), z(t0) = 1."""
    if t < t0:
        raise ValueError("canonical clock queried before its start time")
    return math.exp(-alpha_z * (t - t0) / tau)


@dataclass(frozen=True)
class BasisSet:
    """Normalized Gaussian basis in phase space.

    Centers ride the canonical trajectory, ``c_i = exp(-alpha_z (i-1)/(N-1))``,
    so they are strictly decreasing in (0, 1]; widths are the inverse squared
    center gaps with the last width repeated.
    """

    alpha_z: float
    centers: np.ndarray
    widths: np.ndarray

    def __init__(self, alpha_z, centers, widths):
        c = np.asarray(centers, dtype=float).reshape(-1).copy()
        w = np.asarray(widths, dtype=float).reshape(-1).copy()
        if c.size != w.size or c.size < 2:
            raise ValueError("need matching centers/widths, at least two")
        object.__setattr__(self, "alpha_z", float(alpha_z))
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "widths", w)

    @property
    def count(self) -> int:
        return self.centers.size

    def psi(self, z: float) -> np.ndarray:
        """Normalized activations at phase ``z``; always sums to one.

        Evaluated through a shifted exponential so the normalization
        survives phases far outside the center range, where every raw
        Gaussian underflows.
        """
        expo = -self.widths * (z - self.centers) ** 2
        expo -= expo.max()
        w = np.exp(expo)
        return w / w.sum()


def build_basis(n: int, alpha_z: float) -> BasisSet:
    """Equally spaced (in canonical time) Gaussian basis of size ``n``."""
    if n < 2:
        raise ValueError("basis needs at least two functions")
    if alpha_z <= 0:
        raise ValueError("alpha_z must be positive")
    idx = np.arange(n, dtype=float)
    centers = np.exp(-alpha_z * idx / (n - 1))
    widths = np.empty(n)
    widths[:-1] = 1.0 / np.diff(centers) ** 2
    widths[-1] = widths[-2]
    return BasisSet(alpha_z, centers, widths)


@dataclass(frozen=True)
class DmpModel:
    """Gains plus the block-diagonal weight matrix.

    ``theta_p`` weights the position forcing (N_p x 3), ``theta_o`` the
    orientation forcing (N_o x 3); the two blocks never mix.
    """

    gains: DmpGains
    basis_p: BasisSet
    basis_o: BasisSet
    theta_p: np.ndarray
    theta_o: np.ndarray

    def __init__(self, gains, basis_p, basis_o, theta_p, theta_o):
        tp = np.asarray(theta_p, dtype=float).reshape(basis_p.count, 3).copy()
        to = np.asarray(theta_o, dtype=float).reshape(basis_o.count, 3).copy()
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "basis_p", basis_p)
        object.__setattr__(self, "basis_o", basis_o)
        object.__setattr__(self, "theta_p", tp)
        object.__setattr__(self, "theta_o", to)

    def theta_bound(self) -> float:
        """Spectral norm of the block-diagonal weight matrix."""
        np_norm = np.linalg.norm(self.theta_p, 2) if self.theta_p.size else 0.0
        no_norm = np.linalg.norm(self.theta_o, 2) if self.theta_o.size else 0.0
        return float(max(np_norm, no_norm))


def forcing(model: DmpModel, z_p: float, z_o: float) -> np.ndarray:
    """Forcing 6-vector Theta^T Psi at the given phase clock values."""
    f_p = model.theta_p.T @ (model.basis_p.psi(z_p) * z_p)
    f_o = model.theta_o.T @ (model.basis_o.psi(z_o) * z_o)
    return np.concatenate([f_p, f_o])


def dmp_accel(x: StateX, z_p: float, z_o: float, model: DmpModel) -> np.ndarray:
    """Goal-frame twist acceleration commanded by the primitive."""
    g = model.gains
    f = forcing(model, z_p, z_o)
    rhs = -g.gamma() @ x.e_p - g.tau * (g.lam() @ x.xi.as_vector()) + f
    return rhs / g.tau**2


@dataclass(frozen=True)
class Demonstration:
    """Sampled trajectory to fit: times, pose errors, twists, accelerations.

    All quantities are written in the goal frame of the demonstrated
    motion, matching what the primitive reproduces at run time.
    """

    t: np.ndarray
    e_p: np.ndarray
    xi: np.ndarray
    xi_dot: np.ndarray

    def __init__(self, t, e_p, xi, xi_dot):
        t = np.asarray(t, dtype=float).reshape(-1).copy()
        if t.size < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("demonstration times must strictly increase")
        k = t.size
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "e_p", np.asarray(e_p, dtype=float).reshape(k, 6).copy())
        object.__setattr__(self, "xi", np.asarray(xi, dtype=float).reshape(k, 6).copy())
        object.__setattr__(self, "xi_dot", np.asarray(xi_dot, dtype=float).reshape(k, 6).copy())

    @property
    def count(self) -> int:
        return self.t.size

    def path_length(self) -> float:
        """Translation arc length, used to normalize reproduction error."""
        steps = np.diff(self.e_p[:, :3], axis=0)
        return float(np.sum(np.linalg.norm(steps, axis=1)))


def minjerk_demo(start_pose: Pose, goal_pose: Pose, duration: float,
                 rate: float) -> Demonstration:
    """Analytic minimum-jerk demonstration between two poses.

    Translation follows the quintic blend ``s(u) = 10u^3 - 15u^4 + 6u^5``
    along the straight segment; orientation follows the constant-axis
    geodesic with the same blend.  Both the twist and its derivative come
    from differentiating the closed form, so the sampled triples satisfy
    the kinematics exactly (rotation axis is constant, hence the rotation
    error rate equals the angular velocity).
    """
    if duration <= 0 or rate <= 0:
        raise ValueError("duration and rate must be positive")
    rel_start = pose_error(start_pose, goal_pose)
    d0 = rel_start[:3]
    r0 = rel_start[3:]
    n = int(round(duration * rate)) + 1
    t = np.arange(n) / rate
    u = np.clip(t / duration, 0.0, 1.0)
    s = 10 * u**3 - 15 * u**4 + 6 * u**5
    s_dot = (30 * u**2 - 60 * u**3 + 30 * u**4) / duration
    s_ddot = (60 * u - 180 * u**2 + 120 * u**3) / duration**2
    axis = np.concatenate([d0, r0])
    e_p = (1.0 - s)[:, None] * axis[None, :]
    xi = (-s_dot)[:, None] * axis[None, :]
    xi_dot = (-s_ddot)[:, None] * axis[None, :]
    return Demonstration(t, e_p, xi, xi_dot)


def learn_weights(demo: Demonstration, gains: DmpGains, basis_p: BasisSet,
                  basis_o: BasisSet, regularization: float = 0.0) -> DmpModel:
    """Fit the forcing weights by per-dimension linear least squares.

    The regression target is the forcing the transformation system would
    have needed to realize the demonstration exactly:

        f(t_k) = tau^2 xi_dot_k + Gamma e_p_k + tau Lambda xi_k

    Position columns regress on the position basis gated by ``z_p`` only,
    orientation columns on the orientation basis gated by ``z_o``.
    """
    if regularization < 0:
        raise ValueError("regularization must be non-negative")
    g = gains
    targets = (
        g.tau**2 * demo.xi_dot
        + demo.e_p @ g.gamma().T
        + g.tau * demo.xi @ g.lam().T
    )
    rel_t = demo.t - demo.t[0]
    z_p = np.exp(-g.alpha_zp * rel_t / g.tau)
    z_o = np.exp(-g.alpha_zo * rel_t / g.tau)
    theta_p = _solve_block(z_p, basis_p, targets[:, :3], regularization, "position")
    theta_o = _solve_block(z_o, basis_o, targets[:, 3:], regularization, "orientation")
    return DmpModel(gains, basis_p, basis_o, theta_p, theta_o)


def _solve_block(z: np.ndarray, basis: BasisSet, rhs: np.ndarray,
                 regularization: float, label: str) -> np.ndarray:
    rows = np.stack([basis.psi(zk) * zk for zk in z])
    if regularization > 0.0:
        rows = np.vstack([rows, math.sqrt(regularization) * np.eye(basis.count)])
        rhs = np.vstack([rhs, np.zeros((basis.count, rhs.shape[1]))])
    theta, _, rank, _ = np.linalg.lstsq(rows, rhs, rcond=None)
    if rank < basis.count:
        raise IllPosedLearningError(
            f"{label} basis regression is rank deficient ({rank} < {basis.count}); "
            "add samples, shrink the basis, or regularize"
        )
    return theta


@dataclass(frozen=True)
class DmpCertificate:
    """Convergence certificate for the unforced transformation system."""

    lambda_d: float
    passed: bool
    critically_damped: bool
    margins: tuple


def dmp_gain_certificate(gains: DmpGains, epsilon2: float = 1.0) -> DmpCertificate:
    """Quadratic decay certificate for the primitive's gain set.

    Requires the exact critical-damping identities ``alpha = 4 beta`` for
    both blocks and damping margins ``4 tau beta > 3 epsilon2 / 2``; the
    certified decay weight is the minimum of four closed-form terms.
    """
    if epsilon2 <= 0:
        raise ValueError("epsilon2 must be positive")
    g = gains
    crit = (g.alpha_v == 4.0 * g.beta_v) and (g.alpha_omega == 4.0 * g.beta_omega)
    margin_v = 4.0 * g.tau * g.beta_v - 1.5 * epsilon2
    margin_o = 4.0 * g.tau * g.beta_omega - 1.5 * epsilon2
    lambda_d = min(
        epsilon2 * g.beta_v**2 / g.tau**2,
        margin_v,
        epsilon2 * g.beta_omega**2 / g.tau**2,
        margin_o,
    )
    passed = crit and margin_v > 0.0 and margin_o > 0.0
    return DmpCertificate(float(lambda_d), passed, crit, (margin_v, margin_o))


def rollout(model: DmpModel, x0: StateX, duration: float, dt: float):
    """Closed-loop rollout of the primitive in goal-frame error coordinates.

    Integrates the relative pose (quaternion and translation error) with
    RK4, holding the commanded acceleration constant across each control
    period; the phase clocks advance in closed form from the rollout
    start.  Returns ``(times, states, accels)`` with one state per tick
    including the initial one.
    """
    if dt <= 0 or duration < 0:
        raise ValueError("need dt > 0 and duration >= 0")
    g = model.gains
    n = int(round(duration / dt))
    q_rel = quat_exp(x0.e_p[3:])
    p_rel = x0.e_p[:3].copy()
    xi = x0.xi.as_vector()
    times = np.arange(n + 1) * dt
    states = [StateX(np.concatenate([p_rel, quat_log(q_rel)]), Twist.from_vector(xi, "desired"))]
    accels = []
    for k in range(n):
        t = times[k]
        z_p = canonical(t, 0.0, g.alpha_zp, g.tau)
        z_o = canonical(t, 0.0, g.alpha_zo, g.tau)
        accel = dmp_accel(states[-1], z_p, z_o, model)
        q_rel, p_rel, xi = _rk4_error_step(q_rel, p_rel, xi, accel, dt)
        states.append(
            StateX(np.concatenate([p_rel, quat_log(q_rel)]), Twist.from_vector(xi, "desired"))
        )
        accels.append(accel)
    accels.append(accels[-1] if accels else np.zeros(6))
    return times, states, np.asarray(accels)


def _rk4_error_step(q_rel: UnitQuaternion, p_rel: np.ndarray, xi: np.ndarray,
                    accel: np.ndarray, dt: float):
    """One RK4 step of the relative-pose kinematics under constant accel.

    State layout: quaternion (4), translation error (3), twist (6).  The
    angular velocity lives in the goal frame and is rotated into the body
    frame inside the derivative.
    """

    def deriv(y):
        q = UnitQuaternion(y[:4])
        v = y[7:10]
        omega_goal = y[10:13]
        omega_body = q.matrix().T @ omega_goal
        return np.concatenate([quat_derivative(q, omega_body), v, accel])

    y0 = np.concatenate([q_rel.wxyz, p_rel, xi])
    k1 = deriv(y0)
    k2 = deriv(y0 + 0.5 * dt * k1)
    k3 = deriv(y0 + 0.5 * dt * k2)
    k4 = deriv(y0 + dt * k3)
    y1 = y0 + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return UnitQuaternion(y1[:4]), y1[4:7], y1[7:13]


def save_model(model: DmpModel, path) -> None:
    """Write the model as versioned JSON with sorted keys (reproducible)."""
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "gains": {
            "alpha_v": model.gains.alpha_v,
            "beta_v": model.gains.beta_v,
            "alpha_omega": model.gains.alpha_omega,
            "beta_omega": model.gains.beta_omega,
            "alpha_zp": model.gains.alpha_zp,
            "alpha_zo": model.gains.alpha_zo,
            "tau": model.gains.tau,
        },
        "basis_p": _basis_payload(model.basis_p),
        "basis_o": _basis_payload(model.basis_o),
        "theta_p": model.theta_p.tolist(),
        "theta_o": model.theta_o.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _basis_payload(basis: BasisSet) -> dict:
    return {
        "alpha_z": basis.alpha_z,
        "centers": basis.centers.tolist(),
        "widths": basis.widths.tolist(),
    }


def load_model(path) -> DmpModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a {MODEL_FORMAT} file: {path}")
    if payload.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {payload.get('version')!r}")
    gains = DmpGains(**payload["gains"])
    basis_p = BasisSet(**payload["basis_p"])
    basis_o = BasisSet(**payload["basis_o"])
    return DmpModel(gains, basis_p, basis_o, payload["theta_p"], payload["theta_o"])


def save_demo_csv(demo: Demonstration, path) -> None:
    """Demonstration exchange format: one header row, one row per sample."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(DEMO_HEADER)
        for k in range(demo.count):
            row = [demo.t[k], *demo.e_p[k], *demo.xi[k], *demo.xi_dot[k]]
            writer.writerow([repr(float(v)) for v in row])


def load_demo_csv(path) -> Demonstration:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != DEMO_HEADER:
            raise ValueError(f"unexpected demonstration header in {path}")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ValueError(f"demonstration file {path} has no samples")
    arr = np.asarray(rows)
    return Demonstration(arr[:, 0], arr[:, 1:7], arr[:, 7:13], arr[:, 13:19])
