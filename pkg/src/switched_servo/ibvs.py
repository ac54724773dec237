"""Acceleration-level image-based visual servoing.

The controller regulates the stacked normalized feature error with a PD law
mapped through the damped-free pseudo-inverse of the depth-approximated
interaction matrix:

    accel = pinv(L_hat(s, Z*)) . (-k_p e_i - k_v edot_hat)

``L_hat`` uses the measured features but the constant goal depths ``Z*``,
which is what makes the certificate machinery below necessary: the true
feature velocity differs from the model by a depth-mismatch disturbance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import FeatureObservation, Intrinsics, Marker, interaction_matrix, project
from .errors import DegenerateFeatureError
from .geometry import Pose, Twist, quat_exp

# Smallest singular value of L_hat below which the pseudo-inverse is
# considered meaningless and the caller must fall back to the other
# controller.
SINGULAR_FLOOR = 1e-8


@dataclass(frozen=True)
class IbvsGains:
    """Proportional/derivative gains plus the certificate coupling weight."""

    k_p: float
    k_v: float
    epsilon1: float = 0.01

    def __post_init__(self):
        if self.k_p <= 0 or self.k_v <= 0:
            raise ValueError("IBVS gains must be positive")
        if self.epsilon1 <= 0:
            raise ValueError("epsilon1 must be positive")


@dataclass(frozen=True)
class IbvsReference:
    """Goal feature vector and the constant depth approximation.

    ``z_star`` holds one depth per feature point, frozen from the goal
    view; the controller never reads live depth.
    """

    s_star: np.ndarray
    z_star: np.ndarray

    def __init__(self, s_star, z_star):
        s = np.asarray(s_star, dtype=float).reshape(-1).copy()
        if s.size % 2 != 0 or s.size < 6:
            raise ValueError("reference needs at least 3 point features")
        z = np.asarray(z_star, dtype=float).reshape(-1).copy()
        if z.size == 1:
            z = np.full(s.size // 2, z[0])
        if z.size != s.size // 2:
            raise ValueError("one depth per feature point required")
        if np.any(z <= 0):
            raise ValueError("goal depths must be positive")
        object.__setattr__(self, "s_star", s)
        object.__setattr__(self, "z_star", z)

    @property
    def count(self) -> int:
        return self.s_star.size // 2


def reference_from_goal(marker: Marker, goal_pose: Pose, intrinsics: Intrinsics) -> IbvsReference:
    """Build the feature reference by projecting the marker from the goal."""
    obs = project(marker, goal_pose, intrinsics)
    if not obs.visible:
        raise ValueError("marker is not visible from the goal pose")
    return IbvsReference(obs.features, obs.depths)


def feature_error(obs: FeatureObservation, ref: IbvsReference) -> np.ndarray:
    """Current minus goal features; only defined while the marker is seen."""
    if not obs.visible or obs.features is None:
        raise ValueError("feature error undefined: marker not visible")
    if obs.features.size != ref.s_star.size:
        raise ValueError("observation and reference disagree on feature count")
    return obs.features - ref.s_star


def model_matrix(features: np.ndarray, ref: IbvsReference) -> np.ndarray:
    """Depth-approximated interaction matrix L_hat(s, Z*)."""
    return interaction_matrix(features, ref.z_star)


def estimate_edot(obs: FeatureObservation, ref: IbvsReference, xi_camera: Twist,
                  strategy: str = "model", prev_error: np.ndarray | None = None,
                  dt: float | None = None) -> np.ndarray:
    """Feature-velocity estimate used by the PD law and the energy monitor.

    ``model`` propagates the commanded camera twist through L_hat; the true
    velocity differs by the depth-mismatch term (L - L_hat) xi.
    ``difference`` is a two-point backward difference and needs the error
    from the previous control period.
    """
    if strategy == "model":
        L_hat = model_matrix(obs.features, ref)
        return L_hat @ xi_camera.as_vector()
    if strategy == "difference":
        if prev_error is None or dt is None or dt <= 0:
            raise ValueError("difference strategy needs prev_error and a positive dt")
        return (feature_error(obs, ref) - prev_error) / dt
    raise ValueError(f"unknown feature-velocity strategy {strategy!r}")


def edot_model_mismatch(obs: FeatureObservation, ref: IbvsReference,
                        xi_camera: Twist) -> np.ndarray:
    """Disturbance (L(s, Z) - L_hat(s, Z*)) xi from the frozen depths.

    Diagnostic only: needs the true depths, which the controller does not
    have.  Drives the steady-state floor of the energy monitor.
    """
    L_true = interaction_matrix(obs.features, obs.depths)
    L_hat = model_matrix(obs.features, ref)
    return (L_true - L_hat) @ xi_camera.as_vector()


def pseudo_inverse(L_hat: np.ndarray) -> np.ndarray:
    """Least-squares pseudo-inverse via SVD, with a hard rank check.

    Never forms the normal equations; raises once the smallest singular
    value drops below ``SINGULAR_FLOOR``.
    """
    U, S, Vt = np.linalg.svd(L_hat, full_matrices=False)
    if S[-1] < SINGULAR_FLOOR:
        raise DegenerateFeatureError(
            f"interaction matrix is rank deficient (sigma_min={S[-1]:.3e})"
        )
    return Vt.T @ (U.T / S[:, None])


def ibvs_accel(e_i: np.ndarray, edot_hat: np.ndarray, features: np.ndarray,
               ref: IbvsReference, gains: IbvsGains) -> np.ndarray:
    """Camera-frame acceleration command, 6-vector (v_dot, omega_dot)."""
    e_i = np.asarray(e_i, dtype=float).reshape(-1)
    edot_hat = np.asarray(edot_hat, dtype=float).reshape(-1)
    L_hat = model_matrix(features, ref)
    rhs = -gains.k_p * e_i - gains.k_v * edot_hat
    U, S, Vt = np.linalg.svd(L_hat, full_matrices=False)
    if S[-1] < SINGULAR_FLOOR:
        raise DegenerateFeatureError(
            f"interaction matrix is rank deficient (sigma_min={S[-1]:.3e})"
        )
    return Vt.T @ ((U.T @ rhs) / S)


@dataclass(frozen=True)
class RegionBounds:
    """Sampled curvature/conditioning bounds over a ball around the goal.

    ``k_lo``/``k_hi`` bracket the Rayleigh quotient of
    (L_hat^+)^T L_hat^+ L L_hat^+ along feasible feature errors and
    velocities, ``l_bar`` bounds the spectral norm of (L_hat^+)^T L_hat^+,
    and ``m_lo``/``m_hi`` bracket the eigenvalues of J^T J for the
    state-to-error Jacobian at the goal.
    """

    k_lo: float
    k_hi: float
    l_bar: float
    m_lo: float
    m_hi: float
    n_samples: int


@dataclass(frozen=True)
class CertificateResult:
    """Outcome of the quadratic stability test for one gain set."""

    lambda_v: float
    matrix: np.ndarray
    passed: bool


def gain_certificate(gains: IbvsGains, bounds: RegionBounds) -> CertificateResult:
    """Decay-rate certificate for the feature-space PD loop.

    Builds the 2x2 coupling matrix whose smallest eigenvalue lower-bounds
    the quadratic decay of the error/velocity energy; a non-positive value
    means the bounds are too loose or the gains too aggressive for a
    guarantee, which callers report as a warning rather than a failure.
    """
    k_star = -bounds.l_bar / 2.0 - (bounds.k_hi / 2.0) * (
        gains.k_p + gains.epsilon1 * gains.k_v / 2.0
    )
    mat = np.array(
        [
            [gains.epsilon1 * gains.k_p * bounds.k_lo / 2.0, k_star],
            [k_star, gains.k_v * bounds.k_lo - gains.epsilon1 * bounds.l_bar / 2.0],
        ]
    )
    lambda_v = float(np.linalg.eigvalsh(mat)[0])
    return CertificateResult(lambda_v, mat, lambda_v > 0.0)


def pose_from_error(goal_pose: Pose, e_p: np.ndarray) -> Pose:
    """Camera pose whose error relative to ``goal_pose`` equals ``e_p``."""
    e_p = np.asarray(e_p, dtype=float).reshape(6)
    rel = Pose(quat_exp(e_p[3:]), e_p[:3], goal_pose.to_frame, goal_pose.to_frame)
    return goal_pose.compose(rel)


def estimate_region_bounds(marker: Marker, goal_pose: Pose, intrinsics: Intrinsics,
                           ref: IbvsReference, region_radius: float = 0.3,
                           n_samples: int = 2000, twist_scale: float = 0.5,
                           seed: int = 0) -> RegionBounds:
    """Monte-Carlo estimates of the certificate bounds.

    Poses are sampled uniformly in the 6-ball of ``region_radius`` around
    the goal (translation in meters, rotation vector in radians sharing the
    same radius) and only contribute while every corner stays in front of
    the camera.  Rayleigh quotients are evaluated along the feature errors
    and feature velocities those poses actually generate, not along
    arbitrary vectors, because the quotient vanishes on the nullspace of
    L_hat^+ and feasible errors never point there.
    """
    if region_radius <= 0 or n_samples < 1:
        raise ValueError("need a positive region radius and sample count")
    rng = np.random.default_rng(seed)
    dim = 6
    k_lo = np.inf
    k_hi = -np.inf
    l_bar = 0.0
    used = 0
    while used < n_samples:
        direction = rng.normal(size=dim)
        direction /= np.linalg.norm(direction)
        radius = region_radius * rng.uniform() ** (1.0 / dim)
        e_p = radius * direction
        pose = pose_from_error(goal_pose, e_p)
        obs = project(marker, pose, intrinsics)
        if obs.features is None:
            continue
        used += 1
        L_true = interaction_matrix(obs.features, obs.depths)
        L_hat = model_matrix(obs.features, ref)
        L_pinv = pseudo_inverse(L_hat)
        M = L_pinv.T @ L_pinv
        A = M @ L_true @ L_pinv
        e_i = obs.features - ref.s_star
        xi = twist_scale * rng.normal(size=6)
        edot = L_true @ xi
        for vec in (e_i, edot):
            nrm2 = float(vec @ vec)
            if nrm2 < 1e-16:
                continue
            q = float(vec @ (A @ vec)) / nrm2
            k_lo = min(k_lo, q)
            k_hi = max(k_hi, q)
        l_bar = max(l_bar, float(np.linalg.eigvalsh(M)[-1]))
    J1 = _feature_jacobian(marker, goal_pose, intrinsics, ref)
    L_goal = model_matrix(ref.s_star, ref)
    J = np.zeros((2 * J1.shape[0], 12))
    J[: J1.shape[0], :6] = J1
    J[J1.shape[0]:, 6:] = L_goal
    eigs = np.linalg.eigvalsh(J.T @ J)
    return RegionBounds(
        k_lo=float(k_lo),
        k_hi=float(k_hi),
        l_bar=float(l_bar),
        m_lo=float(eigs[0]),
        m_hi=float(eigs[-1]),
        n_samples=used,
    )


def _feature_jacobian(marker: Marker, goal_pose: Pose, intrinsics: Intrinsics,
                      ref: IbvsReference, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of features w.r.t. pose error at the goal."""
    m2 = ref.s_star.size
    J = np.zeros((m2, 6))
    for k in range(6):
        step = np.zeros(6)
        step[k] = h
        s_plus = project(marker, pose_from_error(goal_pose, step), intrinsics).features
        s_minus = project(marker, pose_from_error(goal_pose, -step), intrinsics).features
        J[:, k] = (s_plus - s_minus) / (2.0 * h)
    return J
