"""Energy monitors for both controllers and the switched-decay bookkeeping.

Each controller carries its own quadratic energy:

* the primitive uses ``V_d = x^T P_d x`` over the stacked pose-error/twist
  state, with ``P_d`` built from the stiffness matrix and the time constant;
* the servo loop uses ``V_v = rho^T Q rho`` over the stacked feature
  error/velocity pair, with ``Q`` built from ``M = (L_hat^+)^T L_hat^+``
  evaluated at the current features.

``V_v`` is always the full quadratic form; no series expansion of it is
used anywhere.  The multiple-energy constants below bracket both forms by
``||x||^2`` so the switching analysis can compare them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import Intrinsics, Marker, project
from .dmp import DmpGains
from .geometry import Pose, relative_rotation
from .ibvs import (
    IbvsReference,
    model_matrix,
    pose_from_error,
    pseudo_inverse,
)


def p_matrix(gains: DmpGains, epsilon2: float = 1.0) -> np.ndarray:
    """12x12 quadratic form for the primitive's energy."""
    if epsilon2 <= 0:
        raise ValueError("epsilon2 must be positive")
    P = np.zeros((12, 12))
    P[:6, :6] = 0.5 * gains.gamma()
    P[6:, 6:] = 0.5 * gains.tau**2 * np.eye(6)
    P[:6, 6:] = 0.25 * epsilon2 * np.eye(6)
    P[6:, :6] = 0.25 * epsilon2 * np.eye(6)
    return P


def V_d(x_vec: np.ndarray, gains: DmpGains, epsilon2: float = 1.0) -> float:
    """Primitive energy at the stacked state (e_p, xi), a 12-vector."""
    x = np.asarray(x_vec, dtype=float).reshape(12)
    return float(x @ (p_matrix(gains, epsilon2) @ x))


def q_matrix(features: np.ndarray, ref: IbvsReference, epsilon1: float) -> np.ndarray:
    """Quadratic form for the servo energy at the given features."""
    if epsilon1 <= 0:
        raise ValueError("epsilon1 must be positive")
    M = servo_metric(features, ref)
    n = M.shape[0]
    Q = np.zeros((2 * n, 2 * n))
    Q[:n, :n] = 0.5 * M
    Q[n:, n:] = 0.5 * M
    Q[:n, n:] = 0.25 * epsilon1 * M
    Q[n:, :n] = 0.25 * epsilon1 * M
    return Q


def servo_metric(features: np.ndarray, ref: IbvsReference) -> np.ndarray:
    """M = (L_hat^+)^T L_hat^+ at the current features and frozen depths."""
    L_pinv = pseudo_inverse(model_matrix(features, ref))
    return L_pinv.T @ L_pinv


def V_v(e_i: np.ndarray, edot_hat: np.ndarray, features: np.ndarray,
        ref: IbvsReference, epsilon1: float) -> float:
    """Servo energy at the stacked (feature error, velocity estimate) pair."""
    e = np.asarray(e_i, dtype=float).reshape(-1)
    d = np.asarray(edot_hat, dtype=float).reshape(-1)
    M = servo_metric(features, ref)
    return float(
        0.5 * e @ (M @ e) + 0.5 * epsilon1 * e @ (M @ d) + 0.5 * d @ (M @ d)
    )


@dataclass(frozen=True)
class MlfConstants:
    """Quadratic brackets of both energies and their overlap ratio.

    ``gamma_*`` satisfy ``gamma_lo ||x||^2 <= V <= gamma_hi ||x||^2`` over
    the sampled region (the servo pair is empirical and inflated by a
    safety margin); ``mu = kappa_hi / kappa_lo`` bounds the jump factor at
    a switch.
    """

    gamma_d_lo: float
    gamma_d_hi: float
    gamma_v_lo: float
    gamma_v_hi: float
    kappa_lo: float
    kappa_hi: float
    mu: float


def mlf_constants(gains: DmpGains, epsilon2: float, marker: Marker, goal_pose: Pose,
                  intrinsics: Intrinsics, ref: IbvsReference, epsilon1: float,
                  region_radius: float = 0.3, twist_scale: float = 0.5,
                  n_samples: int = 2000, seed: int = 0,
                  safety: float = 1.05) -> MlfConstants:
    """Estimate the multiple-energy constants over a ball around the goal.

    The primitive bracket is exact (eigenvalues of ``P_d``).  The servo
    bracket is a Monte-Carlo Rayleigh estimate: states ``x = (e_p, xi)``
    are sampled in the region, mapped through the camera to the feature
    pair the monitor would actually see, and ``V_v / ||x||^2`` is
    bracketed over the draws, then widened by ``safety`` on both sides
    since sampling can only under-estimate extrema.
    """
    if safety < 1.0:
        raise ValueError("safety factor must be >= 1")
    eig_d = np.linalg.eigvalsh(p_matrix(gains, epsilon2))
    gamma_d_lo = float(eig_d[0])
    gamma_d_hi = float(eig_d[-1])
    if gamma_d_lo <= 0:
        raise ValueError("primitive energy is not positive definite for these gains")
    rng = np.random.default_rng(seed)
    q_lo = np.inf
    q_hi = 0.0
    used = 0
    while used < n_samples:
        direction = rng.normal(size=6)
        direction /= np.linalg.norm(direction)
        e_p = region_radius * rng.uniform() ** (1.0 / 6.0) * direction
        pose = pose_from_error(goal_pose, e_p)
        obs = project(marker, pose, intrinsics)
        if obs.features is None:
            continue
        used += 1
        xi = twist_scale * rng.normal(size=6)
        x_norm2 = float(e_p @ e_p + xi @ xi)
        if x_norm2 < 1e-16:
            continue
        rot = relative_rotation(pose, goal_pose)
        R_to_cam = rot.matrix().T
        xi_cam = np.concatenate([R_to_cam @ xi[:3], R_to_cam @ xi[3:]])
        e_i = obs.features - ref.s_star
        edot_hat = model_matrix(obs.features, ref) @ xi_cam
        value = V_v(e_i, edot_hat, obs.features, ref, epsilon1)
        q = value / x_norm2
        q_lo = min(q_lo, q)
        q_hi = max(q_hi, q)
    gamma_v_lo = float(q_lo / safety)
    gamma_v_hi = float(q_hi * safety)
    kappa_lo = min(gamma_d_lo, gamma_v_lo)
    kappa_hi = max(gamma_d_hi, gamma_v_hi)
    return MlfConstants(
        gamma_d_lo=gamma_d_lo,
        gamma_d_hi=gamma_d_hi,
        gamma_v_lo=gamma_v_lo,
        gamma_v_hi=gamma_v_hi,
        kappa_lo=kappa_lo,
        kappa_hi=kappa_hi,
        mu=kappa_hi / kappa_lo,
    )


def ultimate_bound(kappa_hi: float, kappa_lo: float, n0: float, b: float,
                   eps: float) -> float:
    """Radius of the ball the switched state ultimately enters.

    ``b`` is the persistent-disturbance level divided by the decay weight
    and ``eps`` the dwell-rate margin retained after the average dwell
    condition.
    """
    if min(kappa_hi, kappa_lo, b, eps) <= 0:
        raise ValueError("ultimate bound needs positive constants")
    return math.sqrt(kappa_hi ** (n0 + 1) * b / (kappa_lo ** (n0 + 2) * eps))


@dataclass(frozen=True)
class SegmentResult:
    """Envelope verdict for one constant-controller stretch of a run.

    ``passed`` is None when the segment is too short to judge.
    ``empirical_rate`` is the log-linear fit over the decreasing portion,
    NaN when the values never rise above the floor.
    """

    t_start: float
    t_end: float
    label: str
    passed: bool | None
    empirical_rate: float
    v_start: float
    v_end: float


@dataclass(frozen=True)
class LyapunovReport:
    """Per-tick energy log for one run."""

    t: np.ndarray
    active: np.ndarray
    v_active: np.ndarray

    def __init__(self, t, active, v_active):
        t = np.asarray(t, dtype=float).reshape(-1)
        v = np.asarray(v_active, dtype=float).reshape(-1)
        act = np.asarray(active).reshape(-1)
        if not (t.size == v.size == act.size):
            raise ValueError("report arrays must share their length")
        object.__setattr__(self, "t", t.copy())
        object.__setattr__(self, "active", act.copy())
        object.__setattr__(self, "v_active", v.copy())


def split_segments(active: np.ndarray) -> list[tuple[int, int]]:
    """Half-open index ranges over which the active label is constant."""
    act = np.asarray(active).reshape(-1)
    if act.size == 0:
        return []
    bounds = [0]
    for i in range(1, act.size):
        if act[i] != act[i - 1]:
            bounds.append(i)
    bounds.append(act.size)
    return [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]


def envelope_check(report: LyapunovReport, rates, offsets=None, floors=None,
                   rel_tol: float = 0.05, min_samples: int = 3) -> list[SegmentResult]:
    """Check each constant-controller segment against its decay envelope.

    The envelope for a segment starting at ``(t0, V0)`` is

        (V0 + offset) * exp(-rate * (t - t0)) + floor

    and the segment passes when every sample stays below it (with a small
    relative slack).  ``rates``/``offsets``/``floors`` are either scalars
    or dicts keyed by the active label.  Segments shorter than
    ``min_samples`` are reported as inconclusive (``passed=None``).
    """
    offsets = offsets or {}
    floors = floors or {}
    results = []
    for lo, hi in split_segments(report.active):
        label = str(report.active[lo])
        t = report.t[lo:hi]
        v = report.v_active[lo:hi]
        finite = np.isfinite(v)
        rate = _per_label(rates, label)
        offset = _per_label(offsets, label, 0.0)
        floor = _per_label(floors, label, 0.0)
        if hi - lo < min_samples or not finite.any():
            results.append(
                SegmentResult(float(t[0]), float(t[-1]), label, None, float("nan"),
                              float(v[finite][0]) if finite.any() else float("nan"),
                              float(v[finite][-1]) if finite.any() else float("nan"))
            )
            continue
        tf = t[finite]
        vf = v[finite]
        v0 = float(vf[0])
        env = (v0 + offset) * np.exp(-rate * (tf - tf[0])) + floor
        abs_tol = 1e-12 + 1e-9 * max(v0, floor)
        passed = bool(np.all(vf <= env * (1.0 + rel_tol) + abs_tol))
        results.append(
            SegmentResult(float(t[0]), float(t[-1]), label, passed,
                          _empirical_rate(tf, vf, floor, abs_tol), v0, float(vf[-1]))
        )
    return results


def _per_label(value, label, default=None):
    if isinstance(value, dict):
        if label in value:
            return float(value[label])
        if default is not None:
            return float(default)
        raise KeyError(f"no envelope parameter for label {label!r}")
    return float(value)


def _empirical_rate(t: np.ndarray, v: np.ndarray, floor: float, abs_tol: float) -> float:
    """Log-linear decay fit over the decreasing portion above the floor."""
    stop = int(np.argmin(v)) + 1
    tt = t[:stop]
    vv = v[:stop] - floor
    keep = vv > abs_tol
    if keep.sum() < 2:
        return float("nan")
    slope = np.polyfit(tt[keep], np.log(vv[keep]), 1)[0]
    return float(-slope)
