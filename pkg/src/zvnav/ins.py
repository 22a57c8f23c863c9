"""Strapdown mechanization with a 9-state error filter and zero-velocity updates.

The nominal state is position, velocity, and a body-to-navigation
quaternion; the filter tracks the covariance of the error state
[dp, dv, dpsi] (m, m/s, rad) with the attitude error defined
multiplicatively on the left: R_true = (I + skew(dpsi)) @ R_hat.

Navigation frame: z up, gravity g_vec = (0, 0, -gravity_mag). The
accelerometer measures specific force in the body frame,
a_meas = R^T (a_true - g_vec), so at rest R @ a_meas + g_vec = 0.

run_pipeline drives the whole loop: propagate on every sample interval,
score the causal detector window ending at the current sample, compare
against the adaptive threshold, and apply a zero-velocity update when
the statistic crosses it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import NoiseModel, stream_to_arrays, validate_stream
from .detectors import get_detector
from .errors import NumericalError, StreamFormatError
from .quat import (
    quat_between,
    quat_from_rotvec,
    quat_mul,
    quat_normalize,
    rotmat_from_quat,
    skew,
)
from .threshold import ThresholdParams

_QUAT_NORM_TOL = 1e-6
_E_Z = np.array([0.0, 0.0, 1.0])

# Default 1-sigma of the initial error state: 1 mm, 1 mm/s, 1 mrad.
DEFAULT_INIT_STD = (1e-3, 1e-3, 1e-3)

# Above this 1-norm condition estimate of the velocity covariance the
# speed evidence is unreliable; callers fall back to the uninformative prior.
XI_COND_BOUND = 1e12


@dataclass(frozen=True)
class NavState:
    """Nominal navigation state: position m, velocity m/s, attitude quaternion."""

    p: np.ndarray
    v: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).reshape(3)
        v = np.asarray(self.v, dtype=float).reshape(3)
        q = np.asarray(self.q, dtype=float).reshape(4)
        if not (np.isfinite(p).all() and np.isfinite(v).all() and np.isfinite(q).all()):
            raise ValueError("navigation state must be finite")
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > _QUAT_NORM_TOL:
            raise ValueError(f"quaternion norm {norm} too far from 1")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "q", q / norm)

    @classmethod
    def identity(cls) -> "NavState":
        return cls(np.zeros(3), np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))


@dataclass(frozen=True)
class NavCovariance:
    """9x9 covariance of the error state [dp, dv, dpsi]."""

    P: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.shape != (9, 9):
            raise ValueError(f"covariance must be 9x9, got {P.shape}")
        if not np.isfinite(P).all():
            raise ValueError("covariance must be finite")
        asym = float(np.abs(P - P.T).max())
        if asym > 1e-9 * (1.0 + float(np.abs(P).max())):
            raise ValueError(f"covariance asymmetry {asym} exceeds tolerance")
        object.__setattr__(self, "P", P)

    @property
    def velocity_block(self) -> np.ndarray:
        return self.P[3:6, 3:6]


@dataclass(frozen=True)
class ProcessNoise:
    """Continuous-time white-noise densities driving the error state."""

    accel_psd: float  # m/s^2 per sqrt(Hz)
    gyro_psd: float  # rad/s per sqrt(Hz)

    def __post_init__(self):
        if not (self.accel_psd > 0.0 and math.isfinite(self.accel_psd)):
            raise ValueError(f"accel_psd must be positive, got {self.accel_psd}")
        if not (self.gyro_psd > 0.0 and math.isfinite(self.gyro_psd)):
            raise ValueError(f"gyro_psd must be positive, got {self.gyro_psd}")

    @classmethod
    def from_sample_noise(cls, noise: NoiseModel, sample_rate: float) -> "ProcessNoise":
        """Interpret per-sample sigmas as white noise at the given rate."""
        if not sample_rate > 0.0:
            raise ValueError(f"sample_rate must be positive, got {sample_rate}")
        root = math.sqrt(sample_rate)
        return cls(accel_psd=noise.sigma_a / root, gyro_psd=noise.sigma_w / root)


def default_initial_covariance() -> NavCovariance:
    stds = np.repeat(np.asarray(DEFAULT_INIT_STD, dtype=float), 3)
    return NavCovariance(np.diag(stds**2))


def align_from_standstill(stream, noise: NoiseModel, duration_s: float = 1.0) -> NavState:
    """Level the platform from early standstill data: gravity fixes roll and
    pitch, heading starts at zero (minimal rotation onto the vertical)."""
    t, accel, _ = stream_to_arrays(stream)
    if len(t) == 0:
        raise StreamFormatError("cannot align from an empty stream")
    mask = t <= t[0] + duration_s
    mean = accel[mask].mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm <= 0.0 or not math.isfinite(norm):
        raise NumericalError("cannot align: mean accelerometer vector is degenerate")
    q = quat_normalize(quat_between(mean / norm, _E_Z))
    return NavState(np.zeros(3), np.zeros(3), q)


def _propagate_arrays(p, v, q, P, accel, gyro, dt, g_vec, qa_var, qg_var):
    """One mechanization + covariance step on raw arrays (hot path)."""
    R = rotmat_from_quat(q)
    f_nav = R @ accel
    v_new = v + (f_nav + g_vec) * dt
    p_new = p + v_new * dt
    q_new = quat_normalize(quat_mul(q, quat_from_rotvec(gyro * dt)))
    F = np.eye(9)
    F[0, 3] = F[1, 4] = F[2, 5] = dt
    F[3:6, 6:9] = skew(f_nav) * (-dt)
    P_new = F @ P @ F.T
    P_new[[3, 4, 5], [3, 4, 5]] += qa_var * dt
    P_new[[6, 7, 8], [6, 7, 8]] += qg_var * dt
    return p_new, v_new, q_new, P_new


def propagate(
    state: NavState,
    cov: NavCovariance,
    sample,
    dt: float,
    noise: NoiseModel,
    pn: ProcessNoise,
) -> tuple[NavState, NavCovariance]:
    """Integrate one IMU sample over dt and grow the covariance.

    Velocity uses the pre-step attitude; position uses the post-step
    velocity; the quaternion advances by the exact exponential of
    gyro * dt. dt must be positive.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    g_vec = np.array([0.0, 0.0, -noise.gravity_mag])
    p, v, q, P = _propagate_arrays(
        state.p,
        state.v,
        state.q,
        cov.P,
        np.asarray(sample.accel, dtype=float),
        np.asarray(sample.gyro, dtype=float),
        float(dt),
        g_vec,
        pn.accel_psd**2,
        pn.gyro_psd**2,
    )
    return NavState(p, v, q), NavCovariance(0.5 * (P + P.T))


def _zupt_arrays(p, v, q, P, r_var):
    """Zero-velocity measurement update on raw arrays (hot path)."""
    S = P[3:6, 3:6].copy()
    S[[0, 1, 2], [0, 1, 2]] += r_var
    PHt = P[:, 3:6]
    try:
        K = np.linalg.solve(S, PHt.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"innovation covariance not invertible: {S.tolist()}"
        ) from exc
    if not np.isfinite(K).all():
        raise NumericalError(f"innovation covariance ill-formed: {S.tolist()}")
    dx = K @ (-v)
    p_new = p + dx[0:3]
    v_new = v + dx[3:6]
    q_new = quat_normalize(quat_mul(quat_from_rotvec(dx[6:9]), q))
    IKH = np.eye(9)
    IKH[:, 3:6] -= K
    P_new = IKH @ P @ IKH.T + r_var * (K @ K.T)
    P_new = 0.5 * (P_new + P_new.T)
    return p_new, v_new, q_new, P_new


def zupt_update(
    state: NavState, cov: NavCovariance, noise: NoiseModel
) -> tuple[NavState, NavCovariance]:
    """Apply the pseudo-measurement "velocity is zero" (noise sigma_zupt).

    Measurement z = 0 - v_hat with H = [0 I 0]; the estimated error is
    folded into the nominal state (attitude by left-multiplying the
    small-angle quaternion) and the covariance follows the Joseph form,
    then is symmetrized.
    """
    p, v, q, P = _zupt_arrays(
        state.p, state.v, state.q, cov.P, noise.sigma_zupt**2
    )
    return NavState(p, v, q), NavCovariance(P)


def _xi_arrays(P, v, cond_bound):
    """Speed evidence xi = v^T S^-1 v with S the velocity covariance block.

    Returns None when S is singular or its 1-norm condition estimate
    exceeds cond_bound; callers then drop the speed term (uninformative
    prior fallback). Closed-form 3x3 inverse keeps this cheap per sample.
    """
    a = P[3, 3]
    d = P[4, 4]
    f = P[5, 5]
    b = 0.5 * (P[3, 4] + P[4, 3])
    c = 0.5 * (P[3, 5] + P[5, 3])
    e = 0.5 * (P[4, 5] + P[5, 4])
    A = d * f - e * e
    B = c * e - b * f
    C = b * e - c * d
    det = a * A + b * B + c * C
    if not math.isfinite(det) or det <= 0.0:
        return None
    D = a * f - c * c
    E = b * c - a * e
    G = a * d - b * b
    inv = (
        (A / det, B / det, C / det),
        (B / det, D / det, E / det),
        (C / det, E / det, G / det),
    )
    norm_s = max(
        abs(a) + abs(b) + abs(c), abs(b) + abs(d) + abs(e), abs(c) + abs(e) + abs(f)
    )
    norm_inv = max(
        abs(inv[0][0]) + abs(inv[0][1]) + abs(inv[0][2]),
        abs(inv[1][0]) + abs(inv[1][1]) + abs(inv[1][2]),
        abs(inv[2][0]) + abs(inv[2][1]) + abs(inv[2][2]),
    )
    if norm_s * norm_inv > cond_bound:
        return None
    v0, v1, v2 = float(v[0]), float(v[1]), float(v[2])
    x0 = inv[0][0] * v0 + inv[0][1] * v1 + inv[0][2] * v2
    x1 = inv[1][0] * v0 + inv[1][1] * v1 + inv[1][2] * v2
    x2 = inv[2][0] * v0 + inv[2][1] * v1 + inv[2][2] * v2
    value = v0 * x0 + v1 * x1 + v2 * x2
    if not math.isfinite(value):
        return None
    return max(value, 0.0)  # clip roundoff just below zero


def xi(state: NavState, cov: NavCovariance, cond_bound: float = XI_COND_BOUND):
    """Public form of the speed evidence; None signals the fallback."""
    return _xi_arrays(cov.P, state.v, cond_bound)


@dataclass(frozen=True)
class RunReport:
    """Outcome of one pipeline run.

    Trace arrays span the whole stream; entries before the first full
    detector window (the first window_samples - 1 samples) hold NaN in
    the statistic and threshold traces and False in the decisions.
    """

    recording_id: str
    trajectory: np.ndarray
    decisions: np.ndarray
    logl_trace: np.ndarray
    log_gamma_trace: np.ndarray
    loop_closure_error_m: float
    params_used: dict = field(default_factory=dict)

    @property
    def zupt_count(self) -> int:
        return int(self.decisions.sum())


def run_pipeline(
    stream,
    detector,
    threshold_params: ThresholdParams,
    noise: NoiseModel,
    pn: ProcessNoise | None = None,
    init=None,
    *,
    window_samples: int = 5,
    recording_id: str = "",
    xi_cond_bound: float = XI_COND_BOUND,
    validate: bool = True,
) -> RunReport:
    """Run detector + filter over one stream and report traces and drift.

    ``init`` may be None (level from the first second of data, default
    covariance), a NavState (default covariance), or a (NavState,
    NavCovariance) pair. The speed evidence is computed from the
    covariance before the update it gates, and only when c3 != 0.
    """
    t, accel, gyro = stream_to_arrays(stream)
    if len(t) < 2:
        raise StreamFormatError("pipeline needs at least 2 samples")
    if validate:
        validate_stream((t, accel, gyro)).raise_if_bad()
    spec = get_detector(detector)
    logl = spec.trace(accel, gyro, window_samples, noise)

    if pn is None:
        median_period = float(np.median(np.diff(t)))
        pn = ProcessNoise.from_sample_noise(noise, 1.0 / median_period)
    if init is None:
        state0 = align_from_standstill((t, accel, gyro), noise)
        cov0 = default_initial_covariance()
    elif isinstance(init, NavState):
        state0, cov0 = init, default_initial_covariance()
    else:
        state0, cov0 = init

    p = state0.p.copy()
    v = state0.v.copy()
    q = state0.q.copy()
    P = cov0.P.copy()
    g_vec = np.array([0.0, 0.0, -noise.gravity_mag])
    qa_var = pn.accel_psd**2
    qg_var = pn.gyro_psd**2
    c1, c2, c3 = threshold_params.c1, threshold_params.c2, threshold_params.c3
    use_xi = c3 != 0.0
    r_var = noise.sigma_zupt**2

    n = len(t)
    trajectory = np.empty((n, 3))
    decisions = np.zeros(n, dtype=bool)
    log_gamma = np.full(n, np.nan)
    last_zupt = t[0]
    first_window = window_samples - 1

    def threshold_at(dtz):
        if use_xi:
            ev = _xi_arrays(P, v, xi_cond_bound)
            if ev is not None:
                return c1 + c2 * dtz + c3 * ev
        return c1 + c2 * dtz

    if first_window == 0:
        lg = threshold_at(0.0)
        log_gamma[0] = lg
        if logl[0] > lg:
            p, v, q, P = _zupt_arrays(p, v, q, P, r_var)
            decisions[0] = True
    trajectory[0] = p

    for k in range(1, n):
        dt = t[k] - t[k - 1]
        p, v, q, P = _propagate_arrays(
            p, v, q, P, accel[k - 1], gyro[k - 1], dt, g_vec, qa_var, qg_var
        )
        if k >= first_window:
            lg = threshold_at(t[k] - last_zupt)
            log_gamma[k] = lg
            if logl[k] > lg:  # NaN never passes
                p, v, q, P = _zupt_arrays(p, v, q, P, r_var)
                decisions[k] = True
                last_zupt = t[k]
        trajectory[k] = p

    params_used = {
        "detector": spec.name,
        "window_samples": window_samples,
        "c1": c1,
        "c2": c2,
        "c3": c3,
        "sigma_a": noise.sigma_a,
        "sigma_w": noise.sigma_w,
        "gravity_mag": noise.gravity_mag,
        "sigma_zupt": noise.sigma_zupt,
        "accel_psd": pn.accel_psd,
        "gyro_psd": pn.gyro_psd,
        "xi_cond_bound": xi_cond_bound,
    }
    return RunReport(
        recording_id=recording_id,
        trajectory=trajectory,
        decisions=decisions,
        logl_trace=logl,
        log_gamma_trace=log_gamma,
        loop_closure_error_m=float(np.linalg.norm(trajectory[-1] - trajectory[0])),
        params_used=params_used,
    )
