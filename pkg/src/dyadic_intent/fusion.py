"""Sensor fusion: multi-rate raw streams to one filtered 100 Hz object state.

The chain is

1. an error-state EKF on ``(quaternion, gyro bias)`` driven by the gyro and
   corrected by camera orientations,
2. a linear Kalman filter on ``(position, velocity)`` driven by gravity-free
   spatial acceleration and corrected by camera positions,
3. a 2nd-order Butterworth low-pass on every signal, then linear
   interpolation onto a uniform output timeline.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import AlignmentError, ConfigError, InitializationError, InvalidInputError
from .kinematics import (
    HandleGeometry,
    Pose,
    Twist,
    handle_velocities,
    quat_conjugate,
    quat_from_rotvec,
    quat_multiply,
    quat_normalize,
    quat_to_matrix,
    quat_to_rotvec,
    quat_to_yaw,
    rotate,
)

GRAVITY = np.array([0.0, 0.0, -9.81])


# --------------------------------------------------------------------------
# data containers
# --------------------------------------------------------------------------

@dataclass
class Stream:
    """Timestamped samples; ``values`` has one row per timestamp."""

    t: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if len(self.t) == 0:
            raise InvalidInputError("stream is empty")
        if len(self.t) != len(self.values):
            raise InvalidInputError("timestamps and values differ in length")
        if np.any(np.diff(self.t) <= 0):
            raise InvalidInputError("timestamps must be strictly increasing")

    def __len__(self):
        return len(self.t)


@dataclass
class PoseObservations:
    """Camera pose fixes, possibly from several cameras, irregular and gappy."""

    t: np.ndarray
    camera_id: np.ndarray
    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.camera_id = np.asarray(self.camera_id, dtype=int)
        self.position = np.asarray(self.position, dtype=float).reshape(-1, 3)
        self.orientation = quat_normalize(np.asarray(self.orientation, dtype=float).reshape(-1, 4))
        n = len(self.t)
        if not (len(self.camera_id) == len(self.position) == len(self.orientation) == n):
            raise InvalidInputError("pose observation columns differ in length")
        if n and np.any(np.diff(self.t) <= 0):
            raise InvalidInputError("pose timestamps must be strictly increasing")

    def __len__(self):
        return len(self.t)


@dataclass
class RawStreams:
    """Everything logged during one session.

    ``ft1``/``ft2`` hold ``(fx, fy, fz, tx, ty, tz)`` in each sensor's frame,
    ``imu`` holds ``(ax, ay, az, wx, wy, wz)`` in the body frame.
    """

    ft1: Stream
    ft2: Stream
    imu: Stream
    pose: PoseObservations


@dataclass
class FilterConfig:
    cutoff_hz: float = 12.5
    output_rate_hz: float = 100.0
    mode: str = "zero-phase"
    ekf_gyro_noise: float = 1e-4       # (rad/s)^2
    ekf_bias_noise: float = 1e-8       # (rad/s)^2 per s
    ekf_orientation_noise: float = 3e-4  # rad^2
    kf_accel_noise: float = 0.04       # (m/s^2)^2
    kf_position_noise: float = 1e-4    # m^2
    kf_initial_velocity_var: float = 1e-4  # (m/s)^2; recordings start at rest

    def __post_init__(self):
        if self.mode not in ("zero-phase", "causal"):
            raise ConfigError(f"mode must be 'zero-phase' or 'causal', got {self.mode!r}")
        if not self.output_rate_hz > 0:
            raise ConfigError("output_rate_hz must be positive")
        if not 0 < self.cutoff_hz < self.output_rate_hz / 2:
            raise ConfigError("cutoff_hz must lie in (0, output_rate_hz / 2)")
        for name in ("ekf_gyro_noise", "ekf_bias_noise", "ekf_orientation_noise",
                     "kf_accel_noise", "kf_position_noise", "kf_initial_velocity_var"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")


@dataclass
class FusedState:
    """One tick of the fused object state."""

    t: float
    pose: Pose
    twist: Twist
    f1: np.ndarray
    f2: np.ndarray
    v1: np.ndarray
    v2: np.ndarray


@dataclass
class FusedStream:
    """Column-oriented stream of :class:`FusedState` on a uniform timeline."""

    t: np.ndarray
    position: np.ndarray
    orientation: np.ndarray
    linear_velocity: np.ndarray
    angular_velocity: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    extras: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def __getitem__(self, i):
        return FusedState(
            t=float(self.t[i]),
            pose=Pose(self.position[i], self.orientation[i]),
            twist=Twist(self.linear_velocity[i], self.angular_velocity[i]),
            f1=self.f1[i], f2=self.f2[i], v1=self.v1[i], v2=self.v2[i],
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def yaw(self):
        return quat_to_yaw(self.orientation)

    @property
    def dt(self):
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else float("nan")

    def force(self, agent):
        return self.f1 if agent == 1 else self.f2

    def handle_velocity(self, agent):
        return self.v1 if agent == 1 else self.v2

    def window(self, t0, t1):
        """Boolean mask of samples with ``t0 <= t <= t1``."""
        return (self.t >= t0 - 1e-9) & (self.t <= t1 + 1e-9)


# --------------------------------------------------------------------------
# low-pass filtering
# --------------------------------------------------------------------------

def _check_uniform(t, rtol=1e-3):
    t = np.asarray(t, dtype=float)
    if len(t) < 2:
        raise InvalidInputError("need at least two samples")
    dt = np.diff(t)
    if np.any(np.abs(dt - dt.mean()) > rtol * dt.mean() + 1e-9):
        raise InvalidInputError("series is not uniformly sampled")
    return 1.0 / dt.mean()


def butter_coefficients(cutoff_hz, fs, order=2):
    if not cutoff_hz > 0 or cutoff_hz >= fs / 2.0:
        raise ConfigError(f"cutoff {cutoff_hz} Hz must lie below Nyquist ({fs / 2.0} Hz)")
    return signal.butter(order, cutoff_hz, btype="low", fs=fs)


def lowpass(values, fs, cutoff_hz=12.5, mode="zero-phase", order=2):
    """Butterworth low-pass along axis 0.

    ``zero-phase`` runs the filter forward and backward (offline only);
    ``causal`` runs one forward pass initialised at the first sample so that a
    constant input passes through unchanged.
    """
    b, a = butter_coefficients(cutoff_hz, fs, order)
    x = np.asarray(values, dtype=float)
    if mode == "zero-phase":
        padlen = min(3 * max(len(a), len(b)), x.shape[0] - 1)
        return signal.filtfilt(b, a, x, axis=0, padlen=padlen)
    if mode == "causal":
        zi = signal.lfilter_zi(b, a)
        zi = zi.reshape((-1,) + (1,) * (x.ndim - 1)) * x[:1]
        y, _ = signal.lfilter(b, a, x, axis=0, zi=zi)
        return y
    raise ConfigError(f"unknown filter mode {mode!r}")


class ButterworthLowPass(TransformerMixin, BaseEstimator):
    """Low-pass transformer over uniformly sampled columns.

    Parameters
    ----------
    fs : float
        Sampling rate of the rows of ``X`` (Hz).
    cutoff_hz : float
    mode : {"zero-phase", "causal"}
    order : int
    """

    def __init__(self, fs=100.0, cutoff_hz=12.5, mode="zero-phase", order=2):
        self.fs = fs
        self.cutoff_hz = cutoff_hz
        self.mode = mode
        self.order = order

    def fit(self, X=None, y=None):
        butter_coefficients(self.cutoff_hz, self.fs, self.order)
        return self

    def transform(self, X):
        return lowpass(X, self.fs, self.cutoff_hz, self.mode, self.order)


class StreamingLowPass:
    """Sample-by-sample causal Butterworth (one instance per signal)."""

    def __init__(self, fs, cutoff_hz=12.5, order=2):
        self.b, self.a = butter_coefficients(cutoff_hz, fs, order)
        self._zi_unit = signal.lfilter_zi(self.b, self.a)
        self._z = None

    def update(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self._z is None:
            self._z = self._zi_unit[:, None] * x[None, :]
        y, self._z = signal.lfilter(self.b, self.a, x[None, :], axis=0, zi=self._z)
        return y[0]


# --------------------------------------------------------------------------
# orientation EKF
# --------------------------------------------------------------------------

_I3 = np.eye(3)
_H = np.hstack([_I3, np.zeros((3, 3))])


def _skew(w):
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


class OrientationEKF:
    """Multiplicative EKF with state ``(q, gyro_bias)``.

    The attitude error lives in the body frame (``q_true = q * exp(dtheta)``).
    Gyro samples are held constant until the next event.
    """

    def __init__(self, gyro_noise=1e-4, bias_noise=1e-8, orientation_noise=3e-4,
                 initial_bias_var=1e-4):
        self.gyro_noise = gyro_noise
        self.bias_noise = bias_noise
        self.orientation_noise = orientation_noise
        self.initial_bias_var = initial_bias_var
        self.q = None
        self.bias = np.zeros(3)
        self.P = None
        self.t = None
        self._rate = np.zeros(3)

    @property
    def initialized(self):
        return self.q is not None

    def initialize(self, t, q):
        self.q = quat_normalize(q)
        self.bias = np.zeros(3)
        self.P = np.diag([self.orientation_noise] * 3 + [self.initial_bias_var] * 3)
        self.t = float(t)

    def predict(self, t):
        dt = float(t) - self.t
        if dt < 0:
            raise InvalidInputError("events must arrive in time order")
        if dt == 0:
            return
        w = self._rate - self.bias
        self.q = quat_normalize(quat_multiply(self.q, quat_from_rotvec(w * dt)))
        F = np.eye(6)
        F[:3, :3] -= _skew(w) * dt
        F[:3, 3:] = -dt * _I3
        Q = np.diag([self.gyro_noise * dt] * 3 + [self.bias_noise * dt] * 3)
        self.P = F @ self.P @ F.T + Q
        self.P = 0.5 * (self.P + self.P.T)
        self.t = float(t)

    def set_rate(self, gyro):
        self._rate = np.asarray(gyro, dtype=float)

    def update(self, q_obs):
        r = quat_to_rotvec(quat_multiply(quat_conjugate(self.q), q_obs))
        H = _H
        R = _I3 * self.orientation_noise
        S = H @ self.P @ H.T + R
        K = np.linalg.solve(S, H @ self.P).T
        dx = K @ r
        self.q = quat_normalize(quat_multiply(self.q, quat_from_rotvec(dx[:3])))
        self.bias = self.bias + dx[3:]
        IKH = np.eye(6) - K @ H
        self.P = IKH @ self.P @ IKH.T + K @ R @ K.T
        self.P = 0.5 * (self.P + self.P.T)


def _merge_events(sample_t, obs_t):
    """Event order: samples before observations at equal timestamps."""
    kinds = np.concatenate([np.zeros(len(sample_t), int), np.ones(len(obs_t), int)])
    idx = np.concatenate([np.arange(len(sample_t)), np.arange(len(obs_t))])
    times = np.concatenate([sample_t, obs_t])
    order = np.lexsort((kinds, times))
    return times[order], kinds[order], idx[order]


def fuse_orientation(gyro_t, gyro, obs_t, obs_q, config=None, monitor=None):
    """Fuse body angular rate with camera orientations.

    Returns ``(quaternions, biases)`` at the gyro timestamps.  Ticks before the
    first observation hold that observation (the object is assumed at rest).
    ``monitor``, if given, is called with the filter after every step.
    """
    config = config or FilterConfig()
    gyro_t = np.asarray(gyro_t, dtype=float)
    gyro = np.asarray(gyro, dtype=float).reshape(-1, 3)
    obs_t = np.asarray(obs_t, dtype=float)
    obs_q = np.asarray(obs_q, dtype=float).reshape(-1, 4)
    if len(obs_t) == 0:
        raise InitializationError("no orientation observation available")
    ekf = OrientationEKF(config.ekf_gyro_noise, config.ekf_bias_noise, config.ekf_orientation_noise)
    out_q = np.empty((len(gyro_t), 4))
    out_b = np.zeros((len(gyro_t), 3))
    pending = []
    times, kinds, idx = _merge_events(gyro_t, obs_t)
    for t, kind, i in zip(times, kinds, idx):
        if kind == 1:
            if not ekf.initialized:
                ekf.initialize(t, obs_q[i])
                for j in pending:
                    out_q[j] = ekf.q
                pending.clear()
            else:
                ekf.predict(t)
                ekf.update(obs_q[i])
        else:
            if not ekf.initialized:
                pending.append(i)
                continue
            ekf.predict(t)
            ekf.set_rate(gyro[i])
            out_q[i] = ekf.q
            out_b[i] = ekf.bias
        if monitor is not None and ekf.initialized:
            monitor(ekf)
    for j in pending:
        out_q[j] = ekf.q
    # keep a continuous hemisphere so the quaternion can be filtered per component
    flip = np.sum(out_q[1:] * out_q[:-1], axis=1) < 0
    sign = np.concatenate([[1.0], np.where(np.cumsum(flip) % 2 == 1, -1.0, 1.0)])
    return out_q * sign[:, None], out_b


# --------------------------------------------------------------------------
# position KF
# --------------------------------------------------------------------------

class PositionKF:
    """Constant-acceleration-input KF on ``(p, v)``; acceleration is a control input."""

    def __init__(self, accel_noise=0.04, position_noise=1e-4, initial_velocity_var=0.25):
        self.accel_noise = accel_noise
        self.position_noise = position_noise
        self.initial_velocity_var = initial_velocity_var
        self.x = None
        self.P = None
        self.t = None
        self._accel = np.zeros(3)

    @property
    def initialized(self):
        return self.x is not None

    def initialize(self, t, p):
        self.x = np.concatenate([np.asarray(p, dtype=float), np.zeros(3)])
        self.P = np.diag([self.position_noise] * 3 + [self.initial_velocity_var] * 3)
        self.t = float(t)

    def set_accel(self, a):
        self._accel = np.asarray(a, dtype=float)

    def predict(self, t):
        dt = float(t) - self.t
        if dt < 0:
            raise InvalidInputError("events must arrive in time order")
        if dt == 0:
            return
        F = np.eye(6)
        F[:3, 3:] = dt * _I3
        G = np.concatenate([0.5 * dt * dt * _I3, dt * _I3])
        self.x = F @ self.x + G @ self._accel
        self.P = F @ self.P @ F.T + self.accel_noise * (G @ G.T)
        self.P = 0.5 * (self.P + self.P.T)
        self.t = float(t)

    def update(self, p_obs):
        H = _H
        R = _I3 * self.position_noise
        S = H @ self.P @ H.T + R
        K = np.linalg.solve(S, H @ self.P).T
        self.x = self.x + K @ (np.asarray(p_obs, dtype=float) - H @ self.x)
        IKH = np.eye(6) - K @ H
        self.P = IKH @ self.P @ IKH.T + K @ R @ K.T
        self.P = 0.5 * (self.P + self.P.T)


def fuse_position(imu_t, accel, obs_t, obs_p, orientation, config=None, monitor=None):
    """Fuse body-frame specific force with camera positions.

    ``orientation`` gives the fused quaternion at each IMU timestamp; it turns
    the accelerometer reading into a spatial acceleration and removes gravity.
    Returns ``(positions, velocities)`` at the IMU timestamps.
    """
    config = config or FilterConfig()
    imu_t = np.asarray(imu_t, dtype=float)
    accel = np.asarray(accel, dtype=float).reshape(-1, 3)
    obs_t = np.asarray(obs_t, dtype=float)
    obs_p = np.asarray(obs_p, dtype=float).reshape(-1, 3)
    if len(obs_t) == 0:
        raise InitializationError("no position observation available")
    a_world = rotate(orientation, accel) + GRAVITY
    kf = PositionKF(config.kf_accel_noise, config.kf_position_noise, config.kf_initial_velocity_var)
    out_p = np.empty((len(imu_t), 3))
    out_v = np.zeros((len(imu_t), 3))
    pending = []
    times, kinds, idx = _merge_events(imu_t, obs_t)
    for t, kind, i in zip(times, kinds, idx):
        if kind == 1:
            if not kf.initialized:
                kf.initialize(t, obs_p[i])
                for j in pending:
                    out_p[j] = obs_p[i]
                pending.clear()
            else:
                kf.predict(t)
                kf.update(obs_p[i])
        else:
            if not kf.initialized:
                pending.append(i)
                continue
            kf.predict(t)
            kf.set_accel(a_world[i])
            out_p[i] = kf.x[:3]
            out_v[i] = kf.x[3:]
        if monitor is not None and kf.initialized:
            monitor(kf)
    for j in pending:
        out_p[j] = kf.x[:3]
    return out_p, out_v


# --------------------------------------------------------------------------
# alignment
# --------------------------------------------------------------------------

def _nominal_grid(t):
    dt = np.median(np.diff(t))
    n = int(np.floor((t[-1] - t[0]) / dt + 1e-6)) + 1
    return t[0] + dt * np.arange(n), 1.0 / dt


def _interp(t_new, t, values):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return np.interp(t_new, t, values)
    return np.column_stack([np.interp(t_new, t, values[:, j]) for j in range(values.shape[1])])


def _filtered_on_grid(t, values, config):
    """Put a stream on its own uniform grid, then low-pass it."""
    grid, fs = _nominal_grid(t)
    on_grid = _interp(grid, t, values)
    if len(grid) < 8:
        return grid, on_grid
    return grid, lowpass(on_grid, fs, config.cutoff_hz, config.mode)


def align(raw, config=None, geometry=None, mounts=None):
    """Fuse and resample all raw streams onto a uniform timeline.

    Parameters
    ----------
    raw : RawStreams
    config : FilterConfig
    geometry : HandleGeometry
    mounts : pair of quaternions
        Rotation of each force sensor frame relative to the body frame.

    Returns
    -------
    FusedStream
    """
    config = config or FilterConfig()
    geometry = geometry or HandleGeometry()
    if mounts is None:
        mounts = (np.array([1.0, 0, 0, 0]), np.array([1.0, 0, 0, 0]))
    streams = {"ft1": raw.ft1, "ft2": raw.ft2, "imu": raw.imu}
    for name, s in streams.items():
        if len(s) < 2:
            raise AlignmentError(f"stream {name} has fewer than two samples")
    if len(raw.pose) == 0:
        raise InitializationError("no pose observation available")
    start = max(s.t[0] for s in streams.values())
    end = min(s.t[-1] for s in streams.values())
    if end - start < 1.0:
        raise AlignmentError(f"streams overlap for {max(end - start, 0.0):.3f} s, need >= 1 s")

    rate = config.output_rate_hz
    k0 = int(np.ceil(start * rate - 1e-9))
    k1 = int(np.floor(end * rate + 1e-9))
    t_out = np.arange(k0, k1 + 1) / rate

    imu = raw.imu
    q_imu, b_imu = fuse_orientation(imu.t, imu.values[:, 3:6], raw.pose.t, raw.pose.orientation, config)
    p_imu, v_imu = fuse_position(imu.t, imu.values[:, 0:3], raw.pose.t, raw.pose.position, q_imu, config)
    omega_imu = imu.values[:, 3:6] - b_imu

    kin = np.hstack([p_imu, v_imu, omega_imu, q_imu])
    grid, kin_f = _filtered_on_grid(imu.t, kin, config)
    kin_out = _interp(t_out, grid, kin_f)
    position = kin_out[:, 0:3]
    velocity = kin_out[:, 3:6]
    omega = kin_out[:, 6:9]
    quat = quat_normalize(kin_out[:, 9:13])

    forces = []
    R_sb = quat_to_matrix(quat)
    for s, mount in zip((raw.ft1, raw.ft2), mounts):
        grid, ft_f = _filtered_on_grid(s.t, s.values[:, :3], config)
        f_sensor = _interp(t_out, grid, ft_f)
        f_body = f_sensor @ quat_to_matrix(quat_normalize(mount)).T
        forces.append(np.einsum("tij,tj->ti", R_sb, f_body))

    v1 = handle_velocities(quat, velocity, omega, geometry.q1)
    v2 = handle_velocities(quat, velocity, omega, geometry.q2)
    return FusedStream(t=t_out, position=position, orientation=quat, linear_velocity=velocity,
                       angular_velocity=omega, f1=forces[0], f2=forces[1], v1=v1, v2=v2)


class SensorFusion(BaseEstimator):
    """Estimator-style wrapper around :func:`align`.

    ``fit`` validates the configuration; ``transform`` maps :class:`RawStreams`
    to a :class:`FusedStream`.
    """

    def __init__(self, cutoff_hz=12.5, output_rate_hz=100.0, mode="zero-phase",
                 ekf_gyro_noise=1e-4, ekf_bias_noise=1e-8, ekf_orientation_noise=3e-4,
                 kf_accel_noise=0.04, kf_position_noise=1e-4, kf_initial_velocity_var=1e-4,
                 geometry=None, mounts=None):
        self.cutoff_hz = cutoff_hz
        self.output_rate_hz = output_rate_hz
        self.mode = mode
        self.ekf_gyro_noise = ekf_gyro_noise
        self.ekf_bias_noise = ekf_bias_noise
        self.ekf_orientation_noise = ekf_orientation_noise
        self.kf_accel_noise = kf_accel_noise
        self.kf_position_noise = kf_position_noise
        self.kf_initial_velocity_var = kf_initial_velocity_var
        self.geometry = geometry
        self.mounts = mounts

    def _config(self):
        return FilterConfig(
            cutoff_hz=self.cutoff_hz, output_rate_hz=self.output_rate_hz, mode=self.mode,
            ekf_gyro_noise=self.ekf_gyro_noise, ekf_bias_noise=self.ekf_bias_noise,
            ekf_orientation_noise=self.ekf_orientation_noise,
            kf_accel_noise=self.kf_accel_noise, kf_position_noise=self.kf_position_noise,
            kf_initial_velocity_var=self.kf_initial_velocity_var,
        )

    def fit(self, raw=None, y=None):
        self.config_ = self._config()
        return self

    def transform(self, raw):
        config = getattr(self, "config_", None) or self._config()
        return align(raw, config, self.geometry, self.mounts)

    def fit_transform(self, raw, y=None):
        return self.fit(raw).transform(raw)
