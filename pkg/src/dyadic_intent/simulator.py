"""Synthetic dyadic co-manipulation sessions with ground-truth labels.

A planar rigid tray is carried by two simulated agents.  Each agent is a
small state machine (idle, push, pause, drive, follow, arrived) acting on its
handle through a velocity-dependent force law; the tray integrates with
semi-implicit Euler at 1 kHz while agents update at the force-sensor rate.

Agent behaviour is a synthetic stand-in for human dyads.  Goal holders
negotiate in rounds: a communicative push toward their goal, then a pause to
feel the partner's reaction.  Soft agents accumulate the partner's opposing
effort and concede once it exceeds their threshold; hard agents never do.
Followers comply and, after the object has moved steadily for a while, join
in toward the goal it is heading for.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import ConfigError
from .features import PhysicalObject
from .fusion import FusedStream, PoseObservations, RawStreams, Stream
from .intent import AgentGoal, GoalAssignment, GoalKind, InteractionType, interaction_type
from .kinematics import GoalLayout, handle_velocities, quat_from_rotvec, quat_from_yaw, quat_multiply, quat_to_matrix

G = 9.81

IDLE, PUSH, PAUSE, DRIVE, FOLLOW, ARRIVED = "idle", "push", "pause", "drive", "follow", "arrived"


@dataclass(frozen=True)
class NoiseConfig:
    force_sigma: float = 0.3          # N
    torque_sigma: float = 0.01        # N m
    gyro_sigma: float = 0.01          # rad/s
    gyro_bias_sigma: float = 0.005    # rad/s, drawn once per session
    accel_sigma: float = 0.2          # m/s^2
    camera_position_sigma: float = 0.01   # m
    camera_orientation_sigma: float = 0.01  # rad
    camera_rate: float = 30.0         # Hz, all cameras together
    n_cameras: int = 3
    dropout_rate: float = 0.1         # occlusion gaps per second
    dropout_duration: tuple = (0.2, 1.0)  # s

    def __post_init__(self):
        for name in ("force_sigma", "torque_sigma", "gyro_sigma", "gyro_bias_sigma", "accel_sigma",
                     "camera_position_sigma", "camera_orientation_sigma", "dropout_rate"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not self.camera_rate > 0 or self.n_cameras < 1:
            raise ConfigError("camera_rate and n_cameras must be positive")

    @classmethod
    def noiseless(cls):
        return cls(force_sigma=0.0, torque_sigma=0.0, gyro_sigma=0.0, gyro_bias_sigma=0.0,
                   accel_sigma=0.0, camera_position_sigma=0.0, camera_orientation_sigma=0.0,
                   dropout_rate=0.0)


@dataclass(frozen=True)
class SceneConfig:
    obj: PhysicalObject = field(default_factory=PhysicalObject)
    layout: GoalLayout = field(default_factory=GoalLayout.circular)
    start_position: tuple = (0.0, 0.0)
    start_yaw: float = math.pi / 2    # handle axis across the walking direction
    ft_rate: float = 200.0
    imu_rate: float = 100.0
    physics_rate: float = 1000.0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    viscous_friction: float = 20.0    # N s/m, stands in for the walkers' body dynamics
    coulomb_friction: float = 0.5     # N
    coulomb_velocity: float = 0.01    # m/s, smoothing of the Coulomb term
    rotational_friction: float = 0.3  # N m s/rad
    t_start: float = 1.0              # motion permitted (second beep)
    arrival_radius: float = 0.15      # m
    ft_offset: float = 0.0            # s, timestamp offset of force streams
    mounts: tuple = ((1.0, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0, 1.0))  # sensor frame -> body

    def __post_init__(self):
        for name in ("ft_rate", "imu_rate", "physics_rate", "viscous_friction", "arrival_radius"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.coulomb_friction < 0 or self.rotational_friction < 0 or self.t_start < 0:
            raise ConfigError("friction terms and t_start must be non-negative")
        steps = self.physics_rate / self.ft_rate
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigError("physics_rate must be an integer multiple of ft_rate")


@dataclass(frozen=True)
class ScriptedAction:
    t_on: float
    duration: float
    goal: int
    scale: float = 1.0


@dataclass(frozen=True)
class AgentPolicy:
    goal: AgentGoal = field(default_factory=AgentGoal.no_goal)
    commitment: float = 1.0
    push_gain: float = 12.0            # N, peak communicative push
    damping: float = 5.0               # N s/m, hand compliance while walking along
    hold_damping: float = 15.0         # N s/m, while standing to feel the partner
    drive_gain: float = 30.0           # N s/m, velocity tracking in execution
    drive_speed: float = 0.7           # m/s
    reaction_delay: float = 0.25       # s
    push_duration: float = 0.6         # s
    push_ramp: float = 0.08            # s
    perception_time: float = 0.4       # s, scaled by 1 / commitment
    clear_level: float = 0.4           # W s of opposition read as "no objection"
    concession_threshold: float = 8.0  # W s, scaled by commitment; Hard: inf
    concession_time_constant: float = 0.8  # s of steady motion before joining in
    follow_time_constant: float = 0.1  # s
    stop_time_constant: float = 0.15   # s
    grasp_preload: float = 1.0         # N
    walking_amplitude: float = 0.6     # N
    walking_frequency: float = 2.0     # Hz
    yaw_stiffness: float = 40.0        # N m/rad, shared by both wrists
    yaw_damping: float = 6.0           # N m s/rad
    proactive: bool = True
    script: tuple = ()

    def __post_init__(self):
        if not 0 < self.commitment <= 1:
            raise ConfigError("commitment must lie in (0, 1]")
        if self.goal.kind is GoalKind.HARD and self.commitment != 1.0:
            raise ConfigError("hard goals have commitment 1")
        for name in ("push_gain", "damping", "hold_damping", "drive_gain", "drive_speed",
                     "push_duration", "perception_time", "follow_time_constant", "stop_time_constant"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.reaction_delay < 0 or self.grasp_preload < 0 or self.walking_amplitude < 0:
            raise ConfigError("delays and force amplitudes must be non-negative")

    @property
    def effective_threshold(self):
        if self.goal.kind is GoalKind.SOFT:
            return self.concession_threshold * self.commitment
        return math.inf


@dataclass
class Epoch:
    agent: int
    t_on: float
    t_off: float
    goal: int
    kind: str


@dataclass
class GroundTruth:
    """Noiseless physics-rate record plus behavioural labels."""

    t: np.ndarray
    position: np.ndarray       # (n, 2)
    yaw: np.ndarray
    velocity: np.ndarray       # (n, 2)
    omega: np.ndarray
    f1: np.ndarray             # (n, 3) force held over [t_n, t_n+1)
    f2: np.ndarray
    m1: np.ndarray             # wrist moments about the vertical (N m)
    m2: np.ndarray
    friction: np.ndarray       # (n, 2)
    friction_torque: np.ndarray
    t_start: float
    epochs: list
    consensus_time: Optional[float]
    settled_goal: Optional[int]
    intent_switches: list
    concessions: list
    cell: Optional[InteractionType]
    assignment: Optional[GoalAssignment]
    mass: float
    inertia: float
    handles: tuple
    layout: GoalLayout = None
    flags: dict = field(default_factory=dict)

    @property
    def dt(self):
        return float(self.t[1] - self.t[0])

    def lever_arms(self):
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        arms = []
        for q in self.handles:
            arms.append(np.column_stack([c * q[0] - s * q[1], s * q[0] + c * q[1]]))
        return arms

    def handle_velocity(self, agent):
        r = self.lever_arms()[agent - 1]
        return self.velocity + self.omega[:, None] * np.column_stack([-r[:, 1], r[:, 0]])

    def power(self, agent):
        f = self.f1 if agent == 1 else self.f2
        return np.sum(f[:, :2] * self.handle_velocity(agent), axis=1)

    def kinetic_energy(self):
        return 0.5 * self.mass * np.sum(self.velocity ** 2, axis=1) + 0.5 * self.inertia * self.omega ** 2

    def epochs_for(self, agent=None, kind=None):
        return [e for e in self.epochs if (agent is None or e.agent == agent) and (kind is None or e.kind == kind)]

    def sampled(self, rate=100.0, t0=None, t1=None):
        """Truth resampled on a uniform grid, as a :class:`FusedStream`."""
        t0 = self.t[0] if t0 is None else t0
        t1 = self.t[-1] if t1 is None else t1
        k0, k1 = int(math.ceil(t0 * rate - 1e-9)), int(math.floor(t1 * rate + 1e-9))
        tg = np.arange(k0, k1 + 1) / rate
        idx = np.clip(np.round(tg * self.physics_rate).astype(int), 0, len(self.t) - 1)
        pos = np.column_stack([self.position[idx], np.zeros(len(idx))])
        vel = np.column_stack([self.velocity[idx], np.zeros(len(idx))])
        om = np.column_stack([np.zeros((len(idx), 2)), self.omega[idx]])
        quat = quat_from_yaw(self.yaw[idx])
        v1 = handle_velocities(quat, vel, om, self.handles[0])
        v2 = handle_velocities(quat, vel, om, self.handles[1])
        return FusedStream(tg, pos, quat, vel, om, self.f1[idx], self.f2[idx], v1, v2)

    @property
    def physics_rate(self):
        return 1.0 / self.dt


# --------------------------------------------------------------------------
# agents
# --------------------------------------------------------------------------

def _smoothstep(x):
    x = min(max(x, 0.0), 1.0)
    return x * x * (3.0 - 2.0 * x)


class _Agent:
    def __init__(self, k, policy, scene, rng, kcg, t_start):
        self.k = k
        self.policy = policy
        self.scene = scene
        self.kcg = kcg
        self.mode = IDLE
        self.mode_t0 = 0.0
        self.onset = t_start + policy.reaction_delay
        self.goal = policy.goal.index
        self.intended = policy.goal.index
        self.v_walk = np.zeros(2)
        self.round_opp = 0.0
        self.total_opp = 0.0
        self.conceded = False
        self.moving_since = None
        self.phase = rng.uniform(0, 2 * math.pi)
        self.push_scale = 1.0
        self.intent_force = np.zeros(2)
        self.moment = 0.0
        self.epochs = []
        self.drive_start = None
        self._script_i = 0

    # bookkeeping ---------------------------------------------------------
    def _enter(self, mode, t, goal=None):
        if self.mode == DRIVE and self.epochs and self.epochs[-1].kind == "drive":
            self.epochs[-1].t_off = t
        self.mode = mode
        self.mode_t0 = t
        if mode == PUSH:
            self.epochs.append(Epoch(self.k, t, t + self.policy.push_duration, goal, "push"))
            self.goal = goal
        elif mode == DRIVE:
            self.goal = goal
            self.epochs.append(Epoch(self.k, t, math.inf, goal, "drive"))
            if self.drive_start is None:
                self.drive_start = t

    # decisions -----------------------------------------------------------
    def decide(self, t, sim, partner):
        pol = self.policy
        if self.mode == IDLE:
            if t < self.onset - 1e-12:
                return
            if pol.script:
                self._enter(FOLLOW, t)
            elif self.kcg and self.goal is not None:
                self._enter(DRIVE, t, self.goal)
            elif self.goal is not None:
                self._enter(PUSH, t, self.goal)
            else:
                self._enter(FOLLOW, t)
            return
        if pol.script:
            self._scripted(t)
            return
        if self.mode == PUSH and t - self.mode_t0 >= pol.push_duration - 1e-12:
            self._enter(PAUSE, t)
        elif self.mode == PAUSE and t - self.mode_t0 >= pol.perception_time / pol.commitment - 1e-12:
            r = self.round_opp
            self.total_opp += r
            self.round_opp = 0.0
            if r < pol.clear_level:
                self._enter(DRIVE, t, self.goal)
            elif self.total_opp >= pol.effective_threshold and not partner.conceded:
                self.conceded = True
                self.intended = partner.intended
                sim.concessions.append((self.k, t))
                sim.intent_switches.append((self.k, t, pol.goal.index, partner.intended))
                self._enter(FOLLOW, t)
                self.moving_since = None
            else:
                self._enter(PUSH, t, self.goal)
        elif self.mode == FOLLOW and pol.proactive:
            speed = math.hypot(*sim.v)
            if speed >= 0.1:
                if self.moving_since is None:
                    self.moving_since = t
                elif t - self.moving_since >= pol.concession_time_constant:
                    g = sim.heading_goal()
                    if g is not None:
                        self._enter(DRIVE, t, g)
            else:
                self.moving_since = None
        elif self.mode == DRIVE:
            if np.linalg.norm(sim.layout.coordinate(self.goal) - sim.p) < self.scene.arrival_radius:
                self._enter(ARRIVED, t)
                sim.arrived(t, self.goal)

    def _scripted(self, t):
        script = self.policy.script
        if self.mode == PUSH:
            if t - self.mode_t0 >= self.policy.push_duration - 1e-12:
                self._enter(FOLLOW, t)
            return
        if self._script_i < len(script) and t >= script[self._script_i].t_on - 1e-12:
            act = script[self._script_i]
            self._script_i += 1
            self.policy = replace(self.policy, push_duration=act.duration)
            self.push_scale = act.scale
            self._enter(PUSH, t, act.goal)

    # forces --------------------------------------------------------------
    def force(self, t, dt, sim, r_self, r_other, v_self):
        pol = self.policy
        mode = self.mode
        if mode == PUSH and not pol.script:
            # negotiating: give way toward the own goal only, stand against the rest
            u = sim.goal_dir(self.goal)
            target = max(0.0, float(v_self @ u)) * u
            self.v_walk += (target - self.v_walk) * min(1.0, dt / pol.follow_time_constant)
            f = pol.hold_damping * (self.v_walk - v_self)
        elif mode in (FOLLOW, PUSH):
            self.v_walk += (v_self - self.v_walk) * min(1.0, dt / pol.follow_time_constant)
            f = pol.damping * (self.v_walk - v_self)
        elif mode == DRIVE:
            gxy = sim.layout.coordinate(self.goal)
            d = gxy - sim.p
            dist = math.hypot(*d)
            u = d / dist if dist > 0 else np.zeros(2)
            ramp = _smoothstep((t - self.mode_t0) / 0.3)
            speed = ramp * min(pol.drive_speed, 1.0 * max(dist - 0.05, 0.0))
            self.v_walk = speed * u
            f = pol.drive_gain * (self.v_walk - v_self)
        else:
            self.v_walk -= self.v_walk * min(1.0, dt / pol.stop_time_constant)
            f = pol.hold_damping * (self.v_walk - v_self)
        if mode == PUSH:
            tau = t - self.mode_t0
            D = pol.push_duration
            env = _smoothstep(tau / pol.push_ramp) * _smoothstep((D - tau) / pol.push_ramp)
            f = f + pol.push_gain * self.push_scale * env * sim.goal_dir(self.goal)
        self.intent_force = f
        # orientation keeping through a wrist moment about the vertical
        self.moment = -(pol.yaw_stiffness * (sim.psi - sim.psi_ref) + pol.yaw_damping * sim.omega) / 2.0
        # grasp squeeze toward the partner's handle
        axis = r_other - r_self
        f = f + pol.grasp_preload * axis / math.hypot(*axis)
        speed = math.hypot(*sim.v)
        if speed > 1e-9 and pol.walking_amplitude > 0:
            gait = pol.walking_amplitude * min(1.0, speed / 0.3)
            f = f + gait * math.sin(2 * math.pi * pol.walking_frequency * t + self.phase) * sim.v / speed
        return f

    def accumulate(self, partner_force, dt, sim):
        if self.mode not in (PUSH, PAUSE) or self.goal is None:
            return
        u = sim.goal_dir(self.goal)
        helpful = max(0.0, float(partner_force @ u))
        resid = partner_force - helpful * u
        self.round_opp += math.hypot(*resid) * math.hypot(*sim.v) * dt


class _World:
    """Mutable rigid-body state shared by the agents during one run."""

    def __init__(self, scene):
        self.scene = scene
        self.layout = scene.layout
        self.p = np.array(scene.start_position, dtype=float)
        self.v = np.zeros(2)
        self.psi = scene.start_yaw
        self.psi_ref = scene.start_yaw
        self.omega = 0.0
        self.concessions = []
        self.intent_switches = []
        self.arrival = None

    def goal_dir(self, goal):
        d = self.layout.coordinate(goal) - self.p
        n = math.hypot(*d)
        return d / n if n > 0 else np.zeros(2)

    def heading_goal(self, tol=0.5):
        from .segmentation import ray_distance
        speed = math.hypot(*self.v)
        if speed <= 0:
            return None
        d = [float(ray_distance(self.p, self.v, g)[0]) for g in self.layout.goals]
        i = int(np.argmin(d))
        return i + 1 if d[i] < tol else None

    def arrived(self, t, goal):
        if self.arrival is None:
            self.arrival = (t, goal)


# --------------------------------------------------------------------------
# simulation
# --------------------------------------------------------------------------

def simulate(scene, policies, seed, duration=16.0, kcg=False, assignment=None,
             stop_after_arrival=1.0):
    """Run one session.

    Parameters
    ----------
    scene : SceneConfig
    policies : (AgentPolicy, AgentPolicy)
    seed : int
    duration : float
        Upper bound on the recording length (s).
    kcg : bool
        Both agents know the common goal and drive without negotiating.
    stop_after_arrival : float or None
        End the recording this long after the first agent reaches its goal.

    Returns
    -------
    (RawStreams, GroundTruth)
    """
    if not duration > scene.t_start:
        raise ConfigError("duration must exceed t_start")
    if assignment is None:
        assignment = GoalAssignment(policies[0].goal, policies[1].goal)
    assignment.validate(scene.layout.n_goals)
    for p in policies:
        for act in p.script:
            scene.layout.coordinate(act.goal)
    cell = interaction_type(assignment, kcg)
    rng = np.random.default_rng(seed)
    obj = scene.obj
    m, inertia = obj.mass, obj.yaw_inertia
    q_body = (obj.handles.q1[:2].copy(), obj.handles.q2[:2].copy())

    world = _World(scene)
    agents = [_Agent(1, policies[0], scene, rng, kcg, scene.t_start),
              _Agent(2, policies[1], scene, rng, kcg, scene.t_start)]

    dt = 1.0 / scene.physics_rate
    sub = int(round(scene.physics_rate / scene.ft_rate))
    dt_ctrl = dt * sub
    n_ctrl_max = int(math.floor(duration * scene.ft_rate + 1e-9))
    n_max = n_ctrl_max * sub + 1

    rec_p = np.empty((n_max, 2))
    rec_psi = np.empty(n_max)
    rec_v = np.empty((n_max, 2))
    rec_w = np.empty(n_max)
    rec_f = np.zeros((2, n_max, 3))
    rec_m = np.zeros((2, n_max))
    rec_fr = np.zeros((n_max, 2))
    rec_tfr = np.zeros(n_max)
    fz = m * G / 2.0
    c_lin, c_coul, v_s, c_rot = (scene.viscous_friction, scene.coulomb_friction,
                                 scene.coulomb_velocity, scene.rotational_friction)

    px, py = world.p
    vx, vy = 0.0, 0.0
    psi, w = world.psi, 0.0
    n = 0
    end_ctrl = n_ctrl_max
    for c in range(n_ctrl_max):
        t = c * dt_ctrl
        world.p[:] = (px, py)
        world.v[:] = (vx, vy)
        world.psi, world.omega = psi, w
        cs, sn = math.cos(psi), math.sin(psi)
        arms = [np.array([cs * q[0] - sn * q[1], sn * q[0] + cs * q[1]]) for q in q_body]
        vh = [np.array([vx - w * r[1], vy + w * r[0]]) for r in arms]
        agents[0].decide(t, world, agents[1])
        agents[1].decide(t, world, agents[0])
        forces = [agents[0].force(t, dt_ctrl, world, arms[0], arms[1], vh[0]),
                  agents[1].force(t, dt_ctrl, world, arms[1], arms[0], vh[1])]
        agents[0].accumulate(agents[1].intent_force, dt_ctrl, world)
        agents[1].accumulate(agents[0].intent_force, dt_ctrl, world)
        (f1x, f1y), (f2x, f2y) = forces
        m1, m2 = agents[0].moment, agents[1].moment
        fx, fy = f1x + f2x, f1y + f2y
        for _ in range(sub):
            cs, sn = math.cos(psi), math.sin(psi)
            r1x, r1y = cs * q_body[0][0] - sn * q_body[0][1], sn * q_body[0][0] + cs * q_body[0][1]
            r2x, r2y = cs * q_body[1][0] - sn * q_body[1][1], sn * q_body[1][0] + cs * q_body[1][1]
            tau = r1x * f1y - r1y * f1x + r2x * f2y - r2y * f2x + m1 + m2
            sp = math.sqrt(vx * vx + vy * vy + v_s * v_s)
            frx = -c_lin * vx - c_coul * vx / sp
            fry = -c_lin * vy - c_coul * vy / sp
            tfr = -c_rot * w
            rec_p[n] = (px, py)
            rec_psi[n] = psi
            rec_v[n] = (vx, vy)
            rec_w[n] = w
            rec_f[0, n] = (f1x, f1y, fz)
            rec_f[1, n] = (f2x, f2y, fz)
            rec_m[0, n] = m1
            rec_m[1, n] = m2
            rec_fr[n] = (frx, fry)
            rec_tfr[n] = tfr
            vx += dt * (fx + frx) / m
            vy += dt * (fy + fry) / m
            w += dt * (tau + tfr) / inertia
            px += dt * vx
            py += dt * vy
            psi += dt * w
            n += 1
        if (stop_after_arrival is not None and world.arrival is not None
                and t + dt_ctrl >= world.arrival[0] + stop_after_arrival):
            end_ctrl = c + 1
            break
    # final state sample
    rec_p[n] = (px, py)
    rec_psi[n] = psi
    rec_v[n] = (vx, vy)
    rec_w[n] = w
    rec_f[:, n] = rec_f[:, n - 1]
    rec_m[:, n] = rec_m[:, n - 1]
    rec_fr[n] = rec_fr[n - 1]
    rec_tfr[n] = rec_tfr[n - 1]
    n += 1
    t_end = end_ctrl * dt_ctrl
    tt = np.arange(n) * dt

    epochs = []
    for a in agents:
        for e in a.epochs:
            if math.isinf(e.t_off):
                e.t_off = t_end
            e.t_off = min(e.t_off, t_end)
            if e.t_off > e.t_on:
                epochs.append(e)
    epochs.sort(key=lambda e: (e.t_on, e.agent))
    drive_starts = [a.drive_start for a in agents if a.drive_start is not None]
    consensus = min(drive_starts) if drive_starts else None
    if not cell.resolvable:
        # two hard, different goals: any drive is a transient, not an agreement
        consensus = None
    settled = world.arrival[1] if world.arrival is not None else None
    truth = GroundTruth(
        t=tt, position=rec_p[:n], yaw=rec_psi[:n], velocity=rec_v[:n], omega=rec_w[:n],
        f1=rec_f[0, :n], f2=rec_f[1, :n], m1=rec_m[0, :n], m2=rec_m[1, :n], friction=rec_fr[:n], friction_torque=rec_tfr[:n],
        t_start=scene.t_start, epochs=epochs, consensus_time=consensus, settled_goal=settled,
        intent_switches=world.intent_switches, concessions=world.concessions, cell=cell,
        assignment=assignment, mass=m, inertia=inertia, handles=(obj.handles.q1, obj.handles.q2),
        layout=scene.layout,
        flags={"unresolvable": not cell.resolvable, "no_consensus": consensus is None},
    )
    raw = synthesize_sensors(truth, scene, rng)
    return raw, truth


# --------------------------------------------------------------------------
# sensors
# --------------------------------------------------------------------------

def _small_rotation(rng, sigma, n):
    if sigma == 0:
        return np.tile([1.0, 0, 0, 0], (n, 1))
    return quat_from_rotvec(rng.normal(0.0, sigma, (n, 3)))


def synthesize_sensors(truth, scene, rng):
    """Sample noisy raw streams from a ground-truth run."""
    noise = scene.noise
    rate = truth.physics_rate
    t_end = truth.t[-1]

    def at(times):
        return np.clip(np.round(np.asarray(times) * rate).astype(int), 0, len(truth.t) - 1)

    # force-torque sensors, in each sensor's own frame
    n_ft = int(math.floor(t_end * scene.ft_rate + 1e-9)) + 1
    t_ft = np.arange(n_ft) / scene.ft_rate
    idx = at(t_ft)
    R_sb = quat_to_matrix(quat_from_yaw(truth.yaw[idx]))
    ft = []
    for f, m, mount in zip((truth.f1, truth.f2), (truth.m1, truth.m2), scene.mounts):
        R_m = quat_to_matrix(np.asarray(mount, dtype=float))
        f_sensor = np.einsum("tji,tj->ti", R_sb, f[idx]) @ R_m
        moment = np.zeros((n_ft, 3))
        moment[:, 2] = m[idx]
        torque = np.einsum("tji,tj->ti", R_sb, moment) @ R_m
        if noise.force_sigma:
            f_sensor = f_sensor + rng.normal(0.0, noise.force_sigma, f_sensor.shape)
        if noise.torque_sigma:
            torque = torque + rng.normal(0.0, noise.torque_sigma, torque.shape)
        ft.append(Stream(t_ft + scene.ft_offset, np.hstack([f_sensor, torque])))

    # IMU at the centroid
    n_imu = int(math.floor(t_end * scene.imu_rate + 1e-9)) + 1
    t_imu = np.arange(n_imu) / scene.imu_rate
    idx = at(t_imu)
    nxt = np.minimum(idx + 1, len(truth.t) - 1)
    acc = np.zeros((n_imu, 3))
    acc[:, :2] = (truth.velocity[nxt] - truth.velocity[idx]) * rate
    acc[nxt == idx, :2] = 0.0
    R_sb = quat_to_matrix(quat_from_yaw(truth.yaw[idx]))
    specific = np.einsum("tji,tj->ti", R_sb, acc - np.array([0.0, 0.0, -G]))
    gyro = np.zeros((n_imu, 3))
    gyro[:, 2] = truth.omega[idx]
    if noise.gyro_bias_sigma:
        gyro = gyro + rng.normal(0.0, noise.gyro_bias_sigma, 3)
    if noise.accel_sigma:
        specific = specific + rng.normal(0.0, noise.accel_sigma, specific.shape)
    if noise.gyro_sigma:
        gyro = gyro + rng.normal(0.0, noise.gyro_sigma, gyro.shape)
    imu = Stream(t_imu, np.hstack([specific, gyro]))

    # cameras: round-robin, staggered, with occlusion gaps
    n_cam = int(math.floor(t_end * noise.camera_rate + 1e-9)) + 1
    t_cam = np.arange(n_cam) / noise.camera_rate
    cam = np.arange(n_cam) % noise.n_cameras
    keep = np.ones(n_cam, bool)
    if noise.dropout_rate > 0:
        n_gaps = rng.poisson(noise.dropout_rate * t_end)
        for _ in range(n_gaps):
            g0 = rng.uniform(scene.t_start, t_end)
            g1 = g0 + rng.uniform(*noise.dropout_duration)
            keep &= ~((t_cam >= g0) & (t_cam < g1))
    keep[0] = True
    t_cam, cam = t_cam[keep], cam[keep]
    idx = at(t_cam)
    pos = np.column_stack([truth.position[idx], np.zeros(len(idx))])
    if noise.camera_position_sigma:
        pos = pos + rng.normal(0.0, noise.camera_position_sigma, pos.shape)
    quat = quat_multiply(quat_from_yaw(truth.yaw[idx]), _small_rotation(rng, noise.camera_orientation_sigma, len(idx)))
    pose = PoseObservations(t_cam, cam, pos, quat)
    return RawStreams(ft[0], ft[1], imu, pose)


# --------------------------------------------------------------------------
# taxonomy cells
# --------------------------------------------------------------------------

def _jitter(rng, base, rel=0.1):
    return base * rng.uniform(1 - rel, 1 + rel)


def policies_for_cell(cell, rng, n_goals=3, base=None):
    """Random goal assignment and agent policies realising one taxonomy cell.

    Returns ``(policies, assignment, kcg)``.
    """
    base = base or AgentPolicy()
    goals = list(range(1, n_goals + 1))
    g = int(rng.choice(goals))
    h = int(rng.choice([x for x in goals if x != g])) if n_goals > 1 else g
    H, S, N = AgentGoal.hard, AgentGoal.soft, AgentGoal.no_goal
    table = {
        InteractionType.KCG: (H(g), H(g)),
        InteractionType.NO_GOAL_BOTH: (N(), N()),
        InteractionType.NO_GOAL_VS_SOFT: (N(), S(g)),
        InteractionType.NO_GOAL_VS_HARD: (N(), H(g)),
        InteractionType.NON_CONFLICTING_HH: (H(g), H(g)),
        InteractionType.NON_CONFLICTING_HS: (H(g), S(g)),
        InteractionType.NON_CONFLICTING_SS: (S(g), S(g)),
        InteractionType.CONFLICTING_HS: (H(g), S(h)),
        InteractionType.CONFLICTING_SS: (S(g), S(h)),
        InteractionType.CONFLICTING_HH: (H(g), H(h)),
    }
    if cell not in table:
        raise ConfigError(f"unsupported cell {cell!r}")
    pair = list(table[cell])
    if rng.uniform() < 0.5:
        pair.reverse()
    policies = []
    for goal in pair:
        commitment = 1.0 if goal.kind is not GoalKind.SOFT else float(rng.uniform(0.5, 0.9))
        policies.append(replace(
            base, goal=goal, commitment=commitment,
            push_gain=_jitter(rng, base.push_gain),
            reaction_delay=base.reaction_delay + float(rng.uniform(0.0, 0.05)),
            push_duration=_jitter(rng, base.push_duration),
        ))
    return tuple(policies), GoalAssignment(*pair), cell is InteractionType.KCG


def scripted_policies(rng, n_actions=10, n_goals=3, t_first=1.3, gap=(0.6, 1.0),
                      duration=(0.5, 0.8), scale=(0.85, 1.15), base=None, goals=None):
    """Two agents taking turns with isolated pushes toward random goals.

    ``goals`` optionally fixes the goal of each push.  Returns the policies
    and the total time they need.
    """
    base = base or AgentPolicy()
    if goals is not None and len(goals) != n_actions:
        raise ConfigError("need one goal per scripted action")
    scripts = ([], [])
    t = t_first
    for i in range(n_actions):
        agent = i % 2 if rng.uniform() < 0.7 else int(rng.integers(2))
        d = float(rng.uniform(*duration))
        goal = int(goals[i]) if goals is not None else int(rng.integers(1, n_goals + 1))
        scripts[agent].append(ScriptedAction(t, d, goal, float(rng.uniform(*scale))))
        t += d + float(rng.uniform(*gap))
    policies = tuple(replace(base, goal=AgentGoal.no_goal(), proactive=False, reaction_delay=0.0,
                             script=tuple(s)) for s in scripts)
    return policies, t + 0.5


# --------------------------------------------------------------------------
# datasets
# --------------------------------------------------------------------------

def session_seed(batch_seed, index):
    """Per-session seed derived from the batch seed and the session index."""
    return int(np.random.SeedSequence([int(batch_seed), int(index)]).generate_state(1)[0])


def _echo(obj, prefix=""):
    """Flatten a (nested) config dataclass into ``key -> text`` pairs."""
    from dataclasses import fields, is_dataclass
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        key = prefix + f.name
        if is_dataclass(v):
            out.update(_echo(v, key + "."))
        elif isinstance(v, GoalLayout):
            out[key] = ";".join(f"{x!r} {y!r}" for x, y in v.goals)
        elif isinstance(v, AgentGoal):
            out[key] = str(v)
        elif isinstance(v, np.ndarray):
            out[key] = " ".join(repr(float(x)) for x in v.ravel())
        elif isinstance(v, tuple):
            out[key] = " ".join(repr(x) if not isinstance(x, tuple) else "(" + " ".join(map(repr, x)) + ")"
                                for x in v) if not (v and isinstance(v[0], ScriptedAction)) else \
                ";".join(f"{a.t_on!r} {a.duration!r} {a.goal} {a.scale!r}" for a in v)
        else:
            out[key] = repr(v) if isinstance(v, float) else str(v)
    return out


def write_session(directory, raw, truth, scene, policies, seed, session_id, kcg=False):
    """Write raw streams, labels and ``session.ini`` into ``directory``."""
    from . import dataio
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    dataio.write_raw(raw, d)
    dataio.write_truth(truth.epochs, d / "truth.csv")
    cp = dataio.new_config()
    cp["session"] = {
        "id": session_id,
        "schema_version": str(dataio.SCHEMA_VERSION),
        "cell": truth.cell.value if truth.cell is not None else "",
        "assignment": f"{truth.assignment.agent1},{truth.assignment.agent2}",
        "kcg": str(bool(kcg)).lower(),
        "t_start": repr(float(truth.t_start)),
        "seed": str(seed),
    }
    cp["files"] = {"ft": dataio.RAW_FILES["ft"], "imu": dataio.RAW_FILES["imu"],
                   "pose": dataio.RAW_FILES["pose"], "truth": "truth.csv"}
    cp["truth"] = {
        "consensus_time": "" if truth.consensus_time is None else repr(float(truth.consensus_time)),
        "settled_goal": "" if truth.settled_goal is None else str(truth.settled_goal),
        "concessions": ";".join(f"{a} {t!r}" for a, t in truth.concessions),
        "intent_switches": ";".join(f"{a} {t!r} {g0} {g1}" for a, t, g0, g1 in truth.intent_switches),
        "no_consensus": str(truth.consensus_time is None).lower(),
        "unresolvable": str(bool(truth.flags.get("unresolvable"))).lower(),
        "duration": repr(float(truth.t[-1])),
    }
    cp["scene"] = _echo(scene)
    cp["mounts"] = {"ft1": " ".join(map(repr, scene.mounts[0])), "ft2": " ".join(map(repr, scene.mounts[1]))}
    for k, p in enumerate(policies, 1):
        cp[f"agent{k}"] = _echo(p)
    dataio.write_ini(cp, d / "session.ini")
    return d


def _run_one(args):
    index, cell, batch_seed, scene, base, duration, out_dir = args
    seed = session_seed(batch_seed, index)
    rng = np.random.default_rng([seed, 1])
    policies, assignment, kcg = policies_for_cell(cell, rng, scene.layout.n_goals, base)
    raw, truth = simulate(scene, policies, seed, duration=duration, kcg=kcg, assignment=assignment)
    sid = f"session_{index:04d}"
    write_session(Path(out_dir) / sid, raw, truth, scene, policies, seed, sid, kcg)
    return sid, cell, seed, truth


def generate_batch(cells, seed, out_dir, scene=None, base_policy=None, duration=16.0, workers=1):
    """Simulate ``count`` sessions per taxonomy cell and write them to ``out_dir``.

    Parameters
    ----------
    cells : list of (InteractionType or str, int)
    seed : int
        Batch seed; session ``i`` uses :func:`session_seed` ``(seed, i)``.
    workers : int
        Process count.  Output does not depend on it.

    Returns
    -------
    list of (session id, cell, seed, GroundTruth)
    """
    from . import dataio
    scene = scene or SceneConfig()
    jobs = []
    index = 1
    for cell, count in cells:
        cell = InteractionType.parse(cell) if isinstance(cell, str) else cell
        if int(count) < 1:
            raise ConfigError(f"count for {cell.value} must be at least 1")
        for _ in range(int(count)):
            jobs.append((index, cell, int(seed), scene, base_policy, duration, str(out_dir)))
            index += 1
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if workers and workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    cp = dataio.new_config()
    cp["dataset"] = {"schema_version": str(dataio.SCHEMA_VERSION), "seed": str(int(seed)),
                     "n_sessions": str(len(results)), "duration": repr(float(duration))}
    for sid, cell, s, truth in results:
        cp[sid] = {
            "path": sid,
            "cell": cell.value,
            "assignment": f"{truth.assignment.agent1},{truth.assignment.agent2}",
            "seed": str(s),
            "t_start": repr(float(truth.t_start)),
            "settled_goal": "" if truth.settled_goal is None else str(truth.settled_goal),
            "consensus_time": "" if truth.consensus_time is None else repr(float(truth.consensus_time)),
        }
    dataio.write_ini(cp, out / "manifest.ini")
    return results
