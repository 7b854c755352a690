"""Task objectives: reaching costs, the ball-serve criterion, and a hopping
reward, plus the task descriptions (initial state, horizon, terminal rule)
that the rollout and optimization layers consume."""

import math
from dataclasses import dataclass, field

import numpy as np

from .arm import ArmParams, ArmState, BallState, end_effector


@dataclass
class ObjectiveWeights:
    """Scales and weights shared by the reaching objectives.

    s_* are per-joint normalization scales (shoulder, elbow); w_* the
    corresponding weights and jerk_gain the multiplier on the discrete jerk
    measure. lam1/lam2/eps parameterize the precise-reaching reward, hop_*
    the hopping regularizers.
    """

    s_th: tuple = (2.45, 2.45)
    s_dth: tuple = (18.7, 27.9)
    w_th: tuple = (2.0, 2.0)
    w_dth: tuple = (1.0, 1.0)
    jerk_gain: float = 1.0
    lam1: float = 0.1
    lam2: float = 1e-4
    eps: float = 1e-4
    hop_lam1: float = 1e-4
    hop_lam2: float = 1e-3


@dataclass
class ReachTarget:
    """Desired joint posture and, for distance-based tasks, a hand goal."""

    th_des: tuple = (0.5 * math.pi, 0.5 * math.pi)
    dth_des: tuple = (0.0, 0.0)
    goal_xz: tuple | None = None
    # rectangle the hand goal is sampled from: (x_lo, x_hi), (z_lo, z_hi)
    rect: tuple = ((0.1, 0.4), (0.1, 0.4))

    def sample_goal(self, rng: np.random.Generator, params: ArmParams):
        """Draw a goal inside the rectangle, re-drawing anything out of reach."""
        (xlo, xhi), (zlo, zhi) = self.rect
        reach = params.l1 + params.l2
        for _ in range(1000):
            x = rng.uniform(xlo, xhi)
            z = rng.uniform(zlo, zhi)
            if math.hypot(x, z) <= reach - 0.01:
                return (x, z)
        raise ValueError("goal rectangle lies outside the arm's reach")


def jerk_from_accel(ddth: np.ndarray) -> np.ndarray:
    """Discrete jerk measure: central difference of acceleration per sample.

    Second-order central differences in the interior, one-sided first-order
    differences at the two endpoints, expressed per physics step (the jerk
    rate times the fixed step), which keeps the squared penalty commensurate
    with the normalized angle and velocity terms. ddth has shape (n, 2); a
    single-sample series has zero jerk.
    """
    ddth = np.asarray(ddth, dtype=float)
    n = ddth.shape[0]
    out = np.zeros_like(ddth)
    if n < 2:
        return out
    out[1:-1] = (ddth[2:] - ddth[:-2]) / 2.0
    out[0] = ddth[1] - ddth[0]
    out[-1] = ddth[-1] - ddth[-2]
    return out


def smooth_reaching_stage(th, dth, jerk, weights: ObjectiveWeights,
                          target: ReachTarget) -> np.ndarray:
    """Per-sample cost: normalized squared angle and velocity errors plus jerk^2."""
    th = np.asarray(th, dtype=float)
    dth = np.asarray(dth, dtype=float)
    jerk = np.asarray(jerk, dtype=float)
    w = weights
    e_th = th - np.asarray(target.th_des)
    e_dth = dth - np.asarray(target.dth_des)
    c_th = (np.asarray(w.w_th) / np.asarray(w.s_th)) * e_th ** 2
    c_dth = (np.asarray(w.w_dth) / np.asarray(w.s_dth)) * e_dth ** 2
    return (c_th + c_dth + (w.jerk_gain * jerk) ** 2).sum(axis=-1)


def smooth_reaching_cost(th, dth, ddth, dt: float, weights: ObjectiveWeights,
                         target: ReachTarget, min_duration: float | None = None) -> float:
    """Smooth-reaching cost: the per-sample stage cost summed over time.

    th, dth, ddth are (n, 2) arrays sampled at the physics rate dt. A
    trajectory shorter than min_duration (seconds) is rejected.
    """
    th = np.atleast_2d(np.asarray(th, dtype=float))
    n = th.shape[0]
    if min_duration is not None and (n - 1) * dt < min_duration - 1e-9:
        raise ValueError(
            f"trajectory spans {(n - 1) * dt:.4f} s, shorter than the "
            f"required {min_duration} s horizon")
    jerk = jerk_from_accel(np.atleast_2d(ddth))
    stage = smooth_reaching_stage(th, np.atleast_2d(dth), jerk, weights, target)
    return float(stage.sum())


def precise_reaching_reward(d: float, actions, weights: ObjectiveWeights) -> float:
    """Distance-based reward with a log precision bonus and an action penalty.

    r = -lam1 * (d + log(d + eps^2)) - (lam2 / N) * sum(a_i^2) - 2.
    Strictly decreasing in d; supremum -lam1*log(eps^2) - 2 ~= -0.158 as d -> 0.
    """
    if d < 0.0:
        raise ValueError("distance must be non-negative")
    a = np.asarray(actions, dtype=float)
    pen = weights.lam2 * float(np.sum(a * a)) / a.size if a.size else 0.0
    return -weights.lam1 * (d + math.log(d + weights.eps ** 2)) - pen - 2.0


def fast_reaching_done(d: float, threshold: float = 0.05) -> bool:
    """Strict sub-threshold hand-goal distance ends a fast-reaching episode."""
    return d < threshold


def ball_serve_cost(dz_series) -> float:
    """Serve quality: negative peak upward ball velocity (lower is better)."""
    dz = np.asarray(dz_series, dtype=float)
    if dz.size == 0:
        raise ValueError("empty ball velocity series")
    return -float(dz.max())


def hopping_reward(v_com_z: float, actions, q, q_limits, alive: bool,
                   weights: ObjectiveWeights) -> float:
    """Exponential upward-velocity reward with alive bonus and regularizers.

    r = exp(min(10, 100*max(0, v))) - 1 + alive - hop_lam1*sum(a^2)/N
        - hop_lam2*sum(r_joint), where r_joint_i = -1 when q_i is within 0.1
        of either limit and 0 otherwise.
    """
    v = max(0.0, v_com_z)
    r = math.exp(min(10.0, 100.0 * v)) - 1.0
    if alive:
        r += 1.0
    a = np.asarray(actions, dtype=float)
    if a.size:
        r -= weights.hop_lam1 * float(np.sum(a * a)) / a.size
    q = np.asarray(q, dtype=float)
    q_min, q_max = (np.asarray(lim, dtype=float) for lim in q_limits)
    r_joint = np.where((np.abs(q_max - q) < 0.1) | (np.abs(q_min - q) < 0.1), -1.0, 0.0)
    r -= weights.hop_lam2 * float(r_joint.sum())
    return r


# --------------------------------------------------------------------------
# Task descriptions


@dataclass
class SmoothReaching:
    """Reach 90 degrees at each joint from hanging rest, smoothly, in 0.9 s."""

    name = "smooth-reach"
    duration: float = 0.9
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    target: ReachTarget = field(default_factory=ReachTarget)
    has_ball = False

    def initial_state(self) -> ArmState:
        return ArmState(th1=-0.5 * math.pi, th2=0.0)

    def cost(self, traj, params: ArmParams) -> float:
        return smooth_reaching_cost(traj.th, traj.dth, traj.ddth, traj.dt,
                                    self.weights, self.target,
                                    min_duration=self.duration)

    def window_cost(self, traj, params: ArmParams) -> float:
        """Same functional without the full-horizon length requirement."""
        return smooth_reaching_cost(traj.th, traj.dth, traj.ddth, traj.dt,
                                    self.weights, self.target)

    def stage_series(self, traj, params: ArmParams) -> np.ndarray:
        jerk = jerk_from_accel(traj.ddth)
        return smooth_reaching_stage(traj.th, traj.dth, jerk, self.weights, self.target)

    def is_done(self, state: ArmState, params: ArmParams) -> bool:
        return False


@dataclass
class PreciseReaching:
    """Hold the hand on a sampled goal point; reward evaluated per control step."""

    name = "precise-reach"
    duration: float = 10.0
    control_resolution: float = 0.01
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    target: ReachTarget = field(default_factory=ReachTarget)
    seed: int = 0
    terminal_threshold: float | None = None   # set for the fast variant
    has_ball = False

    def __post_init__(self):
        if self.target.goal_xz is None:
            rng = np.random.Generator(np.random.PCG64(self.seed))
            self.target.goal_xz = self.target.sample_goal(rng, ArmParams())

    def initial_state(self) -> ArmState:
        return ArmState(th1=-0.5 * math.pi, th2=0.0)

    def _distances(self, traj, params):
        gx, gz = self.target.goal_xz
        fore = traj.th[:, 0] - traj.th[:, 1]
        hx = params.l1 * np.cos(traj.th[:, 0]) + params.l2 * np.cos(fore)
        hz = params.l1 * np.sin(traj.th[:, 0]) + params.l2 * np.sin(fore)
        return np.hypot(hx - gx, hz - gz)

    def stage_series(self, traj, params: ArmParams) -> np.ndarray:
        # negative reward at each control boundary so lower is better
        stride = max(1, round(self.control_resolution / traj.dt))
        d = self._distances(traj, params)
        idx = np.arange(0, d.size, stride)
        out = np.zeros(d.size)
        for k in idx:
            u = traj.controls[min(k, traj.controls.shape[0] - 1)] if traj.controls is not None else ()
            out[k] = -precise_reaching_reward(d[k], u, self.weights)
        return out

    def cost(self, traj, params: ArmParams) -> float:
        stride = max(1, round(self.control_resolution / traj.dt))
        d = self._distances(traj, params)
        rewards = []
        for k in range(0, d.size, stride):
            u = traj.controls[min(k, traj.controls.shape[0] - 1)] if traj.controls is not None else ()
            rewards.append(precise_reaching_reward(d[k], u, self.weights))
        return -float(np.mean(rewards))

    def window_cost(self, traj, params: ArmParams) -> float:
        return self.cost(traj, params)

    def is_done(self, state: ArmState, params: ArmParams) -> bool:
        if self.terminal_threshold is None:
            return False
        (x, z), _ = end_effector(state, params)
        gx, gz = self.target.goal_xz
        return fast_reaching_done(math.hypot(x - gx, z - gz), self.terminal_threshold)


def fast_reaching_task(seed: int = 0, **kw) -> PreciseReaching:
    task = PreciseReaching(seed=seed, terminal_threshold=0.05, duration=2.0, **kw)
    task.name = "fast-reach"
    return task


@dataclass
class BallServe:
    """Hit a dropped ball upward; score is the peak upward ball velocity."""

    name = "ball-serve"
    duration: float = 0.9
    drop_xz: tuple = (0.45, 0.35)
    ball_mass: float = 0.25
    contact_radius: float = 0.05
    has_ball = True

    def initial_state(self) -> ArmState:
        return ArmState(th1=-0.5 * math.pi, th2=0.0)

    def initial_ball(self) -> BallState:
        return BallState(x=self.drop_xz[0], z=self.drop_xz[1], mass=self.ball_mass)

    def cost(self, traj, params: ArmParams) -> float:
        return ball_serve_cost(traj.ball[:, 3])

    def window_cost(self, traj, params: ArmParams) -> float:
        return self.cost(traj, params)

    def stage_series(self, traj, params: ArmParams) -> np.ndarray:
        # running negative best upward speed; the final entry equals the cost
        return -np.maximum.accumulate(traj.ball[:, 3])

    def is_done(self, state: ArmState, params: ArmParams) -> bool:
        return False


TASKS = ("smooth-reach", "precise-reach", "fast-reach", "ball-serve")


def make_task(name: str, seed: int = 0, **overrides):
    """Task factory; seed only affects tasks with sampled goals."""
    if name == "smooth-reach":
        return SmoothReaching(**overrides)
    if name == "precise-reach":
        return PreciseReaching(seed=seed, **overrides)
    if name == "fast-reach":
        return fast_reaching_task(seed=seed, **overrides)
    if name == "ball-serve":
        return BallServe(**overrides)
    raise ValueError(f"unknown task {name!r}; expected one of {TASKS}")
