"""Continuous inertial dynamic with viscous and gradient-derivative damping.

The second-order system

    theta'' + alpha theta' + beta (d/dt) grad L(theta) + grad L(theta) = 0,
    theta(0) = theta0,  theta'(0) = 0,

is integrated, for beta > 0, through its equivalent first-order form

    theta' = -beta grad L + (1/beta - alpha) theta - q / beta,
    q'     =                (1/beta - alpha) theta - q / beta,
    q(0)   = -beta^2 grad L(theta0) + (1 - alpha beta) theta0,

and, for beta = 0 (pure heavy ball), through the standard position-velocity
phase space.  The integrator is classical RK4 with step-doubling error
control.  The energy V(t) = L + 0.5 ||theta' + beta grad L||^2 is nonincreasing
along trajectories whenever alpha > 0 and 0 < beta < 2/alpha, which the
recorded rows let callers re-verify.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dipnet import DipNetwork, TrainingObjective
from .linops import InverseProblem

BLOWUP_LIMIT = 1e12
_MIN_STEP_FACTOR = 2.0**-40


class BlowUpError(RuntimeError):
    """Trajectory left the finite regime (maximal solution is not global)."""


@dataclass
class FlowConfig:
    alpha: float
    beta: float
    t_end: float
    h: float = 0.01
    err_tol: float = 1e-8
    record_every: int = 10

    def __post_init__(self):
        if self.beta < 0.0 or self.alpha < 0.0:
            raise ValueError("damping coefficients must be nonnegative")
        if self.h <= 0.0 or self.t_end <= 0.0:
            raise ValueError("h and t_end must be positive")


@dataclass
class FlowState:
    """Time, parameters, and the auxiliary variable of the first-order form.

    For beta = 0 the q slot stores the velocity theta' of the phase-space
    system instead.
    """

    t: float
    theta: np.ndarray
    q: np.ndarray


def init_flow(net: DipNetwork, problem: InverseProblem, config: FlowConfig,
              theta0: np.ndarray | None = None) -> FlowState:
    """State at t = 0 for the q-reformulation; with theta'(0) = 0 the auxiliary
    variable starts at q(0) = -beta^2 grad L(theta0) + (1 - alpha beta) theta0."""
    if config.beta <= 0.0:
        raise ValueError("reformulation requires beta > 0")
    theta0 = np.asarray(net.theta0 if theta0 is None else theta0, dtype=np.float64)
    _, g0 = TrainingObjective(net, problem).loss_grad(theta0)
    q0 = -config.beta**2 * g0 + (1.0 - config.alpha * config.beta) * theta0
    return FlowState(t=0.0, theta=theta0, q=q0)


def init_flow_phase(net: DipNetwork, problem: InverseProblem, config: FlowConfig,
                    theta0: np.ndarray | None = None) -> FlowState:
    """Phase-space state (theta, velocity = 0) used when beta = 0."""
    theta0 = np.asarray(net.theta0 if theta0 is None else theta0, dtype=np.float64)
    return FlowState(t=0.0, theta=theta0, q=np.zeros_like(theta0))


def prepare_flow(net: DipNetwork, problem: InverseProblem, config: FlowConfig,
                 theta0: np.ndarray | None = None) -> FlowState:
    if config.beta > 0.0:
        return init_flow(net, problem, config, theta0)
    return init_flow_phase(net, problem, config, theta0)


def theta_dot(state: FlowState, grad: np.ndarray, config: FlowConfig) -> np.ndarray:
    """Recover theta' from the state (inverse of the q definition)."""
    if config.beta > 0.0:
        c = 1.0 / config.beta - config.alpha
        return -config.beta * grad + c * state.theta - state.q / config.beta
    return state.q


def lyapunov_continuous(state: FlowState, net: DipNetwork, problem: InverseProblem,
                        beta: float, alpha: float = 0.0) -> float:
    """V = L + 0.5 ||theta' + beta grad L||^2 >= loss >= 0.

    alpha enters only through the recovery of theta' from the q variable
    (theta' = -beta grad L + (1/beta - alpha) theta - q / beta).
    """
    objective = TrainingObjective(net, problem)
    loss, grad = objective.loss_grad(state.theta)
    cfg = FlowConfig(alpha=alpha, beta=beta, t_end=1.0)
    vel = theta_dot(state, grad, cfg)
    w = vel + beta * grad
    return loss + 0.5 * float(w @ w)


def _make_rhs(objective, config: FlowConfig, p: int) -> Callable[[np.ndarray], np.ndarray]:
    if config.beta > 0.0:
        beta = config.beta
        c = 1.0 / beta - config.alpha

        def rhs(z: np.ndarray) -> np.ndarray:
            theta, q = z[:p], z[p:]
            _, g = objective.loss_grad(theta)
            lin = c * theta - q / beta
            return np.concatenate([lin - beta * g, lin])

    else:
        alpha = config.alpha

        def rhs(z: np.ndarray) -> np.ndarray:
            theta, vel = z[:p], z[p:]
            _, g = objective.loss_grad(theta)
            return np.concatenate([vel, -alpha * vel - g])

    return rhs


def _rk4(z: np.ndarray, h: float, rhs, f0: np.ndarray | None = None) -> np.ndarray:
    k1 = rhs(z) if f0 is None else f0
    k2 = rhs(z + 0.5 * h * k1)
    k3 = rhs(z + 0.5 * h * k2)
    k4 = rhs(z + h * k3)
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


FLOW_COLUMNS = (
    "t", "h", "loss", "grad_norm", "lyapunov", "dist_theta0", "err_signal", "err_obs",
)


@dataclass
class FlowResult:
    records: list[tuple]
    state: FlowState
    snapshot_items: list[tuple[float, np.ndarray]] = field(default_factory=list)

    @property
    def theta_snapshots(self) -> list[np.ndarray]:
        return [theta for _, theta in self.snapshot_items]

    def column(self, name: str) -> np.ndarray:
        return np.array([row[FLOW_COLUMNS.index(name)] for row in self.records])


def integrate(state: FlowState, net: DipNetwork, problem: InverseProblem,
              config: FlowConfig, snapshot_every: int = 0) -> FlowResult:
    """March the first-order system to t_end with step-doubling RK4.

    The step is halved until one h-step and two h/2-steps agree within
    err_tol (sup-norm, relative); err_tol = inf gives plain fixed-step RK4.
    Rows are recorded every record_every accepted steps plus the final time.
    Aborts with BlowUpError when the state leaves the finite regime.
    """
    objective = TrainingObjective(net, problem)
    p = net.p
    rhs = _make_rhs(objective, config, p)
    theta0 = state.theta.copy()
    z = np.concatenate([state.theta, state.q])
    t = state.t
    h = config.h
    records: list[tuple] = []
    snapshots: list[tuple[float, np.ndarray]] = []

    def check_finite(zv: np.ndarray, tv: float, v: float):
        if not np.all(np.isfinite(zv)) or np.max(np.abs(zv)) > BLOWUP_LIMIT or v > BLOWUP_LIMIT:
            raise BlowUpError(f"blow-up detected at t={tv:.6g}")

    def record_row(zv: np.ndarray, tv: float, hv: float):
        st = FlowState(t=tv, theta=zv[:p], q=zv[p:])
        loss, grad = objective.loss_grad(st.theta)
        vel = theta_dot(st, grad, config)
        w = vel + config.beta * grad
        lyap = loss + 0.5 * float(w @ w)
        check_finite(zv, tv, lyap)
        err_signal, err_obs = objective.observables(st.theta)
        records.append((
            tv, hv, loss, float(np.linalg.norm(grad)), lyap,
            float(np.linalg.norm(st.theta - theta0)), err_signal, err_obs,
        ))

    record_row(z, t, h)
    if snapshot_every:
        snapshots.append((t, z[:p].copy()))
    n_accepted = 0
    while t < config.t_end - 1e-12 * config.t_end:
        h_try = min(h, config.t_end - t)
        f0 = rhs(z)
        while True:
            big = _rk4(z, h_try, rhs, f0=f0)
            half = _rk4(_rk4(z, 0.5 * h_try, rhs, f0=f0), 0.5 * h_try, rhs)
            if not np.all(np.isfinite(half)):
                err = math.inf
            else:
                err = float(np.max(np.abs(big - half))) / (1.0 + float(np.max(np.abs(half))))
            if err <= config.err_tol:
                break
            h_try *= 0.5
            if h_try < config.h * _MIN_STEP_FACTOR:
                raise BlowUpError(f"blow-up detected at t={t:.6g} (step underflow)")
        z = half
        t += h_try
        check_finite(z, t, 0.0)
        # recover the working step; stay at or below the configured base step
        h = min(config.h, 2.0 * h_try if err < config.err_tol / 256.0 else h_try)
        n_accepted += 1
        if snapshot_every and n_accepted % snapshot_every == 0:
            snapshots.append((t, z[:p].copy()))
        if n_accepted % config.record_every == 0 or t >= config.t_end - 1e-12 * config.t_end:
            record_row(z, t, h_try)
    final = FlowState(t=t, theta=z[:p], q=z[p:])
    return FlowResult(records=records, state=final, snapshot_items=snapshots)


@dataclass(frozen=True)
class EarlyStopTime:
    t_star: float
    noiseless: bool


def early_stop_time(cert, problem: InverseProblem) -> EarlyStopTime:
    """t* = 4 / (sigmin(J0) sigmin(A)) * ln( sqrt(2 xi L0) / ||noise|| ).

    Past t*, the certified rate keeps the observation within twice the noise
    level.  Noiseless problems return t* = inf with the flag set.
    """
    eps = problem.noise_norm
    if eps == 0.0:
        return EarlyStopTime(t_star=math.inf, noiseless=True)
    sigsig = cert.sigmin_j0 * cert.sigmin_a
    t_star = 4.0 / sigsig * math.log(math.sqrt(2.0 * cert.xi * cert.loss0) / eps)
    return EarlyStopTime(t_star=max(t_star, 0.0), noiseless=False)


def default_t_end(cert, problem: InverseProblem) -> float:
    """3 t* when noise is present, else 10 / (sigmin(J0) sigmin(A))."""
    stop = early_stop_time(cert, problem)
    if stop.noiseless:
        return 10.0 / (cert.sigmin_j0 * cert.sigmin_a)
    return 3.0 * stop.t_star
