"""Inertial first-order scheme with adaptive backtracking step-size.

One iteration moves from (theta_tau, theta_{tau-1}) through

    q          = theta + alpha*s*(theta - theta_prev) - beta*s^2*(grad - grad_prev)
    theta_plus = q - s*grad

where s = rho^i * s0 (reset mode) or rho^i * s_prev (warm mode) and i is the
smallest nonnegative integer such that both line-search conditions hold at
theta_plus:

    (C1)  L(theta_plus) - L(theta) - <grad, theta_plus - theta>
              <= (delta / 2s) ||theta_plus - theta||^2
    (C2)  ||grad(theta_plus) - grad(theta)|| <= (delta / s) ||theta_plus - theta||

The per-step energy V_tau = L_tau + delta2 ||theta_tau - theta_{tau-1}||^2 with
delta2 = (alpha + beta*delta)/2 decreases by at least
delta1 ||v_{tau+1}||^2, delta1 = (1 - delta/2)/s0 - 2*delta2, whenever
s0 (alpha + beta*delta) < 1 - delta/2; that decrement is what the property
tests re-verify on recorded trajectories.

Gradients evaluated during the line search are cached: the accepted trial's
gradient becomes grad_{tau+1}, so one trial costs exactly one loss+gradient
evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .dipnet import DipNetwork, EvaluationError, TrainingObjective
from .linops import InverseProblem

DIVERGENCE_LOSS = 1e12


class BacktrackStallError(RuntimeError):
    """Backtracking exceeded max_backtracks; finite termination is guaranteed
    in exact arithmetic, so this signals a bug or a pathological objective."""


class Objective(Protocol):
    def loss_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray]: ...


@dataclass
class OptimizerConfig:
    """Parameters (alpha, beta, delta, rho, s0) plus loop/stopping controls."""

    alpha: float = 0.0
    beta: float = 0.0
    delta: float = 1.0
    rho: float = 0.5
    s0: float = 0.1
    backtrack_mode: str = "reset"
    max_iters: int = 20000
    max_backtracks: int = 60
    stop_loss_threshold: float = 1e-14
    early_stop_on_noise: bool = False

    def __post_init__(self):
        if not 0.0 < self.delta < 2.0:
            raise ValueError("delta must lie in (0, 2)")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.s0 <= 0.0:
            raise ValueError("s0 must be positive")
        if self.alpha < 0.0 or self.beta < 0.0:
            raise ValueError("alpha and beta must be nonnegative")
        if self.backtrack_mode not in ("reset", "warm"):
            raise ValueError("backtrack_mode must be 'reset' or 'warm'")


@dataclass
class OptimState:
    """Evolving iterate pair with cached gradients and step diagnostics."""

    tau: int
    theta: np.ndarray
    theta_prev: np.ndarray
    grad: np.ndarray
    grad_prev: np.ndarray
    s: float
    loss: float
    v_norm: float
    backtrack_count: int


@dataclass(frozen=True)
class DiscreteLyapunov:
    """V_tau = loss + delta2 ||v_tau||^2 and the descent constant delta1."""

    delta1: float
    delta2: float

    @classmethod
    def from_config(cls, config: OptimizerConfig) -> "DiscreteLyapunov":
        delta2 = 0.5 * (config.alpha + config.beta * config.delta)
        delta1 = (1.0 - config.delta / 2.0) / config.s0 - 2.0 * delta2
        return cls(delta1=delta1, delta2=delta2)

    def value(self, loss: float, v_norm: float) -> float:
        return loss + self.delta2 * v_norm**2


def init_state(objective: Objective, theta0: np.ndarray) -> OptimState:
    """tau = 0 state with theta_{-1} = theta_0, so the inertial terms vanish."""
    theta0 = np.asarray(theta0, dtype=np.float64)
    loss, grad = objective.loss_grad(theta0)
    return OptimState(
        tau=0,
        theta=theta0,
        theta_prev=theta0,
        grad=grad,
        grad_prev=grad,
        s=math.nan,
        loss=loss,
        v_norm=0.0,
        backtrack_count=0,
    )


def inertial_candidate(state: OptimState, config: OptimizerConfig, s: float) -> np.ndarray:
    """Candidate update for trial step s; alpha = beta = 0 reduces exactly to
    the gradient step theta - s*grad (terms are skipped, not multiplied by 0)."""
    return _candidate(
        state.theta, state.theta_prev, state.grad, state.grad_prev,
        config.alpha, config.beta, s,
    )


def _candidate(theta, theta_prev, grad, grad_prev, alpha, beta, s):
    q = theta
    if alpha != 0.0:
        q = q + (alpha * s) * (theta - theta_prev)
    if beta != 0.0:
        q = q - (beta * s * s) * (grad - grad_prev)
    return q - s * grad


@dataclass
class BacktrackResult:
    theta_plus: np.ndarray
    loss_plus: float
    grad_plus: np.ndarray
    s: float
    i: int


def backtrack(state: OptimState, objective: Objective, config: OptimizerConfig) -> BacktrackResult:
    """Smallest i >= 0 such that both (C1) and (C2) hold at the trial point.

    A zero-length trial step satisfies both conditions as 0 <= 0 and returns
    the current point unchanged.
    """
    base = config.s0 if config.backtrack_mode == "reset" else (
        state.s if math.isfinite(state.s) else config.s0
    )
    loss, grad = state.loss, state.grad
    for i in range(config.max_backtracks + 1):
        s = (config.rho**i) * base
        theta_plus = _candidate(
            state.theta, state.theta_prev, grad, state.grad_prev,
            config.alpha, config.beta, s,
        )
        dtheta = theta_plus - state.theta
        step_sq = float(dtheta @ dtheta)
        if step_sq == 0.0:
            return BacktrackResult(theta_plus, loss, grad.copy(), s, i)
        try:
            loss_plus, grad_plus = objective.loss_grad(theta_plus)
        except EvaluationError:
            continue  # overflowing trial step: treat as failed conditions, halve
        c1 = loss_plus - loss - float(grad @ dtheta) <= (config.delta / (2.0 * s)) * step_sq
        c2 = float(np.linalg.norm(grad_plus - grad)) <= (config.delta / s) * math.sqrt(step_sq)
        if c1 and c2:
            return BacktrackResult(theta_plus, loss_plus, grad_plus, s, i)
    raise BacktrackStallError(
        f"backtracking stalled: no admissible step after {config.max_backtracks} "
        f"halvings at tau={state.tau}"
    )


def step(state: OptimState, objective: Objective, config: OptimizerConfig) -> OptimState:
    """Advance one iteration; the accepted trial's gradient is reused as the
    next iterate's gradient."""
    res = backtrack(state, objective, config)
    return OptimState(
        tau=state.tau + 1,
        theta=res.theta_plus,
        theta_prev=state.theta,
        grad=res.grad_plus,
        grad_prev=state.grad,
        s=res.s,
        loss=res.loss_plus,
        v_norm=float(np.linalg.norm(res.theta_plus - state.theta)),
        backtrack_count=res.i,
    )


TRAJECTORY_COLUMNS = (
    "tau", "s_tau", "i_tau", "loss", "grad_norm", "v_norm",
    "lyapunov", "dist_theta0", "err_signal", "err_obs",
)


@dataclass
class RunResult:
    records: list[tuple]
    state: OptimState
    status: str
    snapshot_items: list[tuple[int, np.ndarray]] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return self.state.tau

    @property
    def theta_snapshots(self) -> list[np.ndarray]:
        return [theta for _, theta in self.snapshot_items]

    def column(self, name: str) -> np.ndarray:
        return np.array([row[TRAJECTORY_COLUMNS.index(name)] for row in self.records])


def run_objective(
    objective,
    theta0: np.ndarray,
    config: OptimizerConfig,
    noise_norm: float = 0.0,
    record: bool = True,
    snapshot_every: int = 0,
    snapshot_at: set[int] | None = None,
) -> RunResult:
    """Iterate until the loss threshold, the noise-level early stop
    sqrt(2 L_tau) <= ||noise||, divergence, or max_iters.

    status is one of {converged, early_stopped, diverged, max_iters}.
    Parameter snapshots are kept every snapshot_every iterations and/or at the
    explicit iteration numbers in snapshot_at.
    """
    lyap = DiscreteLyapunov.from_config(config)
    state = init_state(objective, theta0)
    theta0 = state.theta
    records: list[tuple] = []
    snapshots: list[tuple[int, np.ndarray]] = []

    def record_row(st: OptimState):
        if not record:
            return
        err_signal, err_obs = (
            objective.observables(st.theta)
            if hasattr(objective, "observables")
            else (math.nan, math.nan)
        )
        records.append((
            st.tau,
            config.s0 if st.tau == 0 else st.s,
            st.backtrack_count,
            st.loss,
            float(np.linalg.norm(st.grad)),
            st.v_norm,
            lyap.value(st.loss, st.v_norm),
            float(np.linalg.norm(st.theta - theta0)),
            err_signal,
            err_obs,
        ))

    def want_snapshot(tau: int) -> bool:
        if snapshot_every and tau % snapshot_every == 0:
            return True
        return snapshot_at is not None and tau in snapshot_at

    record_row(state)
    if want_snapshot(0):
        snapshots.append((0, state.theta.copy()))
    status = "max_iters"
    while True:
        if state.loss <= config.stop_loss_threshold:
            status = "converged"
            break
        if (
            config.early_stop_on_noise
            and noise_norm > 0.0
            and math.sqrt(2.0 * state.loss) <= noise_norm
        ):
            status = "early_stopped"
            break
        if not math.isfinite(state.loss) or state.loss > DIVERGENCE_LOSS:
            status = "diverged"
            break
        if state.tau >= config.max_iters:
            break
        try:
            state = step(state, objective, config)
        except EvaluationError:
            status = "diverged"
            break
        record_row(state)
        if want_snapshot(state.tau):
            snapshots.append((state.tau, state.theta.copy()))
    return RunResult(records=records, state=state, status=status, snapshot_items=snapshots)


def run(
    net: DipNetwork,
    problem: InverseProblem,
    config: OptimizerConfig,
    theta0: np.ndarray | None = None,
    record: bool = True,
    snapshot_every: int = 0,
    snapshot_at: set[int] | None = None,
) -> RunResult:
    """Train the network on the problem from theta0 (default: net.theta0)."""
    objective = TrainingObjective(net, problem)
    start = net.theta0 if theta0 is None else theta0
    return run_objective(
        objective,
        start,
        config,
        noise_norm=problem.noise_norm,
        record=record,
        snapshot_every=snapshot_every,
        snapshot_at=snapshot_at,
    )


@dataclass(frozen=True)
class DiscreteRateReport:
    """Certificate constants of the linear-rate guarantee for the scheme.

    sigma is sigmin(J0) * sigmin(A) / sqrt(2).  The predicted bounds read
    loss_tau <= loss_bound_prefactor * rate_base^tau and
    ||theta_tau - theta_inf|| <= r_prime * rate_base^(tau/2); they are
    meaningful only when certificate_valid (s0 >= 1 and
    0 < 2*delta2 < (1 - delta/2)/s0).
    """

    delta1: float
    delta2: float
    sigma: float
    s_min: float
    r_prime: float
    rate_rho: float
    rate_base: float
    loss_bound_prefactor: float
    valid_s0: bool
    valid_damping: bool

    @property
    def certificate_valid(self) -> bool:
        return self.valid_s0 and self.valid_damping

    def loss_bound(self, tau: np.ndarray | float) -> np.ndarray | float:
        return self.loss_bound_prefactor * self.rate_base**np.asarray(tau, dtype=np.float64)


def rate_constants_discrete(
    config: OptimizerConfig,
    sigmin_j0: float,
    sigmin_a: float,
    s_min: float,
    loss0: float = 1.0,
) -> DiscreteRateReport:
    """Evaluate the discrete-rate certificate at a given realized minimum step.

    s_min is an infimum over the run: pass s0 for the optimistic a-priori
    report and the realized min step for the a-posteriori one.  Degenerate
    inputs (delta2 = 0 from alpha = beta = 0, or violated damping) yield an
    invalid report with infinite radius/rate, still fully populated.
    """
    if sigmin_j0 <= 0 or sigmin_a <= 0 or s_min <= 0:
        raise ValueError("sigmin_j0, sigmin_a and s_min must be positive")
    lyap = DiscreteLyapunov.from_config(config)
    delta1, delta2 = lyap.delta1, lyap.delta2
    sigma = sigmin_j0 * sigmin_a / math.sqrt(2.0)
    valid_s0 = config.s0 >= 1.0
    valid_damping = 0.0 < 2.0 * delta2 < (1.0 - config.delta / 2.0) / config.s0
    shrink = 1.0 - 2.0 * config.s0 * delta2
    if delta2 > 0.0 and delta1 > 0.0 and shrink > 0.0:
        r_prime = (
            math.sqrt(2.0)
            / (delta1 * shrink)
            * (2.0 / (s_min * sigma) + 1.0 / (math.sqrt(delta2) * config.s0))
            * math.sqrt(loss0)
        )
        rate_rho = (
            8.0
            / (delta1 * shrink)
            * (1.0 / (s_min * sigma) + 1.0 / (2.0 * math.sqrt(delta2) * config.s0)) ** 2
        )
    else:
        r_prime = math.inf
        rate_rho = math.inf
    rate_base = rate_rho / (1.0 + rate_rho) if math.isfinite(rate_rho) else 1.0
    prefactor = (
        config.delta * r_prime**2 / (2.0 * s_min) if math.isfinite(r_prime) else math.inf
    )
    return DiscreteRateReport(
        delta1=delta1,
        delta2=delta2,
        sigma=sigma,
        s_min=s_min,
        r_prime=r_prime,
        rate_rho=rate_rho,
        rate_base=rate_base,
        loss_bound_prefactor=prefactor,
        valid_s0=valid_s0,
        valid_damping=valid_damping,
    )


def verify_conditions(
    objective: Objective,
    thetas: Sequence[np.ndarray],
    steps: Sequence[float],
    config: OptimizerConfig,
    rel_slack: float = 1e-12,
) -> bool:
    """Re-check (C1) and (C2) post hoc on a recorded iterate sequence."""
    for tau in range(len(thetas) - 1):
        loss, grad = objective.loss_grad(thetas[tau])
        loss_plus, grad_plus = objective.loss_grad(thetas[tau + 1])
        dtheta = thetas[tau + 1] - thetas[tau]
        nd = float(np.linalg.norm(dtheta))
        if nd == 0.0:
            continue
        s = steps[tau + 1]
        slack = rel_slack * max(1.0, abs(loss))
        if loss_plus - loss - float(grad @ dtheta) > config.delta / (2 * s) * nd**2 + slack:
            return False
        if float(np.linalg.norm(grad_plus - grad)) > config.delta / s * nd + slack:
            return False
    return True
