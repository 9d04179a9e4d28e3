"""Certificates and predicted rates for the continuous inertial dynamic.

With the damping choice alpha* = sigmin(J0) sigmin(A), beta* = 1/(2 alpha*),
the loss is guaranteed to decay like xi L0 exp(-alpha* t / 2) provided the
initialization satisfies sigmin(J0) > 0 and R' < R, where

    xi = 1 + kappa(J0)^2 kappa(A)^2 / 4,
    eta = 4 max(alpha*, (1 + sqrt(2))/2) / min(alpha*^2, 3/4),
    R'  = eta sqrt(xi L0),
    R   = sigmin(J0) / (2 Lip_{B(theta0, R)}(J)).

R is defined implicitly (the Lipschitz constant is taken over the ball of
radius R itself); instantiating the analytic bound
Lip <= 2B(1 + nD + R)/sqrt(k) turns that into a quadratic whose positive root

    R = ( -(1 + nD) + sqrt((1 + nD)^2 + sigmin(J0) sqrt(k) / B) ) / 2

is what the certificate stores.  Inside the certified ball the Jacobian keeps
sigmin(J(theta)) >= sigmin(J0)/2, which is what check_certified_ball re-verifies
on recorded trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dipnet
from .dipnet import D_INIT_BOUND, ActivationSpec, DipNetwork, activation
from .linops import InverseProblem, spectral_summary


@dataclass(frozen=True)
class Certificate:
    sigmin_j0: float
    sigmax_j0: float
    kappa_j0: float
    sigmin_a: float
    kappa_a: float
    alpha_star: float
    beta_star: float
    xi: float
    eta: float
    R: float
    R_prime: float
    t_star: float
    noiseless: bool
    init_ok: bool
    loss0: float

    def as_dict(self) -> dict:
        return {
            "sigmin_j0": self.sigmin_j0,
            "sigmax_j0": self.sigmax_j0,
            "kappa_j0": self.kappa_j0,
            "sigmin_a": self.sigmin_a,
            "kappa_a": self.kappa_a,
            "alpha_star": self.alpha_star,
            "beta_star": self.beta_star,
            "xi": self.xi,
            "eta": self.eta,
            "R": self.R,
            "R_prime": self.R_prime,
            "t_star": self.t_star,
            "noiseless": self.noiseless,
            "init_ok": self.init_ok,
            "loss0": self.loss0,
        }


def certified_eta(sigmin_j0: float, sigmin_a: float) -> float:
    """eta at the certified damping choice, written directly in sigmin(J0) sigmin(A)."""
    sigsig = sigmin_j0 * sigmin_a
    return 4.0 * max(sigsig, (1.0 + math.sqrt(2.0)) / 2.0) / min(sigsig**2, 0.75)


def general_eta(alpha: float, beta: float, sigmin_j0: float, sigmin_a: float) -> float:
    """eta = 2 max(1, beta + 1/(sqrt(2) sigmin(J0) sigmin(A))) / min(alpha/2, beta(1 - beta alpha/2)).

    Valid for alpha > 0 and 0 < beta < 2/alpha; at the certified damping pair it
    reproduces certified_eta exactly.
    """
    if alpha <= 0.0:
        raise ValueError("general eta requires alpha > 0")
    if beta <= 0.0 or beta >= 2.0 / alpha:
        raise ValueError("damping condition violated: need 0 < beta < 2/alpha")
    num = 2.0 * max(1.0, beta + 1.0 / (math.sqrt(2.0) * sigmin_j0 * sigmin_a))
    den = min(alpha / 2.0, beta * (1.0 - beta * alpha / 2.0))
    return num / den


def ball_radius(sigmin_j0: float, k: int, n: int, b: float, d_bound: float = D_INIT_BOUND) -> float:
    """Positive root of R * (2B(1 + nD + R)/sqrt(k)) = sigmin(J0)/2."""
    c = 1.0 + n * d_bound
    return 0.5 * (-c + math.sqrt(c * c + sigmin_j0 * math.sqrt(k) / b))


def certificate_from_quantities(
    sigmin_j0: float,
    sigmax_j0: float,
    sigmin_a: float,
    sigmax_a: float,
    loss0: float,
    eps_norm: float,
    k: int,
    n: int,
    b: float,
    d_bound: float = D_INIT_BOUND,
) -> Certificate:
    """Assemble the certificate from measured spectra; pure formula evaluation."""
    kappa_j0 = sigmax_j0 / sigmin_j0 if sigmin_j0 > 0 else math.inf
    kappa_a = sigmax_a / sigmin_a
    if sigmin_j0 > 0.0:
        sigsig = sigmin_j0 * sigmin_a
        alpha_star = sigsig
        beta_star = 1.0 / (2.0 * sigsig)
        xi = 1.0 + (kappa_j0 * kappa_a) ** 2 / 4.0
        eta = certified_eta(sigmin_j0, sigmin_a)
        r_prime = eta * math.sqrt(xi * loss0)
        radius = ball_radius(sigmin_j0, k, n, b, d_bound)
        if eps_norm > 0.0:
            t_star = max(0.0, 4.0 / sigsig * math.log(math.sqrt(2.0 * xi * loss0) / eps_norm))
            noiseless = False
        else:
            t_star = math.inf
            noiseless = True
        init_ok = r_prime < radius
    else:
        alpha_star = beta_star = xi = eta = r_prime = radius = math.nan
        t_star = math.nan
        noiseless = eps_norm == 0.0
        init_ok = False
    return Certificate(
        sigmin_j0=sigmin_j0,
        sigmax_j0=sigmax_j0,
        kappa_j0=kappa_j0,
        sigmin_a=sigmin_a,
        kappa_a=kappa_a,
        alpha_star=alpha_star,
        beta_star=beta_star,
        xi=xi,
        eta=eta,
        R=radius,
        R_prime=r_prime,
        t_star=t_star,
        noiseless=noiseless,
        init_ok=init_ok,
        loss0=loss0,
    )


def certify_continuous(
    net: DipNetwork, theta0: np.ndarray, problem: InverseProblem
) -> Certificate:
    """Measure sigma(J0), sigma(A), L0 on the instance and evaluate the certificate."""
    sigmin_j0, sigmax_j0 = dipnet.sigma_interval_jacobian(net, theta0)
    summary = spectral_summary(problem.op)
    loss0, _ = dipnet.loss_and_grad(net, theta0, problem)
    return certificate_from_quantities(
        sigmin_j0=sigmin_j0,
        sigmax_j0=sigmax_j0,
        sigmin_a=summary.sigma_min_nz,
        sigmax_a=summary.sigma_max,
        loss0=loss0,
        eps_norm=problem.noise_norm,
        k=net.k,
        n=net.n,
        b=net.act.B,
    )


@dataclass(frozen=True)
class RatePrediction:
    """Coefficients of the certified decay bounds.

    loss:  L(t)                 <= loss_prefactor  * exp(-loss_exponent  t)
    theta: ||theta(t)-theta_inf|| <= theta_prefactor * exp(-theta_exponent t)
    y:     ||y(t)-y_clean||     <= y_opt_coeff * exp(-theta_exponent t) + noise_norm

    The signal-space bound's conic singular value and modeling terms are not
    computed; only the optimization and noise coefficients are reported.
    """

    loss_prefactor: float
    loss_exponent: float
    theta_prefactor: float
    theta_exponent: float
    y_opt_coeff: float
    noise_norm: float
    x_conic_term: str = "not computed"
    x_modeling_term: str = "not computed"

    def loss_bound(self, t):
        return self.loss_prefactor * np.exp(-self.loss_exponent * np.asarray(t, dtype=np.float64))

    def theta_bound(self, t):
        return self.theta_prefactor * np.exp(-self.theta_exponent * np.asarray(t, dtype=np.float64))


def rate_prediction(cert: Certificate, eps_norm: float = 0.0) -> RatePrediction:
    sigsig = cert.sigmin_j0 * cert.sigmin_a
    return RatePrediction(
        loss_prefactor=cert.xi * cert.loss0,
        loss_exponent=sigsig / 2.0,
        theta_prefactor=cert.R_prime,
        theta_exponent=sigsig / 4.0,  # half the loss exponent
        y_opt_coeff=math.sqrt(2.0 * cert.xi * cert.loss0),
        noise_norm=eps_norm,
    )


@dataclass
class CertifiedBallReport:
    """Per-snapshot check that iterates stayed in the certified ball and the
    Jacobian kept sigmin(J) >= sigmin(J0)/2."""

    dists: np.ndarray
    sigmins: np.ndarray
    r_prime: float
    sigmin_floor: float

    @property
    def max_dist(self) -> float:
        return float(self.dists.max())

    @property
    def min_sigmin(self) -> float:
        return float(self.sigmins.min())

    @property
    def dist_ok(self) -> np.ndarray:
        return self.dists <= self.r_prime

    @property
    def sigmin_ok(self) -> np.ndarray:
        return self.sigmins >= self.sigmin_floor

    @property
    def all_ok(self) -> bool:
        return bool(self.dist_ok.all() and self.sigmin_ok.all())


def check_certified_ball(thetas, net: DipNetwork, cert: Certificate,
                         theta0: np.ndarray | None = None) -> CertifiedBallReport:
    """Evaluate ||theta - theta0|| against R' and sigmin(J(theta)) against
    sigmin(J0)/2 over recorded parameter snapshots.  Reports, never asserts."""
    theta0 = net.theta0 if theta0 is None else np.asarray(theta0, dtype=np.float64)
    dists = np.array([float(np.linalg.norm(th - theta0)) for th in thetas])
    sigmins = np.array([dipnet.sigma_min_jacobian(net, th) for th in thetas])
    return CertifiedBallReport(
        dists=dists,
        sigmins=sigmins,
        r_prime=cert.R_prime,
        sigmin_floor=cert.sigmin_j0 / 2.0,
    )


@dataclass
class SpectrumStats:
    """Multi-seed initialization statistics against the analytic thresholds.

    The operator-norm threshold instantiates the unspecified absolute constant
    of the bound ||J0|| <= C_phi + B + C sqrt(n/k) as C = 1, for comparison only.
    """

    sigmin_values: np.ndarray
    opnorm_values: np.ndarray
    x0_norms: np.ndarray
    sigmin_threshold: float
    opnorm_threshold: float

    @property
    def frac_sigmin_above(self) -> float:
        return float(np.mean(self.sigmin_values >= self.sigmin_threshold))

    def quantiles(self, qs=(0.1, 0.5, 0.9)) -> dict:
        return {
            "sigmin": np.quantile(self.sigmin_values, qs),
            "opnorm": np.quantile(self.opnorm_values, qs),
            "x0_norm": np.quantile(self.x0_norms, qs),
        }


def init_spectrum_stats(
    k: int, d: int, n: int, act: ActivationSpec | str, n_seeds: int, seed0: int = 0
) -> SpectrumStats:
    """Sample sigmin(J0), ||J0||, ||x0|| over seeds seed0 .. seed0 + n_seeds - 1."""
    if n_seeds < 1:
        raise ValueError("need at least one seed")
    if isinstance(act, str):
        act = activation(act)
    sigmins = np.empty(n_seeds)
    opnorms = np.empty(n_seeds)
    x0s = np.empty(n_seeds)
    for i in range(n_seeds):
        net = dipnet.init_network(k, d, n, act, seed0 + i)
        lo, hi = dipnet.sigma_interval_jacobian(net, net.theta0)
        sigmins[i] = lo
        opnorms[i] = hi
        x0s[i] = float(np.linalg.norm(dipnet.forward(net, net.theta0)))
    threshold = math.sqrt(act.C_phi**2 + act.C_phi_prime**2) / 2.0
    opnorm_threshold = act.C_phi + act.B + math.sqrt(n / k)
    return SpectrumStats(
        sigmin_values=sigmins,
        opnorm_values=opnorms,
        x0_norms=x0s,
        sigmin_threshold=threshold,
        opnorm_threshold=opnorm_threshold,
    )
