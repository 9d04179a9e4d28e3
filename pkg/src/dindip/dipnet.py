"""Two-layer deep-inverse-prior generator and its exact derivatives.

The generator maps a fixed random input u on the unit sphere to a signal

    x = (1/sqrt(k)) * V @ phi(W @ u),      W: k x d,  V: n x k,

and both layers are trained.  Parameters are packed into a single vector
theta = [V_1; ...; V_k; W^1; ...; W^k] (V columns first, then W rows), the
order in which the Jacobian blocks

    J(theta) = (1/sqrt(k)) [ phi(W^1 u) I_n ... phi(W^k u) I_n |
                             phi'(W^1 u) V_1 u^T ... phi'(W^k u) V_k u^T ]

are laid out.  The Gram matrix J J^T has the closed form

    (1/k) ( ||phi(W u)||^2 I_n + sum_i phi'(W^i u)^2 V_i V_i^T ),

an n x n matrix, which is how the smallest/largest singular values of J are
computed (O(n^2 p) instead of an SVD of the n x p Jacobian).

Training minimizes the mean-square misfit L(theta) = 0.5 ||A g(u, theta) - y||^2
whose gradient is J(theta)^T A^T (A g(u, theta) - y); the implementation never
forms J for that, costing O(k (n + d)) per evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .linops import InverseProblem

# Bound D on the |entries| of the second-layer initialization: uniform(-sqrt(3), sqrt(3))
# has unit variance, so D = sqrt(3).
D_INIT_BOUND = float(np.sqrt(3.0))

_GH_NODES = 64


class EvaluationError(ValueError):
    """Non-finite values encountered while evaluating the network."""


def _gauss_hermite_second_moment(f: Callable[[np.ndarray], np.ndarray]) -> float:
    """sqrt(E[f(X)^2]) for X ~ N(0,1) by 64-node Gauss-Hermite quadrature."""
    nodes, weights = np.polynomial.hermite.hermgauss(_GH_NODES)
    vals = f(np.sqrt(2.0) * nodes) ** 2
    return float(np.sqrt(np.dot(weights, vals) / np.sqrt(np.pi)))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _sigmoid_prime(x: np.ndarray) -> np.ndarray:
    s = _sigmoid(x)
    return s * (1.0 - s)


@dataclass(frozen=True)
class ActivationSpec:
    """Activation with its derivative bound B and Gaussian second moments.

    B bounds both sup|phi'| and the Lipschitz constant of phi'.  C_phi and
    C_phi_prime are sqrt(E[phi(X)^2]) and sqrt(E[phi'(X)^2]) under X ~ N(0,1).
    """

    kind: str
    B: float
    C_phi: float
    C_phi_prime: float
    phi: Callable[[np.ndarray], np.ndarray]
    dphi: Callable[[np.ndarray], np.ndarray]


def _tanh_prime(x: np.ndarray) -> np.ndarray:
    return 1.0 - np.tanh(x) ** 2


def _identity(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _identity_prime(x: np.ndarray) -> np.ndarray:
    return np.ones_like(x, dtype=np.float64)


def activation(kind: str) -> ActivationSpec:
    """Build the spec for one of {sigmoid, tanh, identity}.

    sup|phi'| and sup|phi''|: sigmoid 1/4 and 1/(6 sqrt(3)), tanh 1 and
    4/(3 sqrt(3)), identity 1 and 0 -- so B = 1/4, 1, 1 respectively covers
    both the derivative bound and the derivative-Lipschitz constant.
    """
    if kind == "sigmoid":
        phi, dphi, b = _sigmoid, _sigmoid_prime, 0.25
    elif kind == "tanh":
        phi, dphi, b = np.tanh, _tanh_prime, 1.0
    elif kind == "identity":
        phi, dphi, b = _identity, _identity_prime, 1.0
    else:
        raise ValueError(f"unknown activation kind {kind!r}")
    return ActivationSpec(
        kind=kind,
        B=b,
        C_phi=_gauss_hermite_second_moment(phi),
        C_phi_prime=_gauss_hermite_second_moment(dphi),
        phi=phi,
        dphi=dphi,
    )


@dataclass(frozen=True)
class DipNetwork:
    """Generator architecture plus its initial weights.

    u lies on the unit sphere S^{d-1}; theta0 = pack(W0, V0) is the packed
    initialization from which training starts.
    """

    k: int
    d: int
    n: int
    u: np.ndarray
    act: ActivationSpec
    w0: np.ndarray
    v0: np.ndarray

    @property
    def p(self) -> int:
        """Parameter count k * (d + n)."""
        return self.k * (self.d + self.n)

    @property
    def theta0(self) -> np.ndarray:
        return pack(self.w0, self.v0)

    def unpack(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return unpack(theta, self.k, self.d, self.n)


def init_network(k: int, d: int, n: int, act: ActivationSpec | str, seed: int) -> DipNetwork:
    """Seeded initialization: u uniform on the sphere, W ~ N(0,1) iid,
    V iid uniform(-sqrt(3), sqrt(3)) (zero mean, unit variance, sqrt(3)-bounded).

    Draw order is fixed (u, W, V) so instances are reproducible per seed.
    """
    if k < 1 or d < 1 or n < 1:
        raise ValueError("network dimensions must be positive")
    if isinstance(act, str):
        act = activation(act)
    rng = np.random.Generator(np.random.Philox(seed))
    g = rng.standard_normal(d)
    if d == 1:
        u = np.array([1.0 if g[0] >= 0 else -1.0])  # unit sphere in 1-D is {+1,-1}
    else:
        u = g / np.linalg.norm(g)
    w0 = rng.standard_normal((k, d))
    v0 = rng.uniform(-D_INIT_BOUND, D_INIT_BOUND, (n, k))
    return DipNetwork(k=k, d=d, n=n, u=u, act=act, w0=w0, v0=v0)


def pack(w: np.ndarray, v: np.ndarray) -> np.ndarray:
    """theta = [V columns, then W rows]; bijective with unpack (bitwise)."""
    w = np.asarray(w, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if w.ndim != 2 or v.ndim != 2 or w.shape[0] != v.shape[1]:
        raise ValueError(f"inconsistent shapes W {w.shape}, V {v.shape}")
    return np.concatenate([v.ravel(order="F"), w.ravel(order="C")])


def unpack(theta: np.ndarray, k: int, d: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (k * (d + n),):
        raise ValueError(
            f"theta has length {theta.shape}, expected ({k * (d + n)},) for k={k}, d={d}, n={n}"
        )
    v = theta[: k * n].reshape((n, k), order="F")
    w = theta[k * n :].reshape((k, d), order="C")
    return w, v


def _hidden(net: DipNetwork, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    w, v = net.unpack(theta)
    z = w @ net.u
    return v, net.act.phi(z), net.act.dphi(z)


def forward(net: DipNetwork, theta: np.ndarray) -> np.ndarray:
    """x = (1/sqrt(k)) V phi(W u)."""
    v, h, _ = _hidden(net, theta)
    x = (v @ h) / np.sqrt(net.k)
    if not np.all(np.isfinite(x)):
        raise EvaluationError("non-finite network output")
    return x


def jacobian(net: DipNetwork, theta: np.ndarray) -> np.ndarray:
    """Dense n x p Jacobian, column blocks in pack() order."""
    v, h, hp = _hidden(net, theta)
    scale = 1.0 / np.sqrt(net.k)
    jv = np.kron(h[None, :], np.eye(net.n))  # n x kn, block i = phi(W^i u) I_n
    m = v * hp[None, :]  # n x k, column i = phi'(W^i u) V_i
    jw = (m[:, :, None] * net.u[None, None, :]).reshape(net.n, net.k * net.d)
    return scale * np.hstack([jv, jw])


def gram(net: DipNetwork, theta: np.ndarray) -> np.ndarray:
    """J J^T via the closed form; symmetric positive semidefinite."""
    v, h, hp = _hidden(net, theta)
    g = float(h @ h) * np.eye(net.n) + (v * (hp**2)[None, :]) @ v.T
    return g / net.k


def sigma_interval_jacobian(net: DipNetwork, theta: np.ndarray) -> tuple[float, float]:
    """(sigma_min, sigma_max) of J from the eigenvalues of the n x n Gram."""
    eigs = np.linalg.eigvalsh(gram(net, theta))
    return float(np.sqrt(max(eigs[0], 0.0))), float(np.sqrt(max(eigs[-1], 0.0)))


def sigma_min_jacobian(net: DipNetwork, theta: np.ndarray) -> float:
    return sigma_interval_jacobian(net, theta)[0]


def loss_and_grad(
    net: DipNetwork, theta: np.ndarray, problem: InverseProblem
) -> tuple[float, np.ndarray]:
    """MSE misfit 0.5 ||A g - y||^2 and its gradient J^T A^T (A g - y).

    The gradient is assembled from the Jacobian blocks directly:
    V-part (1/sqrt(k)) z h^T with z = A^T r, W-part (1/sqrt(k)) (phi' * V^T z) u^T.
    """
    v, h, hp = _hidden(net, theta)
    scale = 1.0 / np.sqrt(net.k)
    x = scale * (v @ h)
    r = problem.op.matvec(x) - problem.y
    loss = 0.5 * float(r @ r)
    if not np.isfinite(loss):
        raise EvaluationError("non-finite loss")
    z = problem.op.adjoint(r)
    gv = scale * np.outer(z, h)  # n x k
    gw = scale * np.outer(hp * (v.T @ z), net.u)  # k x d
    return loss, pack(gw, gv)


def jacobian_lipschitz_bound(net: DipNetwork, rho: float, d_bound: float = D_INIT_BOUND) -> float:
    """Bound 2 B (1 + n D + rho) / sqrt(k) on the Jacobian's Lipschitz constant
    over the ball of radius rho around the initialization."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    return 2.0 * net.act.B * (1.0 + net.n * d_bound + rho) / np.sqrt(net.k)


class TrainingObjective:
    """Bundles a network and a problem into the theta -> (loss, grad) map the
    optimizers consume, plus the diagnostics recorded along trajectories."""

    def __init__(self, net: DipNetwork, problem: InverseProblem):
        self.net = net
        self.problem = problem

    def loss_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        return loss_and_grad(self.net, theta, self.problem)

    def observables(self, theta: np.ndarray) -> tuple[float, float]:
        """(err_signal, err_obs) = (||x - x_true||, ||A x - A x_true||)."""
        x = forward(self.net, theta)
        err_signal = float(np.linalg.norm(x - self.problem.x_true))
        err_obs = float(np.linalg.norm(self.problem.op.matvec(x) - self.problem.y_clean))
        return err_signal, err_obs
