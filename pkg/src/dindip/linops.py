"""Linear forward operators and inverse-problem instances.

An inverse problem is an observation ``y = A x_true + noise`` for a linear
forward operator ``A``.  Operators are exposed through a matvec/adjoint
interface so that structured operators (circular blur on a grid) never have
to be materialized densely outside of test oracles.  Every operator knows how
to produce its full singular spectrum through a structure-aware path, which
feeds the condition-number certificates used elsewhere in the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# A singular value counts as nonzero when it exceeds RANK_REL_TOL * sigma_max.
RANK_REL_TOL = 1e-12


@dataclass(frozen=True)
class SpectralSummary:
    """Largest/smallest nonzero singular values, numerical rank, condition number."""

    sigma_max: float
    sigma_min_nz: float
    rank: int
    kappa: float


class LinearOperator:
    """Base class: a real linear map R^n -> R^m with an exact adjoint."""

    kind = "abstract"

    def __init__(self, m: int, n: int):
        if m < 1 or n < 1:
            raise ValueError(f"operator dimensions must be positive, got {m}x{n}")
        self.m = m
        self.n = n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.n)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, z: np.ndarray) -> np.ndarray:
        """Apply the transpose A^T to z."""
        raise NotImplementedError

    def singular_values(self) -> np.ndarray:
        """All m-or-n singular values, descending, via the structure-aware path."""
        raise NotImplementedError

    def densify(self) -> np.ndarray:
        """Materialize the m x n matrix.  Test oracle / debugging only."""
        out = np.empty((self.m, self.n))
        e = np.zeros(self.n)
        for j in range(self.n):
            e[j] = 1.0
            out[:, j] = self.matvec(e)
            e[j] = 0.0
        return out

    def dump_csv(self, path) -> None:
        """Write the densified matrix as CSV (debugging aid)."""
        mat = self.densify()
        with open(path, "w", newline="\n") as fh:
            for row in mat:
                fh.write(",".join(format(v, ".17g") for v in row) + "\n")


class DenseOperator(LinearOperator):
    kind = "dense-matrix"

    def __init__(self, mat: np.ndarray):
        mat = np.asarray(mat, dtype=np.float64)
        if mat.ndim != 2:
            raise ValueError("dense operator needs a 2-D array")
        super().__init__(*mat.shape)
        self.mat = mat

    def matvec(self, x):
        return self.mat @ x

    def adjoint(self, z):
        return self.mat.T @ z

    def singular_values(self):
        return np.linalg.svd(self.mat, compute_uv=False)

    def densify(self):
        return self.mat.copy()


class IdentityOperator(LinearOperator):
    kind = "identity"

    def __init__(self, n: int):
        super().__init__(n, n)

    def matvec(self, x):
        return np.asarray(x, dtype=np.float64).copy()

    def adjoint(self, z):
        return np.asarray(z, dtype=np.float64).copy()

    def singular_values(self):
        return np.ones(self.n)

    def densify(self):
        return np.eye(self.n)


class GaussianBlurOperator(LinearOperator):
    """Circular 2-D Gaussian convolution on a side x side grid (n = m = side^2).

    The blur is defined by its transfer function exp(-2 pi^2 std^2 |f|^2)
    sampled at the grid's DFT frequencies, i.e. circular convolution with the
    periodized band-limited Gaussian kernel (the spatial kernel is the inverse
    DFT of the transfer and sums to exactly 1).  The operator is a symmetric
    circulant; its singular values are the transfer magnitudes, with the
    analytic minimum exp(-pi^2 std^2) on even grids (about 5e-5 for std = 1).
    """

    kind = "circular-gaussian-blur"

    def __init__(self, side: int, kernel_std: float):
        if side < 2:
            raise ValueError("blur grid side must be >= 2")
        if kernel_std <= 0:
            raise ValueError("kernel_std must be positive")
        super().__init__(side * side, side * side)
        self.side = side
        self.kernel_std = kernel_std
        scale = -2.0 * np.pi**2 * kernel_std**2
        full = np.fft.fftfreq(side)
        half = np.fft.rfftfreq(side)
        self._transfer = np.exp(scale * (full[:, None] ** 2 + full[None, :] ** 2))
        self._transfer_r = np.exp(scale * (full[:, None] ** 2 + half[None, :] ** 2))

    @property
    def kernel(self) -> np.ndarray:
        """Spatial convolution kernel (inverse DFT of the transfer)."""
        return np.fft.irfft2(self._transfer_r, s=(self.side, self.side))

    def matvec(self, x):
        img = np.asarray(x, dtype=np.float64).reshape(self.side, self.side)
        out = np.fft.irfft2(np.fft.rfft2(img) * self._transfer_r, s=img.shape)
        return out.ravel()

    def adjoint(self, z):
        # real even transfer means a symmetric circulant, so A^T = A
        return self.matvec(z)

    def singular_values(self):
        return np.sort(np.abs(self._transfer).ravel())[::-1]


class SvdComposedOperator(LinearOperator):
    """Square operator built as U diag(d) V^T from stored orthonormal factors."""

    kind = "svd-composed"

    def __init__(self, u: np.ndarray, d: np.ndarray, vt: np.ndarray):
        u = np.asarray(u, dtype=np.float64)
        d = np.asarray(d, dtype=np.float64)
        vt = np.asarray(vt, dtype=np.float64)
        n = d.shape[0]
        if u.shape != (n, n) or vt.shape != (n, n):
            raise ValueError("factor shapes inconsistent with diagonal length")
        super().__init__(n, n)
        self.u = u
        self.d = d
        self.vt = vt

    def matvec(self, x):
        return self.u @ (self.d * (self.vt @ x))

    def adjoint(self, z):
        return self.vt.T @ (self.d * (self.u.T @ z))

    def singular_values(self):
        return np.sort(np.abs(self.d))[::-1]


def spectral_summary(op: LinearOperator, rel_tol: float = RANK_REL_TOL) -> SpectralSummary:
    """Summarize the nonzero part of the spectrum.

    ``sigma_min_nz`` is the smallest singular value above ``rel_tol * sigma_max``
    and ``rank`` counts the values above that threshold.  Raises on an operator
    with no nonzero singular value.
    """
    svals = op.singular_values()
    sigma_max = float(svals[0])
    if sigma_max <= 0.0:
        raise ValueError("rank-zero operator")
    keep = svals > rel_tol * sigma_max
    rank = int(np.count_nonzero(keep))
    sigma_min_nz = float(svals[keep][-1])
    return SpectralSummary(
        sigma_max=sigma_max,
        sigma_min_nz=sigma_min_nz,
        rank=rank,
        kappa=sigma_max / sigma_min_nz,
    )


@dataclass(frozen=True)
class InverseProblem:
    """Forward operator, ground truth, noise, and the derived observation.

    ``y`` is always constructed as ``op.matvec(x_true) + noise`` (bitwise; it is
    never stored independently of that identity) and ``snr = ||A x_true|| / ||noise||``
    with ``inf`` for the noiseless case.
    """

    op: LinearOperator
    x_true: np.ndarray
    noise: np.ndarray
    y: np.ndarray = field(init=False)
    snr: float = field(init=False)

    def __post_init__(self):
        x = np.asarray(self.x_true, dtype=np.float64)
        eps = np.asarray(self.noise, dtype=np.float64)
        if x.shape != (self.op.n,):
            raise ValueError(f"x_true must have shape ({self.op.n},), got {x.shape}")
        if eps.shape != (self.op.m,):
            raise ValueError(f"noise must have shape ({self.op.m},), got {eps.shape}")
        y_clean = self.op.matvec(x)
        object.__setattr__(self, "x_true", x)
        object.__setattr__(self, "noise", eps)
        object.__setattr__(self, "y", y_clean + eps)
        eps_norm = float(np.linalg.norm(eps))
        snr = np.inf if eps_norm == 0.0 else float(np.linalg.norm(y_clean)) / eps_norm
        object.__setattr__(self, "snr", snr)

    @property
    def y_clean(self) -> np.ndarray:
        """The noiseless observation A x_true."""
        return self.y - self.noise

    @property
    def noise_norm(self) -> float:
        return float(np.linalg.norm(self.noise))


def haar_orthonormal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthonormal matrix (QR of a Gaussian with sign fix)."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def make_gaussian_problem(
    n: int,
    m: int,
    seed: int,
    noise_std: float = 0.0,
    target_snr: float | None = None,
) -> InverseProblem:
    """Random dense instance: A has iid N(0, 1/n) entries, x_true iid N(0, 1).

    The entry scale 1/sqrt(n) concentrates the nonzero singular values of A
    around 1.  Default is noiseless; ``noise_std`` draws iid Gaussian noise and
    ``target_snr`` instead rescales a Gaussian direction so that
    ``||A x_true|| / ||noise||`` equals the target exactly.
    Deterministic for a fixed seed (draw order: A, x_true, noise).
    """
    if n < 1 or m < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    a = rng.standard_normal((m, n)) / np.sqrt(n)
    x_true = rng.standard_normal(n)
    op = DenseOperator(a)
    if target_snr is not None:
        direction = rng.standard_normal(m)
        scale = np.linalg.norm(op.matvec(x_true)) / (target_snr * np.linalg.norm(direction))
        noise = direction * scale
    elif noise_std > 0.0:
        noise = rng.standard_normal(m) * noise_std
    else:
        noise = np.zeros(m)
    return InverseProblem(op=op, x_true=x_true, noise=noise)


def make_blur_operator(side: int, kernel_std: float) -> GaussianBlurOperator:
    return GaussianBlurOperator(side, kernel_std)


def make_wellcond_operator(
    n: int, seed: int, diag: np.ndarray | None = None
) -> SvdComposedOperator:
    """U diag(d) V^T with Haar orthonormal U, V and d uniform in [1, 2].

    kappa <= 2 by construction; the operator is square and invertible.  An
    explicit ``diag`` overrides the uniform draw (e.g. all-ones for an exactly
    orthonormal operator).
    """
    if n < 1:
        raise ValueError("dimension must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    u = haar_orthonormal(n, rng)
    vt = haar_orthonormal(n, rng)
    d = rng.uniform(1.0, 2.0, n) if diag is None else np.asarray(diag, dtype=np.float64)
    return SvdComposedOperator(u=u, d=d, vt=vt)
