"""Closed-form limiting posteriors.

Under the hierarchical model the infinite-width posterior of the network
output at the training inputs is Gaussian given sigma2 with covariance
sigma2 * M^{-1}, M = I + K'^{-1}, while sigma2 | D is Inverse-Gamma;
marginalizing gives a multivariate Student-t. Test-point predictions use
the equivalent form with (K' + I)^{-1}, linked by M^{-1} = K'(K' + I)^{-1}.
Single-output networks only (n_L = 1).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import gammaln

from .kernels import KernelMatrix

JITTERS = (0.0, 1e-12, 1e-10, 1e-8)


class LinearAlgebraError(RuntimeError):
    pass


def solve_psd(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve A X = B for symmetric PD A, escalating jitter 1e-12 -> 1e-8.

    Raises with a hint to deduplicate inputs if the jitter budget fails.
    """
    A = np.asarray(A, dtype=float)
    scale = max(1.0, float(np.max(np.abs(np.diag(A)))))
    for jit in JITTERS:
        try:
            c = cho_factor(A + jit * scale * np.eye(A.shape[0]), lower=True)
            return cho_solve(c, B)
        except np.linalg.LinAlgError:
            continue
        except ValueError:
            continue
    raise LinearAlgebraError(
        "matrix is singular beyond the jitter budget; "
        "add jitter explicitly or deduplicate near-identical inputs"
    )


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.ravel(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        cov = 0.5 * (cov + cov.T)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


@dataclass(frozen=True)
class IGPosterior:
    shape: float
    rate: float

    def __post_init__(self):
        if self.shape <= 0 or self.rate <= 0:
            raise ValueError("Inverse-Gamma parameters must be strictly positive")

    def mean(self) -> float:
        if self.shape <= 1:
            raise ValueError("mean requires shape > 1")
        return self.rate / (self.shape - 1.0)


@dataclass(frozen=True)
class StudentTPosterior:
    """Multivariate Student-t: dof nu, location mu, scale matrix Sigma."""

    nu: float
    location: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        loc = np.ravel(np.asarray(self.location, dtype=float))
        sc = np.atleast_2d(np.asarray(self.scale, dtype=float))
        sc = 0.5 * (sc + sc.T)
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "scale", sc)

    def mean(self) -> np.ndarray:
        if self.nu <= 1:
            raise ValueError("mean requires nu > 1")
        return self.location

    def covariance(self) -> np.ndarray:
        if self.nu <= 2:
            raise ValueError("covariance requires nu > 2")
        return self.nu / (self.nu - 2.0) * self.scale


def gp_posterior(
    k_train: np.ndarray,
    k_cross: np.ndarray,
    k_test: np.ndarray,
    y: np.ndarray,
    noise_var: float,
) -> GaussianPosterior:
    """GP regression: mean = Kc (Kt + s I)^{-1} y, cov = K* - Kc (...)^{-1} Kc^T."""
    if noise_var <= 0:
        raise ValueError("noise_var must be strictly positive")
    k_train = np.atleast_2d(np.asarray(k_train, dtype=float))
    k_cross = np.atleast_2d(np.asarray(k_cross, dtype=float))
    k_test = np.atleast_2d(np.asarray(k_test, dtype=float))
    y = np.ravel(np.asarray(y, dtype=float))
    A = k_train + noise_var * np.eye(k_train.shape[0])
    sol = solve_psd(A, np.column_stack([y[:, None], k_cross.T]))
    mean = k_cross @ sol[:, 0]
    cov = k_test - k_cross @ sol[:, 1:]
    return GaussianPosterior(mean, cov)


def _m_inverse(kprime_train: np.ndarray) -> np.ndarray:
    """M^{-1} = K'(K' + I)^{-1}, computed without inverting K' itself."""
    k = np.atleast_2d(np.asarray(kprime_train, dtype=float))
    minv = solve_psd(k + np.eye(k.shape[0]), k.T).T
    return 0.5 * (minv + minv.T)


def nig_posterior(
    kprime_train: KernelMatrix | np.ndarray, y: np.ndarray, a: float, b: float
) -> tuple[np.ndarray, GaussianPosterior, IGPosterior]:
    """Joint posterior pieces under the hierarchical model.

    Returns (M, Gaussian given sigma2 with covariance template M^{-1} to be
    scaled by sigma2, and the Inverse-Gamma posterior of sigma2):
    M = I + K'^{-1}; mean = y M^{-1}; sigma2 | D ~ IG(a + k/2,
    b + y (I - M^{-1}) y^T / 2).
    """
    k = kprime_train.train if isinstance(kprime_train, KernelMatrix) else kprime_train
    k = np.atleast_2d(np.asarray(k, dtype=float))
    y = np.ravel(np.asarray(y, dtype=float))
    n = k.shape[0]
    if y.shape[0] != n:
        raise ValueError("y length must match kernel size")
    kinv = solve_psd(k, np.eye(n))
    M = np.eye(n) + 0.5 * (kinv + kinv.T)
    minv = _m_inverse(k)
    mean = minv @ y
    rate = b + 0.5 * float(y @ (y - minv @ y))
    return M, GaussianPosterior(mean, minv), IGPosterior(a + n / 2.0, rate)


def tp_posterior_train(
    kprime_train: KernelMatrix | np.ndarray, y: np.ndarray, a: float, b: float
) -> StudentTPosterior:
    """Marginal Student-t posterior at the training inputs.

    nu = 2a + k, location = y M^{-1},
    scale = (b + y(I - M^{-1})y^T/2) * (2/(2a+k)) * M^{-1}.
    """
    if a <= 0.5:
        warnings.warn(
            f"a={a} <= 1/2: outside the admissible hyperparameter region; "
            "the Student-t posterior may lack a mean",
            stacklevel=2,
        )
    _, gauss, ig = nig_posterior(kprime_train, y, a, b)
    k = gauss.mean.shape[0]
    nu = 2.0 * a + k
    scale = (2.0 * ig.rate / nu) * gauss.cov
    return StudentTPosterior(nu, gauss.mean, scale)


def tp_posterior_predict(
    kprime_full: KernelMatrix, y: np.ndarray, a: float, b: float
) -> StudentTPosterior:
    """Student-t posterior predictive at the test partition.

    location = K'_TD (K'_D + I)^{-1} y;
    scale = beta_post * (2/nu) * [K'_T - K'_TD (K'_D + I)^{-1} K'_DT];
    nu = 2a + k, beta_post = b + y(I - M^{-1})y^T / 2.
    """
    kd = kprime_full.train
    kc = kprime_full.cross
    kt = kprime_full.test
    y = np.ravel(np.asarray(y, dtype=float))
    n = kd.shape[0]
    if y.shape[0] != n:
        raise ValueError("y length must match the train partition")
    if n == 0:
        # no data: the marginal prior t_{2a}(0, (b/a) K'_T)
        return StudentTPosterior(2.0 * a, np.zeros(kt.shape[0]), (b / a) * kt)
    A = kd + np.eye(n)
    sol = solve_psd(A, np.column_stack([y[:, None], kc.T]))
    location = kc @ sol[:, 0]
    schur = kt - kc @ sol[:, 1:]
    minv_y = kd @ sol[:, 0]
    beta_post = b + 0.5 * float(y @ (y - minv_y))
    nu = 2.0 * a + n
    return StudentTPosterior(nu, location, (2.0 * beta_post / nu) * schur)


def marginalize_nig_to_t(
    mu: np.ndarray, lam: np.ndarray, alpha: float, beta: float
) -> StudentTPosterior:
    """z | s ~ N(mu, s Lam), s ~ IG(alpha, beta)  =>  z ~ t_{2alpha}(mu, (beta/alpha) Lam)."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be strictly positive")
    return StudentTPosterior(2.0 * alpha, mu, (beta / alpha) * np.atleast_2d(lam))


def student_t_logpdf(
    x: np.ndarray, nu: float, mu: np.ndarray, sigma: np.ndarray
) -> float:
    """Log density of the k-dimensional Student-t with scale matrix sigma."""
    x = np.ravel(np.asarray(x, dtype=float))
    mu = np.ravel(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    k = x.shape[0]
    if nu <= 0:
        raise ValueError("nu must be positive")
    sign, logdet = np.linalg.slogdet(sigma)
    if sign <= 0:
        raise LinearAlgebraError("scale matrix must be positive definite")
    d = x - mu
    q = float(d @ solve_psd(sigma, d))
    return float(
        gammaln((nu + k) / 2.0)
        - gammaln(nu / 2.0)
        - 0.5 * k * math.log(nu * math.pi)
        - 0.5 * logdet
        - 0.5 * (nu + k) * math.log1p(q / nu)
    )
