"""Market parameters, validation and derived spectral quantities.

The trading cost model is driven by a positive definite price impact
matrix, a nonnegative definite covariance matrix, a risk aversion
scalar, per-asset dark-pool execution intensities and a finite horizon.
Everything downstream (bounds, solver, simulator) consumes the derived
quantities computed here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    NegativeScalarError,
    NonSymmetricError,
    NotNonnegativeDefiniteError,
    NotPositiveDefiniteError,
)

# Relative tolerance for symmetry drift on input matrices.
SYMMETRY_RTOL = 1e-10
# Positive definiteness: smallest eigenvalue must exceed this times the largest.
PD_RTOL = 1e-12


def _as_matrix(a, n):
    m = np.asarray(a, dtype=float)
    if m.shape != (n, n):
        raise ValueError(f"expected {n}x{n} matrix, got shape {m.shape}")
    return m


@dataclass(frozen=True)
class MarketParams:
    """Immutable container for the market model parameters.

    lambda_ is the price impact matrix (currency * time / shares^2),
    sigma the price covariance per unit time, alpha the risk aversion,
    theta the vector of dark-pool execution intensities and horizon_T
    the liquidation horizon.
    """

    n: int
    lambda_: np.ndarray
    sigma: np.ndarray
    alpha: float
    theta: np.ndarray
    horizon_T: float

    def __post_init__(self):
        object.__setattr__(self, "lambda_", _as_matrix(self.lambda_, self.n))
        object.__setattr__(self, "sigma", _as_matrix(self.sigma, self.n))
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        if theta.shape != (self.n,):
            raise ValueError(f"theta must have length {self.n}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "horizon_T", float(self.horizon_T))
        self.lambda_.setflags(write=False)
        self.sigma.setflags(write=False)
        self.theta.setflags(write=False)


@dataclass(frozen=True)
class DerivedQuantities:
    """Spectral quantities derived from validated MarketParams."""

    d_matrix: np.ndarray
    d_min: float
    d_max: float
    lambda_min: float
    lambda_max: float
    theta_sum: float
    l0: float
    sqrt_lambda_inv: np.ndarray = field(repr=False)
    lambda_inv: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.d_matrix.setflags(write=False)
        self.sqrt_lambda_inv.setflags(write=False)
        self.lambda_inv.setflags(write=False)


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    error: Exception | None = None

    def raise_if_invalid(self):
        if not self.ok:
            raise self.error


def _check_symmetric(a, name):
    scale = np.max(np.abs(a)) or 1.0
    drift = np.max(np.abs(a - a.T))
    if drift > SYMMETRY_RTOL * scale:
        raise NonSymmetricError(
            f"{name} is not symmetric: max |A - A^T| = {drift:g} "
            f"(tolerance {SYMMETRY_RTOL:g} relative)",
            field=name,
            witness=drift,
        )


def validate(params: MarketParams) -> ValidationResult:
    """Check the standing assumptions on the market parameters.

    Returns a ValidationResult; on failure the result carries the
    specific error with the violated invariant and a witness value.
    """
    try:
        _check_symmetric(params.lambda_, "lambda")
        _check_symmetric(params.sigma, "sigma")
        lam_eigs = np.linalg.eigvalsh(0.5 * (params.lambda_ + params.lambda_.T))
        if lam_eigs[0] <= PD_RTOL * lam_eigs[-1] or lam_eigs[-1] <= 0.0:
            raise NotPositiveDefiniteError(
                f"lambda is not positive definite: eigenvalues in "
                f"[{lam_eigs[0]:g}, {lam_eigs[-1]:g}]",
                field="lambda",
                witness=lam_eigs[0],
            )
        sig_eigs = np.linalg.eigvalsh(0.5 * (params.sigma + params.sigma.T))
        sig_scale = max(abs(sig_eigs[0]), abs(sig_eigs[-1]), 1e-300)
        if sig_eigs[0] < -PD_RTOL * sig_scale:
            raise NotNonnegativeDefiniteError(
                f"sigma is not nonnegative definite: smallest eigenvalue "
                f"{sig_eigs[0]:g}",
                field="sigma",
                witness=sig_eigs[0],
            )
        if params.alpha < 0.0:
            raise NegativeScalarError("alpha must be >= 0", field="alpha",
                                      witness=params.alpha)
        if np.any(params.theta < 0.0):
            i = int(np.argmin(params.theta))
            raise NegativeScalarError(
                f"theta[{i}] must be >= 0", field=f"theta[{i}]",
                witness=float(params.theta[i]),
            )
        if not params.horizon_T > 0.0:
            raise NegativeScalarError("horizon_T must be > 0", field="horizon_T",
                                      witness=params.horizon_T)
    except (NonSymmetricError, NotPositiveDefiniteError,
            NotNonnegativeDefiniteError, NegativeScalarError) as err:
        return ValidationResult(ok=False, error=err)
    return ValidationResult(ok=True)


def derive(params: MarketParams) -> DerivedQuantities:
    """Compute the spectral quantities every other module consumes.

    The matrix D = sqrt(Lambda^-1) Sigma sqrt(Lambda^-1) is formed with
    the symmetric square root of Lambda^-1 obtained from the
    eigendecomposition of Lambda (n is small; clarity over speed).
    """
    validate(params).raise_if_invalid()
    lam = 0.5 * (params.lambda_ + params.lambda_.T)
    sig = 0.5 * (params.sigma + params.sigma.T)
    eigs, vecs = np.linalg.eigh(lam)
    lambda_min = float(eigs[0])
    lambda_max = float(eigs[-1])
    sqrt_lambda_inv = (vecs / np.sqrt(eigs)) @ vecs.T
    lambda_inv = (vecs / eigs) @ vecs.T
    d_matrix = sqrt_lambda_inv @ sig @ sqrt_lambda_inv
    d_matrix = 0.5 * (d_matrix + d_matrix.T)
    d_eigs = np.linalg.eigvalsh(d_matrix)
    d_min = float(max(d_eigs[0], 0.0))
    d_max = float(max(d_eigs[-1], 0.0))
    theta_sum = float(np.sum(params.theta))
    l0 = max(
        lambda_max * (np.sqrt(theta_sum ** 2 / 4.0 + params.alpha * d_min)
                      - theta_sum / 2.0),
        lambda_min * np.sqrt(params.alpha * d_max),
    )
    return DerivedQuantities(
        d_matrix=d_matrix,
        d_min=d_min,
        d_max=d_max,
        lambda_min=lambda_min,
        lambda_max=lambda_max,
        theta_sum=theta_sum,
        l0=float(l0),
        sqrt_lambda_inv=sqrt_lambda_inv,
        lambda_inv=lambda_inv,
    )


def two_asset_params(lambda1, lambda2, sigma1, sigma2, rho, alpha, theta,
                     horizon_T, lambda12=0.0) -> MarketParams:
    """Convenience constructor for the two-asset correlation studies."""
    lam = np.array([[lambda1, lambda12], [lambda12, lambda2]], dtype=float)
    sig = np.array(
        [[sigma1 ** 2, rho * sigma1 * sigma2],
         [rho * sigma1 * sigma2, sigma2 ** 2]], dtype=float)
    return MarketParams(n=2, lambda_=lam, sigma=sig, alpha=alpha,
                        theta=np.asarray(theta, dtype=float),
                        horizon_T=horizon_T)
