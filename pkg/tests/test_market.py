import math

import numpy as np
import pytest

from darkliq.errors import (
    NegativeScalarError,
    NonSymmetricError,
    NotNonnegativeDefiniteError,
    NotPositiveDefiniteError,
)
from darkliq.market import MarketParams, derive, two_asset_params, validate


def single_asset_params(**kw):
    base = dict(n=1, lambda_=[[1.0]], sigma=[[1.0]], alpha=6.0,
                theta=[4.0], horizon_T=1.0)
    base.update(kw)
    return MarketParams(**base)


class TestValidate:
    def test_accepts_reference_single_asset(self):
        assert validate(single_asset_params()).ok

    def test_rejects_indefinite_impact(self):
        p = MarketParams(n=2, lambda_=[[1, 2], [2, 1]], sigma=np.eye(2),
                         alpha=1.0, theta=[1, 1], horizon_T=1.0)
        res = validate(p)
        assert not res.ok
        assert isinstance(res.error, NotPositiveDefiniteError)
        with pytest.raises(NotPositiveDefiniteError):
            res.raise_if_invalid()

    def test_accepts_zero_covariance_zero_alpha(self):
        p = MarketParams(n=2, lambda_=np.eye(2), sigma=np.zeros((2, 2)),
                         alpha=0.0, theta=[0, 0], horizon_T=1.0)
        assert validate(p).ok

    def test_rejects_asymmetric_sigma(self):
        p = MarketParams(n=2, lambda_=np.eye(2),
                         sigma=[[1.0, 0.2], [0.1, 1.0]],
                         alpha=1.0, theta=[1, 1], horizon_T=1.0)
        res = validate(p)
        assert not res.ok
        assert isinstance(res.error, NonSymmetricError)
        assert res.error.witness > 0

    def test_rejects_indefinite_sigma(self):
        p = MarketParams(n=2, lambda_=np.eye(2), sigma=[[1, 2], [2, 1]],
                         alpha=1.0, theta=[1, 1], horizon_T=1.0)
        assert isinstance(validate(p).error, NotNonnegativeDefiniteError)

    @pytest.mark.parametrize("kw", [dict(alpha=-1.0), dict(theta=[-0.1]),
                                    dict(horizon_T=0.0)])
    def test_rejects_bad_scalars(self, kw):
        res = validate(single_asset_params(**kw))
        assert not res.ok
        assert isinstance(res.error, NegativeScalarError)


class TestDerive:
    def test_reference_threshold(self):
        # theta = 4, alpha*Sigma = 6: l0 = max(sqrt(4+6)-2, sqrt(6)) = sqrt(6)
        d = derive(single_asset_params())
        assert d.l0 == pytest.approx(math.sqrt(6.0), rel=1e-14)
        assert d.theta_sum == 4.0

    def test_diagonal_eigen_extremes(self):
        p = two_asset_params(3.0, 0.2, 1.0, 1.0, 0.0, 1.0, (1, 1), 1.0)
        d = derive(p)
        assert d.lambda_min == pytest.approx(0.2)
        assert d.lambda_max == pytest.approx(3.0)

    def test_sqrt_inverse_correctness(self):
        rng = np.random.default_rng(3)
        b = rng.standard_normal((4, 4))
        lam = b.T @ b + 0.1 * np.eye(4)
        p = MarketParams(n=4, lambda_=lam, sigma=np.eye(4), alpha=1.0,
                         theta=np.ones(4), horizon_T=1.0)
        d = derive(p)
        ident = d.sqrt_lambda_inv @ lam @ d.sqrt_lambda_inv
        assert np.allclose(ident, np.eye(4), rtol=0, atol=1e-12 * 4)

    def test_scale_consistency(self):
        p1 = two_asset_params(2.0, 0.5, 1.0, 2.0, 0.3, 1.5, (1, 2), 1.0)
        d1 = derive(p1)
        c = 3.7
        p2 = MarketParams(n=2, lambda_=p1.lambda_, sigma=c * p1.sigma,
                          alpha=p1.alpha, theta=p1.theta, horizon_T=1.0)
        d2 = derive(p2)
        assert np.allclose(d2.d_matrix, c * d1.d_matrix, rtol=1e-13)

    def test_d_matrix_nonnegative_and_ordered(self):
        d = derive(two_asset_params(1.0, 2.0, 1.0, 0.5, -0.8, 2.0,
                                    (0, 3), 1.0))
        assert 0.0 <= d.d_min <= d.d_max
        assert 0.0 < d.lambda_min <= d.lambda_max
        assert d.l0 >= 0.0

    def test_immutability(self):
        p = single_asset_params()
        with pytest.raises(ValueError):
            p.lambda_[0, 0] = 2.0
        d = derive(p)
        with pytest.raises(ValueError):
            d.d_matrix[0, 0] = 5.0


class TestTwoAssetConstructor:
    def test_correlation_enters_off_diagonal(self):
        p = two_asset_params(1.0, 1.0, 2.0, 3.0, 0.5, 1.0, (1, 1), 1.0)
        assert p.sigma[0, 1] == pytest.approx(0.5 * 2.0 * 3.0)
        assert p.sigma[0, 0] == pytest.approx(4.0)

    def test_cross_impact_off_diagonal(self):
        p = two_asset_params(1.0, 1.0, 1.0, 1.0, 0.2, 1.0, (1, 1), 1.0,
                             lambda12=0.3)
        assert p.lambda_[0, 1] == 0.3
        assert validate(p).ok
