"""
Regression Module
=================

Least-squares Monte Carlo estimates of conditional expectations: the
conditional expectation given a sigma-algebra is replaced by the
least-squares projection on a polynomial basis of the generating features.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import linalg

logger = logging.getLogger(__name__)

RIDGE_SCALE = 1e-8


@dataclass(frozen=True)
class PolynomialBasis:
    """All monomials of total degree <= degree, constant first"""
    degree: int = 2

    def exponents(self, num_features: int) -> Tuple[Tuple[int, ...], ...]:
        terms = [()]
        for d in range(1, self.degree + 1):
            terms.extend(itertools.combinations_with_replacement(range(num_features), d))
        return tuple(terms)

    def dim(self, num_features: int) -> int:
        return len(self.exponents(num_features))

    def design(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features[:, None]
        columns = [np.ones(features.shape[0])]
        for term in self.exponents(features.shape[1])[1:]:
            columns.append(np.prod(features[:, list(term)], axis=1))
        return np.column_stack(columns)

    def describe(self) -> dict:
        return {'kind': 'polynomial', 'degree': self.degree}


@dataclass(frozen=True, eq=False)
class ConditionalExpectation:
    """Fitted least-squares regressor of per-path values on features"""
    basis: PolynomialBasis
    active: np.ndarray
    coefficients: np.ndarray
    fitted: np.ndarray
    residual_variance: np.ndarray
    rank: int
    ridge_used: bool

    @property
    def num_outputs(self) -> int:
        return self.coefficients.shape[1]

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Evaluate on new (P, m) features; scalar fits return (P,)"""
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features[:, None]
        values = self.basis.design(features[:, self.active]) @ self.coefficients
        return values[:, 0] if self._scalar else values

    __call__ = predict

    @property
    def _scalar(self) -> bool:
        return self.fitted.ndim == 1


class RegressionDesign:
    """Design matrix on one feature sample, reusable for several targets"""

    def __init__(self, features: np.ndarray, basis: PolynomialBasis = PolynomialBasis()):
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features[:, None]
        self.basis = basis
        self.features = features
        # constant coordinates are dropped from the design
        self.active = np.ptp(features, axis=0) > 0 if features.shape[0] else np.ones(features.shape[1], dtype=bool)
        self.matrix = basis.design(features[:, self.active])

    @property
    def num_samples(self) -> int:
        return self.matrix.shape[0]

    def fit(self, values: np.ndarray) -> ConditionalExpectation:
        values = np.asarray(values, dtype=float)
        scalar = values.ndim == 1
        targets = values[:, None] if scalar else values.reshape(values.shape[0], -1)
        X = self.matrix
        coefficients, _, rank, _ = np.linalg.lstsq(X, targets, rcond=None)
        ridge_used = rank < X.shape[1]
        if ridge_used:
            gram = X.T @ X
            ridge = RIDGE_SCALE * np.trace(gram) / gram.shape[0]
            coefficients = linalg.solve(gram + ridge * np.eye(gram.shape[0]), X.T @ targets, assume_a='pos')
            logger.warning("rank-deficient regression (rank %d of %d), ridge %.3g applied",
                           rank, X.shape[1], ridge)
        fitted = X @ coefficients
        dof = max(X.shape[0] - X.shape[1], 1)
        residual_variance = np.sum((targets - fitted) ** 2, axis=0) / dof
        return ConditionalExpectation(
            basis=self.basis,
            active=self.active,
            coefficients=coefficients,
            fitted=fitted[:, 0] if scalar else fitted,
            residual_variance=residual_variance,
            rank=int(rank),
            ridge_used=bool(ridge_used),
        )


def cond_expectation(values: np.ndarray, features: np.ndarray,
                     basis: PolynomialBasis = PolynomialBasis()) -> ConditionalExpectation:
    """E[values | features] by least squares on basis(features)"""
    return RegressionDesign(features, basis).fit(values)


def gradient_basis(num_features: int, degree: int = 2, max_full_degree_dim: int = 6) -> PolynomialBasis:
    """Regression basis for conditional gradients; affine above the dimension limit"""
    return PolynomialBasis(degree if num_features <= max_full_degree_dim else 1)
