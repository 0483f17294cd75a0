"""
Benchmark Oracles
=================

Independently derived reference values for the benchmark problems:

- riccati_solution / riccati_scalar: LQ Riccati ODE integrated backwards
- lqg_value: x'P(t)x + int_t^T tr(sigma sigma' P) ds
- radner_coefficients: linear team rules from the normal equations
- gaussian_one_step: E(c + g w)^2 = c^2 + g^2
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    """P(t) and the noise offset c(t) for l = x'Qx + u'Ru, phi = x'Fx"""
    horizon: float
    state_dim: int
    gain_matrix: np.ndarray
    dense: Callable

    def _at(self, t: float) -> np.ndarray:
        return np.asarray(self.dense(float(t)), dtype=float)

    def p(self, t: float) -> np.ndarray:
        n = self.state_dim
        return self._at(t)[:n * n].reshape(n, n)

    def offset(self, t: float) -> float:
        return float(self._at(t)[-1])

    def gain(self, t: float) -> np.ndarray:
        """Feedback K(t) with u = K(t) x"""
        return -self.gain_matrix @ self.p(t)

    def value(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.einsum('pi,ij,pj->p', x, self.p(t), x) + self.offset(t)

    def optimal_cost(self, x0: np.ndarray) -> float:
        return float(self.value(0.0, np.atleast_1d(x0))[0])


def riccati_solution(A, B, Q, R, F, sigma, horizon: float) -> RiccatiSolution:
    """Integrate -dP/dt = A'P + PA + Q - P B R^-1 B' P, -dc/dt = tr(sigma sigma' P) from T to 0"""
    A, B, Q, R, F, sigma = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, B, Q, R, F, sigma))
    n = A.shape[0]
    r_inv_bt = np.linalg.solve(R, B.T)
    noise = sigma @ sigma.T

    def rhs(t, y):
        P = y[:n * n].reshape(n, n)
        dP = -(A.T @ P + P @ A + Q - P @ B @ r_inv_bt @ P)
        return np.concatenate([dP.ravel(), [-np.trace(noise @ P)]])

    terminal = np.concatenate([F.ravel(), [0.0]])
    solution = solve_ivp(rhs, (horizon, 0.0), terminal, method='RK45', rtol=1e-10, atol=1e-12, dense_output=True)
    if not solution.success:
        raise RuntimeError(f"Riccati integration failed: {solution.message}")
    return RiccatiSolution(float(horizon), n, r_inv_bt, solution.sol)


def riccati_scalar(a: float = 0.0, b: float = 1.0, q: float = 1.0, r: float = 1.0, f: float = 1.0,
                   s: float = 1.0, horizon: float = 1.0) -> RiccatiSolution:
    return riccati_solution(a, b, q, r, f, s, horizon)


def lqg_value(solution: RiccatiSolution, t: float, x: np.ndarray) -> np.ndarray:
    return solution.value(t, x)


def radner_coefficients(R, S, cov) -> np.ndarray:
    """Coefficients a of u_i = a_i x_i minimising E[u'Ru + 2u'Sx], x ~ N(0, cov)

    Agent i observes coordinate i; the first-order conditions are the linear
    system (R * cov) a = -diag(S cov).
    """
    R, S, cov = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (R, S, cov))
    return np.linalg.solve(R * cov, -np.diag(S @ cov))


def gaussian_one_step(c: float, g: float = 1.0) -> float:
    return float(c ** 2 + g ** 2)
