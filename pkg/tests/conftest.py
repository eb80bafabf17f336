import numpy as np
import pytest

from coupled_smoother.models import Ar1Params, generate_data, make_ar1


@pytest.fixture(scope="session")
def ar1():
    return make_ar1(Ar1Params())


@pytest.fixture(scope="session")
def ar1_t10(ar1):
    _, obs = generate_data(ar1, 10, seed=1)
    return obs


@pytest.fixture(scope="session")
def ar1_t3(ar1):
    _, obs = generate_data(ar1, 3, seed=1)
    return obs


def dense_gaussian_posterior(A, Q, C, Rm, m0, P0, ys):
    """Scalar-state smoothing means/variances by conditioning the joint Gaussian of
    (x_0..x_T, y_1..y_T) directly; NaN entries of ``ys`` are dropped."""
    T = len(ys)
    n = T + 1
    # x = L e with x_t = A x_{t-1} + noise: build the covariance of x explicitly
    Phi = np.zeros((n, n))
    for t in range(n):
        for s in range(t + 1):
            Phi[t, s] = A ** (t - s)
    D = np.diag([P0] + [Q] * T)
    Sxx = Phi @ D @ Phi.T
    mx = np.array([m0 * A ** t for t in range(n)])
    keep = [t for t in range(T) if not np.isnan(ys[t])]
    if not keep:
        return mx, np.diag(Sxx)
    H = np.zeros((len(keep), n))
    for i, t in enumerate(keep):
        H[i, t + 1] = C
    Syy = H @ Sxx @ H.T + Rm * np.eye(len(keep))
    Sxy = Sxx @ H.T
    y = np.array([ys[t] for t in keep])
    gain = np.linalg.solve(Syy, Sxy.T).T
    mean = mx + gain @ (y - H @ mx)
    cov = Sxx - gain @ Sxy.T
    return mean, np.diag(cov)
