"""Independent oracles shared by several test modules."""

import numpy as np


def central_gradient(f, theta, rel_step=1e-6):
    """Central differences with step ``rel_step * max(1, |theta_j|)``."""
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for j in range(theta.size):
        h = rel_step * max(1.0, abs(theta[j]))
        e = np.zeros_like(theta)
        e[j] = h
        g[j] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def gradient_matches(analytic, fd, rel=1e-6, floor=1e-8):
    """Every component within ``rel`` relative error or ``floor`` absolute."""
    err = np.abs(np.asarray(analytic) - np.asarray(fd))
    return bool(np.all(err <= np.maximum(rel * np.abs(fd), floor)))


def probit_oracle(y, X, iters=50):
    """Plain probit MLE by Newton's method with the textbook Hessian.

    Coded from scratch against scipy.stats.norm only; shares nothing with
    the package.
    """
    from scipy.stats import norm
    b = np.zeros(X.shape[1])
    for _ in range(iters):
        xb = X @ b
        q = 2 * y - 1
        lam = q * norm.pdf(xb) / norm.cdf(q * xb)
        grad = X.T @ lam
        H = -(X * (lam * (lam + xb))[:, None]).T @ X
        step = np.linalg.solve(H, grad)
        b = b - step
        if np.max(np.abs(step)) < 1e-14:
            break
    return b


BLOCK_SCALES = {"beta": 0.5, "threshold": 0.5, "gamma": 0.2, "delta_base": 0.1,
                "delta_info": 0.1}


def random_theta(layout, rng):
    """Parameters on a realistic scale for each block."""
    theta = np.empty(layout.size)
    for block, scale in BLOCK_SCALES.items():
        sl = layout.slice(block)
        theta[sl] = rng.normal(0.0, scale, sl.stop - sl.start)
    return theta
