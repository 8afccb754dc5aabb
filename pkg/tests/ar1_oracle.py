"""Analytic 1-D AR(1) latent process oracle.

For h_t = rho*h_{t-1} + eta*eps with stationary variance tau^2 =
eta^2/(1-rho^2), the diffused conditional p(h_t^s | h_{t-1}) is Gaussian
N(alpha*rho*h_{t-1}, alpha^2*eta^2 + sigma^2), so both the explicit-score
loss and the denoising loss of a linear score model have closed or
cheaply-estimated forms.  Used to validate that denoising score matching
optimizes the same objective as explicit conditional score matching.
"""

import numpy as np

from tsdiff.sde import marginal_params


class Ar1Process:
    def __init__(self, rho=0.7, eta=0.5):
        self.rho = rho
        self.eta = eta
        self.tau = eta / np.sqrt(1.0 - rho * rho)

    def sample_pairs(self, n, rng):
        """(h_prev, h_t) with h_prev stationary."""
        u = rng.normal(0.0, self.tau, size=n)
        h = self.rho * u + self.eta * rng.standard_normal(n)
        return u, h


def explicit_score_coeffs(proc, spec, s):
    """Minimizer of the explicit-score loss for a linear model
    M = a*h^s + b*h_prev + c: the score of N(alpha*rho*h_prev, v1)."""
    p = marginal_params(spec, s)
    v1 = p.mean_coeff ** 2 * proc.eta ** 2 + p.std ** 2
    return np.array([-1.0 / v1, p.mean_coeff * proc.rho / v1, 0.0])


def closed_form_l1_grad(theta, proc, spec, s):
    """Exact gradient of the explicit-score loss l1 w.r.t. (a, b, c)."""
    a, b, c = theta
    p = marginal_params(spec, s)
    al, sg = p.mean_coeff, p.std
    v1 = al ** 2 * proc.eta ** 2 + sg ** 2
    tau2 = proc.tau ** 2
    A = a + 1.0 / v1
    B = b - al * proc.rho / v1
    e_y2 = al ** 2 * proc.rho ** 2 * tau2 + v1
    e_uy = al * proc.rho * tau2
    return np.array([
        2.0 * (A * e_y2 + B * e_uy),
        2.0 * (A * e_uy + B * tau2),
        2.0 * c,
    ])


def mc_l2_grad(theta, proc, spec, s, n, rng, antithetic=True):
    """Monte-Carlo gradient of the denoising loss l2 (same linear model)."""
    a, b, c = theta
    p = marginal_params(spec, s)
    al, sg = p.mean_coeff, p.std
    u, h = proc.sample_pairs(n, rng)
    z = rng.standard_normal(n)
    if antithetic:
        u = np.concatenate([u, u])
        h = np.concatenate([h, h])
        z = np.concatenate([z, -z])
    y = al * h + sg * z
    resid = (a * y + b * u + c) - (-z / sg)
    m = y.size
    return np.array([
        2.0 * (resid * y).sum() / m,
        2.0 * (resid * u).sum() / m,
        2.0 * resid.sum() / m,
    ])


def mc_l2_value(theta, proc, spec, s, u, h, z, lam):
    """Weighted denoising-loss value on given draws."""
    a, b, c = theta
    p = marginal_params(spec, s)
    y = p.mean_coeff * h + p.std * z
    resid = (a * y + b * u + c) - (-z / p.std)
    return lam * resid ** 2


def fit_linear_score_model(proc, spec, s, n, rng):
    """Least-squares minimizer of the MC denoising loss (training to
    convergence for a linear model)."""
    u, h = proc.sample_pairs(n, rng)
    z = rng.standard_normal(n)
    p = marginal_params(spec, s)
    y = p.mean_coeff * h + p.std * z
    X = np.column_stack([y, u, np.ones(n)])
    target = -z / p.std
    coef, *_ = np.linalg.lstsq(X, target, rcond=None)
    return coef
