"""VP and subVP forward diffusions: coefficients, closed-form perturbation
kernels, kernel scores, and the loss weight.

All functions accept scalars or numpy arrays of diffusion times and are
pure; diffusion time s runs over [0, 1] with a small cutoff EPS_S used by
training and sampling to keep sigma(s) > 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS_S = 1e-5

# Linear schedule endpoints adopted from the standard continuous VP setup.
DEFAULT_BETA_MIN = 0.1
DEFAULT_BETA_MAX = 20.0
DEFAULT_N_STEPS = 1000


class SdeError(ValueError):
    pass


@dataclass(frozen=True)
class BetaSchedule:
    """Linear noise rate beta(s) = beta_min + s*(beta_max - beta_min)."""
    beta_min: float = DEFAULT_BETA_MIN
    beta_max: float = DEFAULT_BETA_MAX

    def __post_init__(self):
        if not 0 < self.beta_min < self.beta_max:
            raise SdeError(f"need 0 < beta_min < beta_max, got "
                           f"({self.beta_min}, {self.beta_max})")


@dataclass(frozen=True)
class DiffusionSpec:
    kind: str = "vp"  # "vp" | "subvp"
    schedule: BetaSchedule = BetaSchedule()
    n_steps: int = DEFAULT_N_STEPS

    def __post_init__(self):
        if self.kind not in ("vp", "subvp"):
            raise SdeError(f"unknown SDE kind {self.kind!r}")
        if self.n_steps < 2:
            raise SdeError("n_steps must be >= 2")


@dataclass(frozen=True)
class KernelParams:
    """Gaussian transition kernel p(x^s | x^0): mean alpha(s)*x0, std sigma(s)."""
    mean_coeff: float
    std: float


def _check_s(s):
    s = np.asarray(s, dtype=np.float64)
    if np.any(s < 0) or np.any(s > 1):
        raise SdeError(f"diffusion time outside [0,1]: {s}")
    return s


def beta(schedule, s):
    s = _check_s(s)
    return schedule.beta_min + s * (schedule.beta_max - schedule.beta_min)


def beta_integral(schedule, s):
    """B(s) = int_0^s beta(u) du for the linear schedule."""
    s = _check_s(s)
    return schedule.beta_min * s + 0.5 * s * s * (schedule.beta_max - schedule.beta_min)


def drift_diffusion(spec, x, s):
    """Forward SDE coefficients: drift f(s,x) and scalar diffusion g(s)."""
    b = beta(spec.schedule, s)
    f = -0.5 * b * x
    if spec.kind == "vp":
        g = np.sqrt(b)
    else:
        g = np.sqrt(b * (1.0 - np.exp(-2.0 * beta_integral(spec.schedule, s))))
    return f, g


def marginal_params(spec, s):
    """Closed-form alpha(s), sigma(s) of the perturbation kernel."""
    B = beta_integral(spec.schedule, s)
    alpha = np.exp(-0.5 * B)
    if spec.kind == "vp":
        sigma = np.sqrt(1.0 - np.exp(-B))
    else:
        sigma = 1.0 - np.exp(-B)
    if np.ndim(s) == 0:
        return KernelParams(float(alpha), float(sigma))
    return alpha, sigma


def perturb(x0, s, z, spec=None):
    """Sample from the kernel: alpha(s)*x0 + sigma(s)*z with z ~ N(0, I)."""
    spec = spec or DiffusionSpec()
    if np.shape(x0) != np.shape(z):
        raise SdeError(f"perturb shape mismatch {np.shape(x0)} vs {np.shape(z)}")
    p = marginal_params(spec, s)
    return p.mean_coeff * np.asarray(x0) + p.std * np.asarray(z)


def kernel_score(x_s, x0, s, spec=None):
    """Analytic conditional score: -(x_s - alpha*x0) / sigma^2."""
    spec = spec or DiffusionSpec()
    p = marginal_params(spec, s)
    if p.std <= 0:
        raise SdeError(f"kernel_score undefined at s={s} (sigma=0)")
    return -(np.asarray(x_s) - p.mean_coeff * np.asarray(x0)) / (p.std ** 2)


def loss_weight(spec, s):
    """Denoising-loss weight lambda(s) = sigma(s)^2."""
    B = beta_integral(spec.schedule, s)
    if spec.kind == "vp":
        sigma2 = 1.0 - np.exp(-B)
    else:
        sigma2 = (1.0 - np.exp(-B)) ** 2
    return sigma2
