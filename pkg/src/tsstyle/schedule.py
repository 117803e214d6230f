"""Linear-beta noise schedule and its derived per-step tables.

Arrays are indexed by diffusion step t in [1, T]; index 0 is the convention
alpha_bar[0] = 1 (and sigma[0] = 0), which makes the posterior standard
deviation at t = 1 exactly zero. All tables are float64.
"""

from __future__ import annotations

import numpy as np


class NoiseSchedule:
    """beta_t, alpha_t, alpha_bar_t, sigma_t tables for T steps.

    beta rises linearly from ``beta_start`` to ``beta_end``;
    alpha_bar is the running product of (1 - beta);
    sigma_t^2 = beta_t * (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)
    is the posterior variance of the reverse step.
    """

    def __init__(self, steps=500, beta_start=1e-4, beta_end=2e-2):
        if steps < 1:
            raise ValueError(f"schedule needs at least one step, got {steps}")
        if not 0.0 < beta_start <= beta_end < 1.0:
            raise ValueError(f"invalid beta range [{beta_start}, {beta_end}]")
        self.steps = int(steps)
        self.beta_start = float(beta_start)
        self.beta_end = float(beta_end)

        beta = np.zeros(steps + 1, dtype=np.float64)
        beta[1:] = np.linspace(beta_start, beta_end, steps, dtype=np.float64)
        alpha = 1.0 - beta
        alpha_bar = np.ones(steps + 1, dtype=np.float64)
        alpha_bar[1:] = np.cumprod(alpha[1:])
        sigma2 = np.zeros(steps + 1, dtype=np.float64)
        sigma2[1:] = beta[1:] * (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:])

        self.beta = beta
        self.alpha = alpha
        self.alpha_bar = alpha_bar
        self.sigma = np.sqrt(sigma2)

    def check_step(self, t):
        t = np.asarray(t)
        if t.min() < 1 or t.max() > self.steps:
            raise ValueError(f"diffusion step {t} outside [1, {self.steps}]")
