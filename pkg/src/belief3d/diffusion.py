"""Denoising-diffusion forward/reverse processes and training losses.

All operations act on flat numpy tensors of any shape, so the same math
serves the voxel-grid hypothesis sampler and the unit tests.  The reverse
step uses the variance-preserving posterior whose coefficients make the
noise level at tau-1 match the forward marginal exactly; see
``reverse_step`` for the closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CenterOutOfBounds,
    EmptyPatchSet,
    ShapeMismatch,
    TauOutOfRange,
)

DEFAULT_T = 50
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.1


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Variance-preserving schedule beta_1..beta_T with cached cumulants.

    An all-zero beta vector is permitted for identity-process testing; any
    other schedule must have every beta in (0, 1), which makes alpha_bar
    strictly decreasing.
    """

    betas: np.ndarray
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64).ravel()
        if betas.size < 1:
            raise ValueError("schedule needs at least one step")
        if np.any(betas != 0.0):
            if np.any((betas <= 0.0) | (betas >= 1.0)):
                raise ValueError("betas must lie in (0, 1)")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", 1.0 - betas)
        object.__setattr__(self, "alpha_bars", np.cumprod(self.alphas))

    @property
    def T(self) -> int:
        return self.betas.size

    def alpha_bar(self, tau: int) -> float:
        return float(self.alpha_bars[tau - 1])


def linear_schedule(T: int = DEFAULT_T, beta_start: float = DEFAULT_BETA_START,
                    beta_end: float = DEFAULT_BETA_END) -> NoiseSchedule:
    return NoiseSchedule(np.linspace(beta_start, beta_end, T))


def _check_tau(tau: int, schedule: NoiseSchedule):
    if not 1 <= tau <= schedule.T:
        raise TauOutOfRange(f"tau {tau} outside [1, {schedule.T}]")


def forward_noise(x0: np.ndarray, tau: int, noise: np.ndarray,
                  schedule: NoiseSchedule) -> np.ndarray:
    """Closed-form forward marginal: sqrt(ab_tau) x0 + sqrt(1-ab_tau) noise."""
    _check_tau(tau, schedule)
    x0 = np.asarray(x0)
    noise = np.asarray(noise)
    if x0.shape != noise.shape:
        raise ShapeMismatch(f"x0 {x0.shape} vs noise {noise.shape}")
    ab = schedule.alpha_bar(tau)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise


def reverse_step(x_tau: np.ndarray, x0_hat: np.ndarray, tau: int,
                 schedule: NoiseSchedule, noise: np.ndarray) -> np.ndarray:
    """One reverse transition tau -> tau-1 given a clean estimate x0_hat.

    Posterior mean and variance:
        mu = sqrt(ab_{tau-1}) beta_tau / (1 - ab_tau) * x0_hat
           + sqrt(alpha_tau) (1 - ab_{tau-1}) / (1 - ab_tau) * x_tau
        var = beta_tau (1 - ab_{tau-1}) / (1 - ab_tau)
    With x0_hat equal to the true x0 and zero noise this reproduces the
    forward marginal at tau-1 exactly.  tau == 1 returns x0_hat.
    """
    _check_tau(tau, schedule)
    if tau == 1:
        return np.array(x0_hat, copy=True)
    beta = float(schedule.betas[tau - 1])
    alpha = float(schedule.alphas[tau - 1])
    ab_t = schedule.alpha_bar(tau)
    ab_prev = schedule.alpha_bar(tau - 1)
    denom = 1.0 - ab_t
    coef_x0 = np.sqrt(ab_prev) * beta / denom
    coef_xt = np.sqrt(alpha) * (1.0 - ab_prev) / denom
    var = beta * (1.0 - ab_prev) / denom
    return coef_x0 * np.asarray(x0_hat) + coef_xt * np.asarray(x_tau) \
        + np.sqrt(var) * np.asarray(noise)


def loss_rgb(rendered, target) -> float:
    """Mean squared error over all RGB entries of two observations."""
    a = np.asarray(getattr(rendered, "rgb", rendered), dtype=np.float64)
    b = np.asarray(getattr(target, "rgb", target), dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"rgb shapes {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def loss_sem(rendered_sem: np.ndarray, patch_centers, patch_features) -> float:
    """Mean squared feature distance at M patch centers.

    ``patch_centers`` are (u, v) = (column, row) pixel coordinates into the
    rendered feature map; ``patch_features`` the matching target vectors.
    """
    sem = np.asarray(rendered_sem, dtype=np.float64)
    if len(patch_centers) != len(patch_features):
        raise ShapeMismatch("centers and features must pair up")
    if len(patch_centers) == 0:
        raise EmptyPatchSet("need at least one patch")
    H, W = sem.shape[:2]
    total = 0.0
    for (u, v), f in zip(patch_centers, patch_features):
        u, v = int(u), int(v)
        if not (0 <= u < W and 0 <= v < H):
            raise CenterOutOfBounds(f"patch center ({u},{v}) outside {W}x{H}")
        f = np.asarray(f, dtype=np.float64)
        if f.shape != sem[v, u].shape:
            raise ShapeMismatch("feature dim mismatch")
        total += float(np.sum((sem[v, u] - f) ** 2))
    return total / len(patch_centers)


def loss_depth(rendered_depth: np.ndarray, target_depth: np.ndarray,
               mask: np.ndarray):
    """Masked l1 depth loss.

    Returns ``(loss, no_valid)`` where ``no_valid`` is True (and loss 0.0)
    when the mask selects nothing.
    """
    d_hat = np.asarray(rendered_depth, dtype=np.float64)
    d = np.asarray(target_depth, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64)
    if not (d_hat.shape == d.shape == m.shape):
        raise ShapeMismatch(
            f"depth shapes {d_hat.shape}, {d.shape}, {m.shape} differ")
    total = float(m.sum())
    if total == 0:
        return 0.0, True
    return float(np.sum(m * np.abs(d_hat - d)) / total), False
