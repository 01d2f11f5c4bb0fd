"""Small 3D-convolutional denoiser over voxel-belief grids.

A deliberately tiny stand-in for a full scene-generation backbone: a stack
of 3x3x3 convolutions (hidden channels 8 -> 16 -> 8) predicting the clean
grid directly from a noised one, with the diffusion time embedded as a
constant scalar channel and the observation constraint as a mask channel.
Forward, backward, and the Adam optimizer are written against numpy so the
whole training loop stays deterministic and dependency-free.

Tensors are channels-last: (batch, nx, ny, nz, channels).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UntrainedDenoiser

HIDDEN_CHANNELS = (8, 16, 8)
KERNEL = 3


@dataclass(eq=False)
class DenoiserParams:
    """Weights of the conv stack plus training provenance.

    ``weights[i]`` is stored matricized as (C_in * 27, C_out) with rows
    ordered (channel, kx, ky, kz); ``channels`` records the full channel
    sequence from input to output.

    The class head predicts semantic channels in the subspace spanned by the
    class prototypes: ``basis`` is an orthonormal (sem_dim, embed_dim) matrix
    and nearest-prototype classification in the projected space matches the
    full space exactly, at fewer channels.
    """

    weights: list
    biases: list
    channels: tuple
    sem_dim: int
    steps: int = 0
    final_loss: float = float("nan")
    loss_history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # full-dimension class prototypes (C, embed_dim); row 0 is "none"
    prototypes: np.ndarray | None = None
    basis: np.ndarray | None = None  # (sem_dim, embed_dim)

    @property
    def trained(self) -> bool:
        return self.steps > 0

    def require_trained(self):
        if not self.trained:
            raise UntrainedDenoiser("denoiser has 0 training steps")

    @property
    def proj_prototypes(self) -> np.ndarray:
        return self.prototypes @ self.basis.T

    def astype(self, dtype) -> "DenoiserParams":
        return DenoiserParams([w.astype(dtype) for w in self.weights],
                              [b.astype(dtype) for b in self.biases],
                              self.channels, self.sem_dim, self.steps,
                              self.final_loss, self.loss_history,
                              self.prototypes, self.basis)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(w)) for w in self.weights) and \
            all(np.all(np.isfinite(b)) for b in self.biases)


def prototype_basis(prototypes: np.ndarray) -> np.ndarray:
    """Orthonormal basis (r, d) of the span of the class prototypes."""
    _, s, vt = np.linalg.svd(np.asarray(prototypes, dtype=np.float64),
                             full_matrices=False)
    r = int(np.sum(s > 1e-9))
    return vt[:r]


def state_channels(sem_dim: int) -> int:
    """Channels of the diffusion state: occupancy plus the semantic head."""
    return 1 + sem_dim


def input_channels(sem_dim: int) -> int:
    """State channels plus known-mask and timestep channels."""
    return state_channels(sem_dim) + 2


def init_denoiser(sem_dim: int, hidden=HIDDEN_CHANNELS, seed: int = 0,
                  dtype=np.float32) -> DenoiserParams:
    channels = (input_channels(sem_dim),) + tuple(hidden) + (state_channels(sem_dim),)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for c_in, c_out in zip(channels[:-1], channels[1:]):
        fan_in = c_in * KERNEL ** 3
        w = rng.standard_normal((fan_in, c_out)) * np.sqrt(2.0 / fan_in)
        weights.append(w.astype(dtype))
        biases.append(np.zeros(c_out, dtype=dtype))
    return DenoiserParams(weights, biases, channels, sem_dim)


def _im2col(x: np.ndarray) -> np.ndarray:
    """(B,X,Y,Z,C) -> (B*X*Y*Z, C*27) with zero padding of 1 per spatial axis."""
    B, X, Y, Z, C = x.shape
    pad = np.zeros((B, X + 2, Y + 2, Z + 2, C), dtype=x.dtype)
    pad[:, 1:-1, 1:-1, 1:-1, :] = x
    win = np.lib.stride_tricks.sliding_window_view(pad, (3, 3, 3), axis=(1, 2, 3))
    # win: (B, X, Y, Z, C, 3, 3, 3) -> rows ordered (c, kx, ky, kz)
    return win.reshape(B * X * Y * Z, C * 27)


def _col2im(gcols: np.ndarray, shape) -> np.ndarray:
    """Adjoint of _im2col: scatter column gradients back onto the grid."""
    B, X, Y, Z, C = shape
    g = gcols.reshape(B, X, Y, Z, C, 3, 3, 3)
    gpad = np.zeros((B, X + 2, Y + 2, Z + 2, C), dtype=gcols.dtype)
    for kx in range(3):
        for ky in range(3):
            for kz in range(3):
                gpad[:, kx:kx + X, ky:ky + Y, kz:kz + Z, :] += g[..., kx, ky, kz]
    return gpad[:, 1:-1, 1:-1, 1:-1, :]


def net_forward(params: DenoiserParams, x: np.ndarray, tape: list | None = None
                ) -> np.ndarray:
    """Run the conv stack; ReLU between layers, linear output.

    ``x`` is (B, nx, ny, nz, input_channels).  When ``tape`` is a list the
    per-layer im2col matrices and activations are appended for backprop.
    """
    B, X, Y, Z, _ = x.shape
    h = x
    n_layers = len(params.weights)
    for li, (w, b) in enumerate(zip(params.weights, params.biases)):
        cols = _im2col(h)
        out = cols @ w + b
        h = out.reshape(B, X, Y, Z, -1)
        last = li == n_layers - 1
        if tape is not None:
            tape.append((cols, h if not last else None))
        if not last:
            h = np.maximum(h, 0.0)
    return h


def loss_and_grads(params: DenoiserParams, x: np.ndarray, target: np.ndarray):
    """MSE between predicted and true clean grids, with analytic gradients.

    Returns (loss, grad_weights, grad_biases); gradients match the matricized
    weight layout of DenoiserParams.
    """
    tape: list = []
    pred = net_forward(params, x, tape)
    diff = pred - target
    loss = float(np.mean(diff.astype(np.float64) ** 2))

    B, X, Y, Z, _ = x.shape
    n_vox = B * X * Y * Z
    gout = (2.0 / diff.size) * diff
    gmat = gout.reshape(n_vox, -1).astype(params.weights[0].dtype)
    grad_w = [None] * len(params.weights)
    grad_b = [None] * len(params.biases)
    for li in range(len(params.weights) - 1, -1, -1):
        cols, pre = tape[li]
        grad_w[li] = cols.T @ gmat
        grad_b[li] = gmat.sum(axis=0)
        if li > 0:
            gcols = gmat @ params.weights[li].T
            c_in = params.channels[li]
            gin = _col2im(gcols, (B, X, Y, Z, c_in))
            _, pre_prev = tape[li - 1]
            gin = gin * (pre_prev > 0)
            gmat = gin.reshape(n_vox, -1)
    return loss, grad_w, grad_b


@dataclass(eq=False)
class AdamState:
    m_w: list
    v_w: list
    m_b: list
    v_b: list
    t: int = 0

    @staticmethod
    def for_params(params: DenoiserParams) -> "AdamState":
        return AdamState([np.zeros_like(w) for w in params.weights],
                         [np.zeros_like(w) for w in params.weights],
                         [np.zeros_like(b) for b in params.biases],
                         [np.zeros_like(b) for b in params.biases])


def adam_step(params: DenoiserParams, grads_w, grads_b, state: AdamState,
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8):
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for i in range(len(params.weights)):
        for val, g, m, v in ((params.weights[i], grads_w[i], state.m_w[i], state.v_w[i]),
                             (params.biases[i], grads_b[i], state.m_b[i], state.v_b[i])):
            m += (1.0 - beta1) * (g - m)
            v += (1.0 - beta2) * (g * g - v)
            val -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def flatten_params(params: DenoiserParams) -> np.ndarray:
    return np.concatenate([w.ravel() for w in params.weights]
                          + [b.ravel() for b in params.biases])


def set_flat_params(params: DenoiserParams, flat: np.ndarray):
    pos = 0
    for w in params.weights:
        w.flat[:] = flat[pos:pos + w.size]
        pos += w.size
    for b in params.biases:
        b.flat[:] = flat[pos:pos + b.size]
        pos += b.size
    assert pos == flat.size
