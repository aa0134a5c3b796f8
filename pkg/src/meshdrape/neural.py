"""Coordinate network for per-vertex offsets: progressive frequency
encoding, a small fully connected ReLU net, and its optimizer.

The encoder exposes three modes: 'progressive' (frequency blocks revealed
over reveal_iters steps, low to high), 'static' (all blocks on from the
start; identical to progressive with reveal_iters=0) and 'none' (raw
coordinates only).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

torch.set_num_threads(1)

MODES = ("progressive", "static", "none")


@dataclass
class EncoderState:
    mode: str = "progressive"
    blocks: int = 6
    reveal_iters: int = 1000

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown encoder mode {self.mode!r}")

    @property
    def frequencies(self):
        """Octave-spaced block frequencies 2^j * pi."""
        return (2.0 ** np.arange(self.blocks)) * np.pi

    @property
    def width(self):
        if self.mode == "none":
            return 3
        return 3 + 6 * self.blocks  # raw + sin/cos per coordinate per block


def schedule_mask(enc: EncoderState, t) -> np.ndarray:
    """Per-block reveal factors at iteration t.

    Block j ramps linearly from 0 to 1 over [t_j, t_j + r] with
    t_j = j * r, r = reveal_iters / blocks; everything is fully revealed
    from reveal_iters on. Lower blocks always lead higher ones.
    """
    if enc.mode == "none":
        return np.zeros(0)
    if enc.mode == "static" or enc.reveal_iters <= 0:
        return np.ones(enc.blocks)
    r = enc.reveal_iters / enc.blocks
    j = np.arange(enc.blocks)
    return np.clip((t - j * r) / r, 0.0, 1.0)


def encode(positions, enc: EncoderState, t):
    """Feature matrix [p, a_0 sin(f_0 p), a_0 cos(f_0 p), ...] per point."""
    pts = torch.as_tensor(np.asarray(positions, dtype=np.float64))
    if enc.mode == "none":
        return pts
    parts = [pts]
    mask = schedule_mask(enc, t)
    for j, f in enumerate(enc.frequencies):
        parts.append(mask[j] * torch.sin(f * pts))
        parts.append(mask[j] * torch.cos(f * pts))
    return torch.cat(parts, dim=1)


class EncodingBasis:
    """Precomputed sin/cos features for a fixed point set, so that stepping
    the schedule only costs one mask multiply."""

    def __init__(self, positions, enc: EncoderState):
        self.enc = enc
        pts = torch.as_tensor(np.asarray(positions, dtype=np.float64))
        self.raw = pts
        if enc.mode == "none":
            self.bands = None
            return
        bands = []
        for f in enc.frequencies:
            bands.append(torch.cat([torch.sin(f * pts), torch.cos(f * pts)], dim=1))
        self.bands = torch.stack(bands)            # (B, N, 6)

    def features(self, t):
        if self.bands is None:
            return self.raw
        mask = torch.as_tensor(schedule_mask(self.enc, t))
        scaled = (mask[:, None, None] * self.bands)
        n = self.raw.shape[0]
        return torch.cat([self.raw, scaled.permute(1, 0, 2).reshape(n, -1)], dim=1)


class Network(torch.nn.Module):
    """4x256 ReLU MLP mapping encoded positions to 3D offsets. The output
    layer starts at zero so the first predicted offset field is zero."""

    def __init__(self, in_width, width=256, hidden_layers=4, seed=0):
        super().__init__()
        gen = torch.Generator().manual_seed(int(seed))
        layers = []
        w_in = in_width
        for _ in range(hidden_layers):
            lin = torch.nn.Linear(w_in, width, dtype=torch.float64)
            self._init_linear(lin, gen)
            layers.append(lin)
            layers.append(torch.nn.ReLU())
            w_in = width
        out = torch.nn.Linear(w_in, 3, dtype=torch.float64)
        with torch.no_grad():
            out.weight.zero_()
            out.bias.zero_()
        layers.append(out)
        self.stack = torch.nn.Sequential(*layers)

    @staticmethod
    def _init_linear(lin, gen):
        bound = 1.0 / np.sqrt(lin.in_features)
        with torch.no_grad():
            lin.weight.uniform_(-bound, bound, generator=gen)
            lin.bias.uniform_(-bound, bound, generator=gen)

    def forward(self, features):
        return self.stack(features)


def forward(net: Network, features):
    if not torch.all(torch.isfinite(features)):
        raise ValueError("non-finite network input")
    return net(features)


def backward(net: Network, features, upstream):
    """Reverse-mode parameter gradients of net(features) against an upstream
    gradient of the same shape as the output."""
    out = net(features)
    upstream = torch.as_tensor(upstream, dtype=out.dtype)
    params = list(net.parameters())
    grads = torch.autograd.grad(out, params, grad_outputs=upstream,
                                allow_unused=True)
    return [g if g is not None else torch.zeros_like(p)
            for g, p in zip(grads, params)]


def make_optimizer(net: Network, lr=5e-4, betas=(0.9, 0.999), eps=1e-8):
    """Adaptive-moment optimizer with bias correction."""
    return torch.optim.Adam(net.parameters(), lr=lr, betas=betas, eps=eps)


def optimizer_step(optimizer, gradients=None):
    """Apply one update. If explicit gradients are given they replace the
    .grad fields first; non-finite gradients are rejected."""
    params = [p for group in optimizer.param_groups for p in group["params"]]
    if gradients is not None:
        for p, g in zip(params, gradients):
            p.grad = torch.as_tensor(g, dtype=p.dtype).reshape(p.shape).clone()
    for p in params:
        if p.grad is not None and not torch.all(torch.isfinite(p.grad)):
            raise ValueError("non-finite gradient")
    optimizer.step()
