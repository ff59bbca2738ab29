"""Factorized stochastic policy over a parameter space.

A 4-layer ReLU MLP maps a fixed context vector (all ones) to one
distribution per parameter: ranged parameters and sort keys get a
Beta(alpha, beta) head with alpha = 1 + softplus(u), beta = 1 +
softplus(v) (so both stay > 1 and all-zero weights give the near-uniform
Beta(1 + ln 2, 1 + ln 2)); categorical parameters get a softmax head.

Gradients are computed in closed form (digamma/trigamma terms for the
Beta heads) and pushed through the MLP by hand-written reverse mode;
there is no autodiff anywhere.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, digamma

from .space import Categorical, ParameterSpace, Ranged, ShapeError, SortKey

__all__ = [
    "RAW_CLIP",
    "CHECKPOINT_MAGIC",
    "HeadLayout",
    "DistributionSet",
    "CompoundAction",
    "PolicyParams",
    "PolicyNumericsError",
    "DomainError",
    "layout_for_space",
    "context_vector",
    "init_params",
    "mlp_forward",
    "mlp_backward",
    "heads_from_raw",
    "forward",
    "forward_cached",
    "head_backward",
    "sample",
    "log_prob",
    "entropy",
    "kl",
    "save_params",
    "load_params",
]

RAW_CLIP = 1e-6
CHECKPOINT_MAGIC = b"COREPOL1"


class PolicyNumericsError(FloatingPointError):
    """A forward pass produced non-finite activations."""


class DomainError(ValueError):
    """An action lies outside the support of its distribution."""


@dataclass(frozen=True)
class HeadLayout:
    """Mapping between parameters, distribution heads, and raw MLP outputs."""

    kinds: tuple[str, ...]  # per parameter: "beta" | "cat"
    cat_k: tuple[int, ...]  # per parameter: k for cat heads, 0 otherwise
    beta_params: np.ndarray  # parameter indices owning beta heads
    cat_params: np.ndarray
    beta_off: np.ndarray  # raw-output offset of each beta head's (u, v) pair
    cat_off: np.ndarray
    out_width: int

    @property
    def n_params(self) -> int:
        return len(self.kinds)

    @property
    def n_beta(self) -> int:
        return len(self.beta_params)


def _make_layout(kinds: list[str], cat_k: list[int]) -> HeadLayout:
    beta_params, cat_params, beta_off, cat_off = [], [], [], []
    off = 0
    for i, kind in enumerate(kinds):
        if kind == "beta":
            beta_params.append(i)
            beta_off.append(off)
            off += 2
        else:
            cat_params.append(i)
            cat_off.append(off)
            off += cat_k[i]
    return HeadLayout(
        kinds=tuple(kinds),
        cat_k=tuple(cat_k),
        beta_params=np.asarray(beta_params, dtype=np.intp),
        cat_params=np.asarray(cat_params, dtype=np.intp),
        beta_off=np.asarray(beta_off, dtype=np.intp),
        cat_off=np.asarray(cat_off, dtype=np.intp),
        out_width=off,
    )


def layout_for_space(space: ParameterSpace) -> HeadLayout:
    kinds, cat_k = [], []
    for p in space.params:
        if isinstance(p.kind, Categorical):
            kinds.append("cat")
            cat_k.append(p.kind.k)
        else:
            assert isinstance(p.kind, (Ranged, SortKey))
            kinds.append("beta")
            cat_k.append(0)
    return _make_layout(kinds, cat_k)


@dataclass(frozen=True)
class DistributionSet:
    layout: HeadLayout
    alphas: np.ndarray  # (n_beta,)
    betas: np.ndarray  # (n_beta,)
    cat_probs: tuple[np.ndarray, ...]

    @staticmethod
    def from_heads(heads) -> "DistributionSet":
        """Build directly from [("beta", a, b) | ("cat", probs), ...] for tests."""
        kinds, cat_k, alphas, betas, cats = [], [], [], [], []
        for h in heads:
            if h[0] == "beta":
                kinds.append("beta")
                cat_k.append(0)
                alphas.append(float(h[1]))
                betas.append(float(h[2]))
            elif h[0] == "cat":
                probs = np.asarray(h[1], dtype=float)
                kinds.append("cat")
                cat_k.append(len(probs))
                cats.append(probs)
            else:
                raise ValueError(f"unknown head {h!r}")
        return DistributionSet(
            layout=_make_layout(kinds, cat_k),
            alphas=np.asarray(alphas, dtype=float),
            betas=np.asarray(betas, dtype=float),
            cat_probs=tuple(cats),
        )


@dataclass(frozen=True)
class CompoundAction:
    """One raw value per parameter; category indices stored as floats."""

    raw: np.ndarray
    log_prob: float


@dataclass
class PolicyParams:
    weights: list  # 4 matrices, shape (fan_out, fan_in)
    biases: list  # 4 vectors

    def copy(self) -> "PolicyParams":
        return PolicyParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def arrays(self) -> list:
        flat = []
        for w, b in zip(self.weights, self.biases):
            flat.append(w)
            flat.append(b)
        return flat


def context_vector(width: int) -> np.ndarray:
    return np.ones(width, dtype=float)


def init_params(rng: np.random.Generator, input_width: int, hidden_width: int, out_width: int) -> PolicyParams:
    sizes = [input_width, hidden_width, hidden_width, hidden_width, out_width]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return PolicyParams(weights, biases)


def mlp_forward(params: PolicyParams, s0: np.ndarray):
    """Returns (raw head outputs, cache for the backward pass)."""
    if s0.shape != (params.weights[0].shape[1],):
        raise ShapeError(f"context width {s0.shape} != {params.weights[0].shape[1]}")
    inputs = [s0]
    pres = []
    h = s0
    last = len(params.weights) - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = w @ h + b
        if not np.isfinite(a).all():
            raise PolicyNumericsError(f"non-finite activations at layer {layer}")
        if layer < last:
            pres.append(a)
            h = np.maximum(a, 0.0)
            inputs.append(h)
        else:
            return a, (inputs, pres)
    raise AssertionError("unreachable")


def mlp_backward(params: PolicyParams, cache, g_out: np.ndarray):
    """Gradient of a scalar wrt every weight and bias, given d(scalar)/d(raw out)."""
    inputs, pres = cache
    n = len(params.weights)
    g_w = [None] * n
    g_b = [None] * n
    g = g_out
    for layer in range(n - 1, -1, -1):
        g_w[layer] = np.outer(g, inputs[layer])
        g_b[layer] = g.copy()
        if layer > 0:
            g = params.weights[layer].T @ g
            g = g * (pres[layer - 1] > 0.0)
    return g_w, g_b


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def heads_from_raw(out: np.ndarray, layout: HeadLayout) -> DistributionSet:
    alphas = 1.0 + _softplus(out[layout.beta_off])
    betas = 1.0 + _softplus(out[layout.beta_off + 1])
    cats = []
    for off, pi in zip(layout.cat_off, layout.cat_params):
        z = out[off : off + layout.cat_k[pi]]
        z = z - z.max()
        e = np.exp(z)
        cats.append(e / e.sum())
    return DistributionSet(layout=layout, alphas=alphas, betas=betas, cat_probs=tuple(cats))


def forward(params: PolicyParams, s0: np.ndarray, layout: HeadLayout) -> DistributionSet:
    out, _ = mlp_forward(params, s0)
    if out.shape != (layout.out_width,):
        raise ShapeError(f"output width {out.shape[0]} != layout {layout.out_width}")
    return heads_from_raw(out, layout)


def forward_cached(params: PolicyParams, s0: np.ndarray, layout: HeadLayout):
    out, cache = mlp_forward(params, s0)
    if out.shape != (layout.out_width,):
        raise ShapeError(f"output width {out.shape[0]} != layout {layout.out_width}")
    return heads_from_raw(out, layout), cache


def head_backward(dists: DistributionSet, d_alpha: np.ndarray, d_beta: np.ndarray, d_logits) -> np.ndarray:
    """Chain head-space gradients back to raw MLP outputs.

    d softplus(u)/du recovered from alpha itself: sigmoid(u) = 1 - exp(1 - alpha).
    """
    layout = dists.layout
    g = np.zeros(layout.out_width)
    g[layout.beta_off] = d_alpha * (1.0 - np.exp(1.0 - dists.alphas))
    g[layout.beta_off + 1] = d_beta * (1.0 - np.exp(1.0 - dists.betas))
    for j, (off, pi) in enumerate(zip(layout.cat_off, layout.cat_params)):
        g[off : off + layout.cat_k[pi]] = d_logits[j]
    return g


def sample(dists: DistributionSet, rng: np.random.Generator) -> CompoundAction:
    """Draw one compound action; Beta draws clipped into [RAW_CLIP, 1 - RAW_CLIP].

    Draws happen in parameter declaration order, one per parameter:
    Beta heads through the generator's beta sampler, categorical heads by
    inverse CDF of a single uniform.
    """
    layout = dists.layout
    raw = np.empty(layout.n_params)
    bi = 0
    ci = 0
    for i, kind in enumerate(layout.kinds):
        if kind == "beta":
            x = rng.beta(dists.alphas[bi], dists.betas[bi])
            raw[i] = min(max(x, RAW_CLIP), 1.0 - RAW_CLIP)
            bi += 1
        else:
            u = rng.random()
            cum = np.cumsum(dists.cat_probs[ci])
            idx = int(np.searchsorted(cum, u, side="right"))
            raw[i] = min(idx, layout.cat_k[i] - 1)
            ci += 1
    action = CompoundAction(raw=raw, log_prob=0.0)
    return CompoundAction(raw=raw, log_prob=log_prob(dists, action))


def log_prob(dists: DistributionSet, action: CompoundAction) -> float:
    layout = dists.layout
    if action.raw.shape != (layout.n_params,):
        raise ShapeError(f"action length {action.raw.shape} != {layout.n_params}")
    total = 0.0
    if layout.n_beta:
        x = action.raw[layout.beta_params]
        if np.any(x <= 0.0) or np.any(x >= 1.0):
            raise DomainError("beta-head values must lie strictly inside (0, 1)")
        a, b = dists.alphas, dists.betas
        total += float(
            np.sum((a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - betaln(a, b))
        )
    for j, pi in enumerate(layout.cat_params):
        idx = int(action.raw[pi])
        if not 0 <= idx < layout.cat_k[pi]:
            raise DomainError(f"category index {idx} out of range({layout.cat_k[pi]})")
        p = dists.cat_probs[j][idx]
        total += float(np.log(p)) if p > 0.0 else float("-inf")
    return total


def entropy(dists: DistributionSet) -> float:
    a, b = dists.alphas, dists.betas
    total = float(
        np.sum(
            betaln(a, b)
            - (a - 1.0) * digamma(a)
            - (b - 1.0) * digamma(b)
            + (a + b - 2.0) * digamma(a + b)
        )
    )
    for p in dists.cat_probs:
        mask = p > 0.0
        total += -float(np.sum(p[mask] * np.log(p[mask])))
    return total


def kl(new: DistributionSet, old: DistributionSet) -> float:
    """Forward KL(new || old), summed over heads."""
    if new.layout.kinds != old.layout.kinds or new.layout.cat_k != old.layout.cat_k:
        raise ShapeError("distribution sets have different head structure")
    a, b = new.alphas, new.betas
    a2, b2 = old.alphas, old.betas
    total = float(
        np.sum(
            betaln(a2, b2)
            - betaln(a, b)
            + (a - a2) * digamma(a)
            + (b - b2) * digamma(b)
            - (a - a2 + b - b2) * digamma(a + b)
        )
    )
    for p, q in zip(new.cat_probs, old.cat_probs):
        mask = p > 0.0
        if np.any(q[mask] <= 0.0):
            return float("inf")
        total += float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))
    return total


# ---------------------------------------------------------------------------
# Checkpoints: magic, u64 array count, per-array u64 ndim + dims,
# then all values as row-major little-endian float64.

def save_params(params: PolicyParams, path: str) -> None:
    arrays = params.arrays()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(arrays)))
        for arr in arrays:
            fh.write(struct.pack("<Q", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(path: str) -> PolicyParams:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a policy checkpoint (bad magic {magic!r})")
        (count,) = struct.unpack("<Q", fh.read(8))
        shapes = []
        for _ in range(count):
            (ndim,) = struct.unpack("<Q", fh.read(8))
            shapes.append(struct.unpack(f"<{ndim}Q", fh.read(8 * ndim)))
        arrays = []
        for shape in shapes:
            n = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * n)
            if len(buf) != 8 * n:
                raise ValueError(f"{path}: truncated checkpoint")
            arrays.append(np.frombuffer(buf, dtype="<f8").reshape(shape).copy())
    if len(arrays) % 2 != 0:
        raise ValueError(f"{path}: expected weight/bias pairs, got {len(arrays)} arrays")
    weights = arrays[0::2]
    biases = arrays[1::2]
    return PolicyParams(weights, biases)
