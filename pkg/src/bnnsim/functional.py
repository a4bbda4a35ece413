"""Bit-exact layer semantics: xnor-popcount convolution, threshold folding,
boolean pooling, and residual accumulation.

All comparisons follow the hardware comparator: a channel output is -1
(bit 0) strictly below its integer threshold and +1 (bit 1) otherwise.
Channels whose folded affine scale is negative carry a `flip` flag that
reverses the comparison direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateChannel, ShapeError
from .tensors import (
    POPCOUNT16,
    BinaryTensor,
    IntTensor,
    lane_masks,
    n_groups,
)

POOL_WINDOW = 4  # 2x2, stride 2


def conv_out_hw(h: int, w: int, k: int, stride: int = 1, padded: bool = True) -> tuple[int, int]:
    """Output spatial dims; 'same' padding uses (k-1)//2 on each side."""
    p = (k - 1) // 2 if padded else 0
    oh = (h + 2 * p - k) // stride + 1
    ow = (w + 2 * p - k) // stride + 1
    if oh <= 0 or ow <= 0:
        raise ShapeError(f"kernel {k} (stride {stride}) does not fit a {h}x{w} map")
    return oh, ow


# ---------------------------------------------------------------------------
# thresholds
# ---------------------------------------------------------------------------

@dataclass
class BatchNorm:
    """Per-channel batch-norm constants feeding the threshold fold."""

    gamma: float = 1.0
    beta: float = 0.0
    mu: float = 0.0
    sigma: float = 1.0


@dataclass
class ThresholdVector:
    """Per-output-channel integer comparison points.

    `t` compares single-pixel sums, `t_pool` compares 2x2 window sums for
    average pooling (pre-scaled by the window size, ceil rule).  `flip`
    marks channels whose comparison direction is reversed.
    """

    t: np.ndarray
    flip: np.ndarray
    t_pool: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.int32)
        self.flip = np.asarray(self.flip, dtype=bool)
        if self.t_pool is None:
            self.t_pool = self.t * POOL_WINDOW
        self.t_pool = np.asarray(self.t_pool, dtype=np.int32)
        if not (len(self.t) == len(self.flip) == len(self.t_pool)):
            raise ShapeError("threshold field lengths differ")

    def __len__(self) -> int:
        return len(self.t)

    @classmethod
    def constant(cls, n_out: int, t: int, flip: bool = False) -> "ThresholdVector":
        return cls(np.full(n_out, t, dtype=np.int32), np.full(n_out, flip, dtype=bool))


def real_sign_bit(s, c: float, alpha: float, bn: BatchNorm, n: int):
    """Reference real-arithmetic path: +1 iff BN(C + alpha*(2s - N)) > 0.

    Kept as the single canonical float expression; the integer fold is
    derived from it by crossover search, so the two paths agree exactly
    at every integer sum.
    """
    pre = c + alpha * (2.0 * np.asarray(s, dtype=np.float64) - n)
    return bn.gamma * (pre - bn.mu) / bn.sigma + bn.beta > 0.0


def _first_true(pred, lo: int, hi: int) -> int:
    """Smallest s in [lo, hi] with pred(s) true, or hi+1 if none (monotone)."""
    if not pred(hi):
        return hi + 1
    while lo < hi:
        mid = (lo + hi) // 2
        if pred(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


def derive_threshold(
    c: float, alpha: float, bn: BatchNorm, n: int, window: int = 1
) -> tuple[int, bool]:
    """Fold bias, scale, and batch norm into one integer comparison point.

    Returns (T, flip) such that for every integer window sum S in
    [0, window*N] the integer compare reproduces the real-arithmetic
    sign of BN(C + alpha*(2*S/window - N)).  With window=1 this is the
    per-pixel threshold; window=4 yields the pre-scaled average-pool
    threshold.
    """
    if bn.sigma <= 0:
        raise DegenerateChannel(f"sigma must be positive, got {bn.sigma}")
    if alpha * bn.gamma == 0:
        raise DegenerateChannel("combined scale alpha*gamma is zero")
    slope = alpha * bn.gamma
    hi = window * n

    def bit(s):
        return bool(real_sign_bit(s / window if window != 1 else s, c, alpha, bn, n))

    if slope > 0:
        # bits go 0...0 1...1; T = first one
        return _first_true(bit, 0, hi), False
    # bits go 1...1 0...0; T = first zero, output 1 iff S < T
    return _first_true(lambda s: not bit(s), 0, hi), True


def fold_thresholds(params: np.ndarray, n: int) -> ThresholdVector:
    """Fold raw per-channel (C, alpha, gamma, beta, mu, sigma) rows."""
    params = np.asarray(params, dtype=np.float64)
    t = np.empty(len(params), dtype=np.int32)
    flip = np.empty(len(params), dtype=bool)
    t_pool = np.empty(len(params), dtype=np.int32)
    for i, (c, alpha, gamma, beta, mu, sigma) in enumerate(params):
        bn = BatchNorm(gamma, beta, mu, sigma)
        t[i], flip[i] = derive_threshold(c, alpha, bn, n)
        t_pool[i], _ = derive_threshold(c, alpha, bn, n, window=POOL_WINDOW)
    return ThresholdVector(t, flip, t_pool)


# ---------------------------------------------------------------------------
# convolution and binarization
# ---------------------------------------------------------------------------

def _padded_words(x: BinaryTensor, pad: int, pad_bit: int) -> np.ndarray:
    """Word array with spatial padding; pad words respect lane masks."""
    if pad == 0:
        return x.words
    g, h, w = x.words.shape
    out = np.zeros((g, h + 2 * pad, w + 2 * pad), dtype=np.uint16)
    if pad_bit:
        out[:] = lane_masks(x.channels)[:, None, None]
    out[:, pad:pad + h, pad:pad + w] = x.words
    return out


def xnor_conv(
    x: BinaryTensor,
    weights: np.ndarray,
    k: int,
    stride: int = 1,
    padding: str = "same0",
) -> IntTensor:
    """Binary-domain convolution: per output value, the popcount of matching
    bits over the k x k window and all input channels.

    `weights` is packed (n_out, k, k, groups) uint16.  'same' padding
    contributes pad-bit comparisons over all input lanes.
    """
    weights = np.asarray(weights, dtype=np.uint16)
    n_out = weights.shape[0]
    g_in = n_groups(x.channels)
    if weights.shape != (n_out, k, k, g_in):
        raise ShapeError(f"weight shape {weights.shape} != {(n_out, k, k, g_in)}")
    padded = padding != "none"
    pad_bit = 1 if padding == "same1" else 0
    oh, ow = conv_out_hw(x.height, x.width, k, stride, padded)
    p = (k - 1) // 2 if padded else 0

    words = _padded_words(x, p, pad_bit)
    masks = lane_masks(x.channels)
    acc = np.zeros((n_out, oh, ow), dtype=np.int32)
    for g in range(g_in):
        win = np.lib.stride_tricks.sliding_window_view(words[g], (k, k))
        win = win[::stride, ::stride]  # (oh, ow, k, k)
        wg = weights[:, :, :, g]  # (n_out, k, k)
        matches = POPCOUNT16[
            (~(win[None, :, :, :, :] ^ wg[:, None, None, :, :])) & masks[g]
        ]
        acc += matches.sum(axis=(3, 4), dtype=np.int32)
    return IntTensor(n_out, oh, ow, acc)


def threshold_binarize(sums: IntTensor, th: ThresholdVector) -> BinaryTensor:
    """Re-binarize integer sums: bit = (S >= T), or (S < T) on flipped channels."""
    if sums.channels != len(th):
        raise ShapeError(f"{sums.channels} channels vs {len(th)} thresholds")
    t = th.t[:, None, None]
    ge = sums.values >= t
    bits = np.where(th.flip[:, None, None], ~ge, ge)
    return BinaryTensor.from_bits(bits.astype(np.uint8))


def binary_maxpool(sums: IntTensor, th: ThresholdVector) -> BinaryTensor:
    """Max pool fused with binarization: OR-reduce bits over 2x2 windows.

    Because each output bit is monotone in the underlying real value, the
    OR of the four bits equals binarizing the real-domain window maximum.
    Odd trailing rows/columns are truncated.
    """
    bits = threshold_binarize(sums, th).to_bits()
    ph, pw = sums.height // 2, sums.width // 2
    if ph == 0 or pw == 0:
        raise ShapeError(f"cannot 2x2-pool a {sums.height}x{sums.width} map")
    b = bits[:, : 2 * ph, : 2 * pw]
    pooled = b[:, 0::2, 0::2] | b[:, 0::2, 1::2] | b[:, 1::2, 0::2] | b[:, 1::2, 1::2]
    return BinaryTensor.from_bits(pooled)


def avg_pool_threshold(sums: IntTensor, th: ThresholdVector) -> BinaryTensor:
    """Average pool fused with binarization, done on integer window sums.

    The 2x2 window sum is compared against the pre-scaled threshold
    `t_pool`, equivalent to averaging first and comparing against the
    real threshold under the ceil rounding rule.
    """
    if sums.channels != len(th):
        raise ShapeError(f"{sums.channels} channels vs {len(th)} thresholds")
    ph, pw = sums.height // 2, sums.width // 2
    if ph == 0 or pw == 0:
        raise ShapeError(f"cannot 2x2-pool a {sums.height}x{sums.width} map")
    v = sums.values[:, : 2 * ph, : 2 * pw].astype(np.int64)
    s4 = v[:, 0::2, 0::2] + v[:, 0::2, 1::2] + v[:, 1::2, 0::2] + v[:, 1::2, 1::2]
    t = th.t_pool[:, None, None]
    ge = s4 >= t
    bits = np.where(th.flip[:, None, None], ~ge, ge)
    return BinaryTensor.from_bits(bits.astype(np.uint8))


def residual_accumulate(
    sums: IntTensor, residual: IntTensor, acc_bits: int = 16, mode: str = "error"
) -> IntTensor:
    """Elementwise checked add of a parked residual plane into the sums."""
    if (sums.channels, sums.height, sums.width) != (
        residual.channels,
        residual.height,
        residual.width,
    ):
        raise ShapeError("residual plane dimensions do not match")
    out = IntTensor(sums.channels, sums.height, sums.width, sums.values + residual.values)
    return out.check_range(acc_bits, mode)


def bipolar_residual_accumulate(
    sums: IntTensor, residual: BinaryTensor, acc_bits: int = 16, mode: str = "error"
) -> IntTensor:
    """Add a re-binarized residual as +/-1 per element (binary parking mode)."""
    if (sums.channels, sums.height, sums.width) != (
        residual.channels,
        residual.height,
        residual.width,
    ):
        raise ShapeError("residual map dimensions do not match")
    out = IntTensor(
        sums.channels, sums.height, sums.width,
        sums.values + residual.to_bipolar().astype(np.int32),
    )
    return out.check_range(acc_bits, mode)


# ---------------------------------------------------------------------------
# golden network model
# ---------------------------------------------------------------------------

@dataclass
class LayerResult:
    sums: IntTensor          # final accumulated plane (post-residual, pre-pool)
    bits: BinaryTensor       # layer output (post binarize + pool)


def layer_forward(
    x: BinaryTensor,
    layer,
    weights: np.ndarray,
    residual=None,
    acc_bits: int = 16,
    acc_mode: str = "error",
) -> LayerResult:
    """Run one binary layer: conv (all bases), residual add, binarize/pool."""
    if getattr(layer, "flatten", False):
        x = x.flatten()
    if x.channels != layer.n_in:
        raise ShapeError(f"layer {layer.name}: input has {x.channels} channels, expected {layer.n_in}")
    weights = np.asarray(weights, dtype=np.uint16)
    if weights.ndim == 4:
        weights = weights[None]
    sums = None
    for b in range(layer.bases):
        part = xnor_conv(x, weights[b], layer.k, layer.stride, layer.padding)
        sums = part if sums is None else IntTensor(
            part.channels, part.height, part.width, sums.values + part.values
        )
    sums.check_range(acc_bits, acc_mode)
    if residual is not None:
        if isinstance(residual, IntTensor):
            sums = residual_accumulate(sums, residual, acc_bits, acc_mode)
        else:
            sums = bipolar_residual_accumulate(sums, residual, acc_bits, acc_mode)
    th = layer.thresholds
    if th is None:
        raise ShapeError(f"layer {layer.name} has no thresholds attached")
    if layer.pool == "max":
        bits = binary_maxpool(sums, th)
    elif layer.pool == "avg":
        bits = avg_pool_threshold(sums, th)
    else:
        bits = threshold_binarize(sums, th)
    return LayerResult(sums, bits)


def run_network_reference(net, x: BinaryTensor, weights: dict) -> dict:
    """Golden model: compose layer_forward over the network's binary layers.

    Returns {layer name: LayerResult}; the last entry is the network
    output.  External layers are not simulated; `x` is the input to the
    first binary layer.
    """
    results: dict[str, LayerResult] = {}
    current = x
    for layer in net.binary_layers():
        feed = current if layer.input_layer is None else results[layer.input_layer].bits
        residual = None
        if layer.residual is not None:
            if layer.residual_mode == "int":
                residual = results[layer.residual].sums
            else:
                residual = net.residual_bits(layer, results, x)
        res = layer_forward(feed, layer, weights[layer.name], residual, net.acc_bits, net.acc_mode)
        results[layer.name] = res
        current = res.bits
    return results
