"""Independent brute-force reference in the bipolar (+/-1) domain.

This path shares no convolution or pooling code with the packed-word
implementation: tensors are unpacked via numpy bit twiddling, the
correlation runs over +/-1 integers with einsum, and pooling reduces
integer sums directly.  It exists to cross-check both the functional
model and the cycle simulator.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensors import LANES, BinaryTensor


def unpack_bipolar(t: BinaryTensor) -> np.ndarray:
    """(C, H, W) int8 array of +/-1 values, unpacked via np.unpackbits."""
    g, h, w = t.words.shape
    bytes_ = t.words.reshape(g, h, w, 1).view(np.uint8)  # little-endian pairs
    bits = np.unpackbits(bytes_, axis=3, bitorder="little")  # (g, h, w, 16)
    lanes = np.moveaxis(bits, 3, 1).reshape(g * LANES, h, w)
    return (lanes[: t.channels].astype(np.int8) * 2) - 1


def unpack_weights_bipolar(packed: np.ndarray, n_in: int) -> np.ndarray:
    """Packed (n_out, k, k, groups) words -> (n_out, n_in, k, k) of +/-1."""
    packed = np.asarray(packed, dtype=np.uint16)
    n_out, k, _, g = packed.shape
    bytes_ = packed.reshape(n_out, k, k, g, 1).view(np.uint8)
    bits = np.unpackbits(bytes_, axis=4, bitorder="little")  # (n_out,k,k,g,16)
    lanes = bits.reshape(n_out, k, k, g * LANES)[:, :, :, :n_in]
    return np.moveaxis((lanes.astype(np.int8) * 2) - 1, 3, 1)


def bipolar_conv(
    x: np.ndarray, w: np.ndarray, stride: int = 1, padding: str = "same0"
) -> np.ndarray:
    """Plain integer correlation of +/-1 arrays, padding with the pad bit's
    bipolar value.  Returns int32 (n_out, oh, ow)."""
    n_out, n_in, k, _ = w.shape
    if x.shape[0] != n_in:
        raise ShapeError(f"input has {x.shape[0]} channels, weights expect {n_in}")
    if padding != "none":
        p = (k - 1) // 2
        fill = 1 if padding == "same1" else -1
        x = np.pad(x, ((0, 0), (p, p), (p, p)), constant_values=fill)
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
    win = win[:, ::stride, ::stride]  # (n_in, oh, ow, k, k)
    return np.einsum("cyxuv,ocuv->oyx", win.astype(np.int32), w.astype(np.int32))


def to_binary_sum(s_bip: np.ndarray, taps: int) -> np.ndarray:
    """Invert the bipolar rewrite: S_bip = 2*S_hat - taps."""
    s = s_bip + taps
    if np.any(s % 2):
        raise ShapeError("bipolar sum parity broken; taps count is wrong")
    return s // 2


def _compare(values: np.ndarray, t: np.ndarray, flip: np.ndarray) -> np.ndarray:
    ge = values >= t[:, None, None]
    return np.where(flip[:, None, None], ~ge, ge).astype(np.uint8)


def run_bipolar_reference(net, x: BinaryTensor, weights: dict) -> dict:
    """Brute-force forward pass; returns {name: (sums int32 CxHxW, bits CxHxW)}."""
    results: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    current = x
    current_arr = unpack_bipolar(x)
    for layer in net.binary_layers():
        if layer.input_layer is not None:
            feed = results[layer.input_layer][1]
        else:
            feed = current_arr
        if layer.flatten:
            c, h, w = feed.shape
            feed = np.transpose(feed, (1, 2, 0)).reshape(c * h * w, 1, 1)
        taps = layer.k * layer.k * layer.n_in
        sums = None
        w_all = np.asarray(weights[layer.name], dtype=np.uint16)
        if w_all.ndim == 4:
            w_all = w_all[None]
        for b in range(layer.bases):
            wb = unpack_weights_bipolar(w_all[b], layer.n_in)
            part = to_binary_sum(bipolar_conv(feed, wb, layer.stride, layer.padding), taps)
            sums = part if sums is None else sums + part
        if layer.residual is not None:
            if layer.residual_mode == "int":
                sums = sums + results[layer.residual][0]
            elif layer.residual in results:
                sums = sums + (results[layer.residual][1].astype(np.int32) * 2 - 1)
            else:  # source is the network input map
                sums = sums + unpack_bipolar(x).astype(np.int32)
        hi = 1 << (net.acc_bits - 1)
        if net.acc_mode == "saturate":
            sums = np.clip(sums, -hi, hi - 1)
        elif sums.min() < -hi or sums.max() > hi - 1:
            raise OverflowError("accumulator overflow in bipolar reference")

        th = layer.thresholds
        if layer.pool == "max":
            # real-domain max: plain max on sums for normal channels, min on
            # flipped channels (their real value decreases with the sum)
            v = sums[:, : 2 * (sums.shape[1] // 2), : 2 * (sums.shape[2] // 2)]
            quads = np.stack(
                [v[:, 0::2, 0::2], v[:, 0::2, 1::2], v[:, 1::2, 0::2], v[:, 1::2, 1::2]]
            )
            agg = np.where(th.flip[:, None, None], quads.min(0), quads.max(0))
            bits = _compare(agg, th.t, th.flip)
        elif layer.pool == "avg":
            v = sums[:, : 2 * (sums.shape[1] // 2), : 2 * (sums.shape[2] // 2)].astype(np.int64)
            s4 = v[:, 0::2, 0::2] + v[:, 0::2, 1::2] + v[:, 1::2, 0::2] + v[:, 1::2, 1::2]
            bits = _compare(s4, th.t_pool, th.flip)
        else:
            bits = _compare(sums, th.t, th.flip)
        results[layer.name] = (sums, bits)
        current_arr = bits.astype(np.int8) * 2 - 1
    return results


def bits_equal_packed(bits: np.ndarray, packed: BinaryTensor) -> bool:
    return np.array_equal(bits.astype(np.uint8), packed.to_bits())
