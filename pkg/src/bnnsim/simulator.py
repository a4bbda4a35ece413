"""Cycle-level execution of a network plan.

The datapath contract: in steady state the array produces one partial
row-convolution result (one output pixel of one output channel, over one
16-channel input tile) per cycle.  Around that, the model charges what
the loop nest implies: a k*k-word filter pass into the array plus a
depth-3 pipeline fill per (row, output-channel) segment, visible filter
chunk loads when double buffering cannot hide them, the first rows of
each (n_o, n_i) iteration, one cycle per layer for the source/sink swap,
and one cycle per 2x2 window per 16-channel word for max pooling.

Outputs are produced through the same accumulate/threshold path the
functional model defines, so they are bit-identical to it by
construction of the arithmetic, and verified against it in tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arch import ArchConfig
from .errors import AccumulatorOverflow, FitError, ShapeError
from .functional import (
    ThresholdVector,
    avg_pool_threshold,
    binary_maxpool,
    threshold_binarize,
)
from .network import NetworkDesc
from .scheduler import (
    C_I_TILE,
    C_O_TILE,
    INPUT_MAP,
    PIPE_FILL,
    LayerPlan,
    NetworkPlan,
    channel_tiles,
    plan_network,
)
from .stats import LayerStats, Stats
from .tensors import (
    POPCOUNT16,
    BinaryTensor,
    IntTensor,
    lane_masks,
    n_groups,
)


@dataclass
class UtilizationReport:
    util_kernel_limited: float   # achieved ops / (2*k*k*16 per cycle)
    util_full_array: float       # achieved ops / (full-array peak per cycle)

    def to_text(self) -> str:
        return (f"util_kernel_limited = {self.util_kernel_limited:.6f}\n"
                f"util_full_array = {self.util_full_array:.6f}\n")


@dataclass
class VerifyReport:
    equal: bool
    first_divergence: tuple | None   # (layer, channel, y, x)
    layers_checked: int
    stats: Stats

    def to_text(self) -> str:
        if self.equal:
            return f"equal over {self.layers_checked} layers\n"
        layer, c, y, x = self.first_divergence
        return f"DIVERGENCE at layer {layer}, channel {c}, pixel ({y},{x})\n"


def _build_slab(feed: BinaryTensor, layer, win) -> np.ndarray:
    """Word slab covering the window's receptive field, vertically padded,
    horizontally padded only where the window crosses the real image edge."""
    k, s = layer.k, layer.stride
    p = (k - 1) // 2 if layer.padding != "none" else 0
    pad_word = lane_masks(feed.channels) if layer.padding == "same1" else None
    g, h, w = feed.words.shape
    lo = win.out_lo * s - p
    hi = (win.out_hi - 1) * s - p + k
    slab = np.zeros((g, h + 2 * p, hi - lo), dtype=np.uint16)
    if pad_word is not None:
        slab[:] = pad_word[:, None, None]
    src_lo, src_hi = max(lo, 0), min(hi, w)
    slab[:, p:p + h, src_lo - lo:src_hi - lo] = feed.words[:, :, src_lo:src_hi]
    return slab


def _valid_taps(layer, win) -> tuple[int, int]:
    """(sum of valid vertical taps over rows, same over window columns).

    Window positions hanging over the image edge have idle lanes that do
    not count as achieved work."""
    k, s = layer.k, layer.stride
    p = (k - 1) // 2 if layer.padding != "none" else 0
    h, w = layer.in_h, layer.in_w
    vy = 0
    for oy in range(layer.out_h):
        a = oy * s - p
        vy += min(a + k, h) - max(a, 0)
    vx = 0
    for ox in range(win.out_lo, win.out_hi):
        a = ox * s - p
        vx += min(a + k, w) - max(a, 0)
    return vy, vx


def _run_layer_tile(plan: LayerPlan, feed: BinaryTensor, weights: np.ndarray,
                    residual, net: NetworkDesc, arch: ArchConfig,
                    bank_activity: dict) -> tuple[IntTensor, BinaryTensor, LayerStats]:
    l = plan.layer
    win = plan.window
    if getattr(l, "flatten", False):
        feed = feed.flatten()
    if feed.channels != l.n_in:
        raise ShapeError(f"layer {l.name}: feed has {feed.channels} channels, expected {l.n_in}")
    k, s = l.k, l.stride
    p = (k - 1) // 2 if l.padding != "none" else 0
    o_h, o_w = l.out_h, win.out_w
    i_w = win.in_w
    lanes = arch.compute.lanes_per_unit
    w_all = np.asarray(weights, dtype=np.uint16)
    if w_all.ndim == 4:
        w_all = w_all[None]

    slab = _build_slab(feed, l, win)
    masks = lane_masks(l.n_in)
    views = [
        np.lib.stride_tricks.sliding_window_view(slab[g], (k, k))[::s, ::s]
        for g in range(slab.shape[0])
    ]

    st = LayerStats(name=l.name, k=k, lanes=lanes, tile=plan.tile,
                    active_banks=plan.active_banks)
    st.ops_graph = 2 * k * k * l.n_in * l.n_out * o_h * o_w * l.bases

    tiles_o = channel_tiles(l.n_out, C_O_TILE)
    tiles_i = channel_tiles(l.n_in, C_I_TILE)
    vy_sum, vx_sum = _valid_taps(l, win)
    rows_used = min(l.in_h, (o_h - 1) * s - p + k) - max(0, -p)
    k_first = min(l.in_h, k - p)
    acc_lo = -(1 << (net.acc_bits - 1))
    acc_hi = (1 << (net.acc_bits - 1)) - 1

    plane = np.zeros((l.n_out, o_h, o_w), dtype=np.int32)
    first_block = True
    for n_o, ct_o in enumerate(tiles_o):
        ch0 = n_o * C_O_TILE
        for base in range(l.bases):
            for n_i, ct_i in enumerate(tiles_i):
                # filter chunk: PB (or I/O stream) -> row banks
                chunk_words = ct_o * k * k
                st.pb_reads += chunk_words
                st.rowbank_writes += chunk_words
                load_cycles = chunk_words
                if plan.stream_params:
                    load_cycles = max(
                        load_cycles,
                        -(-chunk_words * 16 // arch.memory.io_bits_per_cycle))
                segments = o_h * ct_o
                block_span = segments * (o_w + k * k + PIPE_FILL)
                if first_block or block_span < load_cycles:
                    st.cycles_load += load_cycles
                first_block = False

                # image rows: first window's rows stall, the rest prefetch
                st.fmm_reads += rows_used * i_w
                st.rowbank_writes += rows_used * i_w
                st.cycles_load += k_first * i_w

                # row segments
                st.cycles_load += segments * k * k        # filter pass to array
                st.cycles_fill += segments * PIPE_FILL
                st.cycles_compute += segments * o_w
                st.rowbank_reads += segments * (k * k + s * k * o_w)
                st.nmcu_rmw += ct_o * o_h * o_w

                # bit-true accumulate for this block
                wg = w_all[base, ch0:ch0 + ct_o, :, :, n_i]
                matches = POPCOUNT16[
                    (~(views[n_i][None] ^ wg[:, None, None])) & masks[n_i]
                ].sum(axis=(3, 4), dtype=np.int32)
                plane[ch0:ch0 + ct_o] += matches
                lo_v = plane[ch0:ch0 + ct_o].min()
                hi_v = plane[ch0:ch0 + ct_o].max()
                if lo_v < acc_lo or hi_v > acc_hi:
                    if net.acc_mode == "saturate":
                        np.clip(plane[ch0:ch0 + ct_o], acc_lo, acc_hi,
                                out=plane[ch0:ch0 + ct_o])
                    else:
                        raise AccumulatorOverflow(
                            f"layer {l.name}: partial sum {lo_v}/{hi_v} outside "
                            f"signed {net.acc_bits}-bit range")

    # achieved ops: full channel/tap work minus edge-idle lanes
    st.xnor_ops_done = 2 * l.n_in * l.n_out * l.bases * vy_sum * vx_sum

    # residual accumulation at final write-back
    if residual is not None:
        kind, data = residual
        if kind == "int":
            plane += data[:, :, win.out_lo:win.out_hi]
            st.fmm_reads += l.n_out * o_h * o_w
        else:
            sl = BinaryTensor(l.n_out, o_h, o_w,
                              data.words[:, :, win.out_lo:win.out_hi].copy())
            plane += sl.to_bipolar().astype(np.int32)
            st.fmm_reads += n_groups(l.n_out) * o_h * o_w
        if plane.min() < acc_lo or plane.max() > acc_hi:
            if net.acc_mode == "saturate":
                np.clip(plane, acc_lo, acc_hi, out=plane)
            else:
                raise AccumulatorOverflow(f"layer {l.name}: residual add overflowed")
        st.nmcu_rmw += l.n_out * o_h * o_w

    sums = IntTensor(l.n_out, o_h, o_w, plane)
    th = l.thresholds
    if th is None:
        raise ShapeError(f"layer {l.name}: thresholds missing")
    if l.pool == "max":
        bits = _pool_slice(binary_maxpool, sums, th, win)
        st.cycles_pool += n_groups(l.n_out) * (o_h // 2) * win.pout_w
    elif l.pool == "avg":
        bits = _pool_slice(avg_pool_threshold, sums, th, win)
    else:
        bits = threshold_binarize(sums, th)

    # packed result write-back (+ residual parking)
    out_words = n_groups(l.n_out) * bits.height * bits.width
    st.fmm_writes += out_words
    if plan.parks_int_plane:
        st.fmm_writes += l.n_out * o_h * o_w

    if plan.tile == 0:
        st.cycles_other += 1  # source/sink swap
    if plan.stream_params:
        st.io_bits += l.weight_bits() + 16 * l.n_out
    if plan.charge_input_io:
        st.io_bits += 16 * n_groups(l.n_in) * l.in_h * i_w
    if plan.charge_output_io:
        st.io_bits += 16 * out_words

    _spread_bank_activity(bank_activity, plan.feed_banks, st.fmm_reads)
    _spread_bank_activity(bank_activity, plan.out_banks,
                          st.fmm_writes + 2 * st.nmcu_rmw)
    return sums, bits, st


def _pool_slice(pool_fn, sums: IntTensor, th: ThresholdVector, win) -> BinaryTensor:
    # pooling pairs columns on the global grid; out_lo is even by construction
    usable = 2 * (win.pout_hi - win.pout_lo)
    if usable < sums.width:
        sums = IntTensor(sums.channels, sums.height, usable,
                         sums.values[:, :, :usable])
    return pool_fn(sums, th)


def _spread_bank_activity(activity: dict, span: tuple, count: int) -> None:
    b0, b1 = span
    if b1 <= b0:
        return
    share = count // (b1 - b0)
    for b in range(b0, b1):
        activity[b] = activity.get(b, 0) + share


def execute(plan: NetworkPlan, net: NetworkDesc, x: BinaryTensor,
            weights: dict, arch: ArchConfig | None = None) -> tuple[dict, Stats]:
    """Run a planned network; returns ({layer: BinaryTensor}, Stats).

    Tiled groups run tile-major; every layer's full output map is
    reassembled so downstream layers and verification can read it.
    """
    arch = arch or plan.arch
    stats = Stats(net=net.name)
    outputs: dict[str, BinaryTensor] = {}
    planes: dict[str, np.ndarray] = {}
    layer_stats: dict[tuple, LayerStats] = {}
    binary = net.binary_layers()
    if not binary:
        return outputs, stats

    full_bits: dict[str, np.ndarray] = {}
    for pl in plan.exec_order:
        l = pl.layer
        feed_name = l.input_layer if l.input_layer is not None else (
            binary[pl.index - 1].name if pl.index > 0 else INPUT_MAP)
        feed = x if feed_name == INPUT_MAP else outputs[feed_name]

        residual = None
        if l.residual is not None:
            if l.residual_mode == "int":
                residual = ("int", planes[l.residual])
            else:
                src = outputs.get(l.residual, x)
                residual = ("binary", src)

        sums, bits, st = _run_layer_tile(pl, feed, weights[l.name], residual,
                                         net, arch, stats.bank_activity)
        layer_stats[(pl.index, pl.tile)] = st

        win = pl.window
        if l.name not in full_bits:
            full_bits[l.name] = np.zeros(
                (n_groups(l.n_out), l.pooled_h, l.pooled_w), dtype=np.uint16)
        full_bits[l.name][:, :, win.pout_lo:win.pout_hi] = bits.words
        outputs[l.name] = BinaryTensor(l.n_out, l.pooled_h, l.pooled_w,
                                       full_bits[l.name])
        if pl.parks_int_plane:
            if l.name not in planes:
                planes[l.name] = np.zeros((l.n_out, l.out_h, l.out_w), dtype=np.int32)
            planes[l.name][:, :, win.out_lo:win.out_hi] = sums.values

    stats.layers = [layer_stats[key] for key in sorted(layer_stats)]
    return outputs, stats


def run(net: NetworkDesc, x: BinaryTensor, weights: dict,
        arch: ArchConfig) -> tuple[dict, Stats, NetworkPlan]:
    plan = plan_network(net, arch)
    outputs, stats = execute(plan, net, x, weights, arch)
    return outputs, stats, plan


def utilization(stats: Stats, arch: ArchConfig | None = None) -> UtilizationReport:
    """Both published ratios, ops-weighted across layer runs."""
    if not stats.layers or stats.cycles_total == 0:
        raise FitError("utilization of an empty or zero-cycle run")
    lanes = arch.compute.lanes_per_unit if arch else 16
    full_peak = 2 * (arch.compute.n_bpu * arch.compute.xnor_units_per_bpu if arch else 49) * lanes
    w_ops = 0
    acc_k = 0.0
    acc_f = 0.0
    for l in stats.layers:
        if l.cycles_total == 0:
            continue
        ops = l.xnor_ops_done
        u_k = ops / (l.cycles_total * l.kernel_peak)
        u_f = ops / (l.cycles_total * full_peak)
        w_ops += ops
        acc_k += ops * u_k
        acc_f += ops * u_f
    return UtilizationReport(acc_k / w_ops, acc_f / w_ops)


def verify_against_oracle(net: NetworkDesc, x: BinaryTensor, weights: dict,
                          arch: ArchConfig) -> VerifyReport:
    """Plan + execute, then compare every layer against the functional model."""
    from .functional import run_network_reference

    if not net.binary_layers():
        return VerifyReport(True, None, 0, Stats(net=net.name))
    plan = plan_network(net, arch)
    outputs, stats = execute(plan, net, x, weights, arch)
    golden = run_network_reference(net, x, weights)
    for l in net.binary_layers():
        got = outputs[l.name].to_bits()
        want = golden[l.name].bits.to_bits()
        if not np.array_equal(got, want):
            diff = np.argwhere(got != want)[0]
            return VerifyReport(False, (l.name, int(diff[0]), int(diff[1]), int(diff[2])),
                                len(net.binary_layers()), stats)
    return VerifyReport(True, None, len(net.binary_layers()), stats)
