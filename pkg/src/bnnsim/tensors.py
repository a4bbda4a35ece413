"""Bit-packed binary tensors and integer partial-sum planes.

Feature maps and weights hold bipolar values in {-1, +1}, stored as bits
(bit 1 <-> +1, bit 0 <-> -1) packed 16 channels per 16-bit word.  Word
layout is channel-group major, then row major: ``words[g, y, x]`` holds
channels ``16*g .. 16*g+15`` of pixel ``(y, x)``.  Bits past the last real
channel in the final group are always zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AccumulatorOverflow, ShapeError

LANES = 16  # channels per packed word

# 16-bit popcount lookup, built from the 8-bit table via outer addition.
_POP8 = np.unpackbits(np.arange(256, dtype=np.uint8)[:, None], axis=1).sum(1).astype(np.uint8)
POPCOUNT16 = (_POP8[:, None] + _POP8[None, :]).reshape(65536)  # index = hi*256 + lo


def n_groups(channels: int) -> int:
    return -(-channels // LANES)


def lane_mask(channels: int, group: int) -> int:
    """Valid-lane mask for one channel group (trailing lanes masked off)."""
    rem = channels - group * LANES
    if rem >= LANES:
        return 0xFFFF
    return (1 << rem) - 1


def lane_masks(channels: int) -> np.ndarray:
    """Per-group valid-lane masks as a uint16 vector."""
    return np.array([lane_mask(channels, g) for g in range(n_groups(channels))], dtype=np.uint16)


def popcount(words: np.ndarray) -> np.ndarray:
    """Set-bit count of a uint16 array, elementwise."""
    return POPCOUNT16[words]


@dataclass
class BinaryTensor:
    """A bit-packed C x H x W map of bipolar values."""

    channels: int
    height: int
    width: int
    words: np.ndarray = field(repr=False)  # uint16, shape (groups, height, width)

    def __init__(self, channels: int, height: int, width: int, words: np.ndarray | None = None):
        if channels <= 0 or height <= 0 or width <= 0:
            raise ShapeError(f"empty tensor {channels}x{height}x{width}")
        self.channels = channels
        self.height = height
        self.width = width
        g = n_groups(channels)
        if words is None:
            self.words = np.zeros((g, height, width), dtype=np.uint16)
        else:
            words = np.asarray(words, dtype=np.uint16)
            if words.shape != (g, height, width):
                raise ShapeError(f"words shape {words.shape} != {(g, height, width)}")
            self.words = words
            # trailing bits of the last group must stay zero
            self.words[-1] &= lane_mask(channels, g - 1)

    @classmethod
    def from_bits(cls, bits: np.ndarray) -> "BinaryTensor":
        """Pack a (C, H, W) array of 0/1 bits."""
        bits = np.asarray(bits)
        c, h, w = bits.shape
        g = n_groups(c)
        padded = np.zeros((g * LANES, h, w), dtype=np.uint32)
        padded[:c] = bits.astype(np.uint32) & 1
        shifts = (np.arange(LANES, dtype=np.uint32) << np.zeros(1, dtype=np.uint32))[:, None, None]
        words = np.zeros((g, h, w), dtype=np.uint16)
        for grp in range(g):
            lanes = padded[grp * LANES:(grp + 1) * LANES]
            words[grp] = (lanes << shifts).sum(0).astype(np.uint16)
        return cls(c, h, w, words)

    def to_bits(self) -> np.ndarray:
        """Unpack to a (C, H, W) uint8 array of 0/1 bits."""
        out = np.zeros((self.channels, self.height, self.width), dtype=np.uint8)
        for c in range(self.channels):
            out[c] = (self.words[c // LANES] >> (c % LANES)) & 1
        return out

    def to_bipolar(self) -> np.ndarray:
        """Unpack to int8 values in {-1, +1}."""
        return (self.to_bits().astype(np.int8) * 2) - 1

    def flatten(self) -> "BinaryTensor":
        """Reshape C x H x W to (H*W*C) x 1 x 1 without touching bit lanes.

        Requires C to be a multiple of 16 so the repack is a pure word
        permutation: new group index = (y*W + x)*G + g.
        """
        if self.channels % LANES != 0:
            raise ShapeError("flatten requires a multiple of 16 channels")
        g, h, w = self.words.shape
        # (g, y, x) -> (y, x, g) then collapse
        flat = np.transpose(self.words, (1, 2, 0)).reshape(h * w * g, 1, 1)
        return BinaryTensor(self.channels * h * w, 1, 1, flat)

    def word_count(self) -> int:
        return int(self.words.size)

    def bit_equal(self, other: "BinaryTensor") -> bool:
        return (
            self.channels == other.channels
            and self.height == other.height
            and self.width == other.width
            and np.array_equal(self.words, other.words)
        )

    def copy(self) -> "BinaryTensor":
        return BinaryTensor(self.channels, self.height, self.width, self.words.copy())


def binarize_pack(values: np.ndarray) -> BinaryTensor:
    """Pack a real or bipolar (C, H, W) array: bit = 1 iff value > 0."""
    values = np.asarray(values)
    if values.ndim != 3:
        raise ShapeError(f"expected (C, H, W), got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite values cannot be binarized")
    return BinaryTensor.from_bits((values > 0).astype(np.uint8))


@dataclass
class IntTensor:
    """Per-pixel signed integer accumulator plane (partial sums)."""

    channels: int
    height: int
    width: int
    values: np.ndarray = field(repr=False)  # int32, shape (channels, height, width)

    def __init__(self, channels: int, height: int, width: int, values: np.ndarray | None = None):
        if channels <= 0 or height <= 0 or width <= 0:
            raise ShapeError(f"empty tensor {channels}x{height}x{width}")
        self.channels = channels
        self.height = height
        self.width = width
        if values is None:
            self.values = np.zeros((channels, height, width), dtype=np.int32)
        else:
            values = np.asarray(values, dtype=np.int32)
            if values.shape != (channels, height, width):
                raise ShapeError(f"values shape {values.shape} != {(channels, height, width)}")
            self.values = values

    def check_range(self, acc_bits: int = 16, mode: str = "error") -> "IntTensor":
        """Enforce the accumulator width: raise or saturate on overflow."""
        lo, hi = -(1 << (acc_bits - 1)), (1 << (acc_bits - 1)) - 1
        if mode == "saturate":
            np.clip(self.values, lo, hi, out=self.values)
        elif self.values.min(initial=0) < lo or self.values.max(initial=0) > hi:
            raise AccumulatorOverflow(
                f"partial sum outside signed {acc_bits}-bit range "
                f"[{self.values.min()}, {self.values.max()}]"
            )
        return self

    def copy(self) -> "IntTensor":
        return IntTensor(self.channels, self.height, self.width, self.values.copy())
