"""Accelerator instance description: compute geometry, memory hierarchy,
operating point, and the power-calibration table.

Defaults describe the reference design: a 7-wide array of row-convolution
units (7 xnor+popcount slices of 16 lanes each), a ping-pong feature-map
memory built from 1 kB latch banks, a double-buffered parameter buffer,
and seven row staging banks behind a crossbar.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import FitError, FormatError, ShapeError
from .power import CalibrationTable
from .tensors import n_groups


@dataclass
class ComputeGeometry:
    n_bpu: int = 7
    xnor_units_per_bpu: int = 7
    lanes_per_unit: int = 16
    supported_kernels: tuple = (1, 3, 5, 7)

    def kernel_ok(self, k: int) -> bool:
        return k in self.supported_kernels and k <= self.n_bpu and k <= self.xnor_units_per_bpu


@dataclass
class MemoryGeometry:
    fmm_bank_words: int = 256
    fmm_bank_width_bits: int = 32
    fmm_src_banks: int = 73       # half A
    fmm_snk_banks: int = 73       # half B
    pb_banks: int = 2
    pb_bytes: int = 3584          # bank width for the PB is not tied to 1 kB
    rowbank_count: int = 7
    rowbank_bytes: int = 512
    io_bits_per_cycle: int = 16   # off-chip streaming bandwidth at core clock

    @property
    def bank_bytes(self) -> int:
        return self.fmm_bank_words * self.fmm_bank_width_bits // 8

    @property
    def fmm_banks_total(self) -> int:
        return self.fmm_src_banks + self.fmm_snk_banks

    def half_bytes(self, half: int) -> int:
        banks = self.fmm_src_banks if half == 0 else self.fmm_snk_banks
        return banks * self.bank_bytes

    @classmethod
    def with_total_banks(cls, total: int, **kw) -> "MemoryGeometry":
        return cls(fmm_src_banks=total // 2, fmm_snk_banks=total - total // 2, **kw)


@dataclass
class OperatingPoint:
    vdd: float = 0.4
    f_clk: float = 154e6
    active_fmm_banks: int | None = None  # None = derived per layer from usage

    def __post_init__(self):
        if self.vdd <= 0 or self.f_clk <= 0:
            raise ShapeError("operating point must be positive")


@dataclass
class ArchConfig:
    compute: ComputeGeometry = field(default_factory=ComputeGeometry)
    memory: MemoryGeometry = field(default_factory=MemoryGeometry)
    op_point: OperatingPoint = field(default_factory=OperatingPoint)
    calib: CalibrationTable = field(default_factory=CalibrationTable)

    def __post_init__(self):
        if self.op_point.active_fmm_banks is not None:
            if self.op_point.active_fmm_banks > self.memory.fmm_banks_total:
                raise ShapeError("active banks exceed total FMM banks")

    def copy(self, **overrides) -> "ArchConfig":
        return replace(self, **overrides)


def default_arch() -> ArchConfig:
    return ArchConfig()


def peak_ops_per_cycle(arch: ArchConfig, k: int) -> int:
    """Steady-state ops per cycle for a k x k layer (1 xnor+accumulate = 2 ops)."""
    if not arch.compute.kernel_ok(k):
        raise FitError(f"kernel {k}x{k} not supported by this geometry")
    return 2 * k * k * arch.compute.lanes_per_unit


def map_bytes(channels: int, h: int, w: int) -> int:
    """FMM bytes of a packed binary map."""
    return n_groups(channels) * h * w * 2


def plane_bytes(channels: int, h: int, w: int) -> int:
    """FMM bytes of a 16-bit integer plane (residual parking)."""
    return channels * h * w * 2


# ---------------------------------------------------------------------------
# fit reporting
# ---------------------------------------------------------------------------

@dataclass
class FitEntry:
    layer: str
    direction: str
    src_bytes: int
    snk_bytes: int
    src_capacity: int
    snk_capacity: int
    working_bytes: int          # partial-sum tile plane, informational only
    active_banks: int
    fits: bool
    tiles: int = 1
    overlap_cols: int = 0


@dataclass
class FitReport:
    entries: list[FitEntry]
    fits_untiled: bool
    needs_tiling: list[str]
    unsupported_kernels: list[str]
    param_bytes: int
    pb_bytes: int
    weights_fit_pb: bool
    streamed_param_bits: int

    def summary(self) -> str:
        lines = [
            f"fits without tiling: {'yes' if self.fits_untiled else 'no'}",
            f"parameter bytes: {self.param_bytes} / PB {self.pb_bytes} "
            f"({'resident' if self.weights_fit_pb else 'streamed'})",
        ]
        if self.needs_tiling:
            lines.append("layers needing spatial tiling: " + ", ".join(self.needs_tiling))
        if self.unsupported_kernels:
            lines.append("unsupported kernels: " + ", ".join(self.unsupported_kernels))
        for e in self.entries:
            lines.append(
                f"  {e.layer:16s} {e.direction}  src {e.src_bytes:>8d}/{e.src_capacity:<8d}"
                f" snk {e.snk_bytes:>8d}/{e.snk_capacity:<8d}"
                f" work {e.working_bytes:>8d}  banks {e.active_banks:>3d}"
                f"  {'ok' if e.fits else 'TILE'}"
                + (f" x{e.tiles} (overlap {e.overlap_cols})" if e.tiles > 1 else "")
            )
        return "\n".join(lines)


def validate(net, arch: ArchConfig) -> FitReport:
    """Check a network against the memory geometry and kernel support.

    Byte accounting covers packed activation maps and parked residual
    planes; the in-flight partial-sum tile plane is reported but does not
    affect the fit verdict.  Tile counts come from the scheduler.
    """
    from . import scheduler  # local import; scheduler depends on this module

    net.validate()
    if not net.binary_layers():
        raise FitError("network has no binary layers to place")
    for l in net.binary_layers():
        if l.n_out <= 0 or l.n_in <= 0:
            raise FitError(f"layer {l.name}: zero-size layer")
    return scheduler.placement_report(net, arch)


# ---------------------------------------------------------------------------
# config file format
# ---------------------------------------------------------------------------

def parse_arch(text: str, path: str = "<string>") -> ArchConfig:
    compute = ComputeGeometry()
    memory = MemoryGeometry()
    op = OperatingPoint()
    calib = CalibrationTable()
    section = None
    targets = {"compute": compute, "memory": memory, "operating": op, "calibration": calib}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r"\[(\w+)\]", line)
        if m:
            section = m.group(1)
            if section not in targets:
                raise FormatError(f"unknown section [{section}]", path, lineno)
            continue
        if "=" not in line or section is None:
            raise FormatError(f"expected key = value inside a section: {line!r}", path, lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        try:
            _apply_key(targets[section], key, val)
        except (ValueError, AttributeError) as e:
            raise FormatError(f"bad value for {key!r}: {e}", path, lineno) from e
    cfg = ArchConfig(compute, memory, op, calib)
    calib.check()
    return cfg


def _apply_key(obj, key: str, val: str) -> None:
    if not hasattr(obj, key):
        raise AttributeError(f"no such field {key!r}")
    current = getattr(obj, key)
    if key == "supported_kernels":
        setattr(obj, key, tuple(int(v) for v in val.split(",")))
    elif key in ("core_mw_full", "core_mw_gated"):
        entries = {}
        for item in val.split(","):
            k, mw = item.split(":")
            entries[int(k)] = float(mw)
        setattr(obj, key, entries)
    elif key == "breakdown":
        entries = {}
        for item in val.split(","):
            name, frac = item.split(":")
            entries[name.strip()] = float(frac)
        setattr(obj, key, entries)
    elif key == "mem_subfractions":
        setattr(obj, key, tuple(float(v) for v in val.split(",")))
    elif key == "active_fmm_banks":
        setattr(obj, key, None if val == "auto" else int(val))
    elif isinstance(current, bool):
        setattr(obj, key, val.lower() in ("1", "true", "yes"))
    elif isinstance(current, int):
        setattr(obj, key, int(val))
    elif isinstance(current, float) or current is None:
        setattr(obj, key, float(val))
    else:
        setattr(obj, key, val)


def format_arch(cfg: ArchConfig) -> str:
    c, m, o, cal = cfg.compute, cfg.memory, cfg.op_point, cfg.calib
    full = ", ".join(f"{k}:{v}" for k, v in sorted(cal.core_mw_full.items()))
    gated = ", ".join(f"{k}:{v}" for k, v in sorted(cal.core_mw_gated.items()))
    brk = ", ".join(f"{k}:{v}" for k, v in cal.breakdown.items())
    return "\n".join([
        "[compute]",
        f"n_bpu = {c.n_bpu}",
        f"xnor_units_per_bpu = {c.xnor_units_per_bpu}",
        f"lanes_per_unit = {c.lanes_per_unit}",
        "supported_kernels = " + ",".join(str(k) for k in c.supported_kernels),
        "",
        "[memory]",
        f"fmm_bank_words = {m.fmm_bank_words}",
        f"fmm_bank_width_bits = {m.fmm_bank_width_bits}",
        f"fmm_src_banks = {m.fmm_src_banks}",
        f"fmm_snk_banks = {m.fmm_snk_banks}",
        f"pb_banks = {m.pb_banks}",
        f"pb_bytes = {m.pb_bytes}",
        f"rowbank_count = {m.rowbank_count}",
        f"rowbank_bytes = {m.rowbank_bytes}",
        f"io_bits_per_cycle = {m.io_bits_per_cycle}",
        "",
        "[operating]",
        f"vdd = {o.vdd}",
        f"f_clk = {o.f_clk}",
        "active_fmm_banks = " + ("auto" if o.active_fmm_banks is None else str(o.active_fmm_banks)),
        "",
        "[calibration]",
        f"core_mw_full = {full}",
        f"core_mw_gated = {gated}",
        f"gated_banks = {cal.gated_banks}",
        f"full_banks = {cal.full_banks}",
        f"breakdown = {brk}",
        "mem_subfractions = " + ", ".join(str(v) for v in cal.mem_subfractions),
        f"io_pj_per_bit = {cal.io_pj_per_bit}",
    ]) + "\n"


def load_arch(path) -> ArchConfig:
    path = Path(path)
    return parse_arch(path.read_text(), str(path))


def save_arch(cfg: ArchConfig, path) -> None:
    Path(path).write_text(format_arch(cfg))


def builtin_arch(name: str = "default") -> ArchConfig:
    from importlib.resources import files

    res = files("bnnsim") / "shapes" / f"{name}.arch"
    return parse_arch(res.read_text(), f"shapes/{name}.arch")
