"""Cycle and access counters produced by execution, consumed by the
power model and reports.  All counters are exact integers."""

from __future__ import annotations

from dataclasses import dataclass, field

_COUNTERS = (
    "cycles_compute", "cycles_load", "cycles_fill", "cycles_pool", "cycles_other",
    "xnor_ops_done", "fmm_reads", "fmm_writes", "pb_reads",
    "rowbank_reads", "rowbank_writes", "nmcu_rmw", "io_bits",
)


@dataclass
class LayerStats:
    name: str
    k: int
    lanes: int = 16
    tile: int = 0
    ops_graph: int = 0          # graph-level ops (full taps), for weighting
    active_banks: int = 0
    cycles_compute: int = 0
    cycles_load: int = 0        # loads not hidden by overlap
    cycles_fill: int = 0        # pipeline fill/drain
    cycles_pool: int = 0
    cycles_other: int = 0       # swaps and bookkeeping
    xnor_ops_done: int = 0      # achieved ops (idle lanes excluded)
    fmm_reads: int = 0          # in 16-bit word units
    fmm_writes: int = 0
    pb_reads: int = 0
    rowbank_reads: int = 0
    rowbank_writes: int = 0
    nmcu_rmw: int = 0
    io_bits: int = 0

    @property
    def cycles_total(self) -> int:
        return (self.cycles_compute + self.cycles_load + self.cycles_fill
                + self.cycles_pool + self.cycles_other)

    @property
    def kernel_peak(self) -> int:
        return 2 * self.k * self.k * self.lanes

    @property
    def xnor_lane_slots(self) -> int:
        return self.cycles_total * self.kernel_peak

    @property
    def util_kernel_limited(self) -> float:
        return self.xnor_ops_done / self.xnor_lane_slots if self.cycles_total else 0.0

    @property
    def mem_accesses(self) -> int:
        """Weighted memory activity; the read-add-write counts twice."""
        return (self.fmm_reads + self.fmm_writes + self.pb_reads
                + self.rowbank_reads + self.rowbank_writes + 2 * self.nmcu_rmw)

    def add(self, other: "LayerStats") -> None:
        for name in _COUNTERS:
            setattr(self, name, getattr(self, name) + getattr(other, name))


@dataclass
class Stats:
    net: str = ""
    seed: int | None = None
    layers: list[LayerStats] = field(default_factory=list)
    bank_activity: dict = field(default_factory=dict)  # bank index -> accesses

    def _sum(self, attr: str) -> int:
        return sum(getattr(l, attr) for l in self.layers)

    @property
    def cycles_total(self) -> int:
        return self._sum("cycles_total")

    @property
    def cycles_compute(self) -> int:
        return self._sum("cycles_compute")

    @property
    def cycles_load(self) -> int:
        return self._sum("cycles_load")

    @property
    def xnor_ops_done(self) -> int:
        return self._sum("xnor_ops_done")

    @property
    def xnor_lane_slots(self) -> int:
        return self._sum("xnor_lane_slots")

    @property
    def io_bits(self) -> int:
        return self._sum("io_bits")

    @property
    def nmcu_rmw(self) -> int:
        return self._sum("nmcu_rmw")

    @property
    def fmm_reads(self) -> int:
        return self._sum("fmm_reads")

    @property
    def fmm_writes(self) -> int:
        return self._sum("fmm_writes")

    @property
    def pb_reads(self) -> int:
        return self._sum("pb_reads")

    @property
    def rowbank_reads(self) -> int:
        return self._sum("rowbank_reads")

    @property
    def rowbank_writes(self) -> int:
        return self._sum("rowbank_writes")

    def time_s(self, f_clk: float) -> float:
        return self.cycles_total / f_clk

    def to_text(self) -> str:
        """Key/value block plus a per-layer CSV table."""
        lines = [f"net = {self.net}"]
        if self.seed is not None:
            lines.append(f"seed = {self.seed}")
        for key in ("cycles_total", "cycles_compute", "cycles_load", "xnor_ops_done",
                    "xnor_lane_slots", "fmm_reads", "fmm_writes", "pb_reads",
                    "rowbank_reads", "rowbank_writes", "nmcu_rmw", "io_bits"):
            lines.append(f"{key} = {getattr(self, key)}")
        lines.append("[layers]")
        cols = ["name", "tile", "k", "ops_graph", "xnor_ops_done", "cycles_compute",
                "cycles_load", "cycles_fill", "cycles_pool", "cycles_other",
                "fmm_reads", "fmm_writes", "pb_reads", "rowbank_reads",
                "rowbank_writes", "nmcu_rmw", "io_bits", "active_banks"]
        lines.append(",".join(cols))
        for l in self.layers:
            lines.append(",".join(str(getattr(l, c)) for c in cols))
        if self.bank_activity:
            lines.append("[banks]")
            lines.append("bank,accesses")
            for bank in sorted(self.bank_activity):
                lines.append(f"{bank},{self.bank_activity[bank]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Stats":
        stats = cls()
        rows = iter(text.splitlines())
        header = None
        section = ""
        for line in rows:
            line = line.strip()
            if not line:
                continue
            if line == "[layers]":
                section = "layers"
                header = next(rows).split(",")
                continue
            if line == "[banks]":
                section = "banks"
                next(rows)
                continue
            if section == "banks":
                bank, _, count = line.partition(",")
                stats.bank_activity[int(bank)] = int(count)
                continue
            if header is None:
                key, _, val = line.partition(" = ")
                if key == "net":
                    stats.net = val
                elif key == "seed":
                    stats.seed = int(val)
                continue
            vals = line.split(",")
            kw = dict(zip(header, vals))
            ls = LayerStats(name=kw.pop("name"), k=int(kw.pop("k")))
            for key, val in kw.items():
                setattr(ls, key, int(val))
            stats.layers.append(ls)
        return stats
