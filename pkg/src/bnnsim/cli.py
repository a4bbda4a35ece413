"""Command-line interface.

    bnnsim verify <net> [--seed N] [--trials N] [--arch FILE]
    bnnsim run <net> [--weights FILE | --random] [--input FILE] [--arch FILE]
                     [--seed N] [--out FILE] [--trace FILE]
    bnnsim sweep [--kernel 1,3,5,7] [--banks 4..48] [--arch FILE] [--out FILE]
    bnnsim report <runfiles...> [--out FILE]

Networks are given as a file path or the name of a bundled shape
(vgg_like_cifar10, resnet18_ilsvrc, resnet18_ilsvrc_3x, resnet18_ilsvrc_8x,
alexnet_dorefa_ilsvrc, sed_freesound).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import netio
from .arch import ArchConfig, builtin_arch, default_arch, load_arch, validate
from .errors import BnnSimError
from .power import core_power, efficiency, full_report, ideal_point
from .simulator import run as run_network
from .simulator import utilization, verify_against_oracle

ARCH_ENV = "BNNSIM_ARCH"


def _resolve_arch(path: str | None) -> ArchConfig:
    path = path or os.environ.get(ARCH_ENV)
    if path is None:
        return default_arch()
    if Path(path).exists():
        return load_arch(path)
    return builtin_arch(path)


def _resolve_net(name: str):
    if Path(name).exists():
        return netio.load_network(name)
    try:
        return netio.builtin_network(name)
    except FileNotFoundError:
        raise BnnSimError(f"no such network file or bundled shape: {name!r}")


def _prepare_stimulus(net, args, rng):
    if getattr(args, "weights", None):
        weights = netio.load_weights(args.weights, net)
    else:
        netio.random_thresholds(net, rng)
        weights = netio.random_weights(net, rng)
    if getattr(args, "input", None):
        x = netio.load_tensor(args.input)
    else:
        x = netio.random_input(net, rng)
    return weights, x


def cmd_verify(args) -> int:
    arch = _resolve_arch(args.arch)
    failures = 0
    for trial in range(args.trials):
        rng = np.random.default_rng(args.seed + trial)
        net = _resolve_net(args.net)
        weights, x = _prepare_stimulus(net, args, rng)
        rep = verify_against_oracle(net, x, weights, arch)
        if rep.equal:
            print(f"trial {trial}: equal over {rep.layers_checked} layers")
        else:
            failures += 1
            layer, c, y, xx = rep.first_divergence
            print(f"trial {trial}: DIVERGENCE at {layer} channel {c} pixel ({y},{xx})")
    if failures:
        print(f"{failures}/{args.trials} trials diverged")
        return 1
    return 0


def cmd_run(args) -> int:
    arch = _resolve_arch(args.arch)
    rng = np.random.default_rng(args.seed)
    net = _resolve_net(args.net)
    if not net.binary_layers():
        raise BnnSimError(f"network {net.name!r} has no binary layers to simulate")
    fit = validate(net, arch)
    weights, x = _prepare_stimulus(net, args, rng)
    outputs, stats, plan = run_network(net, x, weights, arch)
    stats.seed = args.seed
    util = utilization(stats, arch)
    power = full_report(arch, stats)
    oc = net.op_count()
    f_clk = arch.op_point.f_clk
    t = stats.time_s(f_clk)
    header = [
        "# run report",
        f"net = {net.name}",
        f"seed = {args.seed}",
        f"graph_mop = {oc['total_mop']:.6f}",
        f"binary_fraction = {oc['binary_fraction']:.6f}",
        f"gops = {stats.xnor_ops_done / t / 1e9:.4f}",
        f"fps = {1.0 / t:.4f}",
        f"fits_untiled = {fit.fits_untiled}",
    ]
    text = "\n".join(header) + "\n" + util.to_text() + power.to_text() + stats.to_text()
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    if args.trace:
        with open(args.trace, "w") as fh:
            for line in plan.dump_lines(detail=args.trace_detail):
                fh.write(line + "\n")
    return 0


def _parse_range(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",")]


def cmd_sweep(args) -> int:
    arch = _resolve_arch(args.arch)
    kernels = _parse_range(args.kernel)
    banks = _parse_range(args.banks)
    f_clk = arch.op_point.f_clk
    lines = ["kernel,banks,gops,core_mw,tops_per_watt"]
    for k in kernels:
        if not arch.compute.kernel_ok(k):
            print(f"# kernel {k} unsupported, skipped", file=sys.stderr)
            continue
        for b in banks:
            if b > arch.memory.fmm_banks_total:
                continue
            st = ideal_point(arch, k, b)
            mw, _, _ = core_power(arch, st)
            gops = st.xnor_ops_done / st.cycles_total * f_clk / 1e9
            eff = efficiency(st, mw, f_clk)
            lines.append(f"{k},{b},{gops:.4f},{mw:.6f},{eff:.4f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return 0


def _scan_kv(path: str) -> dict:
    vals = {}
    for line in Path(path).read_text().splitlines():
        if line.startswith("[layers]"):
            break
        if " = " in line and not line.startswith("#"):
            key, _, val = line.partition(" = ")
            vals[key.strip()] = val.strip()
    return vals


def cmd_report(args) -> int:
    cols = ["network", "net_mop", "util_pct", "gops", "core_mw", "io_mw",
            "total_mw", "core_uj", "io_uj", "total_uj", "core_tops_w", "fps"]
    lines = [",".join(cols)]
    for path in args.runfiles:
        kv = _scan_kv(path)
        get = lambda key, d="0": kv.get(key, d)
        lines.append(",".join([
            get("net", Path(path).stem),
            f"{float(get('graph_mop')):.1f}",
            f"{100 * float(get('util_kernel_limited')):.1f}",
            f"{float(get('gops')):.1f}",
            f"{float(get('core_mw')):.3f}",
            f"{float(get('io_mw')):.3f}",
            f"{float(get('total_mw')):.3f}",
            f"{float(get('core_uj')):.1f}",
            f"{float(get('io_uj')):.1f}",
            f"{float(get('energy_uj_per_inference')):.1f}",
            f"{float(get('tops_per_watt')):.2f}",
            f"{float(get('fps')):.1f}",
        ]))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bnnsim", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="randomized equivalence against the functional oracle")
    v.add_argument("net")
    v.add_argument("--seed", type=int, default=1)
    v.add_argument("--trials", type=int, default=1)
    v.add_argument("--arch")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("run", help="simulate one inference and report stats/power")
    r.add_argument("net")
    r.add_argument("--weights", help="weight blob (default: random)")
    r.add_argument("--random", action="store_true", help="random weights and input")
    r.add_argument("--input", help="input tensor blob (default: random)")
    r.add_argument("--arch")
    r.add_argument("--seed", type=int, default=1)
    r.add_argument("--out", help="write the report to a file")
    r.add_argument("--trace", help="write the schedule trace to a file")
    r.add_argument("--trace-detail", default="segment", choices=["segment", "full"])
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="ideal-layer grid: throughput vs efficiency")
    s.add_argument("--kernel", default="1,3,5,7")
    s.add_argument("--banks", default="4..48")
    s.add_argument("--arch")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    g = sub.add_parser("report", help="merge run reports into a summary CSV")
    g.add_argument("runfiles", nargs="+")
    g.add_argument("--out")
    g.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BnnSimError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
