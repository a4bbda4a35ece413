"""Documented properties of the bundled shape files."""

import pytest

from bnnsim.arch import ArchConfig, MemoryGeometry, default_arch, validate
from bnnsim.cli import main
from bnnsim.netio import builtin_network

ALL_SHAPES = [
    "vgg_like_cifar10", "resnet18_ilsvrc", "resnet18_ilsvrc_3x",
    "resnet18_ilsvrc_8x", "alexnet_dorefa_ilsvrc", "sed_freesound",
]


@pytest.mark.parametrize("name", ALL_SHAPES)
def test_shapes_parse_and_validate(name):
    net = builtin_network(name)
    assert net.binary_layers()
    assert net.op_count()["total_ops"] > 0


def test_vgg_total_ops():
    assert round(builtin_network("vgg_like_cifar10").op_count()["total_mop"], 1) == 46.2


def test_resnet18_binary_fraction():
    # the published supported-ops share for this network is 93.4%
    frac = builtin_network("resnet18_ilsvrc").op_count()["binary_fraction"]
    assert abs(100 * frac - 93.4) < 0.15


def test_alexnet_binary_fraction():
    # conv-only binarization: published share is 85.3%
    frac = builtin_network("alexnet_dorefa_ilsvrc").op_count()["binary_fraction"]
    assert abs(100 * frac - 85.3) < 0.5


def test_resnet18_multibase_op_scaling():
    base = builtin_network("resnet18_ilsvrc").op_count()
    for name, bases in (("resnet18_ilsvrc_3x", 3), ("resnet18_ilsvrc_8x", 8)):
        multi = builtin_network(name).op_count()
        assert multi["binary_ops"] == bases * base["binary_ops"]


def test_sed_two_tile_plan():
    report = validate(builtin_network("sed_freesound"), default_arch())
    tiled = [e for e in report.entries if e.tiles > 1]
    assert tiled and {e.tiles for e in tiled} == {2}


def test_resnet18_needs_tiling_on_smaller_fmm():
    # at 76 kB the early-stage maps plus parked shortcut no longer fit
    arch = ArchConfig(memory=MemoryGeometry(fmm_src_banks=38, fmm_snk_banks=38))
    report = validate(builtin_network("resnet18_ilsvrc"), arch)
    assert not report.fits_untiled


def test_ilsvrc_energy_ordering(tmp_path, capsys):
    """Published per-frame energies order DoReFa < 1x < 3x < 8x ResNet-18,
    with the 3x/1x ratio near 3.  Exercised through run + report."""
    files = []
    for name in ("alexnet_dorefa_ilsvrc", "resnet18_ilsvrc",
                 "resnet18_ilsvrc_3x", "resnet18_ilsvrc_8x"):
        out = tmp_path / f"{name}.run"
        assert main(["run", name, "--seed", "3", "--out", str(out)]) == 0
        files.append(str(out))
    capsys.readouterr()
    assert main(["report", *files]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    header = lines[0].split(",")
    col = header.index("total_uj")
    energies = [float(row.split(",")[col]) for row in lines[1:]]
    assert energies == sorted(energies), f"energy ordering broken: {energies}"
    ratio = energies[2] / energies[1]
    assert abs(ratio - 3) / 3 < 0.05, f"3x/1x ratio {ratio}"
