"""Command-line surface: verify, run, sweep, report."""

import pytest

from bnnsim.cli import main


def test_verify_builtin_shape(capsys):
    rc = main(["verify", "vgg_like_cifar10", "--seed", "5"])
    assert rc == 0
    assert "equal over" in capsys.readouterr().out


def test_run_report_roundtrip(tmp_path, capsys):
    out = tmp_path / "vgg.run"
    rc = main(["run", "vgg_like_cifar10", "--seed", "2", "--out", str(out)])
    assert rc == 0
    text = out.read_text()
    assert "graph_mop = 46.24" in text
    assert "core_mw" in text and "[layers]" in text
    capsys.readouterr()
    rc = main(["report", str(out)])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("network,")
    assert lines[1].startswith("vgg_like_cifar10,46.2,")


def test_run_deterministic_output(tmp_path):
    a, b = tmp_path / "a.run", tmp_path / "b.run"
    main(["run", "sed_freesound", "--seed", "9", "--out", str(a)])
    main(["run", "sed_freesound", "--seed", "9", "--out", str(b)])
    assert a.read_text() == b.read_text()


def test_sweep_headline_point(tmp_path, capsys):
    rc = main(["sweep", "--kernel", "7", "--banks", "4", "--out",
               str(tmp_path / "s.csv")])
    assert rc == 0
    row = (tmp_path / "s.csv").read_text().splitlines()[1].split(",")
    assert float(row[2]) == pytest.approx(241.5, rel=0.005)   # GOPS
    assert float(row[4]) == pytest.approx(223, rel=0.02)      # TOPS/W


def test_sweep_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["sweep", "--kernel", "3,5,7", "--banks", "4..12", "--out", str(a)])
    main(["sweep", "--kernel", "3,5,7", "--banks", "4..12", "--out", str(b)])
    assert a.read_text() == b.read_text()


def test_run_empty_network_clean_error(tmp_path, capsys):
    p = tmp_path / "empty.net"
    p.write_text("network empty\ninput 3 8 8\nlayer a external k=3 out=8\n")
    rc = main(["run", str(p)])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_unknown_shape_clean_error(capsys):
    rc = main(["run", "no_such_net"])
    assert rc == 2
    assert "no such network" in capsys.readouterr().err


def test_trace_dump(tmp_path):
    p = tmp_path / "t.net"
    p.write_text("network t\ninput 16 4 4\nlayer a k=1 out=16\n")
    trace = tmp_path / "trace.txt"
    rc = main(["run", str(p), "--seed", "1", "--trace", str(trace)])
    assert rc == 0
    lines = trace.read_text().splitlines()
    assert lines[0].startswith("SwapFMM")
    assert any(l.startswith("LoadFilterChunkToRowBanks") for l in lines)


def test_arch_env_var(tmp_path, monkeypatch, capsys):
    from bnnsim.arch import ArchConfig, MemoryGeometry, save_arch

    cfg = tmp_path / "tiny.arch"
    save_arch(ArchConfig(memory=MemoryGeometry(fmm_src_banks=16, fmm_snk_banks=32)), cfg)
    monkeypatch.setenv("BNNSIM_ARCH", str(cfg))
    rc = main(["run", "vgg_like_cifar10", "--seed", "1", "--out",
               str(tmp_path / "o.run")])
    assert rc == 0  # the 48 kB geometry from the env var is picked up and fits
