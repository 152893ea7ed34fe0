import subprocess
import sys

import numpy as np
import pytest

from subtok.cli import main
from subtok.fileio import read_fmap, read_seg, write_fmap, write_mlp, write_png, write_seg
from subtok.patch import patch_segment


@pytest.fixture
def ridge(tmp_path):
    P = np.zeros((16, 16), np.float32)
    P[:, 8] = 0.4
    path = tmp_path / "b.fmap"
    write_fmap(path, P)
    return path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_tokenize_epoc(tmp_path, ridge, capsys):
    out = tmp_path / "s.seg"
    code, stdout, _ = run(["tokenize", "--method", "epoc", "--boundary", ridge, "--t", 0.3, "--out", out], capsys)
    assert code == 0
    assert out.read_bytes()[:4] == b"SEG1"
    assert read_seg(out).max() + 1 == 2
    assert stdout.splitlines() == ["n_tokens,height,width", "2,16,16"]


def test_tokenize_patch_and_slic(tmp_path, capsys):
    img = np.zeros((32, 32, 3), np.uint8)
    img[:, 16:] = 255
    write_png(tmp_path / "i.png", img)
    code, _, _ = run(["tokenize", "--method", "patch", "--input", tmp_path / "i.png", "--p", 4, "--out", tmp_path / "p.seg"], capsys)
    assert code == 0 and read_seg(tmp_path / "p.seg").max() == 15
    code, _, _ = run(["tokenize", "--method", "slic", "--input", tmp_path / "i.png", "--k", 4, "--out", tmp_path / "k.seg"], capsys)
    assert code == 0 and read_seg(tmp_path / "k.seg").max() + 1 <= 4
    code, _, _ = run(["tokenize", "--method", "patch", "--height", 10, "--width", 12, "--p", 2, "--out", tmp_path / "h.seg"], capsys)
    assert code == 0 and read_seg(tmp_path / "h.seg").shape == (10, 12)


def test_boundary_then_epoc(tmp_path, capsys):
    img = np.zeros((20, 20, 3), np.uint8)
    img[:, 10:] = 200
    write_png(tmp_path / "i.png", img)
    code, _, _ = run(["boundary", "--input", tmp_path / "i.png", "--radius", 1, "--out", tmp_path / "b.fmap"], capsys)
    assert code == 0
    P = read_fmap(tmp_path / "b.fmap")
    assert P.shape == (20, 20, 1) and P.max() == 1.0
    code, _, _ = run(["tokenize", "--method", "epoc", "--boundary", tmp_path / "b.fmap", "--t", 0.1, "--out", tmp_path / "s.seg"], capsys)
    assert code == 0 and read_seg(tmp_path / "s.seg").max() + 1 == 2


def test_unknown_flag_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["tokenize", "--method", "patch", "--out", "x.seg", "--bogus"])
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_help_exit_0(capsys):
    for cmd in ("tokenize", "boundary", "metrics", "embed", "truncate", "bench", "visualize"):
        with pytest.raises(SystemExit) as exc:
            main([cmd, "--help"])
        assert exc.value.code == 0
        assert "usage" in capsys.readouterr().out


def test_validation_error_exit_1(tmp_path, capsys):
    code, _, err = run(["tokenize", "--method", "patch", "--height", 4, "--width", 4, "--p", 9, "--out", tmp_path / "x.seg"], capsys)
    assert code == 1 and "error" in err
    bad = tmp_path / "bad.fmap"
    write_fmap(bad, np.full((3, 3), 2.0, np.float32))
    code, _, _ = run(["tokenize", "--method", "epoc", "--boundary", bad, "--out", tmp_path / "x.seg"], capsys)
    assert code == 1


def test_io_error_exit_2(tmp_path, capsys):
    code, _, _ = run(["tokenize", "--method", "epoc", "--boundary", tmp_path / "missing.fmap", "--out", tmp_path / "x.seg"], capsys)
    assert code == 2
    (tmp_path / "junk.seg").write_bytes(b"NOPE" + bytes(12))
    code, _, err = run(["metrics", "sizes", "--pred", tmp_path / "junk.seg"], capsys)
    assert code == 2 and "magic" in err


def test_metrics_pr_csv(tmp_path, capsys):
    seg = patch_segment(32, 32, 4)
    write_seg(tmp_path / "s.seg", seg)
    write_seg(tmp_path / "g.seg", seg)
    code, out, _ = run(["metrics", "pr", "--pred", tmp_path / "s.seg", "--gt", tmp_path / "g.seg"], capsys)
    assert code == 0
    header, row = out.splitlines()
    assert header == "precision,recall"
    assert [float(v) for v in row.split(",")] == [1.0, 1.0]


def test_metrics_png_gt_and_mono_sizes(tmp_path, capsys):
    seg = np.zeros((40, 40), np.int32)
    seg[:, 20:] = 1
    write_seg(tmp_path / "s.seg", seg)
    gt = np.zeros((40, 40), np.uint8)
    gt[:, 19:21] = 255
    write_png(tmp_path / "g.png", gt)
    code, out, _ = run(["metrics", "pr", "--pred", tmp_path / "s.seg", "--gt", tmp_path / "g.png", "--tol-recall", 0, "--tol-precision", 0], capsys)
    assert code == 0 and out.splitlines()[1] == "1.0,1.0"
    code, out, _ = run(["metrics", "mono", "--pred", tmp_path / "s.seg", "--gt", tmp_path / "g.png", "--tol-mono", 3], capsys)
    assert out.splitlines() == ["monosemanticity,n_tokens", "1.0,2"]
    code, out, _ = run(["metrics", "sizes", "--pred", tmp_path / "s.seg"], capsys)
    assert out.splitlines()[0] == "n_tokens,largest,smallest,sizes"
    assert out.splitlines()[1].startswith("2,0.5,0.5,")


def test_embed(tmp_path, capsys):
    seg = patch_segment(16, 16, 2)
    write_seg(tmp_path / "s.seg", seg)
    write_fmap(tmp_path / "f.fmap", np.ones((4, 4, 3), np.float32))
    code, out, _ = run(["embed", "--features", tmp_path / "f.fmap", "--seg", tmp_path / "s.seg", "--mask-res", 4, "--out", tmp_path / "e.fmap"], capsys)
    assert code == 0
    emb = read_fmap(tmp_path / "e.fmap")
    assert emb.shape == (4, 3 + 16 + 4, 1)
    assert np.all(emb[:, :3, 0] == 1.0)
    assert out.splitlines()[1] == "4,23"
    write_mlp(tmp_path / "w.mlp", [(np.eye(23, dtype=np.float32)[:5], np.zeros(5, np.float32))])
    code, _, _ = run(["embed", "--features", tmp_path / "f.fmap", "--seg", tmp_path / "s.seg", "--mask-res", 4,
                      "--weights", tmp_path / "w.mlp", "--out", tmp_path / "e2.fmap"], capsys)
    assert code == 0
    np.testing.assert_array_equal(read_fmap(tmp_path / "e2.fmap")[:, :, 0], emb[:, :5, 0])


def test_truncate(tmp_path, capsys):
    write_seg(tmp_path / "s.seg", patch_segment(12, 12, 3))
    code, out, _ = run(["truncate", "--seg", tmp_path / "s.seg", "--budget", 3], capsys)
    assert code == 0
    assert out.splitlines() == ["n_retained,area_fraction,ids", f"3,{3 / 9!r},0 1 2"]


def test_visualize_idempotent(tmp_path, capsys):
    write_seg(tmp_path / "s.seg", patch_segment(12, 12, 3))
    for name in ("a.png", "b.png"):
        assert run(["visualize", "--seg", tmp_path / "s.seg", "--out", tmp_path / name], capsys)[0] == 0
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_tokenize_idempotent(tmp_path, ridge, capsys):
    for name in ("a.seg", "b.seg"):
        run(["tokenize", "--method", "epoc", "--boundary", ridge, "--t", 0.3, "--out", tmp_path / name], capsys)
    assert (tmp_path / "a.seg").read_bytes() == (tmp_path / "b.seg").read_bytes()


def test_bench_cli(tmp_path):
    report = tmp_path / "r.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "subtok", "-q", "bench", "--method", "patch", "--p", "4", "--workers", "1",
         "--count", "5", "--batch", "2", "--size", "64", "--out", str(report)],
        capture_output=True, text=True, timeout=300,
    )
    assert proc.returncode == 0, proc.stderr
    lines = report.read_text().splitlines()
    assert lines[0] == "workers,seconds,images,fps"
    assert lines[1].split(",")[0] == "1" and lines[1].split(",")[2] == "5"
    assert proc.stdout == report.read_text()
