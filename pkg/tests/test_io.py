import numpy as np
import pytest

from selfrank.io import (MANIFEST_COLUMNS, csv_text, read_csv, read_manifest, read_pnm, to_bytes8, write_csv,
                         write_manifest, write_pnm)


def test_to_bytes8_rounds_and_clips():
    assert to_bytes8(np.array([-0.1, 0.0, 0.5, 1.0, 2.0])).tolist() == [0, 0, 128, 255, 255]


def test_pgm_round_trip(tmp_path):
    img = np.arange(12, dtype=float).reshape(3, 4) / 11
    write_pnm(tmp_path / "a.pgm", img)
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5\n4 3\n255\n")
    back = read_pnm(tmp_path / "a.pgm")
    assert np.array_equal(to_bytes8(back), to_bytes8(img))


def test_ppm_round_trip(tmp_path):
    img = np.random.default_rng(0).random((5, 3, 3))
    write_pnm(tmp_path / "a.ppm", img)
    assert (tmp_path / "a.ppm").read_bytes()[:2] == b"P6"
    assert np.array_equal(to_bytes8(read_pnm(tmp_path / "a.ppm")), to_bytes8(img))


def test_pnm_header_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n# depth\n255\n\x00\xff")
    assert read_pnm(p).tolist() == [[0.0, 1.0]]


def test_pnm_rejects_garbage(tmp_path):
    p = tmp_path / "g.pgm"
    p.write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(ValueError):
        read_pnm(p)


def test_csv_round_trip(tmp_path):
    write_csv(tmp_path / "x.csv", ("a", "b"), [(1, 0.1), (2, np.float64(1 / 3))])
    assert (tmp_path / "x.csv").read_text() == "a,b\n1,0.1\n2,0.3333333333333333\n"
    assert read_csv(tmp_path / "x.csv") == [{"a": "1", "b": "0.1"}, {"a": "2", "b": "0.3333333333333333"}]
    assert csv_text(("n",), [(float("nan"),)]) == "n\nnan\n"


def test_manifest(tmp_path):
    write_manifest(tmp_path / "m.csv", [(1, 1, -1.0, "b.pgm"), (1, 0, 0.0, "a.pgm"), (0, 0, 5.0, "c.pgm")])
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == ",".join(MANIFEST_COLUMNS)
    assert read_manifest(tmp_path / "m.csv") == {1: [(0, 0.0, "a.pgm"), (1, -1.0, "b.pgm")], 0: [(0, 5.0, "c.pgm")]}


def test_writes_leave_no_temp_files(tmp_path):
    write_pnm(tmp_path / "a.pgm", np.zeros((2, 2)))
    write_csv(tmp_path / "b.csv", ("x",), [(1,)])
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.pgm", "b.csv"]
