import numpy as np
import pytest

from biphoton_lab.fileio import (read_biph1, read_matrix_csv, read_pgm, write_biph1, write_matrix_csv, write_pgm,
                                 write_pgm16_normalized)

from conftest import crandn


def test_biph1_roundtrip(tmp_path, rng):
    m = crandn(rng, 5, 7)
    write_biph1(tmp_path / "a.biph", m, tag="medium seed=3")
    back, tag = read_biph1(tmp_path / "a.biph")
    assert np.array_equal(back, m) and tag == "medium seed=3"
    r = rng.uniform(size=(4, 4))
    write_biph1(tmp_path / "b.biph", r)
    assert read_biph1(tmp_path / "b.biph")[0].dtype == np.float64


def test_biph1_rejects_garbage(tmp_path):
    p = tmp_path / "x.biph"
    p.write_bytes(b"P5\n1 1\n255\n\x00")
    with pytest.raises(ValueError):
        read_biph1(p)
    with pytest.raises(ValueError):
        write_biph1(p, np.zeros(3))


def test_pgm_roundtrip(tmp_path):
    img = np.arange(12, dtype=np.uint16).reshape(3, 4) * 5000
    write_pgm(tmp_path / "a.pgm", img, 16, comment="hello")
    back, maxval = read_pgm(tmp_path / "a.pgm")
    assert maxval == 65535 and np.array_equal(back, img)
    img8 = np.arange(6, dtype=np.uint8).reshape(2, 3)
    write_pgm(tmp_path / "b.pgm", img8, 8)
    back, maxval = read_pgm(tmp_path / "b.pgm")
    assert maxval == 255 and np.array_equal(back, img8)


def test_pgm16_constant_and_clamp(tmp_path):
    f = write_pgm16_normalized(tmp_path / "c.pgm", np.full((3, 3), 2.5))
    back, _ = read_pgm(tmp_path / "c.pgm")
    assert f == 2.5 and np.all(back == 65535)
    assert b"scale=2.5" in (tmp_path / "c.pgm").read_bytes()
    write_pgm16_normalized(tmp_path / "d.pgm", np.array([[-1.0, 1.0], [0.5, 0.0]]))
    back, _ = read_pgm(tmp_path / "d.pgm")
    assert back[0, 0] == 0 and back[0, 1] == 65535


def test_csv_exact_roundtrip(tmp_path, rng):
    v = rng.standard_normal((6, 5)) * 1e-7
    write_matrix_csv(tmp_path / "v.csv", v)
    assert np.array_equal(read_matrix_csv(tmp_path / "v.csv"), v)
