import numpy as np
import pytest

from biphoton_lab.biphoton import TwoPhotonPure
from biphoton_lab.lattice import (ComplexField, dft2, dft_matrix, make_grid, normalize, sum_coordinate_map)

from conftest import crandn


def direct_dft(img):
    n = img.shape[0]
    out = np.zeros_like(img, dtype=complex)
    for ky in range(n):
        for kx in range(n):
            s = 0
            for y in range(n):
                for x in range(n):
                    s += img[y, x] * np.exp(-2j * np.pi * (ky * y + kx * x) / n)
            out[ky, kx] = s / n
    return out


@pytest.mark.parametrize("n,pitch,boundary,d", [(51, 19.6e-6, "linear", 2601), (2, 1.0, "circular", 4),
                                                (16, 1.0, "circular", 256)])
def test_grid_sizes(n, pitch, boundary, d):
    assert make_grid(n, pitch, boundary).d == d


@pytest.mark.parametrize("args", [(1,), (4, 0.0), (4, -1.0), (4, 1.0, "periodic")])
def test_grid_rejects_bad_input(args):
    with pytest.raises(ValueError):
        make_grid(*args)


def test_dft_of_delta_is_flat():
    g = make_grid(8)
    v = np.zeros(g.d, complex)
    v[0] = 1
    out = dft2(ComplexField(g, v))
    assert np.allclose(np.abs(out.values), 1 / 8, atol=1e-15)


def test_dft_roundtrip(rng):
    g = make_grid(16)
    f = ComplexField(g, crandn(rng, g.d))
    back = dft2(dft2(f), "inverse")
    assert np.max(np.abs(back.values - f.values)) <= 1e-12


def test_dft_matches_direct_sum(rng):
    g = make_grid(4)
    img = crandn(rng, 4, 4)
    out = dft2(ComplexField(g, img.ravel())).values.reshape(4, 4)
    assert np.max(np.abs(out - direct_dft(img))) <= 1e-12
    assert np.allclose(dft_matrix(g) @ img.ravel(), direct_dft(img).ravel(), atol=1e-12)


def test_dft_matrix_unitary():
    F = dft_matrix(make_grid(6))
    assert np.allclose(F @ F.conj().T, np.eye(36), atol=1e-12)


def test_sum_map_bins():
    g = make_grid(4)
    assert sum_coordinate_map(g).axis_bin(3, 2) == 1
    assert sum_coordinate_map(make_grid(4, boundary="linear")).axis_bin(3, 2) == 5
    assert sum_coordinate_map(make_grid(4, boundary="linear")).side == 7
    assert sum_coordinate_map(g, sign="difference").axis_bin(1, 3) == 2


def test_sum_map_bins_2d_against_loop():
    g = make_grid(3)
    cm = sum_coordinate_map(g)
    b = cm.bins()
    for i in range(9):
        for s in range(9):
            by, bx = (i // 3 + s // 3) % 3, (i % 3 + s % 3) % 3
            assert b[i, s] == by * 3 + bx


def test_partner_inverts_bins():
    g = make_grid(5)
    cm = sum_coordinate_map(g)
    part = cm.partner((2, 3))
    b = cm.bins()
    assert all(b[i, part[i]] == 2 * 5 + 3 for i in range(g.d))


def test_circular_map_on_linear_grid_rejected():
    with pytest.raises(ValueError):
        sum_coordinate_map(make_grid(4, boundary="linear"), mode="circular")


def test_normalize_345():
    g = make_grid(2)
    out = normalize(ComplexField(g, np.array([3, 4, 0, 0], complex)))
    assert np.allclose(out.values, [0.6, 0.8, 0, 0])


def test_normalize_idempotent(rng):
    g = make_grid(4)
    f = normalize(ComplexField(g, crandn(rng, g.d)))
    assert np.max(np.abs(normalize(f).values - f.values)) <= 1e-15


def test_normalize_state(rng):
    g = make_grid(4)
    psi = normalize(TwoPhotonPure(g, crandn(rng, 16, 16)))
    assert abs(np.linalg.norm(psi.psi) - 1) <= 1e-12


def test_normalize_zero_rejected():
    with pytest.raises(ValueError):
        normalize(ComplexField(make_grid(2), np.zeros(4, complex)))
