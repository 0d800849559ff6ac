import numpy as np
import pytest

from biphoton_lab.biphoton import paper_default
from biphoton_lab.lattice import ComplexField, make_grid
from biphoton_lab.media import ScatteringMatrix, SpeckleSpec, compose, fourier_lens, pixel_map, thin_medium
from biphoton_lab.tmatrix import (MeasuredTM, aggregate, align_rows, border_reference, hadamard_masks,
                                  hadamard_to_pixel, measure_tm, pixel_to_hadamard, tm_error)

from conftest import crandn


def desk_truth(n=16, seed=0):
    g = make_grid(n)
    _, cfg = paper_default()
    return compose([fourier_lens(g, cfg.f5, cfg.lam), thin_medium(g, SpeckleSpec(2, seed=seed))])


def test_hadamard_small():
    H = hadamard_masks(2)
    ref = np.array([[1, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]])
    assert np.array_equal(H, ref)
    assert np.array_equal(H @ H.T, 4 * np.eye(4))


def test_hadamard_large_alphabet():
    H = hadamard_masks(32)
    assert H.shape == (1024, 1024)
    assert set(np.unique(H)) == {-1.0, 1.0}
    assert np.array_equal(H @ H.T, 1024 * np.eye(1024))
    with pytest.raises(ValueError):
        hadamard_masks(3)


def test_first_coefficient_recovers_product():
    truth = desk_truth()
    g = truth.grid_in
    ref = border_reference(g, 8, 8)
    tm = measure_tm(truth, ref, 8, phase_steps=4, active=8)
    pm = pixel_map(g, 8, 8)
    e_ref = truth.m @ ref.values
    H = hadamard_masks(8)
    for h in (0, 5, 63):
        fld = np.where(pm >= 0, H[h, np.clip(pm, 0, None)], 0)
        e_h = truth.m @ fld
        got = tm.m[:, h] * np.abs(e_ref)
        assert np.max(np.abs(got - np.conj(e_ref) * e_h)) <= 1e-10


def test_transparent_medium_returns_masks():
    g = make_grid(8)
    pm = pixel_map(g, 4, 4)
    border = pm < 0
    m = np.eye(g.d, dtype=complex)
    m[:, border] += 1.0 / g.d  # every output pixel sees the reference
    truth = ScatteringMatrix(m, g, g)
    tm = measure_tm(truth, border_reference(g, 4, 4), 4, active=4)
    H = hadamard_masks(4)
    lit = np.flatnonzero(pm >= 0)
    rows = tm.m[lit]
    expected = H[:, pm[lit]].T
    scale = rows[0, 0] / expected[0, 0]
    assert np.allclose(rows, scale * expected, atol=1e-12)


def test_noiseless_measurement_matches_truth():
    truth = desk_truth()
    tm = hadamard_to_pixel(measure_tm(truth, border_reference(truth.grid_in, 8, 8), 8, 4, active=8))
    assert tm_error(tm, truth) <= 1e-6


def test_three_step_measurement():
    truth = desk_truth(seed=3)
    tm = hadamard_to_pixel(measure_tm(truth, border_reference(truth.grid_in, 8, 8), 8, 3, active=8))
    assert tm_error(tm, truth) <= 1e-6
    with pytest.raises(ValueError):
        measure_tm(truth, border_reference(truth.grid_in, 8, 8), 8, 2, active=8)


def test_dark_reference_rejected():
    g = make_grid(8)
    with pytest.raises(ValueError, match="dark"):
        measure_tm(ScatteringMatrix(np.eye(64), g, g), border_reference(g, 4, 4), 4, active=4)


def test_basis_roundtrip(rng):
    tm = MeasuredTM(crandn(rng, 10, 16), "pixel", 4, 4)
    back = hadamard_to_pixel(pixel_to_hadamard(tm))
    assert np.max(np.abs(back.m - tm.m)) <= 1e-12
    with pytest.raises(ValueError):
        pixel_to_hadamard(pixel_to_hadamard(tm))


def test_tm_error_cases(rng):
    t = crandn(rng, 12, 16)
    assert tm_error(t, t) <= 1e-15
    phases = np.exp(1j * rng.uniform(0, 2 * np.pi, 12))[:, None]
    assert tm_error(t * phases, t) <= 1e-14
    noise = crandn(rng, 12, 16) / np.sqrt(2)
    pert = t + 0.01 * np.linalg.norm(t) / np.sqrt(t.size) * noise
    assert abs(tm_error(pert, t) - 0.01) <= 0.005


def test_align_rows_gauge(rng):
    t = crandn(rng, 4, 4)
    ph = np.exp(1j * np.array([0.3, -1.0, 2.0, 3.0]))[:, None]
    assert np.allclose(align_rows(t * ph, t), t)


def test_aggregate_sums_columns():
    g = make_grid(4)
    m = np.arange(256, dtype=complex).reshape(16, 16)
    pm = pixel_map(g, 2)
    a = aggregate(ScatteringMatrix(m, g, g), 2, pm)
    assert np.array_equal(a[:, 0], m[:, [0, 1, 4, 5]].sum(axis=1))


def test_measured_validation():
    with pytest.raises(ValueError):
        MeasuredTM(np.ones((4, 3)), "pixel", 4, 2)
    with pytest.raises(ValueError):
        MeasuredTM(np.ones((4, 4)), "fourier", 4, 2)


def test_reference_field():
    ref = border_reference(make_grid(8), 4, 4)
    assert isinstance(ref, ComplexField)
    assert ref.values.sum() == 64 - 16
