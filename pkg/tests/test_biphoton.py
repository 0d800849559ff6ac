import numpy as np
import pytest

from biphoton_lab.biphoton import (ObjectImage, OpticalConfig, SPDCParams, crystal_state, difference_encoded_state,
                                   digit_eight, guide_state, input_minus_width, input_plane_state,
                                   inversion_symmetric, paper_default, pump_from_object, relative_profile, separable_guide_ensemble,
                                   separable_object_ensemble, separable_split, sigma_r_from_thickness)
from biphoton_lab.correlate import fidelity_ncc, g2_from_pure, project_diff, project_sum
from biphoton_lab.lattice import make_grid, sum_coordinate_map
from biphoton_lab.propagate import mixed_g2


def gamma_plus(state):
    return project_sum(g2_from_pure(state), sum_coordinate_map(state.grid)).values


def test_spdc_validation():
    with pytest.raises(ValueError):
        SPDCParams(sigma_r=None, L=None)
    with pytest.raises(ValueError):
        SPDCParams(sigma_r=-1e-6)
    with pytest.raises(ValueError):
        SPDCParams(sigma_r=1e-6, profile="lorentz")
    with pytest.raises(ValueError):
        SPDCParams(sigma_r=13e-6, L=1e-3)


def test_sigma_r_from_thickness():
    L, lp = 1e-3, 402e-9
    p = SPDCParams(lambda_p=lp, L=L)
    assert p.sigma_r == pytest.approx(np.sqrt(2 * L * lp / (3 * np.pi)))
    assert sigma_r_from_thickness(L, lp) == p.sigma_r


def test_magnification_derived():
    _, cfg = paper_default()
    assert cfg.M == pytest.approx(2 * cfg.f1 / cfg.f0)
    with pytest.raises(ValueError):
        OpticalConfig(f1=0.0)


def test_object_validation(tmp_path):
    with pytest.raises(ValueError):
        ObjectImage(np.ones((3, 4)))
    with pytest.raises(ValueError):
        ObjectImage(np.full((4, 4), 2.0))
    assert digit_eight(32).values.sum() > 0
    with pytest.raises(ValueError):
        digit_eight(4)


def test_pump_constant_object_is_delta():
    g = make_grid(8)
    e = pump_from_object(ObjectImage(np.ones((8, 8))), np.inf, g)
    assert abs(e.values[0]) == pytest.approx(1.0)
    assert np.allclose(e.values[1:], 0, atol=1e-14)


def test_pump_matches_direct_dft(rng):
    g = make_grid(8, 1e-4)
    obj = ObjectImage(rng.uniform(0, 1, (8, 8)))
    waist = 3e-4
    yy, xx = g.coords()
    u = (np.exp(-(yy ** 2 + xx ** 2) / waist ** 2) * obj.values.ravel()).reshape(8, 8)
    k = np.arange(8)
    W = np.exp(-2j * np.pi * np.outer(k, k) / 8)
    ref = (W @ u @ W.T).ravel()
    ref /= np.linalg.norm(ref)
    assert np.max(np.abs(pump_from_object(obj, waist, g).values - ref)) <= 1e-12


def test_crystal_state_direct_formula(rng):
    g = make_grid(4, 1e-5)
    pump = pump_from_object(ObjectImage(rng.uniform(0, 1, (4, 4))), 3e-5, g)
    p = SPDCParams(sigma_r=1.5e-5)
    st = crystal_state(pump, p)
    ep = pump.image()
    ref = np.zeros((16, 16), complex)
    for i in range(16):
        for s in range(16):
            yi, xi, ys, xs = i // 4, i % 4, s // 4, s % 4
            dy = (yi - ys + 2) % 4 - 2
            dx = (xi - xs + 2) % 4 - 2
            ref[i, s] = ep[(yi + ys) % 4, (xi + xs) % 4] * np.exp(-(dy * dy + dx * dx) * 1e-10 / p.sigma_r ** 2)
    ref /= np.linalg.norm(ref)
    assert np.max(np.abs(st.psi - ref)) <= 1e-14


def test_crystal_state_infinite_sigma_is_sum_function(rng):
    g = make_grid(4, 1e-5)
    pump = pump_from_object(ObjectImage(rng.uniform(0, 1, (4, 4))), 3e-5, g)
    st = crystal_state(pump, SPDCParams(sigma_r=1e3))
    cm = sum_coordinate_map(g).bins()
    for b in range(16):
        vals = st.psi[cm == b]
        assert np.allclose(vals, vals[0], atol=1e-12)


def test_object_state_sigma0_gamma_is_t2():
    g = make_grid(32)
    p, cfg = paper_default()
    obj = digit_eight(32)
    st = input_plane_state(obj, SPDCParams(sigma_r=0.0), cfg, g)
    gp = gamma_plus(st)
    assert np.max(np.abs(gp / gp.max() - obj.values ** 2)) <= 1e-12


def test_object_state_flat_object():
    g = make_grid(8)
    _, cfg = paper_default()
    gp = gamma_plus(input_plane_state(ObjectImage(np.ones((8, 8))), SPDCParams(sigma_r=0.0), cfg, g))
    assert np.allclose(gp, gp.mean(), rtol=1e-12)


def test_input_minus_width():
    p, cfg = paper_default()
    assert input_minus_width(p, cfg) == pytest.approx(0.689e-3, rel=2e-3)


def test_object_state_direct_formula(rng):
    g = make_grid(4, 2e-4)
    p, cfg = paper_default()
    obj = ObjectImage(rng.uniform(0, 1, (4, 4)))
    st = input_plane_state(obj, p, cfg, g)
    coef = (np.pi * p.sigma_r / (2 * p.lambda_p * cfg.f1)) ** 2
    ref = np.zeros((16, 16))
    for i in range(16):
        for s in range(16):
            yi, xi, ys, xs = i // 4, i % 4, s // 4, s % 4
            dy, dx = (yi - ys + 2) % 4 - 2, (xi - xs + 2) % 4 - 2
            ref[i, s] = obj.values[(yi + ys) % 4, (xi + xs) % 4] * np.exp(-coef * (dy * dy + dx * dx) * 4e-8)
    ref /= np.linalg.norm(ref)
    assert np.max(np.abs(st.psi - ref)) <= 1e-14


def test_guide_width_product():
    p, cfg = paper_default()
    # M'' sigma_r sets the minus-coordinate width in the SLM plane
    assert cfg.M_dprime * p.sigma_r == pytest.approx(55.9e-6, rel=1e-3)


def test_guide_direct_formula():
    g = make_grid(4, 50e-6)
    p, cfg = paper_default()
    st = guide_state(p, cfg.M_dprime, g)
    m = cfg.M_dprime
    ref = np.zeros((16, 16))
    for i in range(16):
        for s in range(16):
            yi, xi, ys, xs = i // 4, i % 4, s // 4, s % 4
            wrap = lambda v: (v + 2) % 4 - 2
            sy, sx = wrap(yi + ys), wrap(xi + xs)
            dy, dx = wrap(yi - ys), wrap(xi - xs)
            r2p = (sy * sy + sx * sx) * 50e-6 ** 2
            r2m = (dy * dy + dx * dx) * 50e-6 ** 2
            ref[i, s] = np.exp(-(p.sigma_k / m) ** 2 * r2p) * np.exp(-r2m / (m * p.sigma_r) ** 2)
    ref /= np.linalg.norm(ref)
    assert np.max(np.abs(st.psi - ref)) <= 1e-14


def test_guide_sharp_limit_single_peak():
    # broad in r_i + r_s on the SLM, so one lens later the sum coordinate is a point
    from biphoton_lab.media import fourier_lens
    from biphoton_lab.propagate import two_photon
    g = make_grid(16, 50e-6)
    st = guide_state(SPDCParams(sigma_r=13e-6, sigma_k=1.0), 4.3, g)
    gp = gamma_plus(two_photon(fourier_lens(g, 0.125, 804e-9), st))
    assert np.argmax(gp) == 0
    assert gp[0, 0] / gp.sum() > 0.99


def test_guide_needs_positive_widths():
    with pytest.raises(ValueError):
        guide_state(SPDCParams(sigma_r=0.0), 4.3, make_grid(4))


def test_difference_state_delta_object_band():
    g = make_grid(8)
    t = np.zeros((8, 8))
    t[4, 6] = 1  # offset (0, 2) from the centre pixel
    t[4, 2] = 1  # and its inversion partner
    st = difference_encoded_state(ObjectImage(t), SPDCParams(sigma_r=1e-6, sigma_k=0.0), g)
    y, x = g.index_yx()
    dy = (y[:, None] - y[None, :]) % 8
    dx = (x[:, None] - x[None, :]) % 8
    band = (dy == 0) & ((dx == 2) | (dx == 6))
    assert np.all(st.psi[~band] == 0)
    assert np.all(np.abs(st.psi[band]) > 0)


def test_difference_state_gamma_minus_is_t2():
    g = make_grid(16)
    obj = inversion_symmetric(digit_eight(16))
    st = difference_encoded_state(obj, SPDCParams(sigma_r=1e-6, sigma_k=0.0), g)
    gm = project_diff(g2_from_pure(st), sum_coordinate_map(g, sign="difference")).centered()
    assert np.max(np.abs(gm / gm.max() - obj.values ** 2)) <= 1e-12


def test_difference_state_keeps_only_even_part(rng):
    g = make_grid(8)
    obj = ObjectImage(rng.uniform(0, 1, (8, 8)))
    st = difference_encoded_state(obj, SPDCParams(sigma_r=1e-6, sigma_k=0.0), g)
    assert st.asymmetry() <= 1e-15
    t = obj.values
    k = (8 - np.arange(8)) % 8
    even = 0.5 * (np.fft.ifftshift(t) + np.fft.ifftshift(t)[k][:, k])
    gm = project_diff(g2_from_pure(st), sum_coordinate_map(g, sign="difference")).values
    assert np.allclose(gm / gm.max(), even ** 2 / (even ** 2).max(), atol=1e-12)


def test_separable_guide_ensemble_matches_entangled_gamma():
    g = make_grid(8, 1e-4)
    p, cfg = paper_default()
    from biphoton_lab.biphoton import input_guide_state
    ent = gamma_plus(input_guide_state(p, cfg, g))
    rho = separable_guide_ensemble(p, cfg, g)
    assert len(rho) == g.d
    assert rho.weights.sum() == pytest.approx(1.0)
    from biphoton_lab.media import identity
    mix = project_sum(mixed_g2(identity(g), rho), sum_coordinate_map(g)).values
    assert np.max(np.abs(mix / mix.sum() - ent / ent.sum())) <= 1e-12


def test_separable_object_ensemble_no_medium():
    g = make_grid(16)
    _, cfg = paper_default()
    obj = digit_eight(16)
    p0 = SPDCParams(sigma_r=0.0)
    ent = gamma_plus(input_plane_state(obj, p0, cfg, g))
    from biphoton_lab.media import identity
    rho = separable_object_ensemble(obj, p0, cfg, g)
    mix = project_sum(mixed_g2(identity(g), rho), sum_coordinate_map(g)).values
    assert np.max(np.abs(mix / mix.sum() - ent / ent.sum())) <= 1e-10
    assert fidelity_ncc(mix, obj.values ** 2) > 0.999


def test_separable_split_brute_force(rng):
    from biphoton_lab.biphoton import TwoPhotonPure
    g = make_grid(2)
    psi = TwoPhotonPure(g, rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
    rho = separable_split(psi)
    g2 = np.zeros((4, 4))
    for w, a, b in rho.components:
        g2 += w * np.abs(a.values)[:, None] ** 2 * np.abs(b.values)[None, :] ** 2
    assert np.max(np.abs(g2 - np.abs(psi.psi) ** 2)) <= 1e-12


def _momentum_cut(grid, p, width):
    """Profile over r_i - r_s (row r_i = 0), Fourier transformed, along +k_x."""
    prof = relative_profile(grid, p, width)[0].reshape(grid.n, grid.n)
    spec = np.fft.fft2(prof).real
    spec /= spec[0, 0]
    k = 2 * np.pi * np.fft.fftfreq(grid.n, d=grid.pitch)
    half = grid.n // 2
    return k[:half], spec[0, :half]


def test_sinc_gaussian_substitution():
    # sinc(a k^2) has its first zero at a k^2 = pi; its Gaussian stand-in
    # exp(-k^2/(2 b^2)), b = sqrt(3/(4a)), drops to 1/e at k^2 = 2 b^2
    L = 2e-3
    g = make_grid(48, 5e-6)
    ps = SPDCParams(lambda_p=402e-9, L=L, profile="sinc")
    pg = SPDCParams(lambda_p=402e-9, L=L)
    a = L * 402e-9 / (4 * np.pi)
    b = np.sqrt(3 / (4 * a))
    k, s = _momentum_cut(g, ps, ps.sigma_r)
    j = np.flatnonzero(s <= 0)[0]
    u0 = np.interp(0.0, [s[j], s[j - 1]], [k[j] ** 2, k[j - 1] ** 2])  # linear in k^2 across the zero
    assert np.sqrt(u0) == pytest.approx(np.sqrt(np.pi / a), rel=1e-2)
    k, s = _momentum_cut(g, pg, pg.sigma_r)
    j = np.flatnonzero(s <= np.exp(-1))[0]
    ue = np.interp(-1.0, [np.log(s[j]), np.log(s[j - 1])], [k[j] ** 2, k[j - 1] ** 2])
    assert np.sqrt(ue) == pytest.approx(np.sqrt(2) * b, rel=1e-2)
