"""Biphoton input states: object encodings, crystal-plane states, double
Gaussian guide states, difference encodings and separable ensembles."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import ComplexField, Grid, dft2, normalize


@dataclass(frozen=True)
class SPDCParams:
    """Down-conversion parameters (SI units).

    sigma_r may be 0 to request the perfectly correlated limit in
    input_plane_state; guide_state still insists on positive widths.
    """
    lambda_p: float = 402e-9
    sigma_r: float | None = None
    sigma_k: float = 4.7e3
    L: float | None = None
    profile: str = "gaussian"

    def __post_init__(self):
        if self.profile not in ("gaussian", "sinc"):
            raise ValueError(f"unknown phase-matching profile {self.profile!r}")
        if not self.lambda_p > 0:
            raise ValueError("lambda_p must be positive")
        if self.L is not None and not self.L > 0:
            raise ValueError("crystal thickness L must be positive")
        if self.sigma_r is None:
            if self.L is None:
                raise ValueError("give sigma_r or the crystal thickness L")
            object.__setattr__(self, "sigma_r", sigma_r_from_thickness(self.L, self.lambda_p))
        elif self.L is not None:
            expect = sigma_r_from_thickness(self.L, self.lambda_p)
            if abs(self.sigma_r - expect) > 1e-6 * expect:
                raise ValueError(f"sigma_r={self.sigma_r} inconsistent with L (expects {expect})")
        if self.sigma_r < 0 or self.sigma_k < 0:
            raise ValueError("correlation widths cannot be negative")


def sigma_r_from_thickness(L: float, lambda_p: float) -> float:
    return math.sqrt(2.0 * L * lambda_p / (3.0 * math.pi))


@dataclass(frozen=True)
class OpticalConfig:
    """Focal lengths f0..f5 (m), photon wavelength and plane magnifications.

    M = 2 f1 / f0 is derived, never stored.
    """
    f0: float = 0.070
    f1: float = 0.035
    f2: float = 0.150
    f3: float = 0.200
    f4: float = 0.075
    f5: float = 0.125
    lam: float = 804e-9
    M_prime: float = 1.0
    M_dprime: float = 4.3
    M_tprime: float = 1.0

    def __post_init__(self):
        for name in ("f0", "f1", "f2", "f3", "f4", "f5", "lam"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def M(self) -> float:
        return 2.0 * self.f1 / self.f0


def paper_default():
    """The 'paper-default' profile: (SPDCParams, OpticalConfig).

    f0 is set to 2*f1 so the encoding magnification is 1 at desk scale.
    """
    return (SPDCParams(lambda_p=402e-9, sigma_r=13e-6, sigma_k=4.7e3),
            OpticalConfig(f0=0.070, f1=0.035, f2=0.150, f3=0.200, f4=0.075, f5=0.125,
                          lam=804e-9, M_dprime=4.3))


@dataclass(frozen=True)
class ObjectImage:
    """Real transmission t in [0, 1] on a square lattice (working or sum grid)."""
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("object image must be square")
        if not np.all(np.isfinite(v)) or v.min() < 0 or v.max() > 1:
            raise ValueError("object values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def side(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_pgm(cls, path, threshold: float | None = None):
        from .fileio import read_pgm

        img, maxval = read_pgm(path)
        t = img.astype(float) / maxval
        if threshold is not None:
            t = (t >= threshold).astype(float)
        return cls(t)


def digit_eight(n: int, stroke: int | None = None) -> ObjectImage:
    """Binary seven-segment '8' centred in an n x n frame."""
    if n < 8:
        raise ValueError("digit needs n >= 8")
    w = stroke or max(1, round(n / 14))
    img = np.zeros((n, n))
    top, bot = round(0.18 * n), round(0.82 * n) - 1
    left, right = round(0.32 * n), round(0.68 * n) - 1
    mid = (top + bot) // 2
    img[top:top + w, left:right + 1] = 1
    img[mid - w // 2:mid - w // 2 + w, left:right + 1] = 1
    img[bot - w + 1:bot + 1, left:right + 1] = 1
    img[top:bot + 1, left:left + w] = 1
    img[top:bot + 1, right - w + 1:right + 1] = 1
    return ObjectImage(img)


@dataclass
class TwoPhotonPure:
    """Two-photon amplitude matrix, psi[i, s] = psi(r_i, r_s).

    `weight` carries the squared norm lost or gained by the last
    renormalization (pair survival probability bookkeeping).
    """
    grid: Grid
    psi: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        d = self.grid.d
        if self.psi.shape != (d, d):
            raise ValueError(f"state must be {d}x{d}, got {self.psi.shape}")

    def norm(self) -> float:
        return float(np.linalg.norm(self.psi))

    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.psi - self.psi.T)))


@dataclass
class TwoPhotonMixed:
    """Weighted separable ensemble sum_R p_R |phi_R><phi_R| x |chi_R><chi_R|.

    Components are stored as stacked rows: phi[R], chi[R] are d-vectors.
    """
    grid: Grid
    weights: np.ndarray
    phi: np.ndarray
    chi: np.ndarray
    grid_s: Grid | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        self.phi = np.atleast_2d(np.asarray(self.phi, dtype=complex))
        self.chi = np.atleast_2d(np.asarray(self.chi, dtype=complex))
        if self.weights.size == 0:
            raise ValueError("ensemble has no components")
        if np.any(self.weights < 0):
            raise ValueError("ensemble weights must be nonnegative")
        if abs(self.weights.sum() - 1) > 1e-9:
            raise ValueError("ensemble weights must sum to 1")
        k = self.weights.size
        if self.phi.shape[0] != k or self.chi.shape[0] != k:
            raise ValueError("one phi and one chi per weight")

    @property
    def components(self):
        for p, a, b in zip(self.weights, self.phi, self.chi):
            yield p, ComplexField(self.grid, a), ComplexField(self.grid_s or self.grid, b)

    def __len__(self):
        return self.weights.size


# -- sampling helpers -------------------------------------------------------

def _round(x):
    return np.floor(np.asarray(x) + 0.5).astype(int)


def _pair_offsets(grid: Grid, sign: str):
    """Per-axis pixel offsets of r_i + r_s (or r_i - r_s) for every index pair."""
    off = grid.axis_offsets()
    y, x = grid.index_yx()
    oy, ox = off[y], off[x]
    if sign == "sum":
        dy, dx = oy[:, None] + oy[None, :], ox[:, None] + ox[None, :]
    else:
        dy, dx = oy[:, None] - oy[None, :], ox[:, None] - ox[None, :]
    return grid.wrap(dy) if grid.circular else dy, grid.wrap(dx) if grid.circular else dx


def _pair_r2(grid: Grid, sign: str) -> np.ndarray:
    dy, dx = _pair_offsets(grid, sign)
    return (dy * dy + dx * dx) * grid.pitch ** 2


def sample_on_pair_lattice(obj: ObjectImage, grid: Grid, M: float = 1.0, sign: str = "sum") -> np.ndarray:
    """d x d matrix t((r_i +/- r_s)/M) by nearest-neighbour lookup.

    The object array is indexed like the correlation image of the same map:
    side n (circular) or 2n-1 (linear). M scales about the lattice origin.
    """
    if M == 0:
        raise ValueError("magnification M must be nonzero")
    n = grid.n
    side = n if grid.circular else 2 * n - 1
    t = obj.values
    if t.shape[0] != side:
        t = _embed_centered(t, side, circular=grid.circular)
    y, x = grid.index_yx()
    if sign == "sum":
        by, bx = y[:, None] + y[None, :], x[:, None] + x[None, :]
    else:
        by, bx = y[:, None] - y[None, :], x[:, None] - x[None, :]
        if not grid.circular:
            by, bx = by + n - 1, bx + n - 1
    if M != 1.0:
        # scale about the image centre, which is where objects are drawn
        c = side // 2 if grid.circular else n - 1
        by, bx = by - c, bx - c
        if grid.circular:
            by, bx = grid.wrap(by), grid.wrap(bx)
        by, bx = _round(by / M) + c, _round(bx / M) + c
    if grid.circular:
        by, bx = by % n, bx % n
        return t[by, bx]
    ok = (by >= 0) & (by < side) & (bx >= 0) & (bx < side)
    return np.where(ok, t[np.clip(by, 0, side - 1), np.clip(bx, 0, side - 1)], 0.0)


def _embed_centered(t: np.ndarray, side: int, circular: bool) -> np.ndarray:
    m = t.shape[0]
    out = np.zeros((side, side))
    if m > side:
        a = (m - side) // 2
        return t[a:a + side, a:a + side].copy()
    a = (side - m) // 2
    out[a:a + m, a:a + m] = t
    return out


def _finish(grid: Grid, psi: np.ndarray) -> TwoPhotonPure:
    psi = 0.5 * (psi + psi.T)  # exact exchange symmetry against round-off
    return normalize(TwoPhotonPure(grid, psi))


def relative_profile(grid: Grid, p: SPDCParams, width: float) -> np.ndarray:
    """d x d factor depending on r_i - r_s.

    gaussian: exp(-|dr|^2/width^2).
    sinc: inverse transform of sinc(a k^2), a = L lambda_p / (4 pi), sampled on
    the (periodic) difference lattice and scaled to 1 at dr = 0.
    """
    if p.profile == "gaussian":
        if width == 0:
            return np.where(_pair_r2(grid, "difference") == 0, 1.0, 0.0)
        return np.exp(-_pair_r2(grid, "difference") / width ** 2)
    if p.L is None:
        raise ValueError("sinc profile needs the crystal thickness L")
    a = p.L * p.lambda_p / (4 * np.pi)
    n2 = grid.n if grid.circular else 2 * grid.n
    k = 2 * np.pi * np.fft.fftfreq(n2, d=grid.pitch)
    kk = k[:, None] ** 2 + k[None, :] ** 2
    g = np.fft.ifft2(np.sinc(a * kk / np.pi)).real
    g /= g[0, 0]
    dy, dx = _pair_offsets(grid, "difference")
    return g[_round(dy) % n2, _round(dx) % n2]


# -- constructors -----------------------------------------------------------

def pump_from_object(obj: ObjectImage, waist: float, grid: Grid) -> ComplexField:
    """Crystal-plane pump E_p = DFT(gaussian(waist) * t), normalized."""
    if obj.side != grid.n:
        raise ValueError("object must live on the working grid")
    if not waist > 0:
        raise ValueError("waist must be positive")
    if not np.any(obj.values):
        raise ValueError("object is identically zero")
    yy, xx = grid.coords()
    g = np.ones(grid.d) if np.isinf(waist) else np.exp(-(yy ** 2 + xx ** 2) / waist ** 2)
    e = ComplexField(grid, g * obj.values.ravel())
    return normalize(dft2(e, "forward"))


def crystal_state(pump: ComplexField, p: SPDCParams) -> TwoPhotonPure:
    """psi_c(r_i, r_s) = E_p(r_i + r_s) * rel(r_i - r_s)."""
    grid = pump.grid
    ep = pump.image()
    n = grid.n
    y, x = grid.index_yx()
    by, bx = y[:, None] + y[None, :], x[:, None] + x[None, :]
    if grid.circular:
        esum = ep[by % n, bx % n]
    else:
        # coordinate of r_i + r_s mapped back onto the pump grid
        cy, cx = by - (n - 1) / 2.0, bx - (n - 1) / 2.0
        cy, cx = _round(cy), _round(cx)
        ok = (cy >= 0) & (cy < n) & (cx >= 0) & (cx < n)
        esum = np.where(ok, ep[np.clip(cy, 0, n - 1), np.clip(cx, 0, n - 1)], 0)
    return _finish(grid, esum * relative_profile(grid, p, p.sigma_r))


def input_plane_state(obj: ObjectImage, p: SPDCParams, cfg: OpticalConfig, grid: Grid) -> TwoPhotonPure:
    """psi_in(r_i, r_s) = t((r_i + r_s)/M) exp(-|r_i - r_s|^2 pi^2 sigma_r^2 / (4 lambda_p^2 f1^2))."""
    if cfg.M == 0:
        raise ValueError("magnification M must be nonzero")
    t = sample_on_pair_lattice(obj, grid, cfg.M, "sum")
    if p.sigma_r == 0:
        gauss = 1.0
    else:
        coef = (np.pi * p.sigma_r / (2 * p.lambda_p * cfg.f1)) ** 2
        gauss = np.exp(-_pair_r2(grid, "difference") * coef)
    if not np.any(t):
        raise ValueError("object vanishes on the sum lattice")
    return _finish(grid, t * gauss)


def input_minus_width(p: SPDCParams, cfg: OpticalConfig) -> float:
    """1/e width of the difference-coordinate Gaussian of input_plane_state."""
    return 2 * p.lambda_p * cfg.f1 / (np.pi * p.sigma_r)


def guide_state(p: SPDCParams, magnification: float, grid: Grid) -> TwoPhotonPure:
    """Double Gaussian exp(-(sk/M)^2 |r_i + r_s|^2) exp(-|r_i - r_s|^2/(M sr)^2)."""
    if not (p.sigma_r and p.sigma_r > 0 and p.sigma_k > 0):
        raise ValueError("guide state needs positive sigma_r and sigma_k")
    if not magnification > 0:
        raise ValueError("magnification must be positive")
    m = magnification
    psi = (np.exp(-(p.sigma_k / m) ** 2 * _pair_r2(grid, "sum"))
           * np.exp(-_pair_r2(grid, "difference") / (m * p.sigma_r) ** 2))
    return _finish(grid, psi)


def input_guide_state(p: SPDCParams, cfg: OpticalConfig, grid: Grid) -> TwoPhotonPure:
    """Guide state as seen in the input plane (Fourier plane of the crystal)."""
    if not (p.sigma_r and p.sigma_r > 0 and p.sigma_k > 0):
        raise ValueError("guide state needs positive sigma_r and sigma_k")
    lf = p.lambda_p * cfg.f1
    psi = (np.exp(-np.pi ** 2 * _pair_r2(grid, "sum") / (4 * lf ** 2 * p.sigma_k ** 2))
           * np.exp(-_pair_r2(grid, "difference") * np.pi ** 2 * p.sigma_r ** 2 / (4 * lf ** 2)))
    return _finish(grid, psi)


def difference_encoded_state(obj: ObjectImage, p: SPDCParams, grid: Grid) -> TwoPhotonPure:
    """psi(r_i, r_s) = t(r_i - r_s) exp(-|r_i + r_s|^2 sigma_k^2 / 4).

    The object's centre pixel sits at r_- = 0 (circular grids), so the
    centred difference image lines up with the object array. Exchange
    symmetry keeps only the inversion-even part of t; use
    inversion_symmetric() for objects meant to be carried exactly.
    """
    if grid.circular:
        t = sample_on_pair_lattice(ObjectImage(np.fft.ifftshift(_embed_centered(obj.values, grid.n, True))),
                                   grid, 1.0, "difference")
    else:
        t = sample_on_pair_lattice(obj, grid, 1.0, "difference")
    gauss = 1.0 if p.sigma_k == 0 else np.exp(-_pair_r2(grid, "sum") * p.sigma_k ** 2 / 4)
    if not np.any(t):
        raise ValueError("object vanishes on the difference lattice")
    return _finish(grid, t * gauss)


def inversion_symmetric(obj: ObjectImage) -> ObjectImage:
    """Union of a binary object and its point reflection about the centre pixel."""
    n = obj.side
    k = (2 * (n // 2) - np.arange(n)) % n
    return ObjectImage(np.maximum(obj.values, obj.values[k][:, k]))


def diagonal_limit(state: TwoPhotonPure) -> TwoPhotonPure:
    """sigma_r -> 0 limit of a position-correlated state: keep only psi(r, r)."""
    return normalize(TwoPhotonPure(state.grid, np.diag(np.diag(state.psi))))


def separable_split(state: TwoPhotonPure) -> TwoPhotonMixed:
    """Separable ensemble with the same G2 as `state`.

    Component R: phi_R = sqrt(d) psi[:, R], chi_R = delta_R, weight 1/d, so
    sum_R p_R |phi_R(i)|^2 |chi_R(s)|^2 = |psi(i, s)|^2 exactly.
    """
    d = state.grid.d
    phi = np.sqrt(d) * state.psi.T.copy()
    chi = np.eye(d, dtype=complex)
    return TwoPhotonMixed(state.grid, np.full(d, 1.0 / d), phi, chi)


def separable_guide_ensemble(p: SPDCParams, cfg: OpticalConfig, grid: Grid) -> TwoPhotonMixed:
    """rho_0: one component per grid point R, phi_R from the input-plane guide
    formula evaluated at r_s = R, chi_R = delta_R, uniform weights."""
    return separable_split(input_guide_state(p, cfg, grid))


def separable_object_ensemble(obj: ObjectImage, p: SPDCParams, cfg: OpticalConfig, grid: Grid) -> TwoPhotonMixed:
    """rho_t: phi_R(r) = t((r + R)/M) exp(-|r - R|^2 ...), chi_R = delta_R."""
    return separable_split(input_plane_state(obj, p, cfg, grid))
