"""Desk-scale optical system: input plane -F-> SLM -F F-> medium -F-> camera.

The SLM sits in the Fourier plane of the input and is imaged (through two
lenses, i.e. with parity) onto the medium; the camera sees the Fourier plane
of the medium:

    S' = F S0 F F D F,    S_m = F S0 F F   (SLM pixels -> camera).

The optimizer works at macropixel resolution: S_m is aggregated onto the
macropixels (unit-norm block sums) and the SLM-plane state is sampled on the
macropixel lattice.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .biphoton import OpticalConfig, SPDCParams, TwoPhotonMixed, TwoPhotonPure, guide_state, paper_default
from .lattice import Grid, dft_matrix, make_grid, normalize
from .media import (PhaseMask, ScatteringMatrix, SpeckleSpec, compose, fourier_lens, identity,
                    pixel_map, slm_diagonal, thick_medium, thin_medium)

SLM_PITCH = 50e-6


@dataclass
class DeskSetup:
    grid: Grid
    macro_n: int
    medium: ScatteringMatrix
    p: SPDCParams
    cfg: OpticalConfig
    pmap: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.pmap is None:
            self.pmap = pixel_map(self.grid, self.macro_n)
        self._lens = fourier_lens(self.grid, self.cfg.f2, self.cfg.lam)
        self._sm_pixel = None

    @property
    def macro_grid(self) -> Grid:
        return Grid(self.macro_n, self.grid.pitch * self.grid.n / self.macro_n, self.grid.boundary)

    def lens(self, f: float) -> ScatteringMatrix:
        return fourier_lens(self.grid, f, self.cfg.lam)

    @property
    def sm_pixel(self) -> ScatteringMatrix:
        """SLM pixels -> camera: F_f5 S0 F_f4 F_f3."""
        if self._sm_pixel is None:
            c = self.cfg
            self._sm_pixel = compose([self.lens(c.f5), self.medium, self.lens(c.f4), self.lens(c.f3)])
        return self._sm_pixel

    def aggregation(self) -> np.ndarray:
        """d x macro^2 matrix, column j = indicator of macropixel j / sqrt(size)."""
        K = self.macro_n ** 2
        E = np.zeros((self.grid.d, K))
        lit = self.pmap >= 0
        E[np.flatnonzero(lit), self.pmap[lit]] = 1.0
        return E / np.sqrt(E.sum(axis=0))[None, :]

    @property
    def sm(self) -> ScatteringMatrix:
        """SLM macropixels -> camera."""
        return ScatteringMatrix(self.sm_pixel.m @ self.aggregation(), self.macro_grid, self.grid,
                                "system", {"macro_n": self.macro_n})

    def full_system(self, mask: PhaseMask | None = None) -> ScatteringMatrix:
        """Input plane -> camera at pixel resolution, S' = F S0 F F D F."""
        mask = mask or PhaseMask.zeros(self.macro_n)
        c = self.cfg
        d = slm_diagonal(mask, self.grid, self.pmap)
        return compose([self.lens(c.f5), self.medium, self.lens(c.f4), self.lens(c.f3), d, self.lens(c.f2)])

    def guide_slm(self) -> TwoPhotonPure:
        """Double-Gaussian guide state in the SLM plane on the macropixel lattice."""
        return guide_state(self.p, self.cfg.M_dprime, self.macro_grid)

    def diagonal_guide_slm(self) -> TwoPhotonPure:
        """sigma_r -> 0 limit: only the diagonal of the guide state survives."""
        g = self.guide_slm()
        return normalize(TwoPhotonPure(g.grid, np.diag(np.diag(g.psi))))

    def separable_guide_slm(self, state: TwoPhotonPure | None = None) -> TwoPhotonMixed:
        """Separable ensemble with the guide's input-plane correlations, seen in the SLM plane.

        The SLM-plane guide is carried back to the input plane
        (psi_in = F^-1 Psi F^-t), split into phi_R (x) delta_R there, and each
        factor is propagated to the SLM with F.
        """
        state = state or self.guide_slm()
        F = dft_matrix(self.macro_grid)
        Fi = F.conj().T
        psi_in = Fi @ state.psi @ Fi.T
        d = psi_in.shape[0]
        phi = np.sqrt(d) * psi_in.T  # row R = column R of psi_in
        chi = np.eye(d, dtype=complex)
        return TwoPhotonMixed(self.macro_grid, np.full(d, 1.0 / d), phi @ F.T, chi @ F.T)


def build_desk(n: int = 32, macro_n: int = 16, medium: str = "thin", corr_len: float = 2.0,
               envelope_sigma: float | None = None, seed: int = 0, pitch: float = SLM_PITCH,
               p: SPDCParams | None = None, cfg: OpticalConfig | None = None) -> DeskSetup:
    """Desk system with a seeded medium ('thin', 'thick' or 'none')."""
    dp, dc = paper_default()
    p, cfg = p or dp, cfg or dc
    grid = make_grid(n, pitch)
    spec = SpeckleSpec(corr_len, envelope_sigma, seed)
    if medium == "thin":
        s0 = thin_medium(grid, spec)
    elif medium == "thick":
        s0 = thick_medium(grid, spec)
    elif medium == "none":
        s0 = identity(grid)
    else:
        raise ValueError(f"unknown medium {medium!r}")
    return DeskSetup(grid, macro_n, s0, p, cfg)
