"""Propagation laws: classical fields, pure two-photon states (S Psi S^t)
and separable ensembles, plus the singles marginal."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .biphoton import TwoPhotonMixed, TwoPhotonPure
from .lattice import ComplexField, Grid, normalize
from .media import ScatteringMatrix


@dataclass
class G2Matrix:
    """Joint detection probabilities, values[i, s] = G2(r_i, r_s)."""
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.d, self.grid.d):
            raise ValueError(f"G2 must be {self.grid.d}x{self.grid.d}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("G2 has non-finite entries")
        if self.values.min() < 0:
            raise ValueError("G2 must be nonnegative")

    def total(self) -> float:
        return float(self.values.sum())


def _check(S: ScatteringMatrix, grid: Grid):
    if S.m.shape[1] != grid.d:
        raise ValueError(f"operator takes {S.m.shape[1]} inputs, state has {grid.d}")


def classical(S: ScatteringMatrix, e_in: ComplexField) -> ComplexField:
    _check(S, e_in.grid)
    return ComplexField(S.grid_out, S.m @ e_in.values)


def two_photon(S: ScatteringMatrix, psi: TwoPhotonPure) -> TwoPhotonPure:
    """Psi_out = S Psi S^t with the plain transpose.

    The result is renormalized; its `weight` is the input weight times the
    squared norm before renormalization (pair transmission).
    """
    _check(S, psi.grid)
    out = S.m @ psi.psi @ S.m.T
    return normalize(TwoPhotonPure(S.grid_out, out, weight=psi.weight))


def mixed_g2(S: ScatteringMatrix, rho: TwoPhotonMixed) -> G2Matrix:
    """G2(i, s) = sum_R p_R |(S phi_R)(i)|^2 |(S chi_R)(s)|^2."""
    if len(rho) == 0:
        raise ValueError("empty ensemble")
    _check(S, rho.grid)
    _check(S, rho.grid_s or rho.grid)
    a = np.abs(S.m @ rho.phi.T) ** 2  # d_out x R
    b = np.abs(S.m @ rho.chi.T) ** 2
    return G2Matrix(S.grid_out, (a * rho.weights[None, :]) @ b.T)


def singles_image(x) -> np.ndarray:
    """Direct-intensity marginal I(r) = sum_s |psi(r, s)|^2 as an n x n image."""
    if isinstance(x, TwoPhotonPure):
        grid, rows = x.grid, np.sum(np.abs(x.psi) ** 2, axis=1)
    elif isinstance(x, G2Matrix):
        grid, rows = x.grid, x.values.sum(axis=1)
    else:
        raise TypeError(f"cannot take singles of {type(x).__name__}")
    return rows.reshape(grid.n, grid.n)
