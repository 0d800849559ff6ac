"""Phase-shifting interferometric measurement of a transmission matrix in
the Hadamard basis, the change to the macropixel basis, and its error."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import hadamard

from .lattice import ComplexField
from .media import ScatteringMatrix, pixel_map


@dataclass
class MeasuredTM:
    m: np.ndarray
    basis: str
    phase_steps: int
    macro_n: int
    pmap: np.ndarray | None = None

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=complex)
        if self.basis not in ("hadamard", "pixel"):
            raise ValueError(f"unknown basis {self.basis!r}")
        if self.m.shape[1] != self.macro_n ** 2:
            raise ValueError("one column per macropixel expected")
        if not np.all(np.isfinite(self.m)):
            raise ValueError("measured matrix has non-finite columns")


def hadamard_masks(macro_n: int) -> np.ndarray:
    """N = macro_n^2 rows of +-1, mutually orthogonal; row 0 is all ones."""
    N = macro_n * macro_n
    if macro_n < 1 or N & (N - 1):
        raise ValueError(f"macro_n^2 = {N} is not a power of two")
    return hadamard(N).astype(float)


def aggregate(truth: ScatteringMatrix, macro_n: int, pmap: np.ndarray) -> np.ndarray:
    """Response to unit amplitude on each macropixel: sum of its pixel columns."""
    agg = np.zeros((truth.m.shape[0], macro_n * macro_n), dtype=complex)
    for j in range(macro_n * macro_n):
        agg[:, j] = truth.m[:, pmap == j].sum(axis=1)
    return agg


def measure_tm(truth: ScatteringMatrix, reference: ComplexField, macro_n: int,
               phase_steps: int = 4, active: int | None = None) -> MeasuredTM:
    """Noiseless phase-shifting measurement against a reference field.

    The SLM shows Hadamard mask h on its active area, shifted by theta, while
    `reference` (zero inside the active area) illuminates the border. For each
    output pixel the first Fourier coefficient of I(theta) gives
    conj(E_ref) E_h. One extra frame with the active area dark records |E_ref|
    and removes the reference amplitude; its phase is left as a per-row gauge.
    """
    if phase_steps < 3:
        raise ValueError("phase shifting needs at least 3 steps")
    grid = truth.grid_in
    pm = pixel_map(grid, macro_n, active)
    ref = np.where(pm >= 0, 0, reference.values)
    H = hadamard_masks(macro_n)
    e_ref = truth.m @ ref
    i_ref = np.abs(e_ref) ** 2
    if np.any(i_ref == 0):
        raise ValueError("reference leaves output pixels dark; the measurement is blind there")
    thetas = 2 * np.pi * np.arange(phase_steps) / phase_steps
    lit = pm >= 0
    cols = np.empty((truth.m.shape[0], H.shape[0]), dtype=complex)
    for h in range(H.shape[0]):
        fld = np.zeros(grid.d, dtype=complex)
        fld[lit] = H[h, pm[lit]]
        e_h = truth.m @ fld
        c1 = np.zeros(truth.m.shape[0], dtype=complex)
        for th in thetas:
            c1 += np.abs(e_ref + np.exp(1j * th) * e_h) ** 2 * np.exp(-1j * th)
        cols[:, h] = c1 / phase_steps
    cols /= np.sqrt(i_ref)[:, None]
    return MeasuredTM(cols, "hadamard", phase_steps, macro_n, pm)


def hadamard_to_pixel(tm: MeasuredTM) -> MeasuredTM:
    """Y = S H^t  =>  S = Y (H^t)^-1 = Y H / N."""
    if tm.basis != "hadamard":
        raise ValueError("matrix is already in the pixel basis")
    H = hadamard_masks(tm.macro_n)
    return MeasuredTM(tm.m @ H / H.shape[0], "pixel", tm.phase_steps, tm.macro_n, tm.pmap)


def pixel_to_hadamard(tm: MeasuredTM) -> MeasuredTM:
    if tm.basis != "pixel":
        raise ValueError("matrix is already in the Hadamard basis")
    H = hadamard_masks(tm.macro_n)
    return MeasuredTM(tm.m @ H.T, "hadamard", tm.phase_steps, tm.macro_n, tm.pmap)


def align_rows(measured: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Rotate each measured row by the phase that best matches the truth row."""
    ph = np.angle(np.sum(measured * truth.conj(), axis=1))
    return measured * np.exp(-1j * ph)[:, None]


def tm_error(measured, truth) -> float:
    """Relative Frobenius error after removing one phase per output row.

    `truth` may be a pixel-resolution ScatteringMatrix (aggregated onto the
    measurement's macropixels) or an already aggregated array.
    """
    m = measured.m if isinstance(measured, MeasuredTM) else np.asarray(measured)
    if isinstance(measured, MeasuredTM) and measured.basis != "pixel":
        raise ValueError("compare in the pixel basis")
    if isinstance(truth, ScatteringMatrix):
        if truth.m.shape[1] != m.shape[1]:
            if not isinstance(measured, MeasuredTM) or measured.pmap is None:
                raise ValueError("cannot aggregate the truth without a pixel map")
            t = aggregate(truth, measured.macro_n, measured.pmap)
        else:
            t = truth.m
    else:
        t = np.asarray(truth)
    if t.shape != m.shape:
        raise ValueError(f"shape mismatch {m.shape} vs {t.shape}")
    return float(np.linalg.norm(align_rows(m, t) - t) / np.linalg.norm(t))


def border_reference(grid, macro_n: int, active: int) -> ComplexField:
    """Uniform unit illumination outside the active area."""
    pm = pixel_map(grid, macro_n, active)
    return ComplexField(grid, np.where(pm >= 0, 0.0, 1.0))
