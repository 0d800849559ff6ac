"""Correlation images (sum / difference projections of G2) and their scores."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .biphoton import TwoPhotonPure
from .lattice import CIRCULAR, SumCoordinateMap
from .propagate import G2Matrix


@dataclass
class CorrelationImage:
    """Histogram over r_i + r_s (projection 'sum') or r_i - r_s ('difference').

    Values are stored un-normalized. Circular images keep the coordinate
    origin at bin (0, 0); `centered()` gives the display view.
    """
    values: np.ndarray
    projection: str = "sum"
    mode: str = CIRCULAR
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError("correlation image must be square")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("correlation image has non-finite values")

    @property
    def side(self) -> int:
        return self.values.shape[0]

    @property
    def origin(self) -> tuple:
        if self.mode == CIRCULAR:
            return (0, 0)
        c = (self.side - 1) // 2
        return (c, c)

    def centered(self) -> np.ndarray:
        """View with the coordinate origin moved to the geometric centre."""
        if self.mode == CIRCULAR:
            return np.fft.fftshift(self.values)
        return self.values


def g2_from_pure(psi: TwoPhotonPure) -> G2Matrix:
    return G2Matrix(psi.grid, np.abs(psi.psi) ** 2)


def _project(g2: G2Matrix, cmap: SumCoordinateMap, sign: str) -> CorrelationImage:
    if cmap.sign != sign:
        raise ValueError(f"map bins the {cmap.sign} coordinate, expected {sign}")
    if cmap.grid.d != g2.grid.d or cmap.grid.n != g2.grid.n:
        raise ValueError("map and G2 live on different grids")
    side = cmap.side
    v = np.bincount(cmap.bins().ravel(), weights=g2.values.ravel(), minlength=side * side)
    return CorrelationImage(v.reshape(side, side), sign, cmap.mode, {"scale": cmap.scale_note})


def project_sum(g2: G2Matrix, cmap: SumCoordinateMap) -> CorrelationImage:
    return _project(g2, cmap, "sum")


def project_diff(g2: G2Matrix, cmap: SumCoordinateMap) -> CorrelationImage:
    return _project(g2, cmap, "difference")


def _fit_side(a: np.ndarray, side: int) -> np.ndarray:
    """Centre-crop or zero-pad a square array to `side`."""
    m = a.shape[0]
    if m == side:
        return a
    if m > side:
        o = (m - side) // 2
        return a[o:o + side, o:o + side]
    out = np.zeros((side, side))
    o = (side - m) // 2
    out[o:o + m, o:o + m] = a
    return out


def fidelity_ncc(img, ref) -> float:
    """Zero-mean normalized cross-correlation after max-normalizing both."""
    a = np.asarray(img.values if isinstance(img, CorrelationImage) else img, dtype=float)
    b = np.asarray(ref.values if isinstance(ref, CorrelationImage) else ref, dtype=float)
    b = _fit_side(b, a.shape[0])
    out = []
    for v in (a, b):
        peak = np.max(np.abs(v))
        if peak == 0:
            raise ValueError("cannot score an all-zero image")
        v = v / peak
        v = v - v.mean()
        nrm = np.linalg.norm(v)
        if nrm == 0:
            raise ValueError("zero-variance image has no defined correlation")
        out.append(v / nrm)
    return float(np.sum(out[0] * out[1]))


def _cut_fwhm(line: np.ndarray, k: int) -> float:
    half = line[k] / 2.0
    n = line.size

    def crossing(step):
        j = k
        while 0 <= j + step < n and line[j + step] > half:
            j += step
        if not 0 <= j + step < n:
            return float(j)
        a, b = line[j], line[j + step]
        return j + step * (a - half) / (a - b)

    return crossing(1) - crossing(-1)


def peak_metrics(img: CorrelationImage) -> dict:
    """center_value (the optimization objective), peak_value, fwhm_px, contrast."""
    v = img.values
    center = float(v[img.origin])
    view = img.centered()
    py, px = np.unravel_index(np.argmax(view), view.shape)
    peak = float(view[py, px])
    if peak > 0:
        fwhm = 0.5 * (_cut_fwhm(view[py, :], px) + _cut_fwhm(view[:, px], py))
    else:
        fwhm = float("nan")
    mean = float(v.mean())
    contrast = float(v.std() / mean) if mean > 0 else 0.0
    return {"center_value": center, "peak_value": peak, "fwhm_px": float(fwhm), "contrast": contrast}
