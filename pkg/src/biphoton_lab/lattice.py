"""Discrete transverse space: grids, complex fields, unitary DFTs and
sum/difference coordinate maps.

Conventions used everywhere in the package
------------------------------------------
* A grid is n x n; a field is flattened row-major, pixel (y, x) -> y*n + x.
* Circular grids are periodic. Their coordinate origin is pixel (0, 0) and
  coordinates are wrapped into [-n/2, n/2). This is the DFT origin, so lens
  and circulant operators need no shifts.
* Linear grids are not periodic. Their origin is the geometric centre
  (n-1)/2, so r -> -r maps pixel k onto pixel n-1-k.
* The sum map bins raw index sums: (i + j) mod n in circular mode and
  i + j (0..2n-2) in linear mode. The difference map bins (i - j) mod n or
  i - j + n - 1. In both modes the bin holding r+ = 0 (or r- = 0) is
  `SumCoordinateMap.origin`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CIRCULAR = "circular"
LINEAR = "linear"
_BOUNDARIES = (CIRCULAR, LINEAR)


@dataclass(frozen=True)
class Grid:
    n: int
    pitch: float = 1.0
    boundary: str = CIRCULAR

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"grid needs n >= 2, got {self.n}")
        if not self.pitch > 0:
            raise ValueError(f"grid pitch must be positive, got {self.pitch}")
        if self.boundary not in _BOUNDARIES:
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @property
    def d(self) -> int:
        return self.n * self.n

    @property
    def circular(self) -> bool:
        return self.boundary == CIRCULAR

    def axis_offsets(self) -> np.ndarray:
        """Per-axis coordinate of each index, in pixels."""
        k = np.arange(self.n)
        if self.circular:
            return ((k + self.n // 2) % self.n) - self.n // 2
        return k - (self.n - 1) / 2.0

    def coords(self):
        """(y, x) physical coordinates of every flattened pixel, in meters."""
        off = self.axis_offsets() * self.pitch
        yy, xx = np.meshgrid(off, off, indexing="ij")
        return yy.ravel(), xx.ravel()

    def index_yx(self):
        k = np.arange(self.d)
        return k // self.n, k % self.n

    def wrap(self, delta):
        """Wrap integer pixel offsets onto the grid's minimal image (circular only)."""
        delta = np.asarray(delta)
        if not self.circular:
            return delta
        return ((delta + self.n // 2) % self.n) - self.n // 2


def make_grid(n: int, pitch: float = 1.0, boundary: str = CIRCULAR) -> Grid:
    return Grid(int(n) if float(n).is_integer() else n, float(pitch), boundary)


@dataclass(frozen=True)
class ComplexField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).ravel()
        if v.size != self.grid.d:
            raise ValueError(f"field has {v.size} entries, grid needs {self.grid.d}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite entries")
        object.__setattr__(self, "values", v)

    def image(self) -> np.ndarray:
        return unflatten(self.values, self.grid.n)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


def flatten(img) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError(f"expected a square image, got shape {img.shape}")
    return img.reshape(-1).copy()


def unflatten(vec, n: int) -> np.ndarray:
    vec = np.asarray(vec)
    return vec.reshape(n, n).copy()


def dft_matrix_1d(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def dft_matrix(grid: Grid, inverse: bool = False) -> np.ndarray:
    """Dense unitary 2-D DFT acting on row-major flattened fields."""
    if not grid.circular:
        raise ValueError("DFT operators need a circular grid")
    f1 = dft_matrix_1d(grid.n)
    if inverse:
        f1 = f1.conj()
    return np.kron(f1, f1)


def dft2(fld: ComplexField, direction: str = "forward") -> ComplexField:
    """Unitary 2-D DFT (norm='ortho'). Linear grids are rejected."""
    if not fld.grid.circular:
        raise ValueError("dft2 requires a circular grid; linear grids are not periodic")
    img = fld.image()
    if direction == "forward":
        out = np.fft.fft2(img, norm="ortho")
    elif direction == "inverse":
        out = np.fft.ifft2(img, norm="ortho")
    else:
        raise ValueError(f"direction must be 'forward' or 'inverse', not {direction!r}")
    return ComplexField(fld.grid, out.ravel())


@dataclass(frozen=True)
class SumCoordinateMap:
    grid: Grid
    mode: str = CIRCULAR
    sign: str = "sum"
    _bins: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def side(self) -> int:
        return self.grid.n if self.mode == CIRCULAR else 2 * self.grid.n - 1

    @property
    def origin(self) -> tuple:
        """Bin where r+ = 0 (sum) or r- = 0 (difference)."""
        c = 0 if self.mode == CIRCULAR else self.grid.n - 1
        return (c, c)

    @property
    def scale_note(self) -> str:
        return "raw index sum r_i + r_s" if self.sign == "sum" else "raw index difference r_i - r_s"

    def axis_bin(self, i, j):
        """Bin of index pair (i, j) along one axis."""
        i = np.asarray(i)
        j = np.asarray(j)
        n = self.grid.n
        if self.sign == "sum":
            b = i + j
        else:
            b = i - j
        if self.mode == CIRCULAR:
            return b % n
        return b if self.sign == "sum" else b + n - 1

    def bins(self) -> np.ndarray:
        """d x d array of flat bin indices into a side x side image."""
        if self._bins is None:
            y, x = self.grid.index_yx()
            by = self.axis_bin(y[:, None], y[None, :])
            bx = self.axis_bin(x[:, None], x[None, :])
            object.__setattr__(self, "_bins", (by * self.side + bx).astype(np.intp))
        return self._bins

    def partner(self, b) -> np.ndarray:
        """For target bin b=(by, bx): partner index s of every i with map(i, s) = b.

        Entries are -1 where no partner exists (linear mode edges).
        """
        n = self.grid.n
        y, x = self.grid.index_yx()
        by, bx = b
        if self.sign == "sum":
            sy, sx = by - y, bx - x
        else:
            sy, sx = y - by, x - bx
            if self.mode == LINEAR:
                sy, sx = sy + n - 1, sx + n - 1
        if self.mode == CIRCULAR:
            return (sy % n) * n + (sx % n)
        ok = (sy >= 0) & (sy < n) & (sx >= 0) & (sx < n)
        return np.where(ok, sy * n + sx, -1)


def sum_coordinate_map(grid: Grid, mode: str | None = None, sign: str = "sum") -> SumCoordinateMap:
    mode = mode or grid.boundary
    if mode not in _BOUNDARIES:
        raise ValueError(f"unknown map mode {mode!r}")
    if sign not in ("sum", "difference"):
        raise ValueError(f"unknown map sign {sign!r}")
    if mode == CIRCULAR and not grid.circular:
        raise ValueError("circular map mode requires a circular grid")
    return SumCoordinateMap(grid, mode, sign)


def normalize(obj):
    """Scale a ComplexField or two-photon state to unit l2 / Frobenius norm."""
    from .biphoton import TwoPhotonPure

    if isinstance(obj, ComplexField):
        nrm = np.linalg.norm(obj.values)
        if nrm == 0:
            raise ValueError("cannot normalize an all-zero field")
        return ComplexField(obj.grid, obj.values / nrm)
    if isinstance(obj, TwoPhotonPure):
        nrm = np.linalg.norm(obj.psi)
        if nrm == 0:
            raise ValueError("cannot normalize an all-zero state")
        return TwoPhotonPure(obj.grid, obj.psi / nrm, weight=obj.weight * nrm ** 2)
    raise TypeError(f"cannot normalize {type(obj).__name__}")
