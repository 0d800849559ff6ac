"""Linear operators: speckle media, SLM phase screens, Fourier lenses,
analytic entanglement-preserving solutions and their diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import ComplexField, Grid, dft_matrix

TAGS = ("thin", "thick", "slm", "lens", "sign-solution", "pcp-solution", "composed",
        "measured", "identity", "circulant", "system")


@dataclass
class ScatteringMatrix:
    """Dense d_out x d_in operator with its grids and a provenance tag."""
    m: np.ndarray
    grid_in: Grid
    grid_out: Grid
    tag: str = "composed"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=complex)
        if self.m.shape != (self.grid_out.d, self.grid_in.d):
            raise ValueError(f"matrix shape {self.m.shape} does not match grids "
                             f"({self.grid_out.d}, {self.grid_in.d})")
        if self.tag not in TAGS:
            raise ValueError(f"unknown tag {self.tag!r}")
        if not np.all(np.isfinite(self.m)):
            raise ValueError("scattering matrix has non-finite entries")
        if self.tag == "slm":
            diag = np.diag(self.m)
            if np.count_nonzero(self.m - np.diag(diag)) or np.max(np.abs(np.abs(diag) - 1)) > 1e-12:
                raise ValueError("slm operator must be diagonal with unit-modulus entries")

    @property
    def shape(self):
        return self.m.shape

    def is_unitary(self, tol: float = 1e-10) -> bool:
        if self.m.shape[0] != self.m.shape[1]:
            return False
        return bool(np.max(np.abs(self.m.conj().T @ self.m - np.eye(self.m.shape[0]))) <= tol)


def identity(grid: Grid) -> ScatteringMatrix:
    return ScatteringMatrix(np.eye(grid.d, dtype=complex), grid, grid, "identity")


# -- phase masks --------------------------------------------------------------

def pixel_map(grid: Grid, macro_n: int, active: int | None = None) -> np.ndarray:
    """Macropixel index of every grid pixel, -1 outside the active square.

    The active square (default: whole grid) is centred; along each axis
    pixel u of the active area belongs to macropixel floor(u * macro_n / active),
    so unequal block sizes are allowed (e.g. 32 macropixels on 51 pixels).
    """
    n = grid.n
    active = n if active is None else int(active)
    if not 1 <= macro_n <= active <= n:
        raise ValueError(f"need 1 <= macro_n ({macro_n}) <= active ({active}) <= n ({n})")
    off = (n - active) // 2
    u = np.arange(n) - off
    inside = (u >= 0) & (u < active)
    axis = np.where(inside, (np.clip(u, 0, active - 1) * macro_n) // active, -1)
    my, mx = axis[:, None], axis[None, :]
    pm = np.where((my >= 0) & (mx >= 0), my * macro_n + mx, -1)
    return pm.ravel()


@dataclass
class PhaseMask:
    """Macropixel phases, wrapped to [0, 2 pi)."""
    macro_n: int
    phases: np.ndarray
    unlit: np.ndarray | None = None

    def __post_init__(self):
        ph = np.asarray(self.phases, dtype=float).ravel()
        if ph.size != self.macro_n ** 2:
            raise ValueError(f"mask needs {self.macro_n ** 2} phases, got {ph.size}")
        self.phases = np.mod(ph, 2 * np.pi)

    @classmethod
    def zeros(cls, macro_n: int):
        return cls(macro_n, np.zeros(macro_n * macro_n))

    @classmethod
    def random(cls, macro_n: int, rng):
        return cls(macro_n, rng.uniform(0, 2 * np.pi, macro_n * macro_n))

    def phasors(self) -> np.ndarray:
        return np.exp(1j * self.phases)

    def image(self) -> np.ndarray:
        return self.phases.reshape(self.macro_n, self.macro_n)

    def shifted(self, subset, theta: float) -> "PhaseMask":
        ph = self.phases.copy()
        ph[subset] += theta
        return PhaseMask(self.macro_n, ph)


def slm_diagonal(mask: PhaseMask, grid: Grid, pmap: np.ndarray | None = None) -> ScatteringMatrix:
    """Diagonal exp(i theta) on mapped pixels, 1 on unmapped ones."""
    pm = pixel_map(grid, mask.macro_n) if pmap is None else np.asarray(pmap).ravel()
    if pm.size != grid.d:
        raise ValueError("pixel map does not cover the grid")
    if pm.max() >= mask.macro_n ** 2:
        raise ValueError("pixel map refers to missing macropixels")
    diag = np.where(pm >= 0, mask.phasors()[np.clip(pm, 0, None)], 1.0 + 0j)
    return ScatteringMatrix(np.diag(diag), grid, grid, "slm", {"macro_n": mask.macro_n})


# -- speckle media ------------------------------------------------------------

@dataclass(frozen=True)
class SpeckleSpec:
    """Speckle correlation length (px), thick-medium envelope width (px), seed.

    unit=True bypasses the random generator and yields a field of ones.
    """
    corr_len: float = 3.0
    envelope_sigma: float | None = None
    seed: int = 0
    unit: bool = False

    def __post_init__(self):
        if self.corr_len < 1:
            raise ValueError("speckle correlation length must be >= 1 px")
        if self.envelope_sigma is not None and not self.envelope_sigma > 0:
            raise ValueError("envelope width must be positive")


def _lowpass(n: int, corr_len: float) -> np.ndarray:
    # intensity autocorrelation |mu|^2 = exp(-x^2 kappa^2 / 2) has FWHM corr_len
    kappa = 2 * np.sqrt(2 * np.log(2)) / corr_len
    k = 2 * np.pi * np.fft.fftfreq(n)
    k2 = k[:, None] ** 2 + k[None, :] ** 2
    return np.exp(-k2 / (2 * kappa ** 2))


def _speckle(n: int, corr_len: float, rng) -> np.ndarray:
    noise = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    fld = np.fft.ifft2(np.fft.fft2(noise) * _lowpass(n, corr_len))
    return fld / np.sqrt(np.mean(np.abs(fld) ** 2))


def _check_speckle(grid: Grid, spec: SpeckleSpec):
    if not grid.circular:
        raise ValueError("speckle generation needs a circular grid")
    if not spec.unit and spec.corr_len >= grid.n / 2:
        raise ValueError(f"correlation length {spec.corr_len} >= n/2 leaves no randomness")


def speckle_field(grid: Grid, spec: SpeckleSpec) -> ComplexField:
    """Seeded complex speckle with mean intensity 1."""
    _check_speckle(grid, spec)
    if spec.unit:
        return ComplexField(grid, np.ones(grid.d))
    fld = _speckle(grid.n, spec.corr_len, np.random.default_rng(spec.seed))
    return ComplexField(grid, fld.ravel())


def thin_medium(grid: Grid, spec: SpeckleSpec) -> ScatteringMatrix:
    fld = speckle_field(grid, spec)
    return ScatteringMatrix(np.diag(fld.values), grid, grid, "thin",
                            {"corr_len": spec.corr_len, "seed": spec.seed, "unit": spec.unit})


def thick_medium(grid: Grid, spec: SpeckleSpec) -> ScatteringMatrix:
    """Column c: fresh speckle (seed derived from (seed, c)) times a Gaussian
    envelope exp(-|r - r_c|^2 / (2 sigma_s^2)) centred on pixel c, unit norm."""
    _check_speckle(grid, spec)
    if spec.envelope_sigma is None:
        raise ValueError("thick medium needs envelope_sigma")
    n = grid.n
    k = np.arange(n)
    m = np.empty((grid.d, grid.d), dtype=complex)
    for c in range(grid.d):
        cy, cx = divmod(c, n)
        dy, dx = grid.wrap(k - cy), grid.wrap(k - cx)
        env = np.exp(-(dy[:, None] ** 2 + dx[None, :] ** 2) / (2 * spec.envelope_sigma ** 2))
        if spec.unit:
            col = env
        else:
            col = _speckle(n, spec.corr_len, np.random.default_rng([spec.seed, c])) * env
        col = col.ravel()
        m[:, c] = col / np.linalg.norm(col)
    return ScatteringMatrix(m, grid, grid, "thick",
                            {"corr_len": spec.corr_len, "envelope_sigma": spec.envelope_sigma,
                             "seed": spec.seed})


# -- circulant solutions ------------------------------------------------------

def circulant(grid: Grid, kernel: np.ndarray) -> np.ndarray:
    """Matrix m(r', r) = kernel(r' - r mod n) on a circular grid."""
    if not grid.circular:
        raise ValueError("circulant operators need a circular grid")
    n = grid.n
    h = np.asarray(kernel).reshape(n, n)
    y, x = grid.index_yx()
    return h[(y[:, None] - y[None, :]) % n, (x[:, None] - x[None, :]) % n]


def _as_image(values, grid: Grid) -> np.ndarray:
    if isinstance(values, ComplexField):
        values = values.values
    return np.asarray(values).reshape(grid.n, grid.n)


def sign_solution(g, grid: Grid) -> ScatteringMatrix:
    """Circulant with DFT symbol sign(g): kernel h = inverse DFT of sign(g).

    The symbol is the eigenvalue spectrum, so with numpy's unnormalised
    forward transform the operator is unitary whenever |symbol| = 1.
    """
    g = _as_image(g, grid)
    if np.iscomplexobj(g):
        if np.max(np.abs(g.imag)) > 0:
            raise ValueError("g must be real-valued")
        g = g.real
    if np.any(g == 0):
        raise ValueError("g has exact zeros where sign is undefined; perturb them first")
    symbol = np.sign(g).astype(float)
    h = np.fft.ifft2(symbol)
    return ScatteringMatrix(circulant(grid, h), grid, grid, "sign-solution", {"symbol": symbol})


def pcp_solution(f, grid: Grid, tol: float = 1e-9) -> ScatteringMatrix:
    """Circulant with DFT symbol f, where f(k) f(-k) = 1 for every k."""
    f = _as_image(f, grid).astype(complex)
    n = grid.n
    k = np.arange(n)
    fneg = f[(-k[:, None]) % n, (-k[None, :]) % n]
    err = np.abs(f * fneg - 1)
    worst = np.unravel_index(np.argmax(err), err.shape)
    if err[worst] > tol:
        raise ValueError(f"f(k) f(-k) = 1 violated by {err[worst]:.3g} at k = {tuple(int(v) for v in worst)}")
    h = np.fft.ifft2(f)
    return ScatteringMatrix(circulant(grid, h), grid, grid, "pcp-solution", {"symbol": f})


def odd_phase_symbol(grid: Grid, rng, amplitude: float = np.pi) -> np.ndarray:
    """Random exp(i phi(k)) with phi(-k) = -phi(k): a valid pcp symbol."""
    n = grid.n
    k = np.arange(n)
    phi = rng.uniform(-amplitude, amplitude, (n, n))
    phi = 0.5 * (phi - phi[(-k[:, None]) % n, (-k[None, :]) % n])
    return np.exp(1j * phi)


# -- lenses and composition -------------------------------------------------

def fourier_lens(grid: Grid, f: float, lam: float) -> ScatteringMatrix:
    """2f Fourier transform as a unitary DFT; output pitch lam f / (n pitch)."""
    if not (f > 0 and lam > 0):
        raise ValueError("focal length and wavelength must be positive")
    out_pitch = lam * f / (grid.n * grid.pitch)
    gout = Grid(grid.n, out_pitch, grid.boundary)
    return ScatteringMatrix(dft_matrix(grid), grid, gout, "lens",
                            {"f": f, "lambda": lam, "output_pitch": out_pitch})


def compose(stages) -> ScatteringMatrix:
    """Product stages[0] @ stages[1] @ ... ; the last stage acts first."""
    stages = list(stages)
    if not stages:
        raise ValueError("nothing to compose")
    m = stages[-1].m
    for left, right in zip(stages[-2::-1], stages[:0:-1]):
        if left.m.shape[1] != m.shape[0]:
            raise ValueError(f"cannot chain {left.tag} ({left.m.shape}) after {right.tag}")
        m = left.m @ m
    return ScatteringMatrix(m, stages[-1].grid_in, stages[0].grid_out, "composed",
                            {"stages": [s.tag for s in stages]})


# -- diagnostics ------------------------------------------------------------

@dataclass(frozen=True)
class TrivialityVerdict:
    trivial: bool
    alpha: float | None
    concentration: float

    def __str__(self):
        if self.trivial:
            return f"trivial(alpha={self.alpha:+g})"
        return "non-trivial"


def is_trivial(S: ScatteringMatrix, tol: float = 0.1) -> TrivialityVerdict:
    """Trivial when every column puts >= 1 - tol of its energy on one pixel
    and those pixels follow r' = -alpha r for a single alpha in [-1, 1].

    Sign convention: identity is alpha = -1, parity alpha = +1.
    """
    m = S.m
    if m.shape[0] != m.shape[1]:
        raise ValueError("is_trivial needs a square matrix")
    e = np.abs(m) ** 2
    tot = e.sum(axis=0)
    lit = tot > 0
    if not np.any(lit):
        return TrivialityVerdict(False, None, 0.0)
    peak_row = np.argmax(e, axis=0)
    frac = e[peak_row, np.arange(m.shape[1])][lit] / tot[lit]
    conc = float(frac.min())
    if conc < 1 - tol:
        return TrivialityVerdict(False, None, conc)
    gi, go = S.grid_in, S.grid_out
    oi, oo = gi.axis_offsets(), go.axis_offsets()
    cols = np.flatnonzero(lit)
    ry, rx = oi[cols // gi.n], oi[cols % gi.n]
    py, px = oo[peak_row[cols] // go.n], oo[peak_row[cols] % go.n]

    def fits(alpha):
        qy, qx = -alpha * ry, -alpha * rx
        if go.circular:
            dy = go.wrap(np.floor(qy + 0.5) - py)
            dx = go.wrap(np.floor(qx + 0.5) - px)
        else:
            dy, dx = np.floor(qy + 0.5) - py, np.floor(qx + 0.5) - px
        return bool(np.all(dy == 0) and np.all(dx == 0))

    for alpha in (-1.0, 1.0):
        if fits(alpha):
            return TrivialityVerdict(True, alpha, conc)
    den = float(np.sum(ry ** 2 + rx ** 2))
    if den > 0:
        alpha = -float(np.sum(ry * py + rx * px)) / den
        if -1 <= alpha <= 1 and fits(alpha):
            return TrivialityVerdict(True, alpha, conc)
    return TrivialityVerdict(False, None, conc)


def kernel_slice(S: ScatteringMatrix, r_plus, mode: str = "sum", M: float = 1.0,
                 sigma: float = 0.0, lambda_p: float | None = None, f1: float | None = None) -> np.ndarray:
    """Restoring kernel H (mode 'sum') or Q (mode 'difference') at one bin.

    H(i', s'; b) = sum_i S(i', i) S(s', b - i) w(r_i - r_s), b = M r_plus, with
    w = exp(-|r-|^2 pi^2 sigma^2 / (lambda_p^2 f1^2)), r- = (r_i - r_s)/2.
    Q(i', s'; m) = sum_i S(i', i) S(s', i - m) exp(-|r_i + r_s|^2 sigma^2 / 4).
    """
    g = S.grid_in
    if not g.circular:
        raise ValueError("kernel_slice needs a circular grid")
    if g.n > 16:
        raise ValueError("kernel_slice is a direct sum; grids above n = 16 are refused")
    n = g.n
    by, bx = (int(np.floor(M * r_plus[0] + 0.5)), int(np.floor(M * r_plus[1] + 0.5)))
    y, x = g.index_yx()
    if mode == "sum":
        sy, sx = (by - y) % n, (bx - x) % n
    elif mode == "difference":
        sy, sx = (y - by) % n, (x - bx) % n
    else:
        raise ValueError(f"unknown kernel mode {mode!r}")
    partner = sy * n + sx
    w = np.ones(g.d)
    if sigma > 0:
        if mode == "sum":
            if lambda_p is None or f1 is None:
                raise ValueError("the sum-kernel weight needs lambda_p and f1")
            dr2 = (g.wrap(y - sy) ** 2 + g.wrap(x - sx) ** 2) * g.pitch ** 2
            w = np.exp(-(dr2 / 4) * np.pi ** 2 * sigma ** 2 / (lambda_p ** 2 * f1 ** 2))
        else:
            sr2 = (g.wrap(y + sy) ** 2 + g.wrap(x + sx) ** 2) * g.pitch ** 2
            w = np.exp(-sr2 * sigma ** 2 / 4)
    return np.einsum("ai,bi,i->ab", S.m, S.m[:, partner], w)
