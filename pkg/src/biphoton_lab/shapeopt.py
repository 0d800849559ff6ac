"""Partitioning wavefront-shaping optimizer on the Gamma+ centre bin.

Each step phase-shifts a random half of the macropixels by theta, samples
the objective at a few theta values, fits
    a cos(theta + theta_a) + b cos(2 theta + theta_b) + c
and keeps the argmax of the fit.

Shifting a subset P by theta turns every amplitude that reaches the
target into alpha + e^{i theta} beta (+ e^{2i theta} gamma for pairs), so the
objective is exactly a second-order trigonometric polynomial. The engine
below keeps the propagated state and extracts the three harmonics per step
with one (d x |P|) x (|P| x K) product instead of full re-propagations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import i0e

from .biphoton import TwoPhotonMixed, TwoPhotonPure
from .correlate import project_sum
from .lattice import normalize, sum_coordinate_map
from .media import PhaseMask, ScatteringMatrix
from .propagate import G2Matrix
from .tmatrix import MeasuredTM

SIX_PHASES = np.array([0, 1, 2, 3, 4, 5]) * np.pi / 3
THETA_GRID = np.arange(0.0, 2 * np.pi, 1e-3)


@dataclass
class OptConfig:
    macro_n: int = 16
    phase_samples: int = 7
    max_steps: int = 1500
    target: tuple | None = None
    feedback: str = "analytic"
    seed: int = 0
    fraction: float = 0.5
    plateau_window: int = 200
    plateau_tol: float = 1e-4
    bins: int = 1  # 1: centre bin, 3: 3x3 block around it
    phases: np.ndarray | None = None
    # sampled feedback: pairs per evaluation batch and accidental mean per bin
    pair_rate: float = 1e5
    batch_s: float = 3.0
    accidental_mean: float = 5.0
    # drop SLM-plane state entries below psi_tol * max (0 keeps the state exact)
    psi_tol: float = 0.0

    def __post_init__(self):
        if self.phases is None and self.phase_samples < 5:
            raise ValueError("need at least 5 phase samples for 5 fit parameters")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.feedback not in ("analytic", "sampled"):
            raise ValueError(f"unknown feedback {self.feedback!r}")
        if not 0 < self.fraction < 1:
            raise ValueError("partition fraction must be in (0, 1)")
        if self.bins not in (1, 3):
            raise ValueError("objective uses 1 or 3x3 bins")

    def thetas(self) -> np.ndarray:
        if self.phases is not None:
            return np.asarray(self.phases, dtype=float)
        return 2 * np.pi * np.arange(self.phase_samples) / self.phase_samples


@dataclass
class DoubleCosineFit:
    a: float
    theta_a: float
    b: float
    theta_b: float
    c: float
    theta_opt: float
    residual: float

    def __call__(self, theta):
        theta = np.asarray(theta)
        return (self.a * np.cos(theta + self.theta_a) + self.b * np.cos(2 * theta + self.theta_b) + self.c)


@dataclass
class OptTrace:
    step: list = field(default_factory=list)
    theta_opt: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    true_objective: list = field(default_factory=list)
    fits: list = field(default_factory=list)
    initial: float = 0.0
    mask: PhaseMask | None = None
    stopped: str = ""

    @property
    def best_so_far(self) -> np.ndarray:
        return np.maximum.accumulate(np.r_[self.initial, self.objective])[1:]

    def gain(self) -> float:
        return float(self.best_so_far[-1] / self.initial)

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("step,theta_opt,objective,a,theta_a,b,theta_b,c\n")
            for k, th, ob, f in zip(self.step, self.theta_opt, self.objective, self.fits):
                fh.write(",".join(f"{v:.17g}" for v in (k, th, ob, f.a, f.theta_a, f.b, f.theta_b, f.c)) + "\n")


def fit_double_cosine(theta, values) -> DoubleCosineFit:
    """Least squares in {cos, sin, cos 2, sin 2, 1}, returned in amplitude-phase form."""
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(values, dtype=float)
    if theta.size < 5 or theta.size != v.size:
        raise ValueError("need at least 5 (theta, value) samples")
    X = np.column_stack([np.cos(theta), np.sin(theta), np.cos(2 * theta), np.sin(2 * theta),
                         np.ones_like(theta)])
    if np.linalg.matrix_rank(X) < 5:
        raise ValueError("rank-deficient design: phases must be distinct modulo 2 pi")
    coef, *_ = np.linalg.lstsq(X, v, rcond=None)
    a1, b1, a2, b2, c = coef
    a, ta = np.hypot(a1, b1), np.arctan2(-b1, a1)
    b, tb = np.hypot(a2, b2), np.arctan2(-b2, a2)
    model = a1 * np.cos(THETA_GRID) + b1 * np.sin(THETA_GRID) + a2 * np.cos(2 * THETA_GRID) \
        + b2 * np.sin(2 * THETA_GRID)
    th_opt = float(THETA_GRID[np.argmax(model)])
    resid = float(np.max(np.abs(X @ coef - v))) if v.size else 0.0
    return DoubleCosineFit(float(a), float(ta), float(b), float(tb), float(c), th_opt, resid)


# -- objective engine -----------------------------------------------------------

def _target_partners(sm: ScatteringMatrix, target, bins: int):
    cmap = sum_coordinate_map(sm.grid_out)
    t = cmap.origin if target is None else tuple(target)
    taus = []
    r = range(-(bins // 2), bins // 2 + 1)
    for dy in r:
        for dx in r:
            b = (t[0] + dy, t[1] + dx)
            if cmap.mode == "circular":
                b = (b[0] % cmap.side, b[1] % cmap.side)
            taus.append(cmap.partner(b))
    return taus


class _PureEngine:
    """Keeps A = S_m D and B = A Psi; the target amplitudes are psi_out(i, tau_i).

    Psi may be held sparse (entries below psi_tol * max dropped), which makes
    the per-step product cheap for the nearly diagonal guide states.
    """

    def __init__(self, A, psi, taus, psi_tol: float = 0.0):
        self.A = A.copy()
        if psi_tol > 0:
            keep = np.abs(psi) > psi_tol * np.abs(psi).max()
            psi = sparse.csr_matrix(np.where(keep, psi, 0))
        self.psi = psi
        self.taus = taus
        self.B = self._times_psi(self.A, np.arange(A.shape[1]))
        self._cache = None

    def _times_psi(self, A, cols):
        """A[:, cols] @ psi[cols, :]."""
        if sparse.issparse(self.psi):
            return np.asarray((self.psi[cols, :].T @ A[:, cols].T).T)
        return A[:, cols] @ self.psi[cols, :]

    def harmonics(self, P):
        wP = P.astype(float)
        wQ = 1.0 - wP
        BP = self._times_psi(self.A, np.flatnonzero(P))
        BQ = self.B - BP
        c = np.zeros(3, dtype=complex)
        for tau in self.taus:
            ok = tau >= 0
            At = self.A[tau[ok]]
            X = BQ[ok] * At
            Y = BP[ok] * At
            v0 = X @ wQ
            v1 = X @ wP + Y @ wQ
            v2 = Y @ wP
            c += [np.sum(abs(v0) ** 2 + abs(v1) ** 2 + abs(v2) ** 2),
                  np.sum(v0.conj() * v1 + v1.conj() * v2),
                  np.sum(v0.conj() * v2)]
        self._cache = (P, BP)
        return c

    def apply(self, P, theta):
        e = np.exp(1j * theta)
        if self._cache is None or self._cache[0] is not P:
            self.harmonics(P)
        BP = self._cache[1]
        self.B = self.B + (e - 1) * BP
        self.A[:, P] *= e
        self._cache = None

    def total(self) -> float:
        return float(np.sum(np.abs(self.B @ self.A.T) ** 2))


class _MixedEngine:
    """G2(i, s) = sum_R p_R |U(i, R)|^2 |W(s, R)|^2 with U = A phi^t, W = A chi^t."""

    def __init__(self, A, rho: TwoPhotonMixed, taus):
        self.A = A.copy()
        self.phi_t, self.chi_t = rho.phi.T, rho.chi.T
        self.p = rho.weights
        self.taus = taus
        self.U = self.A @ self.phi_t
        self.W = self.A @ self.chi_t
        self._cache = None

    def harmonics(self, P):
        UP = self.A[:, P] @ self.phi_t[P, :]
        WP = self.A[:, P] @ self.chi_t[P, :]
        UQ, WQ = self.U - UP, self.W - WP
        a0 = np.abs(UQ) ** 2 + np.abs(UP) ** 2
        a1 = UQ.conj() * UP
        b0 = np.abs(WQ) ** 2 + np.abs(WP) ** 2
        b1 = WQ.conj() * WP
        c = np.zeros(3, dtype=complex)
        for tau in self.taus:
            ok = tau >= 0
            x0, x1, y0, y1 = a0[ok], a1[ok], b0[tau[ok]], b1[tau[ok]]
            c += [np.sum((x0 * y0 + 2 * np.real(x1 * y1.conj())) @ self.p),
                  np.sum((x0 * y1 + y0 * x1) @ self.p),
                  np.sum((x1 * y1) @ self.p)]
        self._cache = (P, UP, WP)
        return c

    def apply(self, P, theta):
        e = np.exp(1j * theta)
        if self._cache is None or self._cache[0] is not P:
            self.harmonics(P)
        _, UP, WP = self._cache
        self.U = self.U + (e - 1) * UP
        self.W = self.W + (e - 1) * WP
        self.A[:, P] *= e
        self._cache = None

    def total(self) -> float:
        return float(np.sum((np.abs(self.U) ** 2 * self.p) @ (np.abs(self.W) ** 2).T))


def _engine(sm: ScatteringMatrix, mask: PhaseMask, state, taus, psi_tol: float = 0.0):
    if sm.m.shape[1] != mask.macro_n ** 2:
        raise ValueError(f"S_m has {sm.m.shape[1]} columns, mask has {mask.macro_n ** 2} macropixels")
    A = sm.m * mask.phasors()[None, :]
    if isinstance(state, TwoPhotonPure):
        if state.psi.shape[0] != A.shape[1]:
            raise ValueError("state and S_m dimensions differ")
        return _PureEngine(A, state.psi, taus, psi_tol)
    if isinstance(state, TwoPhotonMixed):
        return _MixedEngine(A, state, taus)
    raise TypeError(f"unsupported state {type(state).__name__}")


def _evaluate(c, theta):
    theta = np.asarray(theta)
    return (c[0].real + 2 * np.real(np.exp(1j * theta) * c[1])
            + 2 * np.real(np.exp(2j * theta) * c[2]))


# -- public operations ----------------------------------------------------------

def propagate_slm(sm: ScatteringMatrix, mask: PhaseMask, psi_slm: TwoPhotonPure) -> TwoPhotonPure:
    """Psi_out = (S_m D) Psi (S_m D)^t with D applied as a column scaling."""
    if sm.m.shape[1] != psi_slm.grid.d or mask.macro_n ** 2 != sm.m.shape[1]:
        raise ValueError("S_m, mask and state dimensions differ")
    A = sm.m * mask.phasors()[None, :]
    return normalize(TwoPhotonPure(sm.grid_out, A @ psi_slm.psi @ A.T, weight=psi_slm.weight))


def objective_direct(sm: ScatteringMatrix, mask: PhaseMask, state, target=None) -> float:
    """Reference Gamma+ at the target bin by full propagation and projection."""
    cmap = sum_coordinate_map(sm.grid_out)
    t = cmap.origin if target is None else tuple(target)
    A = sm.m * mask.phasors()[None, :]
    if isinstance(state, TwoPhotonPure):
        g2 = G2Matrix(sm.grid_out, np.abs(A @ state.psi @ A.T) ** 2)
    else:
        u = np.abs(A @ state.phi.T) ** 2
        w = np.abs(A @ state.chi.T) ** 2
        g2 = G2Matrix(sm.grid_out, (u * state.weights) @ w.T)
    return float(project_sum(g2, cmap).values[t])


def sweep_partition(sm: ScatteringMatrix, psi_slm, mask: PhaseMask, partition, phases,
                    target=None, bins: int = 1):
    """Objective with `partition` offset by each theta; `mask` is left untouched."""
    P = np.zeros(mask.macro_n ** 2, dtype=bool)
    P[np.asarray(partition)] = True
    if not P.any():
        raise ValueError("empty partition")
    eng = _engine(sm, mask, psi_slm, _target_partners(sm, target, bins))
    c = eng.harmonics(P)
    return [(float(th), float(v)) for th, v in zip(phases, _evaluate(c, np.asarray(phases)))]


def optimize(sm: ScatteringMatrix, psi_slm, cfg: OptConfig, mask: PhaseMask | None = None):
    """Partitioning optimization; returns (final mask, trace)."""
    rng = np.random.default_rng(cfg.seed)
    K = cfg.macro_n ** 2
    mask = mask or PhaseMask.zeros(cfg.macro_n)
    eng = _engine(sm, mask, psi_slm, _target_partners(sm, cfg.target, cfg.bins), cfg.psi_tol)
    thetas = cfg.thetas()
    k_part = max(1, int(round(cfg.fraction * K)))
    phases = mask.phases.copy()
    trace = OptTrace()

    sampled = cfg.feedback == "sampled"
    if sampled:
        scale = cfg.pair_rate * cfg.batch_s / eng.total()

        def measure(vals):
            lam = np.clip(scale * np.asarray(vals), 0, None) + cfg.accidental_mean
            return (rng.poisson(lam) - cfg.accidental_mean) / scale

    c_now = eng.harmonics(np.zeros(K, dtype=bool))
    true_now = float(_evaluate(c_now, 0.0))
    trace.initial = float(measure([true_now])[0]) if sampled else true_now
    best = trace.initial
    history = []
    for step in range(cfg.max_steps):
        P = np.zeros(K, dtype=bool)
        P[rng.permutation(K)[:k_part]] = True
        c = eng.harmonics(P)
        vals = _evaluate(c, thetas)
        if sampled:
            vals = measure(vals)
        fit = fit_double_cosine(thetas, vals)
        th = fit.theta_opt
        eng.apply(P, th)
        phases[P] += th
        true_now = float(_evaluate(c, th))
        obj = float(measure([true_now])[0]) if sampled else true_now
        trace.step.append(step)
        trace.theta_opt.append(th)
        trace.objective.append(obj)
        trace.true_objective.append(true_now)
        trace.fits.append(fit)
        best = max(best, obj)
        history.append(best)
        w = cfg.plateau_window
        if len(history) > w and history[-1] < history[-1 - w] * (1 + cfg.plateau_tol):
            trace.stopped = f"plateau at step {step}"
            break
    else:
        trace.stopped = "max_steps"
    trace.mask = PhaseMask(cfg.macro_n, phases)
    return trace.mask, trace


def identity_mask(sm, target: int | None = None, reference=None) -> PhaseMask:
    """Conjugation mask implementing the classical identity correction.

    Default: focus on output pixel `target` (default: the grid origin),
    theta_j = -arg S_m[target, j]. With a reference operator T of the same
    shape, theta_j = -arg sum_i conj(T_ij) S_ij instead (T = identity on a
    diagonal S_m gives -phi_j). Entries below 1e-12 in modulus are flagged
    unlit and left at phase 0.
    """
    if isinstance(sm, MeasuredTM):
        if sm.basis != "pixel":
            raise ValueError("identity_mask needs a pixel-basis matrix")
        m = sm.m
    else:
        m = sm.m
    K = m.shape[1]
    macro_n = int(round(np.sqrt(K)))
    if macro_n * macro_n != K:
        raise ValueError("column count is not a square macropixel grid")
    if reference is not None:
        T = reference.m if hasattr(reference, "m") else np.asarray(reference)
        if T.shape != m.shape:
            raise ValueError("reference operator shape differs")
        row = np.sum(T.conj() * m, axis=0)
    else:
        if target is None:
            grid = getattr(sm, "grid_out", None)
            if grid is not None and not grid.circular:
                c = (grid.n - 1) // 2
                target = c * grid.n + c
            else:
                target = 0
        row = m[target]
    unlit = np.abs(row) < 1e-12
    ph = np.where(unlit, 0.0, -np.angle(row))
    return PhaseMask(macro_n, ph, unlit=unlit)


@dataclass
class SolutionDistance:
    counts: np.ndarray
    edges: np.ndarray
    mu1: float
    mu2: float
    separation: float
    weights: tuple
    degenerate: bool
    circular_std: float
    correlation: float
    offset: float


def _a1inv(r):
    r = np.clip(r, 0, 1 - 1e-12)
    if r < 0.53:
        k = 2 * r + r ** 3 + 5 * r ** 5 / 6
    elif r < 0.85:
        k = -0.4 + 1.39 * r + 0.43 / (1 - r)
    else:
        k = 1 / (r ** 3 - 4 * r ** 2 + 3 * r)
    return float(min(k, 1e4))


def solution_distance(mask_a: PhaseMask, mask_b: PhaseMask, weights=None, nbins: int = 64,
                      iters: int = 200) -> SolutionDistance:
    """Weighted histogram of wrapped phase differences and a two-component
    von Mises mixture fit (EM), initialised on the doubled-angle axis."""
    if mask_a.macro_n != mask_b.macro_n:
        raise ValueError("masks live on different macropixel grids")
    delta = np.angle(np.exp(1j * (mask_a.phases - mask_b.phases)))
    w = np.ones_like(delta) if weights is None else np.asarray(weights, dtype=float).ravel()
    if w.shape != delta.shape or np.any(w < 0) or w.sum() == 0:
        raise ValueError("weights must be nonnegative, one per macropixel, not all zero")
    w = w / w.sum()
    counts, edges = np.histogram(delta, bins=nbins, range=(-np.pi, np.pi), weights=w)
    z1 = np.sum(w * np.exp(1j * delta))
    R = abs(z1)
    cstd = float(np.sqrt(-2 * np.log(max(R, 1e-300))))
    offset = float(np.angle(z1))
    z2 = np.sum(w * np.exp(2j * delta))
    axis = np.angle(z2) / 2
    mu = np.array([axis, axis + np.pi])
    kappa = np.array([4.0, 4.0])
    pi_k = np.array([0.5, 0.5])
    spread = 1 - abs(z2)
    degenerate = spread < 1e-10 and R > 1 - 1e-10
    if not degenerate:
        for _ in range(iters):
            dens = pi_k[None, :] * np.exp(kappa[None, :] * (np.cos(delta[:, None] - mu[None, :]) - 1)) \
                / (2 * np.pi * i0e(kappa)[None, :])
            tot = dens.sum(axis=1, keepdims=True)
            tot[tot == 0] = 1e-300
            r = dens / tot * w[:, None]
            nk = r.sum(axis=0)
            if np.any(nk < 1e-12):
                break
            zk = (r * np.exp(1j * delta[:, None])).sum(axis=0)
            mu = np.angle(zk)
            kappa = np.array([_a1inv(abs(zk[k]) / nk[k]) for k in range(2)])
            pi_k = nk
        degenerate = bool(pi_k.min() < 0.05)
    sep = float(abs(np.angle(np.exp(1j * (mu[0] - mu[1])))))
    return SolutionDistance(counts, edges, float(mu[0]), float(mu[1]), sep,
                            (float(pi_k[0]), float(pi_k[1])), bool(degenerate), cstd, float(R), offset)
