"""Time-tagged detection events: synthesis from a G2 model, windowed
coincidence pairing and accidental-subtracted correlation images."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .correlate import CorrelationImage, project_sum
from .lattice import SumCoordinateMap
from .propagate import G2Matrix

TICK_NS = 1.56


@dataclass
class EventList:
    """Detections sorted by time; x, y in pixels, t in nanoseconds."""
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    duration: float
    n: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.t = np.asarray(self.t, dtype=float)
        if not (self.x.shape == self.y.shape == self.t.shape):
            raise ValueError("x, y, t must have equal length")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if self.t.size and np.any(np.diff(self.t) < 0):
            order = np.argsort(self.t, kind="stable")
            self.x, self.y, self.t = self.x[order], self.y[order], self.t[order]

    def __len__(self):
        return self.t.size

    @property
    def pixel(self) -> np.ndarray:
        return self.y * self.n + self.x


@dataclass
class CoincidenceSet:
    """Index pairs (first[k], second[k]) into `events`."""
    events: EventList
    first: np.ndarray
    second: np.ndarray
    window_ns: float

    def __len__(self):
        return self.first.size


def synthesize_events(g2: G2Matrix, pair_rate: float, noise_rate: float, duration: float,
                      jitter_ns: float = 1.0, seed: int = 0, quantize: bool = False) -> EventList:
    """Poisson pair arrivals with positions drawn from G2, plus uniform noise photons."""
    if not duration > 0:
        raise ValueError("duration must be positive")
    if pair_rate < 0 or noise_rate < 0 or jitter_ns < 0:
        raise ValueError("rates and jitter must be nonnegative")
    rng = np.random.default_rng(seed)
    grid = g2.grid
    d = grid.d
    T = duration * 1e9
    n_pairs = rng.poisson(pair_rate * duration)
    p = g2.values.ravel()
    tot = p.sum()
    if n_pairs and tot <= 0:
        raise ValueError("G2 carries no probability")
    idx = rng.choice(d * d, size=n_pairs, p=p / tot) if n_pairs else np.zeros(0, dtype=np.int64)
    t_pair = rng.uniform(0, T, n_pairs)
    ti = t_pair + rng.normal(0, jitter_ns, n_pairs) if jitter_ns else t_pair
    ts = t_pair + rng.normal(0, jitter_ns, n_pairs) if jitter_ns else t_pair.copy()
    n_noise = rng.poisson(noise_rate * duration)
    pix_noise = rng.integers(0, d, n_noise)
    t_noise = rng.uniform(0, T, n_noise)
    pix = np.concatenate([idx // d, idx % d, pix_noise])
    t = np.clip(np.concatenate([ti, ts, t_noise]), 0, T)
    if quantize:
        t = np.floor(t / TICK_NS) * TICK_NS
    order = np.argsort(t, kind="stable")
    pix, t = pix[order], t[order]
    meta = {"pair_rate": pair_rate, "noise_rate": noise_rate, "jitter_ns": jitter_ns,
            "seed": seed, "n_pairs": int(n_pairs), "n_noise": int(n_noise)}
    return EventList(pix % grid.n, pix // grid.n, t, duration, grid.n, meta)


def pair_coincidences(events: EventList, window_ns: float) -> CoincidenceSet:
    """Greedy earliest-first pairing: walk the time-ordered list and pair an
    event with its successor when |dt| < window; each event is used once."""
    t = events.t
    close = np.flatnonzero(np.diff(t) < window_ns) if t.size > 1 else np.zeros(0, dtype=np.int64)
    first = []
    last = -1  # index of the most recently used second event
    for k in close:  # only chains of close neighbours need the sequential rule
        if k > last:
            first.append(k)
            last = k + 1
    first = np.asarray(first, dtype=np.int64)
    return CoincidenceSet(events, first, first + 1, float(window_ns))


def _pair_sum_bins(cmap: SumCoordinateMap, ev: EventList, a, b) -> np.ndarray:
    by = cmap.axis_bin(ev.y[a], ev.y[b])
    bx = cmap.axis_bin(ev.x[a], ev.x[b])
    return by * cmap.side + bx


def expected_accidentals(events: EventList, window_ns: float) -> float:
    """R_s^2 * w * T with R_s the total singles rate."""
    rate = len(events) / events.duration
    return rate * rate * window_ns * 1e-9 * events.duration


def accidental_map(events: EventList, cmap: SumCoordinateMap, window_ns: float) -> CorrelationImage:
    """Expected accidental Gamma+: outer product of the singles histogram with
    itself, projected and scaled to the expected accidental-pair count."""
    d = cmap.grid.d
    side = cmap.side
    h = np.bincount(events.pixel, minlength=d).astype(float)
    if h.sum() == 0:
        return CorrelationImage(np.zeros((side, side)), "sum", cmap.mode)
    prob = np.outer(h, h) / h.sum() ** 2
    img = project_sum(G2Matrix(cmap.grid, prob), cmap)
    n_acc = expected_accidentals(events, window_ns)
    return CorrelationImage(img.values * n_acc, "sum", cmap.mode,
                            {"expected_accidentals": n_acc, "window_ns": window_ns})


def raw_coincidence_image(pairs: CoincidenceSet, cmap: SumCoordinateMap) -> CorrelationImage:
    side = cmap.side
    b = _pair_sum_bins(cmap, pairs.events, pairs.first, pairs.second)
    v = np.bincount(b, minlength=side * side).astype(float)
    return CorrelationImage(v.reshape(side, side), "sum", cmap.mode, {"pairs": len(pairs)})


def corr_image_from_events(pairs: CoincidenceSet, accidentals: CorrelationImage,
                           cmap: SumCoordinateMap, clamp: bool = True) -> CorrelationImage:
    """Pair position-sum histogram minus the accidental estimate."""
    raw = raw_coincidence_image(pairs, cmap)
    if accidentals.values.shape != raw.values.shape:
        raise ValueError("accidental estimate uses a different map")
    v = raw.values - accidentals.values
    if clamp:
        v = np.clip(v, 0, None)
    return CorrelationImage(v, "sum", cmap.mode, {"pairs": len(pairs), "clamped": clamp})


def write_events_csv(path, events: EventList) -> None:
    with open(path, "w") as fh:
        fh.write("x,y,t_ns\n")
        for x, y, t in zip(events.x, events.y, events.t):
            fh.write(f"{x},{y},{t:.3f}\n")


def read_events_csv(path, duration: float, n: int) -> EventList:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        return EventList([], [], [], duration, n)
    return EventList(data[:, 0].astype(int), data[:, 1].astype(int), data[:, 2], duration, n)
