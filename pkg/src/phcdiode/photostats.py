"""Photon streams, HBT detection chain, coincidence correlation, decay traces.

Time tags are float64 picoseconds.  Rates of the emitter model are in 1/ns,
detector dark rates and g2 normalisation rates in Hz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _io
from .devicecfg import DetectorParams, DeviceParams
from .emitter import decay_budget

PS_PER_NS = 1000.0
PS_PER_S = 1e12


# --------------------------------------------------------------------- types

@dataclass(eq=False)
class TimeTagStream:
    timestamps: np.ndarray
    duration: float
    channel: int = 0

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=np.float64)
        if t.ndim != 1:
            raise ValueError("timestamps must be 1-D")
        if t.size:
            if np.any(np.diff(t) <= 0):
                raise ValueError("timestamps must be strictly increasing")
            if t[0] < 0 or t[-1] > self.duration:
                raise ValueError("timestamps must lie in [0, duration]")
        self.timestamps = t
        self.duration = float(self.duration)

    def __len__(self):
        return self.timestamps.size

    @property
    def rate(self) -> float:
        """Mean count rate in Hz."""
        return self.timestamps.size / (self.duration / PS_PER_S)


@dataclass(eq=False)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        self.counts = np.asarray(self.counts)
        if self.edges.size != self.counts.size + 1:
            raise ValueError("need len(edges) == len(counts) + 1")

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    def __add__(self, other: "Histogram") -> "Histogram":
        if not np.array_equal(self.edges, other.edges):
            raise ValueError("histograms have different bins")
        return Histogram(self.edges, self.counts + other.counts)


@dataclass(eq=False)
class G2Curve:
    tau: np.ndarray
    g2: np.ndarray
    sigma: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.g2 = np.asarray(self.g2, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)

    def to_csv(self) -> str:
        return _io.csv_text(G2_HEADER, zip(self.tau, self.g2, self.sigma, self.counts))

    @classmethod
    def read_csv(cls, path) -> "G2Curve":
        cols = _io.read_csv(path, G2_HEADER)
        return cls(cols["tau_ps"], cols["g2"], cols["sigma"], cols["counts"])


G2_HEADER = ("tau_ps", "g2", "sigma", "counts")


@dataclass(frozen=True)
class EmitterRates:
    """CW two-level emitter: pump (refill) rate, decay rate (1/ns), background share."""

    pump_rate: float
    decay_rate: float
    background_fraction: float = 0.0

    def __post_init__(self):
        if self.pump_rate < 0:
            raise ValueError("pump_rate must be >= 0")
        if not self.decay_rate > 0:
            raise ValueError("decay_rate must be > 0")
        if not 0 <= self.background_fraction < 1:
            raise ValueError("background_fraction must be in [0, 1)")

    @classmethod
    def from_params(cls, p: DeviceParams) -> "EmitterRates":
        s = p.source
        return cls(s.pump_rate, 1.0 / s.antibunching_time - s.pump_rate, s.background_fraction)

    @property
    def emission_rate(self) -> float:
        """Mean single-photon emission rate (1/ns) of the renewal process."""
        if self.pump_rate == 0:
            return 0.0
        return 1.0 / (1.0 / self.pump_rate + 1.0 / self.decay_rate)

    @property
    def antibunching_time(self) -> float:
        """1/(pump + decay) in ns."""
        return 1.0 / (self.pump_rate + self.decay_rate)

    @property
    def purity_sq(self) -> float:
        return (1.0 - self.background_fraction) ** 2


# ------------------------------------------------------------------ emission

def emit_stream(rates: EmitterRates, duration: float, seed=None, start: float = 0.0) -> TimeTagStream:
    """Emission instants (ps) of a pumped two-level emitter over ``duration`` ps.

    Each inter-photon gap is an Exp(pump) refill wait plus an Exp(decay)
    emission wait; the emitter starts empty at ``start``.
    """
    if not duration > 0:
        raise ValueError("duration must be > 0")
    rng = np.random.default_rng(seed)
    end = start + duration
    if rates.pump_rate == 0:
        return TimeTagStream(np.empty(0), end)
    mean_refill = PS_PER_NS / rates.pump_rate
    mean_decay = PS_PER_NS / rates.decay_rate
    expected = duration / (mean_refill + mean_decay)
    chunk = int(expected * 1.02 + 6.0 * math.sqrt(expected) + 64)
    pieces = []
    t0 = start
    while True:
        gaps = rng.exponential(mean_refill, chunk) + rng.exponential(mean_decay, chunk)
        t = t0 + np.cumsum(gaps)
        if t[-1] >= end:
            pieces.append(t[: np.searchsorted(t, end, side="left")])
            break
        pieces.append(t)
        t0 = t[-1]
    return TimeTagStream(np.concatenate(pieces), end)


def poisson_times(rate_hz: float, start: float, end: float, rng) -> np.ndarray:
    n = rng.poisson(rate_hz * (end - start) / PS_PER_S)
    return np.sort(rng.uniform(start, end, n))


def merge_sorted(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.concatenate([a, b])
    out.sort(kind="stable")
    return out


def mix_background(stream: TimeTagStream, rates: EmitterRates, duration: float | None = None,
                   seed=None, start: float = 0.0) -> TimeTagStream:
    """Merge independent Poisson background so it makes up ``background_fraction``
    of all counts in expectation."""
    rho = rates.background_fraction
    if rho == 0:
        return stream
    end = stream.duration if duration is None else start + duration
    rng = np.random.default_rng(seed)
    signal_hz = rates.emission_rate * PS_PER_S / PS_PER_NS
    bg = poisson_times(signal_hz * rho / (1.0 - rho), start, end, rng)
    return TimeTagStream(merge_sorted(stream.timestamps, bg), end, stream.channel)


# ----------------------------------------------------------------- detection

def apply_jitter(t: np.ndarray, sigma: float, rng, lo: float, hi: float) -> np.ndarray:
    """Gaussian timing jitter, reflected back into [lo, hi] and re-sorted."""
    if sigma == 0 or t.size == 0:
        return t.copy()
    out = t + rng.normal(0.0, sigma, t.size)
    out = np.where(out < lo, 2 * lo - out, out)
    out = np.where(out > hi, 2 * hi - out, out)
    out.sort(kind="stable")
    return out


@njit(cache=True)
def _dead_time_mask(t, dead, last):
    keep = np.empty(t.size, dtype=np.bool_)
    for i in range(t.size):
        if t[i] - last >= dead:
            keep[i] = True
            last = t[i]
        else:
            keep[i] = False
    return keep, last


def apply_dead_time(t: np.ndarray, dead_ps: float, last: float = -np.inf):
    """Non-paralysable dead time.  Returns ``(kept tags, time of last kept tag)``."""
    if t.size == 0:
        return t.copy(), last
    keep, last = _dead_time_mask(t, float(dead_ps), float(last))
    return t[keep], last


def add_dark_counts(t: np.ndarray, rate_hz: float, rng, lo: float, hi: float) -> np.ndarray:
    if rate_hz == 0:
        return t.copy()
    return merge_sorted(t, poisson_times(rate_hz, lo, hi, rng))


def quantize(t: np.ndarray, resolution: float = 1.0) -> np.ndarray:
    """Floor to the TDC grid and drop same-bin duplicates."""
    q = np.floor(t / resolution) * resolution
    if q.size < 2:
        return q
    return q[np.concatenate(([True], np.diff(q) > 0))]


def detect_hbt(stream: TimeTagStream, det: DetectorParams, seed=None, start: float = 0.0,
               last=(-np.inf, -np.inf), return_last: bool = False):
    """50/50 splitter and two detectors.

    Per photon: fair channel choice, Bernoulli(efficiency) survival, Gaussian
    jitter; then per-channel dead time, Poisson dark counts and 1 ps
    quantisation.  ``last`` carries each channel's last detection across
    consecutive segments.
    """
    rng = np.random.default_rng(seed)
    t = stream.timestamps
    lo, hi = start, stream.duration
    to_b = rng.random(t.size) < 0.5
    alive = rng.random(t.size) < det.efficiency
    dead_ps = det.dead_time * PS_PER_NS
    out, new_last = [], []
    for ch, sel in enumerate((alive & ~to_b, alive & to_b)):
        x = apply_jitter(t[sel], det.jitter_sigma, rng, lo, hi)
        x, l = apply_dead_time(x, dead_ps, last[ch])
        x = add_dark_counts(x, det.dark_rate, rng, lo, hi)
        out.append(TimeTagStream(quantize(x), hi, channel=ch))
        new_last.append(l)
    if return_last:
        return out[0], out[1], tuple(new_last)
    return out[0], out[1]


# --------------------------------------------------------------- correlation

@njit(cache=True)
def _correlate_into(a, b, bw, K, counts):
    reach = (K + 0.5) * bw + bw
    nb = b.size
    j0 = 0
    for i in range(a.size):
        ta = a[i]
        while j0 < nb and b[j0] < ta - reach:
            j0 += 1
        j = j0
        while j < nb:
            d = b[j] - ta
            if d > reach:
                break
            # round half away from zero keeps the histogram mirror-symmetric
            if d >= 0:
                k = int(math.floor(d / bw + 0.5))
            else:
                k = -int(math.floor(-d / bw + 0.5))
            if -K <= k <= K:
                counts[k + K] += 1
            j += 1


def _n_half(bin_width: float, window: float) -> int:
    if not bin_width > 0:
        raise ValueError("bin_width must be > 0")
    if window < bin_width:
        raise ValueError("window must be >= bin_width")
    return int(math.floor(window / bin_width + 1e-9))


def coincidence_edges(bin_width: float, window: float) -> np.ndarray:
    K = _n_half(bin_width, window)
    return (np.arange(-K, K + 2) - 0.5) * bin_width


def _as_array(x):
    return x.timestamps if isinstance(x, TimeTagStream) else np.asarray(x, dtype=np.float64)


def correlate(a, b, bin_width: float, window: float) -> Histogram:
    """Histogram of all pair delays ``t_b - t_a`` within +-window (ps).

    Bins are centred on multiples of ``bin_width``; a delay exactly halfway
    between two centres goes to the one farther from zero.
    """
    K = _n_half(bin_width, window)
    counts = np.zeros(2 * K + 1, dtype=np.int64)
    _correlate_into(_as_array(a), _as_array(b), float(bin_width), K, counts)
    return Histogram(coincidence_edges(bin_width, window), counts)


class CoincidenceCounter:
    """Accumulate :func:`correlate` over consecutive time segments.

    Feed segments in time order with :meth:`add`; pairs straddling segment
    boundaries are counted from the retained tails, so the total equals the
    whole-stream histogram.
    """

    def __init__(self, bin_width: float, window: float):
        self.bin_width = float(bin_width)
        self.K = _n_half(bin_width, window)
        self.window = window
        self.counts = np.zeros(2 * self.K + 1, dtype=np.int64)
        self._reach = (self.K + 0.5) * self.bin_width + self.bin_width
        self._tail_a = np.empty(0)
        self._tail_b = np.empty(0)
        self.n_a = 0
        self.n_b = 0

    def add(self, a, b, t_end: float) -> None:
        """Add tags up to ``t_end``; later segments must not precede earlier ones."""
        a, b = _as_array(a), _as_array(b)
        bw, K = self.bin_width, self.K
        _correlate_into(a, b, bw, K, self.counts)
        _correlate_into(self._tail_a, b, bw, K, self.counts)
        _correlate_into(a, self._tail_b, bw, K, self.counts)
        cut = t_end - self._reach
        ta = np.concatenate([self._tail_a, a])
        tb = np.concatenate([self._tail_b, b])
        self._tail_a = ta[ta >= cut]
        self._tail_b = tb[tb >= cut]
        self.n_a += a.size
        self.n_b += b.size

    def histogram(self) -> Histogram:
        return Histogram(coincidence_edges(self.bin_width, self.window), self.counts.copy())


def normalize_g2(hist: Histogram, rate_a: float, rate_b: float, duration: float) -> G2Curve:
    """Normalise coincidences by the uncorrelated expectation.

    ``rate_a``/``rate_b`` in Hz, ``duration`` in ps.  Empty bins get the
    uncertainty of one count.
    """
    if rate_a <= 0 or rate_b <= 0 or duration <= 0:
        raise ValueError("rates and duration must be positive")
    norm = rate_a * rate_b * (hist.bin_width / PS_PER_S) * (duration / PS_PER_S)
    counts = hist.counts.astype(float)
    return G2Curve(hist.centers, counts / norm, np.sqrt(np.maximum(counts, 1.0)) / norm, counts)


def analytic_g2(tau, purity_sq: float, lam: float):
    """``1 - purity_sq * exp(-lam |tau|)`` with tau in ps and lam in 1/ns."""
    if not 0 <= purity_sq <= 1:
        raise ValueError("purity_sq must be in [0, 1]")
    tau = np.asarray(tau, dtype=float)
    return 1.0 - purity_sq * np.exp(-lam * np.abs(tau) / PS_PER_NS)


@dataclass(eq=False)
class HBTRun:
    curve: G2Curve
    histogram: Histogram
    n_a: int
    n_b: int
    n_emitted: int
    duration: float
    tags: tuple | None = None


def simulate_hbt(rates: EmitterRates, det: DetectorParams, duration: float, seed,
                 bin_width: float = 16.0, window: float = 5000.0,
                 segment: float = 2e9, keep_tags: bool = False) -> HBTRun:
    """Full emitter -> background -> HBT -> correlator chain over ``duration`` ps.

    The duration is processed in ``segment``-long pieces with seeds derived
    from ``seed``, so memory stays bounded for long acquisitions.  With
    ``keep_tags`` the detected streams are also returned (memory grows with
    the duration).
    """
    n_seg = max(1, int(math.ceil(duration / segment)))
    seeds = np.random.SeedSequence(seed).spawn(n_seg)
    counter = CoincidenceCounter(bin_width, window)
    last = (-np.inf, -np.inf)
    n_emitted = 0
    kept = ([], [])
    for i, ss in enumerate(seeds):
        t0 = duration * i / n_seg
        t1 = duration * (i + 1) / n_seg
        s_emit, s_bg, s_det = ss.spawn(3)
        st = emit_stream(rates, t1 - t0, s_emit, start=t0)
        n_emitted += len(st)
        st = mix_background(st, rates, t1 - t0, s_bg, start=t0)
        a, b, last = detect_hbt(st, det, s_det, start=t0, last=last, return_last=True)
        counter.add(a, b, t1)
        if keep_tags:
            kept[0].append(a.timestamps)
            kept[1].append(b.timestamps)
    hist = counter.histogram()
    rate_a = counter.n_a / (duration / PS_PER_S)
    rate_b = counter.n_b / (duration / PS_PER_S)
    curve = normalize_g2(hist, rate_a, rate_b, duration)
    tags = None
    if keep_tags:
        tags = tuple(TimeTagStream(np.concatenate(k), duration, channel=ch) for ch, k in enumerate(kept))
    return HBTRun(curve, hist, counter.n_a, counter.n_b, n_emitted, duration, tags)


# -------------------------------------------------------------- decay traces

def _irf_sigma(irf_fwhm: float) -> float:
    return irf_fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))


def trace_edges(bin_width: float = 16.0, t_max: float = 40000.0, t_min: float = -480.0) -> np.ndarray:
    n = int(round((t_max - t_min) / bin_width))
    return t_min + bin_width * np.arange(n + 1)


def decay_trace(p: DeviceParams, V_QD: float, n_pulses: int, irf_fwhm: float = 90.0, seed=None,
                lambda_mode: float | None = None, bin_width: float = 16.0,
                t_max: float = 40000.0) -> Histogram:
    """Time-resolved PL histogram (ps) after ``n_pulses`` excitation pulses.

    Bright/dark exciton model: the bright state decays at the
    :func:`~phcdiode.emitter.decay_budget` rate (bulk unless ``lambda_mode``
    is given) and flips to the dark state; the dark state flips back or
    tunnels out.  A fraction ``dark_init_fraction`` of pulses starts dark.
    Delays are blurred by a Gaussian IRF of FWHM ``irf_fwhm``.
    """
    if n_pulses <= 0:
        raise ValueError("n_pulses must be > 0")
    e = p.emitter
    budget = decay_budget(p, V_QD, lambda_mode)
    g_rad = budget.gamma_phc + budget.gamma_leaky
    g_tun = budget.gamma_tun
    g_bd, g_db = e.bright_to_dark, e.dark_to_bright
    rng = np.random.default_rng(seed)

    dark = rng.random(n_pulses) < e.dark_init_fraction
    t = np.zeros(n_pulses)
    active = np.ones(n_pulses, dtype=bool)
    emitted = []
    out_b = g_rad + g_tun + g_bd
    out_d = g_db + g_tun
    for _ in range(10000):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        is_d = dark[idx]
        ib, idd = idx[~is_d], idx[is_d]
        if ib.size:
            t[ib] += rng.exponential(PS_PER_NS / out_b, ib.size)
            u = rng.random(ib.size) * out_b
            rad = u < g_rad
            emitted.append(t[ib[rad]])
            flip = u >= g_rad + g_tun
            active[ib[~flip]] = False
            dark[ib[flip]] = True
        if idd.size:
            if out_d == 0:
                active[idd] = False
            else:
                t[idd] += rng.exponential(PS_PER_NS / out_d, idd.size)
                back = rng.random(idd.size) * out_d < g_db
                active[idd[~back]] = False
                dark[idd[back]] = False
    delays = np.concatenate(emitted) if emitted else np.empty(0)
    if irf_fwhm > 0:
        delays = delays + rng.normal(0.0, _irf_sigma(irf_fwhm), delays.size)
    edges = trace_edges(bin_width, t_max)
    counts, _ = np.histogram(delays, edges)
    return Histogram(edges, counts)


def sample_biexp_trace(tau_fast: float, tau_slow: float, slow_fraction: float, n: int,
                       irf_fwhm: float = 90.0, seed=None, bin_width: float = 16.0,
                       t_max: float = 40000.0) -> Histogram:
    """Photon delays from a two-component exponential mixture plus IRF (times in ps)."""
    rng = np.random.default_rng(seed)
    slow = rng.random(n) < slow_fraction
    d = np.where(slow, rng.exponential(tau_slow, n), rng.exponential(tau_fast, n))
    if irf_fwhm > 0:
        d = d + rng.normal(0.0, _irf_sigma(irf_fwhm), n)
    edges = trace_edges(bin_width, t_max)
    counts, _ = np.histogram(d, edges)
    return Histogram(edges, counts)


# ------------------------------------------------------------ time-tag files

TAG_DTYPE = np.dtype([("channel", "u1"), ("timestamp_ps", "<u8")])


def _records(streams) -> np.ndarray:
    total = sum(len(s) for s in streams)
    rec = np.empty(total, dtype=TAG_DTYPE)
    i = 0
    for s in streams:
        n = len(s)
        rec["channel"][i:i + n] = s.channel
        rec["timestamp_ps"][i:i + n] = np.round(s.timestamps).astype(np.uint64)
        i += n
    order = np.lexsort((rec["channel"], rec["timestamp_ps"]))
    return rec[order]


def _streams_from_records(rec, duration):
    if duration is None:
        duration = float(rec["timestamp_ps"].max()) if rec.size else 0.0
    out = {}
    for ch in np.unique(rec["channel"]):
        t = rec["timestamp_ps"][rec["channel"] == ch].astype(np.float64)
        out[int(ch)] = TimeTagStream(t, duration, int(ch))
    return out


def write_tags_csv(path, streams) -> None:
    rec = _records(streams)
    lines = ["channel,timestamp_ps"]
    lines += [f"{c},{t}" for c, t in zip(rec["channel"].tolist(), rec["timestamp_ps"].tolist())]
    _io.atomic_write_text(path, "\n".join(lines) + "\n")


def read_tags_csv(path, duration: float | None = None) -> dict:
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.uint64, ndmin=2)
    rec = np.empty(data.shape[0], dtype=TAG_DTYPE)
    if data.size:
        rec["channel"] = data[:, 0]
        rec["timestamp_ps"] = data[:, 1]
    return _streams_from_records(rec, duration)


def write_tags_bin(path, streams) -> None:
    """Packed little-endian records: u8 channel, u64 timestamp (ps); 9 bytes each."""
    _io.atomic_write_bytes(path, _records(streams).tobytes())


def read_tags_bin(path, duration: float | None = None) -> dict:
    rec = np.fromfile(path, dtype=TAG_DTYPE)
    return _streams_from_records(rec, duration)
