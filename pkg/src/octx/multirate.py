"""SNR-feedback adaptive-modulation link simulator.

Time runs on an integer tick grid of one symbol period, so frame boundaries,
feedback instants and switch latencies are exact. A receiver reports the
channel SNR at ``t0 + k * feedback_period`` (k >= 0); the transmitter picks
a scheme with ``select_scheme`` and switches after ``latency``. Frames are
sent back to back; a frame in flight finishes under the scheme it started
with. Each frame is dropped with the scheme's error probability at the SNR
seen when it starts.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EmptyTraceError, ParameterError
from .metrics import speed_performance_index

SNR_EPS = 1e-9
DEFAULT_SYMBOL_RATE = 1e5
DEFAULT_FRAME_BITS = 1200


@dataclass(frozen=True)
class ModulationScheme:
    """Frame error model: ``clip(p0 * (exp(-m/r) - exp(-c/r)), 0, 1) + floor``.

    ``m`` is the SNR margin over ``min_snr_db``, ``r`` the roll-off and ``c``
    the cutoff margin beyond which only the floor remains. With
    ``per_symbol`` the same curve is a symbol error rate and a frame fails if
    any of its symbols fails.
    """

    name: str
    bits_per_symbol: int
    min_snr_db: float
    p0: float = 0.05
    roll_off_db: float = 0.5
    cutoff_db: float = 2.0
    floor: float = 0.0
    per_symbol: bool = False

    def error_rate(self, snr_db):
        m = np.asarray(snr_db, dtype=np.float64) - self.min_snr_db
        r, c = self.roll_off_db, self.cutoff_db
        curve = self.p0 * (np.exp(np.minimum(-m / r, 700.0)) - math.exp(-c / r))
        return np.clip(np.clip(curve, 0.0, 1.0) + self.floor, 0.0, 1.0)

    def symbols_per_frame(self, frame_bits):
        return -(-int(frame_bits) // self.bits_per_symbol)

    def frame_error(self, snr_db, frame_bits):
        e = self.error_rate(snr_db)
        if self.per_symbol:
            return 1.0 - (1.0 - e) ** self.symbols_per_frame(frame_bits)
        return e

    def to_dict(self):
        return asdict(self)


DEFAULT_TABLE = (
    ModulationScheme("BPSK", 1, 3.0),
    ModulationScheme("QPSK", 2, 8.0),
    ModulationScheme("16QAM", 4, 14.0),
    ModulationScheme("64QAM", 6, 20.0),
)


def validate_table(table):
    table = tuple(table)
    if not table:
        raise ParameterError("scheme table is empty")
    for a, b in zip(table, table[1:]):
        if not (a.bits_per_symbol < b.bits_per_symbol and a.min_snr_db < b.min_snr_db):
            raise ParameterError("schemes must be strictly ordered by rate and min SNR")
    if any(s.bits_per_symbol < 1 for s in table):
        raise ParameterError("bits_per_symbol must be positive")
    return table


def table_to_json(table):
    return json.dumps([s.to_dict() for s in table], indent=2, sort_keys=True)


def table_from_json(text):
    return validate_table(ModulationScheme(**d) for d in json.loads(text))


@dataclass(frozen=True)
class ChannelTrace:
    """Sample-and-hold SNR samples; the last sample marks the end of the trace."""

    t: np.ndarray
    snr_db: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64)
        s = np.asarray(self.snr_db, dtype=np.float64)
        if t.size == 0:
            raise EmptyTraceError("channel trace has no samples")
        if t.shape != s.shape:
            raise ParameterError("t and snr_db must have equal length")
        if np.any(np.diff(t) <= 0):
            raise ParameterError("trace times must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "snr_db", s)

    @property
    def start(self):
        return float(self.t[0])

    @property
    def duration(self):
        return float(self.t[-1] - self.t[0])

    def snr_at(self, time):
        k = np.searchsorted(self.t, np.asarray(time) + SNR_EPS, side="right") - 1
        return self.snr_db[np.clip(k, 0, self.t.size - 1)]


def select_scheme(table, snr_db, current=None, hysteresis_db=0.0):
    """Highest-rate scheme the SNR supports.

    Downgrades happen as soon as the current scheme's threshold is not met;
    upgrades need ``min_snr + hysteresis``. Below every threshold the lowest
    scheme is used.
    """
    table = tuple(table)
    ok = [s for s in table if s.min_snr_db <= snr_db]
    best = ok[-1] if ok else table[0]
    if current is None or best.bits_per_symbol < current.bits_per_symbol:
        return best
    if current.min_snr_db > snr_db:
        return best
    up = [s for s in table if s.bits_per_symbol > current.bits_per_symbol
          and s.min_snr_db + hysteresis_db <= snr_db]
    return up[-1] if up else current


@dataclass
class LinkState:
    active_scheme: ModulationScheme
    hysteresis_db: float
    switch_latency: float
    goodput_bits: int = 0
    switch_count: int = 0
    frames_sent: int = 0
    frames_delivered: int = 0
    duration: float = 0.0
    mean_delay: float = 0.0
    per_class_scheme_map: dict = field(default_factory=dict)

    @property
    def goodput_rate(self):
        return self.goodput_bits / self.duration if self.duration > 0 else 0.0

    @property
    def delivered_fps(self):
        return self.frames_delivered / self.duration if self.duration > 0 else 0.0


@dataclass
class LinkResult:
    state: LinkState
    events: list          # (t, event, scheme, frames, delivered)
    delivered: np.ndarray  # bool per transmitted frame


def _ticks(seconds, symbol_rate):
    if math.isinf(seconds):
        return None
    return int(round(seconds * symbol_rate))


def run_link(trace, table=DEFAULT_TABLE, frame_size_bits=DEFAULT_FRAME_BITS,
             feedback_period=0.01, hysteresis=0.0, latency=0.0, seed=0,
             symbol_rate=DEFAULT_SYMBOL_RATE, initial=None, adaptive=True,
             offered_fps=None, log_feedback=True):
    """Simulate one link over ``trace``.

    ``adaptive=False`` pins ``initial`` (default: the lowest scheme) for the
    whole run. ``offered_fps`` switches from a saturated source to periodic
    frame arrivals, which makes ``mean_delay`` meaningful.
    """
    if not isinstance(trace, ChannelTrace):
        raise ParameterError("trace must be a ChannelTrace")
    table = validate_table(table)
    if frame_size_bits < 1 or symbol_rate <= 0 or feedback_period <= 0 or latency < 0:
        raise ParameterError("need positive frame size, symbol rate and feedback period")
    rng = np.random.default_rng(seed)
    scheme = initial if initial is not None else table[0]
    end = _ticks(trace.duration, symbol_rate)
    fb_step = _ticks(feedback_period, symbol_rate)
    if fb_step is not None and fb_step < 1:
        raise ParameterError("feedback period is shorter than one symbol")
    lat = _ticks(latency, symbol_rate)
    arr_step = None if offered_fps is None else max(1, _ticks(1.0 / offered_fps, symbol_rate))

    def sec(tick):
        return trace.start + tick / symbol_rate

    state = LinkState(scheme, hysteresis, latency, duration=trace.duration)
    events = []
    delivered = []
    delays = []
    next_fb = 0 if adaptive else None
    pending = None  # (effective tick, scheme)
    tick = 0
    n_arrived = 0
    while True:
        # Feedback and switch events at or before the current tick, in time order.
        while True:
            t_fb = next_fb if next_fb is not None and next_fb <= tick else None
            t_sw = pending[0] if pending is not None and pending[0] <= tick else None
            if t_fb is None and t_sw is None:
                break
            if t_sw is not None and (t_fb is None or t_sw <= t_fb):
                if pending[1] != scheme:
                    scheme = pending[1]
                    state.switch_count += 1
                    events.append((sec(t_sw), "switch", scheme.name, state.frames_sent,
                                   state.frames_delivered))
                pending = None
                continue
            snr = float(trace.snr_at(sec(t_fb)))
            want = select_scheme(table, snr, scheme, hysteresis)
            if log_feedback:
                events.append((sec(t_fb), "feedback", want.name, state.frames_sent,
                               state.frames_delivered))
            # a pending switch keeps its deadline unless the target changes
            if want == scheme:
                pending = None
            elif pending is None or pending[1] != want:
                pending = (t_fb + lat, want)
            next_fb = None if fb_step is None else t_fb + fb_step
            if next_fb is not None and next_fb > end:
                next_fb = None
        start = tick
        if arr_step is not None:
            # wait for the next frame to arrive
            arrival = n_arrived * arr_step
            if arrival > start:
                nxt = [x for x in (next_fb, None if pending is None else pending[0])
                       if x is not None and x < arrival]
                tick = min(nxt) if nxt else arrival
                if tick > end:
                    break
                continue
        n_sym = scheme.symbols_per_frame(frame_size_bits)
        if start + n_sym > end:
            break
        p_err = float(scheme.frame_error(trace.snr_at(sec(start)), frame_size_bits))
        ok = bool(rng.random() >= p_err)
        tick = start + n_sym
        state.frames_sent += 1
        delivered.append(ok)
        if ok:
            state.frames_delivered += 1
            state.goodput_bits += int(frame_size_bits)
        if arr_step is not None:
            delays.append((tick - n_arrived * arr_step) / symbol_rate)
            n_arrived += 1
    state.active_scheme = scheme
    state.mean_delay = float(np.mean(delays)) if delays else (
        scheme.symbols_per_frame(frame_size_bits) / symbol_rate)
    events.append((sec(end), "end", scheme.name, state.frames_sent, state.frames_delivered))
    return LinkResult(state, events, np.array(delivered, dtype=bool))


def run_fixed(trace, scheme, **kw):
    """Same link with feedback disabled and ``scheme`` pinned."""
    kw.pop("adaptive", None)
    kw.pop("initial", None)
    table = kw.pop("table", None) or (scheme,)
    if scheme not in table:
        table = (scheme,)
    return run_link(trace, table, initial=scheme, adaptive=False, **kw)


@dataclass
class ClassStream:
    """Offered traffic of one lesion class; ``fps=None`` means saturated."""

    name: str
    fps: float | None = None


def per_class_run(class_traffic, per_class_scheme_map, trace, seed=0, **link_kw):
    """Each class streams under its own scheme table over the shared trace.

    Returns ``{class: (LinkState, mean_delay)}``; class ``k`` (in input
    order) uses link seed ``seed + k``.
    """
    streams = list(class_traffic)
    if not streams:
        raise ParameterError("need at least one class stream")
    out = {}
    for k, cs in enumerate(streams):
        table = per_class_scheme_map.get(cs.name, DEFAULT_TABLE)
        res = run_link(trace, table, seed=seed + k, offered_fps=cs.fps, **link_kw)
        res.state.per_class_scheme_map = {cs.name: [s.name for s in table]}
        out[cs.name] = (res.state, res.state.mean_delay)
    return out


# Trace fixtures. Piecewise-constant levels sit 2.5-3 dB above a threshold so
# exactly one scheme is error-free in each segment.
FIXTURE_LEVELS = (5.5, 11.0, 17.0, 24.0)


def constant_trace(snr_db, duration=1.0):
    return ChannelTrace(np.array([0.0, duration]), np.array([snr_db, snr_db]))


def piecewise_trace(levels, segment=0.12):
    """Step trace with one level per ``segment`` seconds."""
    levels = list(levels)
    t = segment * np.arange(len(levels) + 1)
    return ChannelTrace(t, np.array(levels + [levels[-1]], dtype=np.float64))


def ramp_trace(lo=0.0, hi=26.0, duration=2.0, step=0.01):
    n = int(round(duration / step))
    t = step * np.arange(n + 1)
    return ChannelTrace(t, np.linspace(lo, hi, n + 1))


def fading_trace(seed=0, duration=4.0, step=0.01, start=14.0, sigma=1.5, bounds=(0.0, 28.0)):
    """Seeded reflecting random walk of SNR in dB."""
    rng = np.random.default_rng(seed)
    n = int(round(duration / step))
    s = np.empty(n + 1)
    s[0] = start
    lo, hi = bounds
    for k in range(n):
        v = s[k] + sigma * rng.standard_normal()
        if v < lo:
            v = 2 * lo - v
        if v > hi:
            v = 2 * hi - v
        s[k + 1] = v
    return ChannelTrace(step * np.arange(n + 1), s)


def trace_suite():
    """Shipped piecewise-constant traces, keyed by name."""
    a, b, c, d = FIXTURE_LEVELS
    return {
        "constant_low": constant_trace(a, 0.48),
        "constant_high": constant_trace(d, 0.48),
        "step_up": piecewise_trace([a, d]),
        "step_down": piecewise_trace([d, b]),
        "two_level": piecewise_trace([b, c, b, c]),
        "staircase": piecewise_trace([a, b, c, d, c, b, a]),
        "burst": piecewise_trace([d, a, d, a, c, a]),
    }


def read_trace_csv(path):
    from .io import read_trace
    return read_trace(path)


@dataclass
class SweepConfig:
    name: str
    adaptive: bool
    scheme: ModulationScheme | None = None
    feedback_period: float = 0.01


def default_sweep_configs(table=DEFAULT_TABLE, feedback_periods=(0.01,)):
    cfgs = [SweepConfig(f"adaptive@{p:g}", True, None, p) for p in feedback_periods]
    cfgs += [SweepConfig(f"fixed:{s.name}", False, s) for s in table]
    return cfgs


def speed_accuracy_sweep(accuracy_fn, configs, trace, n_items, table=DEFAULT_TABLE,
                         reference_fps=None, seed=0, **link_kw):
    """Rows ``(name, fps, accuracy, index)`` for each link configuration.

    Transmitted frame ``k`` carries dataset item ``k mod n_items``; an item is
    received if any of its transmissions is delivered. ``accuracy_fn`` maps a
    boolean mask over items to the pipeline accuracy on the received items.
    ``reference_fps`` defaults to the top scheme's error-free frame rate.
    """
    table = validate_table(table)
    fb = link_kw.get("frame_size_bits", DEFAULT_FRAME_BITS)
    sr = link_kw.get("symbol_rate", DEFAULT_SYMBOL_RATE)
    ref = reference_fps or sr / table[-1].symbols_per_frame(fb)
    rows = []
    for cfg in configs:
        if cfg.adaptive:
            res = run_link(trace, table, feedback_period=cfg.feedback_period, seed=seed, **link_kw)
        else:
            res = run_fixed(trace, cfg.scheme, seed=seed, **link_kw)
        items = np.arange(res.delivered.size) % n_items
        got = np.zeros(n_items, dtype=bool)
        got[items[res.delivered]] = True
        fps = res.state.delivered_fps
        acc = float(accuracy_fn(got)) if got.any() else 0.0
        index = speed_performance_index(acc, fps, ref) if fps > 0 else 0.0
        rows.append((cfg.name, fps, acc, index))
    return rows
