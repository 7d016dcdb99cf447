"""Gesture recognition from multi-channel sEMG-style signals.

Sliding windows over a 1 kHz signal (100-sample windows, 50-sample
increments), four classic time-domain features per channel, an
SVD-regularized linear discriminant classifier over the five gestures, and
a triple-consecutive debouncer that turns raw classifications into events.
Hardware acquisition is out of scope: signals come from files or the
synthetic generator.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

SAMPLE_RATE = 1000
WINDOW_SAMPLES = 100
WINDOW_INCREMENT = 50
DEBOUNCE_COUNT = 3

FILE_MAGIC = "armsim-emg"


class GestureClass(IntEnum):
    """The five gestures; enum order is the classifier tie-break order."""

    HO = 0  # hand open
    HC = 1  # hand close
    WF = 2  # wrist flex
    WE = 3  # wrist extend
    NM = 4  # no motion


GESTURE_NAMES = tuple(g.name for g in GestureClass)


@dataclass(frozen=True)
class SignalBuffer:
    """channels x samples signal at a fixed rate."""

    samples: np.ndarray
    sample_rate: float = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 2:
            raise ValueError("samples must be a channels x N matrix")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[1]


def slide_windows(buffer: SignalBuffer, window: int = WINDOW_SAMPLES,
                  increment: int = WINDOW_INCREMENT) -> list[np.ndarray]:
    """Views over the buffer starting at 0, increment, 2*increment, ...;
    the last window lies fully inside the signal."""
    if increment < 1:
        raise ValueError("increment must be >= 1")
    n = buffer.length
    if window > n:
        return []
    count = (n - window) // increment + 1
    return [buffer.samples[:, i * increment: i * increment + window] for i in range(count)]


def window_count(n: int, window: int, increment: int) -> int:
    if window > n:
        return 0
    return (n - window) // increment + 1


def extract_features(window: np.ndarray | SignalBuffer,
                     zc_threshold: float = 0.0,
                     ssc_threshold: float = 0.0) -> np.ndarray:
    """Per channel: mean absolute value, zero crossings, slope sign changes,
    waveform length; concatenated channel-major."""
    x = window.samples if isinstance(window, SignalBuffer) else np.asarray(window, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] == 0:
        raise ValueError("window must be non-empty")
    mav = np.mean(np.abs(x), axis=1)
    diff = np.diff(x, axis=1)
    wl = np.sum(np.abs(diff), axis=1)
    zc = np.sum((x[:, :-1] * x[:, 1:] < 0) & (np.abs(diff) >= zc_threshold), axis=1)
    left = x[:, 1:-1] - x[:, :-2]
    right = x[:, 1:-1] - x[:, 2:]
    ssc = np.sum(
        (left * right > 0)
        & ((np.abs(left) >= ssc_threshold) | (np.abs(right) >= ssc_threshold)),
        axis=1,
    )
    return np.stack([mav, zc, ssc, wl], axis=1).reshape(-1)


# ---------------------------------------------------------------------------
# linear discriminant classifier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LdaModel:
    means: np.ndarray        # (5, d)
    cov_pinv: np.ndarray     # (d, d), pooled covariance pseudo-inverse
    log_priors: np.ndarray   # (5,)

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def train_lda(features: np.ndarray, labels) -> LdaModel:
    """Fit class means and a pooled within-class covariance, inverted through
    SVD with small singular values truncated, so degenerate features can
    never fail training."""
    X = np.asarray(features, dtype=float)
    y = np.asarray([int(l) for l in labels])
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("features must be (n, d) with one label per row")
    counts = np.bincount(y, minlength=len(GestureClass))
    for g in GestureClass:
        if counts[g] < 2:
            raise ValueError(f"training needs at least 2 samples of class {g.name}")
    d = X.shape[1]
    means = np.zeros((len(GestureClass), d))
    scatter = np.zeros((d, d))
    for g in GestureClass:
        rows = X[y == g]
        means[g] = rows.mean(axis=0)
        centered = rows - means[g]
        scatter += centered.T @ centered
    cov = scatter / (len(X) - len(GestureClass))
    cov_pinv = np.linalg.pinv(cov, rcond=1e-9, hermitian=True)
    priors = counts / counts.sum()
    return LdaModel(means=means, cov_pinv=cov_pinv, log_priors=np.log(priors))


def classify(model: LdaModel, f: np.ndarray) -> tuple[GestureClass, np.ndarray]:
    """Argmax of the linear discriminant scores; ties break toward the
    lower-ordered class."""
    f = np.asarray(f, dtype=float)
    if f.shape != (model.dim,):
        raise ValueError(f"feature dimension {f.shape} does not match model ({model.dim},)")
    proj = model.means @ model.cov_pinv  # (5, d)
    scores = proj @ f - 0.5 * np.einsum("kd,kd->k", proj, model.means) + model.log_priors
    return GestureClass(int(np.argmax(scores))), scores


def save_model(path, model: LdaModel) -> None:
    np.savez(path, means=model.means, cov_pinv=model.cov_pinv, log_priors=model.log_priors)


def load_model(path) -> LdaModel:
    data = np.load(path)
    return LdaModel(means=data["means"], cov_pinv=data["cov_pinv"], log_priors=data["log_priors"])


# ---------------------------------------------------------------------------
# debouncing and delivery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GestureEvent:
    gesture: GestureClass
    timestamp: float


class Debouncer:
    """Emits an event at the third identical consecutive classification;
    a continuing run holds the gesture without emitting again."""

    def __init__(self, count: int = DEBOUNCE_COUNT):
        self.count = count
        self._last: GestureClass | None = None
        self._run = 0
        self._emitted = False
        self._last_time = -np.inf

    def update(self, gesture: GestureClass, timestamp: float) -> GestureEvent | None:
        if timestamp < self._last_time:
            raise ValueError("timestamps must be nondecreasing")
        self._last_time = timestamp
        if gesture == self._last:
            self._run += 1
        else:
            self._last = gesture
            self._run = 1
            self._emitted = False
        if self._run >= self.count and not self._emitted:
            self._emitted = True
            return GestureEvent(gesture=gesture, timestamp=timestamp)
        return None


def debounce(stream) -> list[GestureEvent]:
    """Debounce an iterable of (gesture, timestamp) pairs."""
    deb = Debouncer()
    events = []
    for gesture, timestamp in stream:
        ev = deb.update(gesture, timestamp)
        if ev is not None:
            events.append(ev)
    return events


class LatestMailbox:
    """Single-slot mailbox: consumers always observe only the newest item."""

    def __init__(self):
        self._lock = threading.Lock()
        self._item = None

    def put(self, item) -> None:
        with self._lock:
            self._item = item

    def take(self):
        with self._lock:
            item = self._item
            self._item = None
            return item


# ---------------------------------------------------------------------------
# synthetic signals and recordings
# ---------------------------------------------------------------------------

DEFAULT_CHANNELS = 8

# Gesture-specific channel activation amplitudes for the synthetic source.
SYNTH_AMPLITUDES = {
    GestureClass.HO: (1.0, 1.0, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1),
    GestureClass.HC: (0.1, 0.1, 1.0, 1.0, 0.1, 0.1, 0.1, 0.1),
    GestureClass.WF: (0.1, 0.1, 0.1, 0.1, 1.0, 1.0, 0.1, 0.1),
    GestureClass.WE: (0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 1.0, 1.0),
    GestureClass.NM: (0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05),
}


def synthetic_gesture_signal(
    gesture: GestureClass,
    samples: int,
    rng: np.random.Generator,
    channels: int = DEFAULT_CHANNELS,
    ar_coefficient: float = 0.9,
) -> SignalBuffer:
    """AR(1) noise per channel scaled by a gesture-specific amplitude
    envelope; unit stationary variance before scaling."""
    amps = np.resize(SYNTH_AMPLITUDES[gesture], channels)
    noise = rng.normal(0.0, 1.0, (channels, samples))
    out = np.zeros_like(noise)
    scale = np.sqrt(1.0 - ar_coefficient ** 2)
    out[:, 0] = noise[:, 0]
    for i in range(1, samples):
        out[:, i] = ar_coefficient * out[:, i - 1] + scale * noise[:, i]
    return SignalBuffer(samples=out * amps[:, None])


def synthetic_recording(
    seed: int = 0,
    seconds_per_gesture: float = 3.0,
    repetitions: int = 2,
    channels: int = DEFAULT_CHANNELS,
    sample_rate: float = SAMPLE_RATE,
) -> tuple[SignalBuffer, list[dict]]:
    """A labeled training recording: each gesture held for a fixed period,
    the whole sequence repeated."""
    rng = np.random.default_rng(seed)
    n = int(seconds_per_gesture * sample_rate)
    chunks = []
    segments = []
    offset = 0
    for _ in range(repetitions):
        for g in GestureClass:
            chunks.append(synthetic_gesture_signal(g, n, rng, channels).samples)
            segments.append({"label": g.name, "start": offset, "end": offset + n})
            offset += n
    return SignalBuffer(samples=np.concatenate(chunks, axis=1), sample_rate=sample_rate), segments


def save_recording(path, buffer: SignalBuffer, segments: list[dict] | None = None) -> None:
    """Write a recording: one JSON header line, then raw little-endian
    float32 samples in channel-major order."""
    header = {
        "format": FILE_MAGIC,
        "version": 1,
        "sample_rate": buffer.sample_rate,
        "channels": buffer.channels,
        "samples": buffer.length,
        "dtype": "<f4",
        "segments": segments or [],
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        fh.write(buffer.samples.astype("<f4").tobytes())


def load_recording(path) -> tuple[SignalBuffer, list[dict]]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("format") != FILE_MAGIC:
            raise ValueError(f"{path}: not an {FILE_MAGIC} recording")
        raw = np.frombuffer(fh.read(), dtype=header["dtype"])
    samples = raw.reshape(header["channels"], header["samples"]).astype(float)
    return SignalBuffer(samples=samples, sample_rate=header["sample_rate"]), header.get("segments", [])


def features_from_segments(
    buffer: SignalBuffer,
    segments: list[dict],
    window: int = WINDOW_SAMPLES,
    increment: int = WINDOW_INCREMENT,
) -> tuple[np.ndarray, np.ndarray]:
    """Window features and labels drawn from labeled signal segments."""
    feats = []
    labels = []
    for seg in segments:
        label = GestureClass[seg["label"]]
        part = SignalBuffer(
            samples=buffer.samples[:, seg["start"]: seg["end"]],
            sample_rate=buffer.sample_rate,
        )
        for win in slide_windows(part, window, increment):
            feats.append(extract_features(win))
            labels.append(int(label))
    return np.asarray(feats), np.asarray(labels)


def classify_stream(
    model: LdaModel,
    buffer: SignalBuffer,
    window: int = WINDOW_SAMPLES,
    increment: int = WINDOW_INCREMENT,
) -> list[tuple[GestureClass, float]]:
    """Classification per sliding window, stamped at the window's last
    sample time."""
    out = []
    for i, win in enumerate(slide_windows(buffer, window, increment)):
        label, _ = classify(model, extract_features(win))
        t = (i * increment + window) / buffer.sample_rate
        out.append((label, t))
    return out
