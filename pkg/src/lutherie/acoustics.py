"""Pitch analysis of plucked-string recordings.

A recording is windowed, zero-padded and transformed; the fundamental is the
lowest clear spectral peak, which is then compared with the standard tuning
of its string. Readings near twice the reference are flagged as octave
doublings rather than treated as tuning errors.
"""

from __future__ import annotations

import io
import math
import struct
import wave
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, FormatError, NoSignalError
from .geometry import StringReference, cents, frequency_to_note, standard_string_set

DEFAULT_SAMPLE_RATE = 44100
ANALYSIS_FFT_SIZE = 2 ** 16
FLOOR_HZ = 60.0
PEAK_THRESHOLD = 0.1
OCTAVE_UP_TOLERANCE = 0.1
OCTAVE_DOWN_TOLERANCE = 0.025
PEAK_LEVEL = 0.9

_PCM = 1
_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    sample_rate: int
    samples: np.ndarray

    def __post_init__(self):
        if not (isinstance(self.sample_rate, (int, np.integer)) and self.sample_rate > 0):
            raise DomainError(f"sample rate must be a positive integer, got {self.sample_rate!r}")
        x = np.array(self.samples, dtype=np.float64).ravel()
        if x.size == 0:
            raise DomainError("audio buffer is empty")
        if not np.all(np.isfinite(x)) or np.abs(x).max() > 1.0:
            raise DomainError("samples must lie within [-1, 1]")
        x.flags.writeable = False
        object.__setattr__(self, "sample_rate", int(self.sample_rate))
        object.__setattr__(self, "samples", x)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True, eq=False)
class Spectrum:
    """One-sided DFT magnitudes, bins 0..N/2 of an N-point transform."""

    bin_hz: float
    magnitudes: np.ndarray
    window_kind: str
    size: int

    def frequencies(self) -> np.ndarray:
        return np.arange(len(self.magnitudes)) * self.bin_hz

    def energy(self) -> float:
        """Sum of |X_k|^2 over the full two-sided spectrum, divided by N."""
        power = self.magnitudes ** 2
        interior = power[1:-1].sum() if self.size % 2 == 0 else power[1:].sum()
        return float((power[0] + 2.0 * interior + (power[-1] if self.size % 2 == 0 else 0.0))
                     / self.size)


@dataclass(frozen=True)
class PitchEstimate:
    frequency: float
    magnitude: float
    method: str = "first-significant-peak"


@dataclass(frozen=True)
class DeviationReport:
    string_index: int
    reference: StringReference
    measured: float
    delta_hz: float
    cents: float
    octave_ratio: float
    octave_flag: bool
    note: str | None = None

    def to_dict(self) -> dict:
        return {
            "string": self.string_index,
            "reference_note": self.reference.note_name,
            "reference_hz": float(self.reference.frequency),
            "measured_hz": round(float(self.measured), 2),
            "measured_note": self.note,
            "delta_hz": round(float(self.delta_hz), 2),
            "cents": round(float(self.cents), 1),
            "octave_ratio": round(float(self.octave_ratio), 3),
            "octave_flag": bool(self.octave_flag),
        }


@dataclass(frozen=True)
class InstrumentReport:
    strings: list[DeviationReport]
    mean_abs_delta_1_3: float
    octave_flag_count: int
    flagged_strings: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "strings": [r.to_dict() for r in self.strings],
            "summary": {
                "mean_abs_delta_hz_strings_1_3": round(float(self.mean_abs_delta_1_3), 2),
                "octave_flag_count": self.octave_flag_count,
                "flagged_strings": list(self.flagged_strings),
            },
        }


# ---------------------------------------------------------------------------
# WAV input and output
# ---------------------------------------------------------------------------


def _chunks(data: bytes):
    if len(data) < 12:
        raise FormatError("file shorter than a RIFF header", offset=0, chunk="RIFF")
    riff, _, kind = struct.unpack_from("<4sI4s", data, 0)
    if riff != b"RIFF":
        raise FormatError("missing RIFF signature", offset=0, chunk="RIFF")
    if kind != b"WAVE":
        raise FormatError("RIFF form type is not WAVE", offset=8, chunk="RIFF")
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        name = cid.decode("ascii", "replace")
        body = pos + 8
        if body + size > len(data):
            raise FormatError(f"chunk declares {size} bytes but {len(data) - body} remain",
                              offset=pos, chunk=name)
        yield name, body, data[body:body + size]
        pos = body + size + (size & 1)


def read_wav(data: bytes) -> AudioBuffer:
    """Decode a 16-bit PCM WAV; stereo is averaged to mono."""
    fmt = None
    samples = None
    data_at = None
    for name, offset, body in _chunks(bytes(data)):
        if name == "fmt ":
            if len(body) < 16:
                raise FormatError("fmt chunk too short", offset=offset, chunk=name)
            tag, channels, rate, _, align, bits = struct.unpack_from("<HHIIHH", body, 0)
            if tag == _EXTENSIBLE:
                if len(body) < 40:
                    raise FormatError("extensible fmt chunk too short", offset=offset, chunk=name)
                tag = struct.unpack_from("<H", body, 24)[0]
            if tag != _PCM:
                raise FormatError(f"unsupported encoding tag {tag:#x}; only PCM is read",
                                  offset=offset, chunk=name)
            if bits != 16:
                raise FormatError(f"{bits}-bit samples; only 16-bit PCM is read",
                                  offset=offset + 14, chunk=name)
            if channels not in (1, 2) or align != 2 * channels or rate == 0:
                raise FormatError(f"unsupported layout ({channels} channels, block {align})",
                                  offset=offset, chunk=name)
            fmt = (channels, rate)
        elif name == "data":
            samples, data_at = body, offset
    if fmt is None:
        raise FormatError("missing chunk", offset=12, chunk="fmt ")
    if samples is None:
        raise FormatError("missing chunk", offset=12, chunk="data")
    channels, rate = fmt
    if len(samples) % (2 * channels):
        raise FormatError("data length is not a whole number of frames",
                          offset=data_at, chunk="data")
    if not samples:
        raise FormatError("no audio frames", offset=data_at, chunk="data")
    pcm = np.frombuffer(samples, dtype="<i2").astype(np.float64).reshape(-1, channels)
    return AudioBuffer(rate, pcm.mean(axis=1) / 32768.0)


def write_wav(buf: AudioBuffer) -> bytes:
    """Encode as mono 16-bit PCM."""
    pcm = np.clip(np.round(buf.samples * 32768.0), -32768, 32767).astype("<i2")
    out = io.BytesIO()
    with wave.open(out, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(buf.sample_rate)
        w.writeframes(pcm.tobytes())
    return out.getvalue()


# ---------------------------------------------------------------------------
# Spectrum and pitch
# ---------------------------------------------------------------------------


def _window(kind: str, n: int) -> np.ndarray:
    if kind == "rectangular":
        return np.ones(n)
    if kind == "hann":
        # periodic form: exact partition of unity under 50 % overlap
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    raise DomainError(f"unknown window {kind!r}; expected 'rectangular' or 'hann'")


def windowed_spectrum(buf: AudioBuffer, window: str = "hann", min_size: int = 1) -> Spectrum:
    """Magnitude spectrum, zero-padded to a power of two of at least ``min_size``."""
    x = np.asarray(buf.samples, dtype=np.float64)
    n = len(x)
    if n < 2:
        raise DomainError("need at least 2 samples for a spectrum")
    size = 1 << max(n - 1, min_size - 1, 1).bit_length()
    padded = np.zeros(size)
    padded[:n] = x * _window(window, n)
    mags = np.abs(np.fft.rfft(padded))
    return Spectrum(buf.sample_rate / size, mags, window, size)


def estimate_fundamental(spectrum: Spectrum, floor_hz: float = FLOOR_HZ,
                         threshold: float = PEAK_THRESHOLD) -> PitchEstimate:
    """Lowest local maximum above ``floor_hz`` reaching ``threshold`` of the
    strongest bin, refined by a parabola through the log magnitudes."""
    m = spectrum.magnitudes
    first = max(1, int(math.ceil(floor_hz / spectrum.bin_hz)))
    if first >= len(m) - 1:
        raise NoSignalError("spectrum has no bins above the floor")
    top = float(m[first:].max())
    if not top > 0:
        raise NoSignalError("no spectral peak above the threshold")
    level = threshold * top
    k = np.arange(first, len(m) - 1)
    peaks = k[(m[k] >= level) & (m[k] >= m[k - 1]) & (m[k] > m[k + 1])]
    if len(peaks) == 0:
        raise NoSignalError("no spectral peak above the threshold")
    p = int(peaks[0])
    a, b, c = np.log(np.maximum(m[p - 1:p + 2], np.finfo(float).tiny))
    denom = a - 2.0 * b + c
    offset = 0.5 * (a - c) / denom if denom < 0 else 0.0
    offset = min(max(offset, -0.5), 0.5)
    return PitchEstimate(float((p + offset) * spectrum.bin_hz), float(m[p]) / top)


def compare_to_reference(est: PitchEstimate, ref: StringReference) -> DeviationReport:
    measured = est.frequency
    ratio = measured / ref.frequency
    flag = abs(ratio - 2.0) <= OCTAVE_UP_TOLERANCE or abs(ratio - 0.5) <= OCTAVE_DOWN_TOLERANCE
    try:
        note = frequency_to_note(measured)[0]
    except DomainError:
        note = None
    return DeviationReport(ref.index, ref, float(measured), float(measured - ref.frequency),
                           cents(measured, ref.frequency), float(ratio), bool(flag), note)


def synthesize_tone(frequency: float, duration: float = 1.0,
                    sample_rate: int = DEFAULT_SAMPLE_RATE,
                    partials: Sequence[tuple[float, float]] = ((1.0, 1.0),)) -> AudioBuffer:
    """Sum of sines at ``multiple * frequency`` with relative ``amplitude``,
    given as ``(multiple, amplitude)`` pairs, peak-normalized to 0.9."""
    if not (frequency > 0 and duration > 0):
        raise DomainError("frequency and duration must be positive")
    nyquist = sample_rate / 2.0
    n = int(round(duration * sample_rate))
    if n < 2:
        raise DomainError("tone is shorter than two samples")
    t = np.arange(n) / sample_rate
    x = np.zeros(n)
    for multiple, amp in partials:
        f = multiple * frequency
        if f >= nyquist:
            raise DomainError(f"partial at {f} Hz aliases (Nyquist {nyquist} Hz)")
        x += amp * np.sin(2.0 * np.pi * f * t)
    peak = np.abs(x).max()
    if peak == 0:
        raise DomainError("partials sum to silence")
    return AudioBuffer(sample_rate, x * (PEAK_LEVEL / peak))


def pluck_partials(count: int = 6) -> list[tuple[float, float]]:
    """Harmonic series with 1/n amplitudes, a plain stand-in for a plucked string."""
    return [(float(n), 1.0 / n) for n in range(1, count + 1)]


def analyze_string(buf: AudioBuffer, ref: StringReference) -> DeviationReport:
    try:
        est = estimate_fundamental(windowed_spectrum(buf, "hann", ANALYSIS_FFT_SIZE))
    except NoSignalError as exc:
        raise NoSignalError(f"string {ref.index}: {exc}", string_index=ref.index) from None
    return compare_to_reference(est, ref)


def analyze_instrument(buffers: Sequence[AudioBuffer],
                       references: Sequence[StringReference] | None = None) -> InstrumentReport:
    """Analyze six recordings ordered string 1 (high E) to string 6."""
    refs = list(references) if references is not None else standard_string_set()
    if len(buffers) != 6 or len(refs) != 6:
        raise DomainError(f"expected 6 recordings, got {len(buffers)}")
    reports = [analyze_string(b, r) for b, r in zip(buffers, refs)]
    return summarize(reports)


def summarize(reports: Sequence[DeviationReport]) -> InstrumentReport:
    reports = sorted(reports, key=lambda r: r.string_index)
    first_three = [abs(r.delta_hz) for r in reports if r.string_index <= 3]
    mean = sum(first_three) / len(first_three) if first_three else 0.0
    flagged = [r.string_index for r in reports if r.octave_flag]
    return InstrumentReport(reports, mean, len(flagged), flagged)


def spectrum_rows(spectrum: Spectrum, max_hz: float | None = None):
    """(frequency, magnitude) rows for plotting."""
    freqs = spectrum.frequencies()
    keep = slice(None) if max_hz is None else freqs <= max_hz
    return zip(freqs[keep].tolist(), spectrum.magnitudes[keep].tolist())
