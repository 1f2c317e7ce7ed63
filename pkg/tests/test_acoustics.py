import io
import math
import struct
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lutherie.acoustics import (
    ANALYSIS_FFT_SIZE,
    AudioBuffer,
    PitchEstimate,
    analyze_instrument,
    compare_to_reference,
    estimate_fundamental,
    pluck_partials,
    read_wav,
    synthesize_tone,
    windowed_spectrum,
    write_wav,
)
from lutherie.errors import DomainError, FormatError, NoSignalError
from lutherie.geometry import StringReference, cents, frequency_to_note, standard_string_set

MEASURED = (325, 243, 193, 289, 214, 164)


def direct_dft(x):
    n = len(x)
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) @ x


def pcm_wav(frames, rate=44100, channels=1):
    out = io.BytesIO()
    with wave.open(out, "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(np.asarray(frames, "<i2").tobytes())
    return out.getvalue()


def riff(*chunks):
    body = b"WAVE" + b"".join(cid + struct.pack("<I", len(data)) + data + b"\0" * (len(data) & 1)
                              for cid, data in chunks)
    return b"RIFF" + struct.pack("<I", len(body)) + body


def fmt(tag=1, channels=1, rate=8000, bits=16):
    align = channels * bits // 8
    return b"fmt ", struct.pack("<HHIIHH", tag, channels, rate, rate * align, align, bits)


# -- WAV --------------------------------------------------------------------


def test_extreme_codes():
    buf = read_wav(pcm_wav([0x7FFF, -0x8000, 0]))
    assert buf.samples[0] == 32767 / 32768 == 0.999969482421875
    assert buf.samples[1] == -1.0
    assert buf.samples[2] == 0.0


def test_one_second_file():
    buf = read_wav(pcm_wav(np.zeros(44100, int)))
    assert len(buf.samples) == 44100 and buf.sample_rate == 44100


def test_stereo_is_averaged():
    buf = read_wav(pcm_wav([1000, 3000, -2000, 0], channels=2))
    assert np.allclose(buf.samples, [2000 / 32768, -1000 / 32768])


def test_extensible_pcm():
    ext = struct.pack("<HHIIHHHHI", 0xFFFE, 1, 8000, 16000, 2, 16, 22, 16, 4)
    ext += struct.pack("<H", 1) + b"\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"
    data = riff((b"fmt ", ext), (b"data", struct.pack("<2h", 16384, -16384)))
    assert list(read_wav(data).samples) == [0.5, -0.5]


def test_unknown_chunks_skipped():
    data = riff(fmt(), (b"LIST", b"abc"), (b"data", struct.pack("<h", 8192)))
    assert read_wav(data).samples[0] == 0.25


@pytest.mark.parametrize("data, chunk", [
    (riff(fmt(tag=3), (b"data", b"\0\0")), "fmt "),
    (riff(fmt(bits=8), (b"data", b"\0\0")), "fmt "),
    (riff(fmt()), "data"),
    (riff((b"data", b"\0\0")), "fmt "),
    (riff(fmt(), (b"data", b"\0\0\0")), "data"),
    (b"RIFX" + b"\0" * 40, "RIFF"),
    (b"RIFF\0\0\0\0WAVX", "RIFF"),
    (b"RIF", "RIFF"),
])
def test_format_errors(data, chunk):
    with pytest.raises(FormatError) as err:
        read_wav(data)
    assert err.value.chunk == chunk
    assert err.value.offset is not None
    assert chunk.strip() in str(err.value)


def test_truncated_data_chunk_offset():
    good = riff(fmt(), (b"data", struct.pack("<4h", 1, 2, 3, 4)))
    with pytest.raises(FormatError) as err:
        read_wav(good[:-3])
    assert err.value.chunk == "data"
    assert err.value.offset == 12 + 8 + 16


def test_wav_round_trip():
    buf = synthesize_tone(440.0, 0.1)
    back = read_wav(write_wav(buf))
    assert back.sample_rate == buf.sample_rate
    assert np.abs(back.samples - buf.samples).max() <= 0.5 / 32768


@pytest.mark.parametrize("samples", [[], [1.5], [float("nan")]])
def test_audio_buffer_invariants(samples):
    with pytest.raises(DomainError):
        AudioBuffer(44100, samples)


# -- spectrum ---------------------------------------------------------------


def test_constant_signal_is_all_dc():
    sp = windowed_spectrum(AudioBuffer(8, np.full(8, 0.5)), "rectangular")
    assert sp.magnitudes[0] == pytest.approx(4.0)
    assert np.allclose(sp.magnitudes[1:], 0, atol=1e-12)


def test_bin_aligned_sine():
    n, k = 64, 5
    x = 0.8 * np.sin(2 * np.pi * k * np.arange(n) / n)
    sp = windowed_spectrum(AudioBuffer(64, x), "rectangular")
    nz = np.flatnonzero(sp.magnitudes > 1e-9)
    assert list(nz) == [k]
    assert sp.magnitudes[k] == pytest.approx(0.8 * n / 2)


def test_padding_and_bins():
    sp = windowed_spectrum(AudioBuffer(44100, np.zeros(44100)), "hann", ANALYSIS_FFT_SIZE)
    assert sp.size == 2 ** 16 and len(sp.magnitudes) == 2 ** 15 + 1
    assert sp.bin_hz == pytest.approx(44100 / 65536)


def test_spectrum_errors():
    with pytest.raises(DomainError):
        windowed_spectrum(AudioBuffer(8, [0.1]), "rectangular")
    with pytest.raises(DomainError):
        windowed_spectrum(AudioBuffer(8, [0.1, 0.2]), "blackman")


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 1024), st.integers(0, 2 ** 32 - 1))
def test_matches_direct_dft(n, seed):
    x = np.random.default_rng(seed).uniform(-1, 1, n)
    sp = windowed_spectrum(AudioBuffer(1000, x), "rectangular")
    padded = np.zeros(sp.size)
    padded[:n] = x
    oracle = np.abs(direct_dft(padded))[: sp.size // 2 + 1]
    assert np.abs(sp.magnitudes - oracle).max() <= 1e-9 * max(1.0, oracle.max())


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 1024), st.integers(0, 2 ** 32 - 1))
def test_parseval(n, seed):
    x = np.random.default_rng(seed).uniform(-1, 1, n)
    sp = windowed_spectrum(AudioBuffer(1000, x), "rectangular")
    assert sp.energy() == pytest.approx(float(np.sum(x * x)), rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([16, 64, 256, 1024]), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5),
       st.integers(0, 2 ** 32 - 1))
def test_linearity(n, a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)
    z = a * x + b * y
    sp = windowed_spectrum(AudioBuffer(1000, z), "rectangular")
    oracle = np.abs(a * direct_dft(x) + b * direct_dft(y))[: n // 2 + 1]
    assert np.abs(sp.magnitudes - oracle).max() <= 1e-9 * max(1.0, oracle.max())


# -- pitch ------------------------------------------------------------------


def estimate(buf):
    return estimate_fundamental(windowed_spectrum(buf, "hann", ANALYSIS_FFT_SIZE))


def test_e4_tone():
    assert estimate(synthesize_tone(329.63)).frequency == pytest.approx(329.63, abs=0.5)


def test_first_peak_beats_tallest():
    buf = synthesize_tone(82.41, partials=[(1, 0.4), (2, 1.0)])
    assert estimate(buf).frequency == pytest.approx(82.41, abs=0.5)


def test_floor_rejects_rumble():
    buf = synthesize_tone(30.0, partials=[(1, 1.0), (8, 0.5)])
    assert estimate(buf).frequency == pytest.approx(240.0, abs=0.5)


def test_silence():
    with pytest.raises(NoSignalError):
        estimate(AudioBuffer(44100, np.zeros(11025)))


@settings(max_examples=30, deadline=None)
@given(st.floats(82, 400))
def test_pitch_round_trip(f):
    assert estimate(synthesize_tone(f, 0.5)).frequency == pytest.approx(f, abs=0.5)


def test_synthesis_errors():
    with pytest.raises(DomainError):
        synthesize_tone(300, partials=[(1, 0.0), (2, 0.0)])
    with pytest.raises(DomainError):
        synthesize_tone(15000, partials=[(1, 1.0), (2, 0.5)])
    with pytest.raises(DomainError):
        synthesize_tone(22050)


def test_synthesis_peak_level():
    assert np.abs(synthesize_tone(440, partials=pluck_partials()).samples).max() == pytest.approx(0.9)


def test_164_hz_is_e3():
    assert frequency_to_note(estimate(synthesize_tone(164.0)).frequency)[0] == "E3"


# -- comparison -------------------------------------------------------------


E4 = StringReference(1, "E4", 329.63)
D3 = StringReference(4, "D3", 146.83)


def test_compare_examples():
    r = compare_to_reference(PitchEstimate(325.0, 1.0), E4)
    assert r.delta_hz == pytest.approx(-4.63, abs=1e-9) and not r.octave_flag
    r = compare_to_reference(PitchEstimate(289.0, 1.0), D3)
    assert r.octave_ratio == pytest.approx(289 / 146.83) and r.octave_flag
    r = compare_to_reference(PitchEstimate(329.63, 1.0), E4)
    assert r.delta_hz == 0 and r.cents == 0 and not r.octave_flag


@given(st.floats(0.1, 4.0))
def test_octave_flag_rule(ratio):
    r = compare_to_reference(PitchEstimate(146.83 * ratio, 1.0), D3)
    expect = abs(r.octave_ratio - 2) <= 0.1 or abs(r.octave_ratio - 0.5) <= 0.025
    assert r.octave_flag == expect
    assert r.cents == pytest.approx(1200 * math.log2(r.octave_ratio), abs=1e-6)


@given(st.floats(50, 1000))
def test_octave_flag_scale_consistent(f):
    ref = StringReference(1, "X", f)
    ref2 = StringReference(1, "X", 2 * f)
    assert not compare_to_reference(PitchEstimate(f, 1.0), ref).octave_flag
    assert not compare_to_reference(PitchEstimate(2 * f, 1.0), ref2).octave_flag


@given(st.floats(20, 5000), st.floats(20, 5000))
def test_cents_antisymmetry(a, b):
    assert cents(a, b) + cents(b, a) == 0


def test_measured_note_labels():
    labels = [frequency_to_note(f)[0] for f in MEASURED]
    assert labels == ["E4", "B3", "G3", "D4", "A3", "E3"]


def test_table_fixtures_are_in_tune():
    bufs = [synthesize_tone(r.frequency, partials=pluck_partials()) for r in standard_string_set()]
    rep = analyze_instrument(bufs)
    assert all(abs(r.delta_hz) < 0.05 for r in rep.strings)
    assert rep.octave_flag_count == 0


def test_no_signal_names_string():
    bufs = [synthesize_tone(f) for f in MEASURED]
    bufs[2] = AudioBuffer(44100, np.zeros(22050))
    with pytest.raises(NoSignalError) as err:
        analyze_instrument(bufs)
    assert err.value.string_index == 3


def test_needs_six():
    with pytest.raises(DomainError):
        analyze_instrument([synthesize_tone(300)] * 5)
