import sys

import numpy as np
import pytest
import requests
import soundfile as sf

from annotations.manifest import DatasetManifest
from annotations.midi import load_midi
from annotations.notes import NoteAnnotation
from annotations.technique import PLAYED_TECHNIQUES, Technique
from audio.frontend import load_audio
from common.errors import CorpusBuildError, RangeError, RendererEndpointError, RendererError, RendererFormatError
from synth.corpus import LEAD_IN, MAX_RELEASE, CorpusSpec, ScaleSpec, build_corpus, plan_corpus, plan_scales
from synth.patches import DEFAULT_PATCHES, DETACHE, FLAGEOLET, PIZZICATO, SPICCATO
from synth.render import HEADROOM, MAX_PARTIAL_FREQ, midi_to_hz, render_note, render_performance
from synth.renderers import BuiltinRenderer, ExternalRenderer, RenderJob, external_render
from helpers import RATE, fft_peak_hz, rms, sine


def _window(samples, start, stop):
    return samples[int(start * RATE):int(stop * RATE)]


def _partials_above(samples, f0, floor_db=-20.0, count=8):
    spectrum = np.abs(np.fft.rfft(samples * np.hanning(len(samples))))
    freqs = np.fft.rfftfreq(len(samples), 1 / RATE)
    levels = []
    # гармоники выше MAX_PARTIAL_FREQ не синтезируются
    for k in range(1, min(count, int(np.ceil(MAX_PARTIAL_FREQ / f0)) - 1) + 1):
        band = np.abs(freqs - k * f0) <= 0.03 * f0
        levels.append(spectrum[band].max())
    levels = 20 * np.log10(np.array(levels) / max(levels))
    return int(np.sum(levels > floor_db))


def _time_to_peak(samples, f0):
    period = int(round(RATE / f0))
    power = np.convolve(samples.astype(np.float64) ** 2, np.ones(period) / period, mode="valid")
    return int(np.argmax(power)) / RATE


def test_render_note_length_and_peak():
    for patch in DEFAULT_PATCHES.values():
        clip = render_note(67, 0.5, patch, seed=1)
        assert len(clip) == int(round((0.5 + patch.release) * RATE))
        assert np.max(np.abs(clip.samples)) == pytest.approx(patch.peak_level, abs=1e-4)


def test_render_note_rejects_pitch_outside_patch_range():
    with pytest.raises(RangeError):
        render_note(40, 0.5, DETACHE)
    with pytest.raises(RangeError):
        render_note(101, 0.5, PIZZICATO)


def _random_notes(patch, count=100, duration=1.0):
    """count нот патча со случайными высотой (55..100) и сидом: (f0, сэмплы)."""
    rng = np.random.default_rng([7, int(patch.technique)])
    for _ in range(count):
        pitch = int(rng.integers(55, 101))
        yield midi_to_hz(pitch), render_note(pitch, duration, patch, seed=int(rng.integers(2 ** 31))).samples


def test_flageolet_is_nearly_pure():
    assert all(_partials_above(samples, f0) == 1 for f0, samples in _random_notes(FLAGEOLET))
    for patch in (DETACHE, SPICCATO, PIZZICATO):
        assert all(_partials_above(samples, f0) >= 2 for f0, samples in _random_notes(patch)), patch.technique


@pytest.mark.parametrize("patch", [DETACHE, FLAGEOLET, SPICCATO, PIZZICATO], ids=lambda p: p.technique.label)
def test_sustained_and_percussive_envelopes_separate(patch):
    for _, samples in _random_notes(patch):
        ratio = rms(_window(samples, 0.6, 0.8)) / rms(_window(samples, 0.05, 0.25))
        if patch in (DETACHE, FLAGEOLET):
            assert ratio > 0.8
        else:
            assert ratio < 0.8


def test_pizzicato_decays_and_spiccato_stops_early():
    pizz = render_note(67, 1.0, PIZZICATO).samples
    assert rms(_window(pizz, 0.5, 1.0)) < 0.25 * rms(_window(pizz, 0.0, 0.5))

    for _, samples in _random_notes(SPICCATO):
        samples = samples.astype(np.float64)
        assert np.sum(_window(samples, 0.0, 0.2) ** 2) >= 0.95 * np.sum(samples ** 2)


@pytest.mark.parametrize("patch", [DETACHE, FLAGEOLET, SPICCATO, PIZZICATO], ids=lambda p: p.technique.label)
def test_only_pizzicato_peaks_within_ten_milliseconds(patch):
    for f0, samples in _random_notes(patch):
        assert (_time_to_peak(samples, f0) < 0.01) == (patch is PIZZICATO)


def test_detache_a4_is_in_tune():
    samples = render_note(69, 1.0, DETACHE).samples
    measured = fft_peak_hz(_window(samples, 0.1, 0.9))
    assert abs(1200 * np.log2(measured / 440.0)) < 5.0


def test_render_note_is_seeded():
    a = render_note(60, 0.3, DETACHE, seed=5).samples
    b = render_note(60, 0.3, DETACHE, seed=5).samples
    c = render_note(60, 0.3, DETACHE, seed=6).samples
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_render_performance_places_notes():
    notes = [NoteAnnotation(60, 0.5, 0.8, 1.0, Technique.DETACHE),
             NoteAnnotation(64, 1.2, 1.4, 1.0, Technique.PIZZICATO)]

    clip = render_performance(notes, seed=3, total_duration=2.0)

    assert len(clip) == 2 * RATE
    assert not np.any(_window(clip.samples, 0.0, 0.5))
    assert rms(_window(clip.samples, 0.55, 0.75)) > 0.05
    assert not np.any(_window(clip.samples, 1.0, 1.2))
    assert rms(_window(clip.samples, 1.2, 1.3)) > 0.05


def test_render_performance_respects_headroom():
    notes = [NoteAnnotation(60 + i, 0.1, 0.6, 1.0, Technique.DETACHE) for i in range(6)]
    clip = render_performance(notes)
    assert np.max(np.abs(clip.samples)) <= HEADROOM + 1e-6


# --- corpus -----------------------------------------------------------------

def test_plan_corpus_is_balanced_and_deterministic():
    spec = CorpusSpec(notes_per_technique=5, seed=9)

    plan = plan_corpus(spec)

    assert len(plan) == 20
    for technique in PLAYED_TECHNIQUES:
        assert sum(1 for item in plan if item.technique == technique) == 5
    assert [i.stem for i in plan] == [i.stem for i in plan_corpus(spec)]
    assert len({i.stem for i in plan}) == 20
    for item in plan:
        (note,) = item.notes
        assert 55 <= note.pitch <= 100
        assert note.onset == LEAD_IN
        assert 0.3 <= note.duration <= 2.0
    with_none = plan_corpus(CorpusSpec(notes_per_technique=1, include_no_technique=True))
    assert Technique.NONE in {i.technique for i in with_none}


def test_built_corpus_manifest(corpus_dir):
    manifest = DatasetManifest.load(corpus_dir / "manifest.tsv")

    assert len(manifest) == 8
    for record in manifest:
        (note,) = load_midi(record.annotation_path)
        assert note.technique == record.technique
        assert note.onset == pytest.approx(LEAD_IN, abs=1e-3)
        clip = load_audio(record.audio_path)
        assert len(clip) / RATE >= note.offset


def test_rebuild_is_byte_identical(tmp_path):
    spec = CorpusSpec(notes_per_technique=1, duration_range=(0.3, 0.4), seed=3)
    first = build_corpus(spec, tmp_path / "a", workers=1)
    build_corpus(spec, tmp_path / "b", workers=2)

    for record in first:
        other = tmp_path / "b" / "audio" / record.audio_path.name
        assert record.audio_path.read_bytes() == other.read_bytes()


class _FailingRenderer(BuiltinRenderer):
    name = "failing"

    def render(self, job):
        if job.techniques == [Technique.SPICCATO]:
            raise RendererError(job.job_id, "boom")
        return super().render(job)


def test_failed_item_blocks_the_manifest(tmp_path):
    spec = CorpusSpec(notes_per_technique=1, duration_range=(0.3, 0.4))

    with pytest.raises(CorpusBuildError) as info:
        build_corpus(spec, tmp_path, renderer=_FailingRenderer(), workers=1)

    assert len(info.value.failures) == 1
    assert "spiccato" in info.value.failures[0]["stem"]
    assert not (tmp_path / "manifest.tsv").exists()


def test_missing_renderer_command_fails_before_output(tmp_path):
    out = tmp_path / "never"
    with pytest.raises(RendererEndpointError):
        build_corpus(CorpusSpec(notes_per_technique=1), out, renderer=ExternalRenderer("no-such-renderer-xyz"))
    assert not out.exists()


# --- external renderer -------------------------------------------------------

HOST_SCRIPT = """
import json, sys
import numpy as np
import soundfile as sf
job = json.load(open(sys.argv[-1]))
if {fail}:
    sys.stderr.write("host crashed\\n")
    sys.exit(3)
t = np.arange(8000) / {rate}
sf.write(job["out_wav"], 0.3 * np.sin(2 * np.pi * 440 * t), {rate})
"""


def _host(tmp_path, rate=16000, fail=False):
    script = tmp_path / f"host_{rate}_{int(fail)}.py"
    script.write_text(HOST_SCRIPT.format(rate=rate, fail=fail))
    return f"{sys.executable} {script}"


def _job(tmp_path, technique=Technique.PIZZICATO):
    return RenderJob("job-1", tmp_path / "in.mid", [technique], tmp_path / "out" / "job-1.wav")


def test_command_renderer_success(tmp_path):
    job = _job(tmp_path)

    clip = ExternalRenderer(_host(tmp_path)).render(job)

    assert len(clip) == 8000
    assert job.descriptor_path.exists()
    assert '"technique": "pizzicato"' in job.descriptor_path.read_text()


def test_command_renderer_wrong_rate(tmp_path):
    with pytest.raises(RendererFormatError, match="expected 16000 Hz"):
        external_render(_job(tmp_path), _host(tmp_path, rate=22050))


def test_command_renderer_nonzero_exit(tmp_path):
    with pytest.raises(RendererError, match="host crashed"):
        external_render(_job(tmp_path), _host(tmp_path, fail=True))


class _Response:
    def __init__(self, status_code, content=b""):
        self.status_code = status_code
        self.content = content


def _wav_bytes(tmp_path):
    path = tmp_path / "reply.wav"
    sf.write(str(path), sine(440.0, 0.25), RATE, subtype="PCM_16")
    return path.read_bytes()


def test_http_renderer(tmp_path, monkeypatch):
    sent = {}

    def fake_post(url, json, timeout):
        sent.update(json)
        return _Response(200, _wav_bytes(tmp_path))

    monkeypatch.setattr("synth.renderers.requests.post", fake_post)

    clip = ExternalRenderer("http://renderer.local/render").render(_job(tmp_path))

    assert len(clip) == RATE // 4
    assert sent["job_id"] == "job-1"
    assert sent["rate"] == 16000


def test_http_renderer_errors(tmp_path, monkeypatch):
    monkeypatch.setattr("synth.renderers.requests.post", lambda *a, **kw: _Response(500))
    with pytest.raises(RendererError, match="HTTP 500"):
        external_render(_job(tmp_path), "http://renderer.local/render")

    def refuse(*args, **kwargs):
        raise requests.ConnectionError("refused")

    monkeypatch.setattr("synth.renderers.requests.post", refuse)
    with pytest.raises(RendererEndpointError):
        external_render(_job(tmp_path), "http://renderer.local/render")


# --- scale corpus -------------------------------------------------------------

def test_plan_scales():
    spec = ScaleSpec(pieces=3, performers=2, seed=1)

    items = plan_scales(spec)

    assert len(items) == 6
    assert [i.stem for i in items] == [i.stem for i in plan_scales(spec)]
    for item in items:
        onsets = [n.onset for n in item.notes]
        assert onsets == sorted(onsets)
        assert item.notes[-1].offset <= spec.duration - MAX_RELEASE
        for a, b in zip(item.notes, item.notes[1:]):
            assert b.onset - a.offset >= spec.gap_range[0] - 1e-9
    by_piece = {}
    for item in items:
        by_piece.setdefault(item.piece_id, set()).add(item.notes[0].pitch)
    assert all(len(roots) == 1 for roots in by_piece.values())

    fixed = plan_scales(ScaleSpec(pieces=1, performers=1, technique="spiccato"))
    assert {n.technique for n in fixed[0].notes} == {Technique.SPICCATO}
