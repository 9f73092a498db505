import mido
import numpy as np
import pytest

from annotations.manifest import DatasetManifest, ManifestRecord
from annotations.midi import load_midi, write_midi
from annotations.notes import BEGIN_NOTE, NoteAnnotation, clip_notes
from annotations.splits import assign_folds, kfold, make_split, write_assignments
from annotations.targets import generate_targets
from annotations.technique import PLAYED_TECHNIQUES, Technique
from common.errors import AnnotationError, ContractError, MidiParseError, SplitError


def _save(tmp_path, name, tracks, ticks_per_beat=480, midi_type=0):
    midi = mido.MidiFile(type=midi_type, ticks_per_beat=ticks_per_beat)
    for messages in tracks:
        track = mido.MidiTrack()
        track.extend(messages)
        midi.tracks.append(track)
    path = tmp_path / name
    midi.save(str(path))
    return path


# --- technique labels -------------------------------------------------------

@pytest.mark.parametrize("raw,expected", [
    ("detache", Technique.DETACHE),
    ("Détaché", Technique.DETACHE),
    ("PIZZICATO", Technique.PIZZICATO),
    ("3", Technique.PIZZICATO),
    (1, Technique.FLAGEOLET),
    (Technique.NONE, Technique.NONE),
])
def test_technique_parse(raw, expected):
    assert Technique.parse(raw) is expected


def test_technique_codes_are_fixed():
    assert [t.label for t in Technique] == ["detache", "flageolet", "spiccato", "pizzicato", "none"]
    with pytest.raises(ValueError):
        Technique.parse("tremolo")


def test_note_annotation_validation():
    with pytest.raises(AnnotationError):
        NoteAnnotation(20, 0.0, 1.0)
    with pytest.raises(AnnotationError):
        NoteAnnotation(60, 1.0, 1.0)
    with pytest.raises(AnnotationError):
        NoteAnnotation(60, 0.0, 1.0, velocity=1.5)


# --- MIDI -------------------------------------------------------------------

def test_single_note_at_120_bpm(tmp_path):
    path = _save(tmp_path, "one.mid", [[
        mido.Message("note_on", note=69, velocity=127, time=0),
        mido.Message("note_off", note=69, velocity=0, time=480),
    ]])

    notes = load_midi(path)

    assert len(notes) == 1
    assert notes[0].pitch == 69
    assert notes[0].onset == pytest.approx(0.0)
    assert notes[0].offset == pytest.approx(0.5)
    assert notes[0].velocity == pytest.approx(1.0)
    assert notes[0].technique is Technique.NONE


def test_tempo_change_mid_note(tmp_path):
    path = _save(tmp_path, "tempo.mid", [[
        mido.MetaMessage("set_tempo", tempo=500000, time=0),
        mido.Message("note_on", note=62, velocity=64, time=0),
        mido.MetaMessage("set_tempo", tempo=1000000, time=480),
        mido.Message("note_off", note=62, velocity=0, time=480),
    ]])

    (note,) = load_midi(path)

    assert note.offset == pytest.approx(0.5 + 1.0)


def test_tempo_map_spans_tracks(tmp_path):
    path = _save(tmp_path, "type1.mid", [
        [mido.MetaMessage("set_tempo", tempo=250000, time=0)],
        [mido.Message("note_on", note=60, velocity=90, time=960),
         mido.Message("note_on", note=60, velocity=0, time=480)],
    ], midi_type=1)

    (note,) = load_midi(path)

    assert note.onset == pytest.approx(0.5)
    assert note.offset == pytest.approx(0.75)


def test_markers_set_technique_until_replaced(tmp_path):
    path = _save(tmp_path, "marked.mid", [[
        mido.MetaMessage("marker", text="tech:pizzicato", time=0),
        mido.Message("note_on", note=60, velocity=100, time=0),
        mido.Message("note_off", note=60, velocity=0, time=240),
        mido.Message("note_on", note=62, velocity=100, time=0),
        mido.Message("note_off", note=62, velocity=0, time=240),
        mido.MetaMessage("text", text="tech:flageolet", time=0),
        mido.Message("note_on", note=64, velocity=100, time=0),
        mido.Message("note_off", note=64, velocity=0, time=240),
    ]])

    notes = load_midi(path)

    assert [n.technique for n in notes] == [Technique.PIZZICATO, Technique.PIZZICATO, Technique.FLAGEOLET]


def test_dangling_note_closed_at_track_end(tmp_path, caplog):
    path = _save(tmp_path, "dangling.mid", [[
        mido.Message("note_on", note=67, velocity=80, time=0),
        mido.MetaMessage("end_of_track", time=960),
    ]])

    (note,) = load_midi(path)

    assert note.offset == pytest.approx(1.0)
    assert any("67" in r.getMessage() for r in caplog.records)


def test_out_of_range_pitch_is_skipped(tmp_path):
    path = _save(tmp_path, "low.mid", [[
        mido.Message("note_on", note=10, velocity=80, time=0),
        mido.Message("note_off", note=10, velocity=0, time=480),
        mido.Message("note_on", note=70, velocity=80, time=0),
        mido.Message("note_off", note=70, velocity=0, time=480),
    ]])

    assert [n.pitch for n in load_midi(path)] == [70]


def test_malformed_midi_reports_offset(tmp_path):
    path = tmp_path / "garbage.mid"
    path.write_bytes(b"MThd\x00\x00\x00\x06\x00")

    with pytest.raises(MidiParseError) as info:
        load_midi(path)
    assert isinstance(info.value.offset, int)
    assert "garbage.mid" in str(info.value)


def test_format_2_is_rejected(tmp_path):
    path = _save(tmp_path, "type2.mid", [[mido.Message("note_on", note=60, velocity=1, time=0)]], midi_type=2)
    with pytest.raises(MidiParseError):
        load_midi(path)


def test_written_midi_reads_back(tmp_path, scale_notes):
    path = tmp_path / "out" / "scale.mid"
    write_midi(scale_notes, path)

    loaded = load_midi(path)

    assert [n.pitch for n in loaded] == [n.pitch for n in scale_notes]
    assert [n.technique for n in loaded] == [n.technique for n in scale_notes]
    for a, b in zip(loaded, scale_notes):
        assert a.onset == pytest.approx(b.onset, abs=1e-3)
        assert a.offset == pytest.approx(b.offset, abs=1e-3)
        assert a.velocity == pytest.approx(b.velocity, abs=1 / 127)


# --- targets ----------------------------------------------------------------

def test_onset_on_frame_centre_peaks_at_one():
    rolls = generate_targets([NoteAnnotation(60, 0.10, 0.50, 0.7)], 100, 0.01)
    p = 60 - BEGIN_NOTE

    assert rolls.onset_reg[10, p] == pytest.approx(1.0)
    assert rolls.onset_reg[15, p] == pytest.approx(0.0, abs=1e-6)
    assert rolls.onset_reg[12, p] == pytest.approx(0.6)
    assert rolls.offset_reg[50, p] == pytest.approx(1.0)
    assert np.all(rolls.velocity[6:15, p] == pytest.approx(0.7))
    assert rolls.velocity[20, p] == 0.0


def test_off_grid_onset_splits_the_peak():
    rolls = generate_targets([NoteAnnotation(60, 0.105, 0.5)], 100, 0.01, J=5)
    p = 60 - BEGIN_NOTE
    assert rolls.onset_reg[10, p] == pytest.approx(0.9)
    assert rolls.onset_reg[11, p] == pytest.approx(0.9)


def test_frame_roll_covers_sounding_frames():
    rolls = generate_targets([NoteAnnotation(72, 0.10, 0.205)], 50, 0.01)
    p = 72 - BEGIN_NOTE
    assert np.flatnonzero(rolls.frame[:, p]).tolist() == list(range(10, 21))
    assert rolls.frame.sum() == 11


def test_frame_roll_matches_membership_oracle():
    rng = np.random.default_rng(5)
    dt, n_frames = 0.01, 300
    for _ in range(50):
        notes = []
        for _ in range(rng.integers(1, 11)):
            onset = float(rng.uniform(0.0, 2.5))
            notes.append(NoteAnnotation(int(rng.integers(55, 80)), onset, onset + float(rng.uniform(0.02, 0.4))))
        rolls = generate_targets(notes, n_frames, dt)

        times = np.arange(n_frames) * dt
        oracle = np.zeros_like(rolls.frame)
        for note in notes:
            oracle[(times >= note.onset) & (times < note.offset), note.pitch - BEGIN_NOTE] = 1.0
        assert np.array_equal(rolls.frame, oracle)
        assert rolls.onset_reg.max() <= 1.0
        assert rolls.offset_reg.max() <= 1.0


def test_constant_velocity_overrides_note_velocity():
    rolls = generate_targets([NoteAnnotation(60, 0.1, 0.3, 0.9)], 40, 0.01, constant_velocity=0.5)
    assert set(np.unique(rolls.velocity)) == {0.0, 0.5}


def test_overlapping_same_pitch_onsets_keep_both_peaks():
    notes = [NoteAnnotation(60, 0.10, 0.40), NoteAnnotation(60, 0.16, 0.30)]
    rolls = generate_targets(notes, 60, 0.01)
    p = 60 - BEGIN_NOTE
    assert rolls.onset_reg[10, p] == pytest.approx(1.0)
    assert rolls.onset_reg[16, p] == pytest.approx(1.0)
    assert rolls.onset_reg[13, p] == pytest.approx(0.4)


def test_targets_reject_bad_input():
    with pytest.raises(AnnotationError, match="pitch 60"):
        generate_targets([NoteAnnotation(60, 0.5, 2.0)], 100, 0.01)
    with pytest.raises(ContractError):
        generate_targets([], 0, 0.01)
    with pytest.raises(ContractError):
        generate_targets([], 10, 0.01, J=0)


def test_clip_notes_retimes_and_truncates():
    notes = [NoteAnnotation(60, 0.5, 1.0), NoteAnnotation(62, 1.5, 4.0), NoteAnnotation(64, 3.5, 3.8)]

    clipped = clip_notes(notes, 1.0, 2.0)

    assert len(clipped) == 1
    assert clipped[0].pitch == 62
    assert clipped[0].onset == pytest.approx(0.5)
    assert clipped[0].offset == pytest.approx(2.0)


# --- manifests and splits ----------------------------------------------------

def _manifest(tmp_path, pieces, performers=1, techniques=None):
    records = []
    for i in range(pieces):
        for k in range(performers):
            audio = tmp_path / f"p{i}_{k}.wav"
            midi = tmp_path / f"p{i}_{k}.mid"
            audio.touch()
            midi.touch()
            technique = techniques[i % len(techniques)] if techniques else None
            records.append(ManifestRecord(audio, midi, f"piece_{i}", f"perf_{k}", technique=technique))
    return DatasetManifest(records, tmp_path)


def test_manifest_save_load(tmp_path):
    manifest = _manifest(tmp_path, 3, 2, techniques=PLAYED_TECHNIQUES)
    path = tmp_path / "manifest.tsv"
    manifest.save(path)

    loaded = DatasetManifest.load(path)

    assert len(loaded) == 6
    assert [r.key for r in loaded] == [r.key for r in manifest]
    assert [r.technique for r in loaded] == [r.technique for r in manifest]
    assert all(r.audio_path.resolve() == o.audio_path.resolve() for r, o in zip(loaded, manifest))
    assert all(r.fold == -1 for r in loaded)
    assert "\t" in path.read_text().splitlines()[0]


def test_manifest_errors(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("audio_path\tpiece_id\nx.wav\tp\n")
    with pytest.raises(AnnotationError, match="lacks columns"):
        DatasetManifest.load(path)

    path.write_text("audio_path\tannotation_path\tpiece_id\tperformer_id\nmissing.wav\tmissing.mid\tp\tq\n")
    with pytest.raises(AnnotationError, match="missing file"):
        DatasetManifest.load(path)
    assert len(DatasetManifest.load(path, check_paths=False)) == 1

    with pytest.raises(AnnotationError, match="duplicate"):
        record = ManifestRecord(tmp_path / "a", tmp_path / "b", "p", "q")
        DatasetManifest([record, record])



def test_manifest_views_keep_the_original(tmp_path):
    manifest = _manifest(tmp_path, 3, 2)

    picked = manifest.filter_pieces(["piece_2", "piece_0", "piece_9"])
    relabelled = picked.with_split("test")

    assert manifest.pieces == ["piece_0", "piece_1", "piece_2"]
    assert picked.pieces == ["piece_0", "piece_2"]
    assert len(picked) == 4 and picked.root == tmp_path
    assert {r.split for r in relabelled} == {"test"}
    assert {r.split for r in manifest} == {""}
    assert manifest.filter_pieces([]).pieces == []

def test_make_split_holds_out_every_performer(tmp_path):
    manifest = _manifest(tmp_path, 10, 2)

    train, val = make_split(manifest, "piece_3")

    assert len(val) == 2
    assert {r.piece_id for r in val} == {"piece_3"}
    assert len(train) == 18
    assert {r.split for r in train} == {"train"}
    assert {r.split for r in val} == {"validation"}
    with pytest.raises(SplitError):
        make_split(manifest, "piece_99")


def test_make_split_partitions_random_manifests(tmp_path):
    rng = np.random.default_rng(0)
    manifest = _manifest(tmp_path, 12, 3)
    for _ in range(100):
        keep = [r for r in manifest if rng.random() < 0.6] or [manifest[0]]
        sub = manifest.subset(keep)
        piece = keep[int(rng.integers(len(keep)))].piece_id
        train, val = make_split(sub, piece)
        train_keys = {r.key for r in train}
        val_keys = {r.key for r in val}
        assert train_keys | val_keys == {r.key for r in sub}
        assert not train_keys & val_keys


def test_kfold_rotations(tmp_path):
    manifest = _manifest(tmp_path, 9, techniques=[Technique.DETACHE, Technique.PIZZICATO, Technique.SPICCATO])

    rotations = kfold(manifest, 3, seed=1)

    assert len(rotations) == 3
    assert all(len(r.test) == 3 and len(r.validation) == 6 for r in rotations)
    covered = [rec.key for r in rotations for rec in r.test]
    assert sorted(covered) == sorted(rec.key for rec in manifest)


def test_folds_are_balanced_by_technique(tmp_path):
    manifest = _manifest(tmp_path, 12, techniques=PLAYED_TECHNIQUES)

    folded = assign_folds(manifest, 3, seed=4)

    for technique in PLAYED_TECHNIQUES:
        counts = [sum(1 for r in folded if r.technique == technique and r.fold == f) for f in range(3)]
        assert max(counts) - min(counts) <= 1
    assert [r.fold for r in folded] == [r.fold for r in assign_folds(manifest, 3, seed=4)]


def test_kfold_errors(tmp_path):
    manifest = _manifest(tmp_path, 2)
    with pytest.raises(SplitError):
        kfold(manifest, 3)
    with pytest.raises(SplitError):
        kfold(manifest, 1)


def test_write_assignments(tmp_path):
    manifest = _manifest(tmp_path, 4, 2)
    train, val = make_split(manifest, "piece_0")

    paths = write_assignments(tmp_path / "splits", train=train, validation=val)

    assert [p.name for p in paths] == ["train.tsv", "validation.tsv"]
    reloaded = DatasetManifest.load(paths[1])
    assert {r.split for r in reloaded} == {"validation"}
    assert len(reloaded) == 2
