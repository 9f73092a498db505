import json

import pytest
import soundfile as sf

from annotations.manifest import DatasetManifest
from annotations.midi import write_midi
from annotations.technique import Technique
from cli.config import GlobalConfig, build_config, load_config, parse_overrides
from cli.main import main
from common.errors import ConfigError
from decoding.io import write_notes_jsonl
from decoding.notes import NoteEvent
from nets.checkpoint import TRANSCRIPTION_SECTION, save_checkpoint
from nets.transcription import TranscriptionNet
from helpers import RATE, sine


# --- config -------------------------------------------------------------------

def test_parse_overrides():
    parsed = parse_overrides(["train_transcription.steps=500", "seed=3", "decode.onset_threshold=0.4",
                              "scales.technique=spiccato"])

    assert parsed == {"train_transcription": {"steps": 500}, "": {"seed": 3},
                      "decode": {"onset_threshold": 0.4}, "scales": {"technique": "spiccato"}}
    with pytest.raises(ConfigError):
        parse_overrides(["no_equals_sign"])


def test_defaults_and_seed_inheritance():
    config = load_config(None, ["corpus.seed=9"], seed=4)

    assert config.seed == 4
    assert config.corpus.seed == 9
    assert config.scales.seed == 4
    assert config.train_transcription.seed == 4
    assert config.train_articulation.seed == 4
    assert config.meta()["config"] == "<defaults>"


def test_config_hash_is_stable_and_sensitive(tmp_path):
    a = load_config(None, ["train_transcription.steps=500"])
    b = load_config(None, ["train_transcription.steps=500"])
    c = load_config(None, ["train_transcription.steps=501"])

    assert a.config_hash == b.config_hash
    assert a.config_hash != c.config_hash
    assert len(a.config_hash) == 64

    a.save(tmp_path / "config.json")
    reloaded = load_config(tmp_path / "config.json")
    assert reloaded.config_hash == a.config_hash


def test_saved_config_uses_plain_values(tmp_path):
    path = tmp_path / "config.json"
    GlobalConfig().save(path)

    data = json.loads(path.read_text())

    assert set(data) >= {"mel", "corpus", "scales", "decode", "tolerance", "seed"}
    assert data["corpus"]["duration_range"] == [0.3, 2.0]


@pytest.mark.parametrize("data, key", [
    ({"bogus": {}}, "bogus"),
    ({"decode": {"no_such_key": 1}}, "decode.no_such_key"),
    ({"seed": "zero"}, "seed"),
    ({"decode": {"onset_threshold": 2.0}}, "decode"),
    ({"mel": 5}, "mel"),
])
def test_build_config_errors(data, key):
    with pytest.raises(ConfigError) as info:
        build_config(data)
    assert info.value.key == key


def test_load_config_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json")

    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(broken)

    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="top level"):
        load_config(listed)


def test_file_values_are_overridden_on_the_command_line(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"seed": 2, "decode": {"onset_threshold": 0.4, "frame_threshold": 0.3}}))

    config = load_config(path, ["decode.onset_threshold=0.6"])

    assert config.decode.onset_threshold == 0.6
    assert config.decode.frame_threshold == 0.3
    assert config.seed == 2
    assert config.meta()["config"] == str(path)


# --- commands -----------------------------------------------------------------

def test_split_command(tmp_path, corpus_dir, capsys):
    manifest = DatasetManifest.load(corpus_dir / "manifest.tsv")
    held_out = manifest.pieces[0]
    out = tmp_path / "split"

    code = main(["split", "--manifest", str(corpus_dir / "manifest.tsv"), "--held-out", held_out,
                 "--folds", "2", "--out", str(out)])

    assert code == 0
    train = DatasetManifest.load(out / "train.tsv")
    val = DatasetManifest.load(out / "validation.tsv")
    assert len(train) + len(val) == len(manifest)
    assert val.pieces == [held_out]
    for rotation in (0, 1):
        test = DatasetManifest.load(out / f"rotation_{rotation}" / "test.tsv")
        assert len(test) == len(manifest) // 2
    assert str(out) in capsys.readouterr().out


def test_split_without_mode_fails(tmp_path, corpus_dir, capsys):
    code = main(["split", "--manifest", str(corpus_dir / "manifest.tsv"), "--out", str(tmp_path)])

    assert code == 1
    assert capsys.readouterr().err.startswith("error: split needs")


def test_synth_corpus_command(tmp_path, capsys):
    out = tmp_path / "corpus"

    code = main(["synth-corpus", "--out", str(out), "--notes-per-technique", "1", "--workers", "1",
                 "--set", "corpus.duration_range=[0.3,0.4]", "--seed", "5"])

    assert code == 0
    manifest = DatasetManifest.load(out / "manifest.tsv")
    assert {r.technique for r in manifest} == {Technique.FLAGEOLET, Technique.DETACHE, Technique.PIZZICATO,
                                              Technique.SPICCATO}
    saved = json.loads((out / "config.json").read_text())
    assert saved["seed"] == 5 and saved["corpus"]["seed"] == 5
    assert "4 records" in capsys.readouterr().out


def test_bad_config_reports_one_line(tmp_path, capsys):
    code = main(["split", "--manifest", "x.tsv", "--folds", "2", "--out", str(tmp_path),
                 "--set", "decode.no_such_key=1"])

    err = capsys.readouterr().err
    assert code == 1
    assert err.startswith("error: unknown key(s) in 'decode'")
    assert len(err.strip().splitlines()) == 1


def _notes(*techniques):
    return [NoteEvent(60 + 2 * i, 0.5 * i, 0.5 * i + 0.3, 0.7, t) for i, t in enumerate(techniques)]


def test_evaluate_command(tmp_path, capsys):
    ref_dir, est_dir, out = tmp_path / "ref", tmp_path / "est", tmp_path / "report"
    ref_dir.mkdir()
    est_dir.mkdir()
    ref = _notes(Technique.DETACHE, Technique.PIZZICATO, Technique.SPICCATO)
    est = _notes(Technique.DETACHE, Technique.DETACHE, Technique.SPICCATO)
    write_notes_jsonl(ref, ref_dir / "piece_a.notes.jsonl")
    write_notes_jsonl(est, est_dir / "piece_a.notes.jsonl")
    write_notes_jsonl(ref, ref_dir / "piece_b.notes.jsonl")

    code = main(["evaluate", "--ref", str(ref_dir), "--est", str(est_dir), "--out", str(out), "--no-plot"])

    assert code == 0
    assert "F1=1.0000" in capsys.readouterr().out
    tsv = (out / "notes_report.tsv").read_text()
    assert tsv.startswith("# config_hash: ")
    assert "piece_a" in tsv and "piece_b" not in tsv
    table = (out / "technique_report.md").read_text()
    assert "| Pizzicato | 0.00 | 1 |" in table
    assert not (out / "technique_confusion.png").exists()


def test_evaluate_with_no_common_pieces_fails(tmp_path, capsys):
    ref_dir, est_dir = tmp_path / "ref", tmp_path / "est"
    ref_dir.mkdir()
    est_dir.mkdir()
    write_notes_jsonl(_notes(Technique.DETACHE), ref_dir / "a.notes.jsonl")
    write_notes_jsonl(_notes(Technique.DETACHE), est_dir / "b.notes.jsonl")

    code = main(["evaluate", "--ref", str(ref_dir), "--est", str(est_dir), "--out", str(tmp_path / "r")])

    assert code == 1
    assert "no matching note files" in capsys.readouterr().err


def test_evaluate_midi_reference_against_jsonl(tmp_path, scale_notes, capsys):
    # эталон в MIDI, оценка в jsonl
    write_midi(scale_notes, tmp_path / "ref.mid")
    write_notes_jsonl([NoteEvent(n.pitch, n.onset, n.offset, n.velocity, n.technique) for n in scale_notes],
                      tmp_path / "est.notes.jsonl")

    code = main(["evaluate", "--ref", str(tmp_path / "ref.mid"), "--est", str(tmp_path / "est.notes.jsonl"),
                 "--out", str(tmp_path / "r"), "--no-plot"])

    assert code == 0
    assert "F1=1.0000" in capsys.readouterr().out


def test_transcribe_command(tmp_path, tiny_mel, tiny_transcription_params, capsys):
    checkpoint = save_checkpoint(tmp_path / "t.pt", TRANSCRIPTION_SECTION, TranscriptionNet(tiny_transcription_params),
                                 tiny_transcription_params, tiny_mel, "h")
    audio = tmp_path / "take.wav"
    sf.write(str(audio), sine(440.0, 0.5, 0.4), RATE)
    out = tmp_path / "out"

    code = main(["transcribe", str(audio), "--transcription", str(checkpoint), "--out", str(out)])

    assert code == 0
    assert (out / "take.mid").exists()
    assert (out / "take.notes.jsonl").exists()
    assert "notes ->" in capsys.readouterr().out
