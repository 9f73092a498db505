import numpy as np
import pytest
import torch

from annotations.notes import NoteAnnotation
from annotations.technique import Technique
from audio.frontend import AudioClip, MelConfig
from nets.articulation import ArticulationParams
from nets.transcription import TranscriptionParams
from synth.corpus import CorpusSpec, build_corpus
from helpers import RATE, sine


@pytest.fixture
def sine_clip():
    def make(freq=440.0, duration=1.0, amplitude=0.5):
        return AudioClip(sine(freq, duration, amplitude), RATE)
    return make


@pytest.fixture
def tiny_mel():
    return MelConfig(n_mels=16)


@pytest.fixture
def tiny_transcription_params():
    return TranscriptionParams(conv_channels=(2, 2, 2, 2), gru_width=4, fc_width=8, n_mels=16, dropout=0.0)


@pytest.fixture
def tiny_articulation_params():
    return ArticulationParams(conv_channels=(2, 2, 2, 2), acoustic_dim=4, feature_dim=4, n_mels=16,
                              window_frames=16, dropout=0.0)


@pytest.fixture
def scale_notes():
    techniques = [Technique.DETACHE, Technique.PIZZICATO, Technique.SPICCATO, Technique.FLAGEOLET]
    return [
        NoteAnnotation(60 + 2 * i, 0.1 + 0.4 * i, 0.4 + 0.4 * i, 0.8, techniques[i % 4])
        for i in range(4)
    ]


@pytest.fixture(autouse=True)
def _seeded():
    torch.manual_seed(0)
    np.random.seed(0)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """Маленький корпус встроенного синтезатора: по 2 ноты на технику."""
    out = tmp_path_factory.mktemp("corpus")
    build_corpus(CorpusSpec(notes_per_technique=2, duration_range=(0.3, 0.5), seed=7), out)
    return out
