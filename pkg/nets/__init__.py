from .transcription import (
    FramePredictions,
    LossBreakdown,
    TranscriptionNet,
    TranscriptionParams,
    compute_losses,
    init_from_checkpoint,
    predict,
    transcription_loss,
)
from .articulation import (
    ABLATION_PRESETS,
    AblationMask,
    ArticulationClassifier,
    ArticulationNet,
    ArticulationParams,
    NoteWindow,
    ablation_preset,
    articulation_loss,
    classify_note,
    make_note_window,
)
from .checkpoint import ARTICULATION_SECTION, TRANSCRIPTION_SECTION, load_checkpoint, model_hash, save_checkpoint
