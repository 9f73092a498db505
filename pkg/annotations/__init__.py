from .technique import Technique, PLAYED_TECHNIQUES, NUM_TECHNIQUES
from .notes import BEGIN_NOTE, END_NOTE, PITCH_BINS, NoteAnnotation, clip_notes
from .midi import load_midi, write_midi
from .targets import DEFAULT_J, TargetRolls, generate_targets
from .manifest import DatasetManifest, ManifestRecord
from .splits import FoldAssignment, make_split, assign_folds, kfold, write_assignments
