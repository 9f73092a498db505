from .schedule import ARTICULATION_DEFAULTS, TRANSCRIPTION_DEFAULTS, TrainConfig, cosine_lr
from .transcription import TrainResult, train_transcription
from .articulation import train_articulation
from .kfold import KFoldResult, run_ablation, run_kfold
