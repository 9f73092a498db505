from .metrics import (
    EvalReport,
    TechniqueReport,
    ToleranceSpec,
    match_notes,
    matched_technique_metrics,
    note_metrics,
    technique_metrics,
)
from .reports import (
    summarize_ablation,
    write_ablation_summary,
    write_embeddings,
    write_eval_report,
    write_technique_report,
)
