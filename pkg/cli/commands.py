"""
Обработчики команд CLI. Каждый получает разобранные аргументы и GlobalConfig, возвращает код выхода.
"""

import logging
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Tuple

from annotations.manifest import DatasetManifest
from annotations.splits import kfold, make_split, write_assignments
from common.errors import ContractError
from common.utils import DEFAULT_WORKERS, get_device, write_jsonl
from decoding.io import read_notes
from decoding.pipeline import Transcriber
from evaluation.metrics import matched_technique_metrics, note_metrics
from evaluation.reports import write_eval_report, write_technique_report
from nets.articulation import ABLATION_PRESETS, ablation_preset
from synth.corpus import build_corpus, build_scale_corpus
from synth.renderers import BuiltinRenderer, ExternalRenderer
from training.articulation import train_articulation
from training.kfold import run_ablation
from training.transcription import train_transcription
from .config import GlobalConfig

logger = logging.getLogger(__name__)

NOTE_SUFFIXES = (".notes.jsonl", ".jsonl", ".mid", ".midi")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _renderer(spec: str):
    if not spec or spec == "builtin":
        return BuiltinRenderer()
    return ExternalRenderer(spec)


def cmd_synth_corpus(args, config: GlobalConfig) -> int:
    out = _out_dir(args)
    renderer = _renderer(args.renderer)
    workers = args.workers or DEFAULT_WORKERS
    if args.scales:
        spec = config.scales
        if args.technique:
            spec = replace(spec, technique=args.technique)
        if args.pieces:
            spec = replace(spec, pieces=args.pieces)
        manifest = build_scale_corpus(spec, out, renderer, workers)
    else:
        spec = config.corpus
        if args.notes_per_technique:
            spec = replace(spec, notes_per_technique=args.notes_per_technique)
        if args.include_none:
            spec = replace(spec, include_no_technique=True)
        manifest = build_corpus(spec, out, renderer, workers)
    config.save(out / "config.json")
    print(f"{len(manifest)} records -> {out / 'manifest.tsv'}")
    return 0


def _train_config(base, args):
    updates = {}
    if getattr(args, "steps", None):
        updates["steps"] = args.steps
    if getattr(args, "batch_size", None):
        updates["batch_size"] = args.batch_size
    if getattr(args, "no_augment", False):
        updates["augment"] = False
    if getattr(args, "init_checkpoint", None):
        updates["init_checkpoint"] = str(args.init_checkpoint)
    return replace(base, **updates)


def _load_train_val(args) -> Tuple[DatasetManifest, DatasetManifest]:
    train = DatasetManifest.load(args.train)
    val = DatasetManifest.load(args.val) if args.val else None
    if getattr(args, "held_out", None):
        train, val = make_split(train, args.held_out)
    return train, val


def cmd_train_transcription(args, config: GlobalConfig) -> int:
    train, val = _load_train_val(args)
    result = train_transcription(
        train, _train_config(config.train_transcription, args), _out_dir(args),
        params=config.transcription, mel_config=config.mel, augmentation=config.augmentation,
        val_manifest=val, config_hash=config.config_hash, resume_from=args.resume, device=get_device(),
    )
    print(result.checkpoint)
    return 0


def cmd_train_articulation(args, config: GlobalConfig) -> int:
    train, val = _load_train_val(args)
    result = train_articulation(
        train, _train_config(config.train_articulation, args), _out_dir(args), args.transcription,
        mask=ablation_preset(args.ablation), params=config.articulation, mel_config=config.mel,
        val_manifest=val, config_hash=config.config_hash, device=get_device(),
    )
    print(result.best_checkpoint or result.checkpoint)
    return 0


def cmd_transcribe(args, config: GlobalConfig) -> int:
    out = _out_dir(args)
    transcriber = Transcriber.from_checkpoints(args.transcription, args.articulation, config.decode, get_device())
    for audio in args.audio:
        outcome = transcriber.transcribe_file(audio, out)
        print(f"{audio}: {outcome['message']} -> {outcome['midi']}")
        result = outcome["result"]
        if result.embeddings is not None and len(result.notes):
            write_jsonl(out / f"{Path(audio).stem}.embeddings.jsonl", (
                {"note_id": f"{Path(audio).stem}#{i}", "true": None, "pred": n.technique.label,
                 "embedding": [float(x) for x in vec]}
                for i, (n, vec) in enumerate(zip(result.notes, result.embeddings))
            ))
    return 0


def _stem(path: Path) -> str:
    name = path.name
    for suffix in NOTE_SUFFIXES:
        if name.lower().endswith(suffix):
            return name[: -len(suffix)]
    return path.stem


def _note_files(path: Path) -> Dict[str, Path]:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.name.lower().endswith(NOTE_SUFFIXES))
        return {_stem(p): p for p in files}
    return {_stem(path): path}


def _pair_files(ref: Path, est: Path) -> List[Tuple[str, Path, Path]]:
    if ref.is_file() and est.is_file():
        return [(_stem(ref), ref, est)]
    refs, ests = _note_files(ref), _note_files(est)
    common = sorted(set(refs) & set(ests))
    missing = sorted(set(refs) - set(ests))
    if missing:
        logger.warning(f"Нет оценок для {len(missing)} пьес: {missing[:5]}")
    if not common:
        raise ContractError(f"no matching note files between {ref} and {est}")
    return [(name, refs[name], ests[name]) for name in common]


def cmd_evaluate(args, config: GlobalConfig) -> int:
    out = _out_dir(args)
    per_piece, notes = {}, []
    for name, ref_path, est_path in _pair_files(Path(args.ref), Path(args.est)):
        ref, est = read_notes(ref_path), read_notes(est_path)
        per_piece[name] = note_metrics(ref, est, config.tolerance)
        notes.append((ref, est))

    write_eval_report(out, per_piece, config.meta())
    techniques = matched_technique_metrics(notes, config.tolerance)
    if techniques is not None:
        write_technique_report(out, techniques, config.meta(), plot=not args.no_plot)
    mean_f1 = sum(r.f1 for r in per_piece.values()) / len(per_piece)
    mean_f1_no = sum(r.f1_no_offset for r in per_piece.values()) / len(per_piece)
    print(f"F1={mean_f1:.4f} F1_no={mean_f1_no:.4f} over {len(per_piece)} piece(s)")
    return 0


def cmd_ablate(args, config: GlobalConfig) -> int:
    train = DatasetManifest.load(args.train)
    evaluation = DatasetManifest.load(args.eval)
    presets = ABLATION_PRESETS
    if args.only:
        presets = {name: mask for name, mask in ABLATION_PRESETS.items()
                   if ablation_preset(args.only) == mask}
    results = run_ablation(
        train, evaluation, args.folds, _train_config(config.train_articulation, args), _out_dir(args),
        args.transcription, presets=presets, params=config.articulation, config_hash=config.config_hash,
        meta=config.meta(), device=get_device(),
    )
    for name, result in results.items():
        print(f"{name}: {100 * result.macro_mean:.2f} ± {100 * result.macro_std:.2f}")
    return 0


def cmd_split(args, config: GlobalConfig) -> int:
    out = _out_dir(args)
    manifest = DatasetManifest.load(args.manifest)
    if args.held_out:
        train, val = make_split(manifest, args.held_out)
        write_assignments(out, train=train, validation=val)
    if args.folds:
        for rotation in kfold(manifest, args.folds, config.seed):
            write_assignments(out / f"rotation_{rotation.rotation}", test=rotation.test,
                              validation=rotation.validation)
    if not args.held_out and not args.folds:
        raise ContractError("split needs --held-out PIECE and/or --folds K")
    print(out)
    return 0
