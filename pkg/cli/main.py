"""
Точка входа: python -m cli <команда> [опции]
"""

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from dotenv import load_dotenv

from nets.articulation import ABLATION_PRESETS
from . import commands
from .config import load_config

load_dotenv()

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON config (default: $VPT_CONFIG)")
    parser.add_argument("--seed", type=int, help="global seed, inherited by sections without their own")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    parser.add_argument("--log-level", default=os.getenv("LOG_LEVEL", "INFO"),
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="violin-technique", description="Technique-aware violin transcription")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-corpus", help="render the synthetic technique corpus")
    _common(p)
    p.add_argument("--notes-per-technique", type=int)
    p.add_argument("--renderer", default="builtin", help="'builtin', an http(s) URL or a command line")
    p.add_argument("--workers", type=int)
    p.add_argument("--scales", action="store_true", help="render 10 s scale pieces instead of single notes")
    p.add_argument("--technique", help="play every scale note with this technique")
    p.add_argument("--pieces", type=int)
    p.add_argument("--include-none", action="store_true", help="also render notes labelled 'none'")
    p.set_defaults(func=commands.cmd_synth_corpus)

    p = sub.add_parser("train-transcription", help="train the frame-level transcription network")
    _common(p)
    p.add_argument("--train", required=True, help="training manifest (TSV)")
    p.add_argument("--val", help="validation manifest")
    p.add_argument("--held-out", help="piece id moved from --train into validation")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--init-checkpoint", help="warm start from a (piano) checkpoint")
    p.add_argument("--resume", help="continue from a checkpoint of this run")
    p.set_defaults(func=commands.cmd_train_transcription)

    p = sub.add_parser("train-articulation", help="train the technique classifier")
    _common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--val")
    p.add_argument("--held-out")
    p.add_argument("--transcription", required=True, help="frozen transcription checkpoint")
    p.add_argument("--ablation", default="No ablation", choices=list(ABLATION_PRESETS))
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.set_defaults(func=commands.cmd_train_articulation)

    p = sub.add_parser("transcribe", help="transcribe audio files to MIDI + note lists")
    _common(p)
    p.add_argument("audio", nargs="+")
    p.add_argument("--transcription", required=True)
    p.add_argument("--articulation", help="technique classifier checkpoint")
    p.set_defaults(func=commands.cmd_transcribe)

    p = sub.add_parser("evaluate", help="note-level and technique metrics")
    _common(p)
    p.add_argument("--ref", required=True, help="reference notes file or directory")
    p.add_argument("--est", required=True, help="estimated notes file or directory")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=commands.cmd_evaluate)

    p = sub.add_parser("ablate", help="k-fold feature ablation of the technique classifier")
    _common(p)
    p.add_argument("--train", required=True, help="synthetic training manifest")
    p.add_argument("--eval", required=True, help="manifest of real recordings, split into folds")
    p.add_argument("--transcription", required=True)
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--only", help="run a single ablation condition")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.set_defaults(func=commands.cmd_ablate)

    p = sub.add_parser("split", help="write train/validation or k-fold manifests")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--held-out")
    p.add_argument("--folds", type=int)
    p.set_defaults(func=commands.cmd_split)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT, force=True)
    try:
        config = load_config(args.config, args.set, args.seed)
        return args.func(args, config)
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 130
    except Exception as e:
        if logger.isEnabledFor(logging.DEBUG):
            logger.exception(f"❌ Команда {args.command} упала")
        cause = (str(e).strip().splitlines() or [type(e).__name__])[0]
        print(f"error: {cause}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
