"""Command-line entry point: ``drnnsep <subcommand> [options]``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import ConfigurationError, FormatError
from ..evaluation import PER_CLIP_FIELDS, SUMMARY_FIELDS, write_csv
from ..signal import read_wav
from .config import ExperimentConfig
from .experiment import (
    CONFIG_NAME,
    MATCHED,
    build_corpus,
    load_split,
    manifest_hash,
    run_sweep,
    score_split,
    separate_files,
    summarize,
    train_from_manifest,
    train_nmf_from_manifest,
)

log = logging.getLogger("drnnsep")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Problem with the command line or configuration (exit code 2)."""


def _load_config(args, need_paths=True) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.set("experiment", "seed", args.seed)
    problems = cfg.validate(need_paths=need_paths)
    if problems:
        raise UsageError("invalid configuration:\n  " + "\n  ".join(problems))
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_manifest(args) -> Path:
    if not args.manifest:
        raise UsageError("--manifest is required")
    path = Path(args.manifest)
    if not path.is_file():
        raise UsageError(f"manifest not found: {path}")
    return path


def cmd_mix(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    if (out / "manifest.csv").exists():
        raise UsageError(f"{out / 'manifest.csv'} already exists; choose another --out")
    cfg.save(out / CONFIG_NAME)
    manifest = build_corpus(cfg, out)
    print(f"wrote {manifest}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args, need_paths=False)
    manifest = _require_manifest(args)
    out = _out_dir(args)
    cfg.save(out / CONFIG_NAME)
    result = train_from_manifest(cfg, manifest, out)
    print(f"best dev loss {result.best_dev_loss:.6g} at iteration {result.best_iteration}")
    print(f"wrote {out / 'model.drnn'}")
    return EXIT_OK


def cmd_nmf_train(args) -> int:
    cfg = _load_config(args, need_paths=False)
    manifest = _require_manifest(args)
    out = _out_dir(args)
    cfg.save(out / CONFIG_NAME)
    train_nmf_from_manifest(cfg, manifest, out)
    print(f"wrote {out / 'bases.nmf'}")
    return EXIT_OK


def cmd_separate(args) -> int:
    if bool(args.manifest) == bool(args.inputs):
        raise UsageError("give either --manifest or mixture WAV files")
    out = _out_dir(args)
    if args.manifest:
        triples = load_split(_require_manifest(args), args.split, sample_rate=None)
        mixtures = [(t.clip_id, t.mixture) for t in triples]
        if not mixtures:
            raise UsageError(f"manifest has no clips in split {args.split!r}")
    else:
        for p in args.inputs:
            if not Path(p).is_file():
                raise UsageError(f"mixture not found: {p}")
        mixtures = [(Path(p).stem, read_wav(p, None, None)) for p in args.inputs]
    written = separate_files(args.model, mixtures, out)
    print(f"wrote {2 * len(written)} estimate files to {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    manifest = _require_manifest(args)
    out = _out_dir(args)
    triples = load_split(manifest, args.split, sample_rate=None)
    if not triples:
        raise UsageError(f"manifest has no clips in split {args.split!r}")
    rows = score_split(triples, args.estimates, args.model_name, args.condition)
    summary = summarize(rows)
    write_csv(out / "per_clip.csv", rows, PER_CLIP_FIELDS)
    write_csv(out / "summary.csv", summary, SUMMARY_FIELDS)
    for r in summary:
        print(f"{r['model']} {r['condition']} source {r['source']}: GNSDR {r['GNSDR']:.2f} "
              f"GSIR {r['GSIR']:.2f} GSAR {r['GSAR']:.2f} GSDR {r['GSDR']:.2f}")
    print(f"manifest sha256 {manifest_hash(manifest)}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    if (out / "corpus").exists():
        raise UsageError(f"{out / 'corpus'} already exists; choose another --out")
    res = run_sweep(cfg, out)
    for r in res["summary"]:
        if r.get("status") == "ok":
            print(f"{r['model']:>12} {r['condition']:>10} src{r['source']}  GSDR {r['GSDR']:7.2f}  "
                  f"GSIR {r['GSIR']:7.2f}  GSAR {r['GSAR']:7.2f}  GNSDR {r['GNSDR']:7.2f}")
        else:
            print(f"{r['model']:>12} {r.get('status')}")
    print(f"wrote {out / 'summary.csv'} ({len(res['per_clip'])} per-clip rows)")
    return EXIT_FAILURE if res["failed"] else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drnnsep", description="Monaural source separation with masked deep (recurrent) networks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, manifest=False, seed=True):
        if config:
            p.add_argument("--config", help="experiment config (INI)")
        if seed:
            p.add_argument("--seed", type=int, help="override experiment.seed")
        if manifest:
            p.add_argument("--manifest", help="corpus manifest CSV written by `mix`")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("mix", help="generate or ingest a corpus and write mixtures plus a manifest")
    common(p)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("train", help="train a network on the train split of a manifest")
    common(p, manifest=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("nmf-train", help="learn NMF bases for both sources")
    common(p, manifest=True)
    p.set_defaults(func=cmd_nmf_train)

    p = sub.add_parser("separate", help="separate mixtures with a model or NMF basis file")
    common(p, config=False, manifest=True, seed=False)
    p.add_argument("--model", required=True, help="model (.drnn) or basis (.nmf) file")
    p.add_argument("--split", default="test", help="manifest split to separate (default: test)")
    p.add_argument("inputs", nargs="*", help="mixture WAV files (instead of --manifest)")
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("evaluate", help="score estimates against the manifest's clean sources")
    common(p, config=False, manifest=True, seed=False)
    p.add_argument("--estimates", required=True, help="directory of <clip_id>_est{1,2}.wav files")
    p.add_argument("--split", default="test")
    p.add_argument("--model-name", default="model")
    p.add_argument("--condition", default=MATCHED)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="train and evaluate every variant of a sweep config")
    common(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with code 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigurationError) as exc:
        print(f"drnnsep {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, FileExistsError, FormatError, ValueError, ArithmeticError, OSError) as exc:
        print(f"drnnsep {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
