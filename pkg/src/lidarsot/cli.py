"""Command-line entry point: ``python -m lidarsot <subcommand> ...``.

Exit status is 0 on success, 1 for invalid input (bad flags, malformed
config or data files) and 2 when a run fails or a check does not pass.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, default_config, load_config, toy_config
from .dataio import FormatError, SequenceSample, SynthSpec, load_kitti_track, read_track_file, synth_sequence, write_track_file
from .evalkit import CategoryResult, aggregate, ope_metrics
from .model import PyramidTracker
from .numerics import load_checkpoint, save_checkpoint
from .numerics.checkpoint import CheckpointError
from .supervision import format_breakdown
from .tracker import track_sequence
from .training import Trainer

log = logging.getLogger("lidarsot")

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2


class UsageError(Exception):
    """Raised by the argument parser instead of exiting."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _config(path: str | None, fallback=default_config) -> RunConfig:
    return load_config(path) if path else fallback()


def resolve_sequence(spec: str, cfg: RunConfig) -> SequenceSample:
    """``synthetic[:k=v,...]`` or ``<sequence>:<track id>`` under ``data.root``."""
    if spec.startswith("synthetic"):
        return synth_sequence(SynthSpec.parse(spec))
    seq, sep, track = spec.partition(":")
    if not sep or not seq.isdigit() or not track.isdigit():
        raise ValueError(f"sequence must be 'synthetic[:...]' or '<seq>:<track>', got {spec!r}")
    if not cfg.data.root:
        raise ConfigError("data.root must be set to load dataset sequences")
    return load_kitti_track(cfg.data.root, int(seq), int(track), cfg.data.category or None)


# -- subcommands -----------------------------------------------------------------
def cmd_train(args) -> int:
    cfg = _config(args.config)
    if args.seed is not None:
        cfg.train.seed = args.seed
    if args.epochs is not None:
        cfg.train.epochs = args.epochs
    cfg.validate()
    seqs = [resolve_sequence(s, cfg) for s in (args.sequence or ["synthetic"])]
    model = PyramidTracker(cfg, seed=cfg.train.seed)
    trainer = Trainer(model, seqs, lr=args.lr)
    steps = args.steps if args.steps is not None else cfg.train.epochs * trainer.steps_per_epoch
    for _ in range(steps):
        parts = trainer.step(args.batch)
        print(format_breakdown(trainer.step_count, parts), flush=True)
    if trainer.skipped:
        print(f"skipped {trainer.skipped} samples with empty regions")
    if args.checkpoint:
        save_checkpoint(args.checkpoint, model.state_dict(), cfg.digest())
        print(f"checkpoint written to {args.checkpoint}")
    return EXIT_OK


def cmd_track(args) -> int:
    cfg = _config(args.config)
    model = PyramidTracker(cfg, seed=cfg.train.seed)
    state, digest = load_checkpoint(args.checkpoint)
    if digest != cfg.digest():
        log.warning("checkpoint was written under a different configuration")
    model.load_state_dict(state)
    seq = resolve_sequence(args.sequence, cfg)
    result = track_sequence(model, seq.frames, seq.boxes[0])
    write_track_file(args.out, result.boxes, result.flags)
    if args.gt_out:
        write_track_file(args.gt_out, seq.boxes)
    lost = sum(f == "lost" for f in result.flags)
    print(f"tracked {len(result.boxes)} frames ({lost} lost) -> {args.out}")
    return EXIT_OK


def _track_files(path: Path) -> dict[str, Path]:
    if path.is_dir():
        return {p.name: p for p in sorted(path.iterdir()) if p.is_file()}
    return {path.name: path}


def cmd_eval(args) -> int:
    pred_files, gt_files = _track_files(Path(args.pred)), _track_files(Path(args.gt))
    if Path(args.pred).is_dir() != Path(args.gt).is_dir():
        raise ValueError("--pred and --gt must both be files or both be directories")
    if Path(args.pred).is_dir():
        missing = sorted(set(gt_files) - set(pred_files))
        if missing:
            raise ValueError(f"no predictions for: {', '.join(missing)}")
        pairs = [(pred_files[k], gt_files[k]) for k in gt_files]
    else:
        pairs = [(next(iter(pred_files.values())), next(iter(gt_files.values())))]
    pred_all, gt_all = [], []
    for pf, gf in pairs:
        gt, _ = read_track_file(gf)
        size = (gt[0].w, gt[0].l, gt[0].h) if gt else None
        pred, _ = read_track_file(pf, size=None if _has_size(pf) else size)
        if len(pred) != len(gt):
            raise ValueError(f"{pf}: {len(pred)} frames but ground truth has {len(gt)}")
        pred_all += pred
        gt_all += gt
    success, precision = ope_metrics(pred_all, gt_all)
    report = aggregate([CategoryResult(args.category, success, precision, len(gt_all))])
    report.write(args.out)
    print(report.table())
    return EXIT_OK


def _has_size(path: Path) -> bool:
    return any(line.startswith("# size") for line in path.read_text().splitlines())


def _report_checks(results) -> int:
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_FAILED


def cmd_gradcheck(args) -> int:
    from .diagnostics import gradcheck_suite

    cfg = _config(args.config, fallback=toy_config)
    cfg.train.dtype = "float64"
    return _report_checks(gradcheck_suite(cfg, seed=args.seed))


def cmd_selftest(args) -> int:
    from .diagnostics import selftest

    return _report_checks(selftest(quick=not args.full, seed=args.seed))


# -- parser ------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lidarsot", description="LiDAR single-object tracker: train, track, evaluate, self-check.")
    p.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train on one or more sequences")
    t.add_argument("--config", required=True)
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--steps", type=int, help="optimizer steps (overrides epochs)")
    t.add_argument("--batch", type=int, default=1, help="samples per step")
    t.add_argument("--lr", type=float, help="base learning rate (overrides train.lr)")
    t.add_argument("--sequence", action="append", help="'synthetic[:k=v,...]' or '<seq>:<track>'; repeatable")
    t.add_argument("--checkpoint", help="where to write the trained weights")
    t.set_defaults(func=cmd_train)

    k = sub.add_parser("track", help="track one sequence from its first ground-truth box")
    k.add_argument("--config", required=True)
    k.add_argument("--checkpoint", required=True)
    k.add_argument("--sequence", required=True)
    k.add_argument("--out", required=True)
    k.add_argument("--gt-out", help="also write the sequence's ground truth in the same format")
    k.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="Success/Precision of predicted tracks against ground truth")
    e.add_argument("--pred", required=True, help="track file, or directory of them")
    e.add_argument("--gt", required=True, help="track file, or directory with matching names")
    e.add_argument("--out", required=True, help="report path")
    e.add_argument("--category", default="all")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    g.add_argument("--config", help="defaults to the toy configuration")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("selftest", help="brute-force oracle suite")
    s.add_argument("--full", action="store_true", help="acceptance-size oracle runs (slower)")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, FormatError, CheckpointError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime failure
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED

