"""
Command-line entry point.

Subcommands generate phantom datasets, train a fold, cross-validate, run
ablation grids, evaluate checkpoints and export occlusion saliency. Every run
writes into a timestamped directory under --out holding the resolved config,
the seed record, the versions manifest and the outputs.
"""

import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from src.config import RunConfig, parse_config, write_resolved_config
from src.core.phantom import generate_dataset
from src.core.preprocessing import preprocess_case
from src.core.volume_io import Manifest, load_case, load_manifest
from src.evaluation.metrics import ScoredSet, roc_points, score_metrics
from src.evaluation.report import ModelPredictions, build_report, mean_std, write_report
from src.interpret.occlusion import occlusion_postprocess, occlusion_raw
from src.interpret.overlay import export_mismatch_map, export_overlay
from src.models.checkpoint import checkpoint_architecture, load_checkpoint
from src.models.network import build_network
from src.training.ablation import PRESETS, run_ablation
from src.training.crossval import cross_validate, fold_assignments
from src.training.ensemble import predict_ensemble
from src.training.trainer import default_device, prepare_cases, train_fold
from src.utils.errors import ConfigError, DataError, MissingLabel, PipelineError
from src.utils.logging_utils import get_logger, get_run_logger
from src.utils.utils import (
    make_run_dir,
    seed_everything,
    write_seed_record,
    write_versions_manifest,
)

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 5


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML or JSON run configuration")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a config key, e.g. train.learning_rate=1e-3 (repeatable)",
    )
    parser.add_argument("--out", default="runs", help="Parent directory of the run directory")
    parser.add_argument("--seed", type=int, help="Master seed (overrides train.seed)")
    parser.add_argument("--jobs", type=int, default=1, help="Worker parallelism cap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="src", description="Multi-task IDH classification from 4-sequence MRI"
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("phantom", help="Generate a synthetic phantom dataset")
    _add_common(p)
    p.add_argument("--n", type=int, help="Number of cases (data.phantom.n_cases)")
    p.add_argument("--mutant-fraction", type=float, help="data.phantom.mutant_fraction")

    p = sub.add_parser("train", help="Train a single fold")
    _add_common(p)
    p.add_argument("--manifest", help="Manifest CSV (data.manifest)")
    p.add_argument("--fold", type=int, default=0, help="Fold index when no 'val' rows exist")

    p = sub.add_parser("crossval", help="Stratified k-fold cross-validation")
    _add_common(p)
    p.add_argument("--manifest", help="Manifest CSV (data.manifest)")
    p.add_argument("--k", type=int, help="Number of folds (train.folds)")
    p.add_argument("--name", default="model", help="Config name in the CV tables")

    p = sub.add_parser("ablate", help="Cross-validate an ablation grid")
    _add_common(p)
    p.add_argument("--manifest", help="Manifest CSV (data.manifest)")
    p.add_argument(
        "--preset", choices=sorted(PRESETS), help="Built-in grid instead of ablation.grid"
    )

    p = sub.add_parser("evaluate", help="Score checkpoints on a manifest")
    _add_common(p)
    p.add_argument("--manifest", help="Manifest CSV (data.manifest)")
    p.add_argument("--checkpoints", nargs="+", required=True, help="Checkpoints to ensemble")
    p.add_argument("--split", default=None, help="Only rows with this split_tag")
    p.add_argument("--name", default="model", help="Model name in the report")
    p.add_argument(
        "--reference-scores",
        help="CSV with case_id and score columns compared by a paired DeLong test",
    )
    p.add_argument("--reference-name", default="reference")

    p = sub.add_parser("occlusion", help="Occlusion saliency for one case")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--case", help="Case bundle directory")
    p.add_argument("--manifest", help="Manifest CSV, used with --case-id")
    p.add_argument("--case-id", help="Case id within --manifest")
    p.add_argument("--slice", type=int, dest="slice_index", help="Axial slice of the overlay")
    p.add_argument(
        "--dump-mismatch",
        action="store_true",
        help="Also write the upsampled CMD attention map as a bundle",
    )
    return parser


def resolve_config(args: argparse.Namespace, extra: Sequence[str] = ()) -> RunConfig:
    overrides = list(args.overrides) + list(extra)
    if args.seed is not None:
        overrides.append(f"train.seed={args.seed}")
    if getattr(args, "manifest", None):
        overrides.append(f"data.manifest={args.manifest}")
    return parse_config(args.config, overrides)


def _manifest(cfg: RunConfig) -> Manifest:
    if not cfg.data.manifest:
        raise ConfigError("No manifest given (--manifest or data.manifest)")
    return load_manifest(cfg.data.manifest)


def cmd_phantom(args: argparse.Namespace, cfg: RunConfig, run_dir: Path) -> None:
    generate_dataset(cfg.data.phantom, run_dir, jobs=args.jobs)


def cmd_train(args: argparse.Namespace, cfg: RunConfig, run_dir: Path) -> None:
    manifest = _manifest(cfg)
    pool = manifest.split(exclude=("test",))
    val_rows = pool.with_split(("val",))
    if len(val_rows):
        train_rows = pool.split(exclude=("val",))
        train_cases = prepare_cases(train_rows.load_cases(), cfg)
        val_cases = prepare_cases(val_rows.load_cases(), cfg)
    else:
        if any(label is None for label in pool.labels):
            raise MissingLabel("Every training case needs an IDH label")
        splits = fold_assignments(pool.labels, cfg.train.folds, cfg.train.seed)
        if not 0 <= args.fold < len(splits):
            raise ConfigError(f"--fold {args.fold} outside [0, {len(splits)})")
        cases = prepare_cases(pool.load_cases(), cfg)
        train_idx, val_idx = splits[args.fold]
        train_cases = [cases[i] for i in train_idx]
        val_cases = [cases[i] for i in val_idx]
    result = train_fold(train_cases, val_cases, cfg, run_dir, fold_index=args.fold)
    row = {
        "fold": result.fold_index,
        "best_epoch": result.best_epoch,
        "epochs_run": result.epochs_run,
        **result.metrics,
    }
    pd.DataFrame([row]).to_csv(run_dir / "fold_metrics.csv", index=False)


def cmd_crossval(args: argparse.Namespace, cfg: RunConfig, run_dir: Path) -> None:
    k = args.k if args.k is not None else cfg.train.folds
    cross_validate(_manifest(cfg), k, cfg, run_dir, jobs=args.jobs, name=args.name)


def cmd_ablate(args: argparse.Namespace, cfg: RunConfig, run_dir: Path) -> None:
    grid = PRESETS[args.preset]() if args.preset else cfg.ablation.grid
    run_ablation(_manifest(cfg), grid, cfg, run_dir, jobs=args.jobs)


def _reference_set(path: str, scored: ScoredSet) -> ScoredSet:
    frame = pd.read_csv(path, dtype={"case_id": str})
    if not {"case_id", "score"} <= set(frame.columns):
        raise DataError(f"Reference scores {path} need case_id and score columns")
    by_id = dict(zip(frame["case_id"].str.strip(), frame["score"].astype(float)))
    missing = [c for c in scored.case_ids if c not in by_id]
    if missing:
        raise DataError(f"Reference scores lack cases {missing[:5]}")
    return ScoredSet([by_id[c] for c in scored.case_ids], scored.labels, scored.case_ids)


def cmd_evaluate(args: argparse.Namespace, cfg: RunConfig, run_dir: Path) -> None:
    manifest = _manifest(cfg)
    if args.split:
        manifest = manifest.with_split((args.split,))
    arch = checkpoint_architecture(args.checkpoints[0])
    cases = [
        preprocess_case(c, arch.backbone.input_size, cfg.data.norm_region)
        for c in manifest.load_cases()
    ]
    if any(c.idh_label is None for c in cases):
        raise MissingLabel("Evaluation needs every case labeled")
    prediction = predict_ensemble(args.checkpoints, cases, cfg.train.eval_batch_size)
    labels = [c.idh_label for c in cases]
    scored = prediction.scored(labels)

    models = [ModelPredictions(args.name, [scored])]
    metrics_cfg = cfg.metrics
    if args.reference_scores:
        models.append(
            ModelPredictions(args.reference_name, [_reference_set(args.reference_scores, scored)])
        )
        metrics_cfg = metrics_cfg.model_copy(update={"reference_model": args.reference_name})
    write_report(build_report(models, metrics_cfg), run_dir)
    roc_points(scored).to_csv(run_dir / "roc_points.csv", index=False)

    predictions = pd.DataFrame(
        {"case_id": prediction.case_ids, "idh_label": labels, "score": scored.scores}
    )
    member_rows = []
    for m, member in enumerate(prediction.members):
        predictions[f"score_member_{m}"] = member[:, 1]
        row = {"member": str(m)}
        row.update(score_metrics(ScoredSet(member[:, 1], labels), metrics_cfg.threshold))
        member_rows.append(row)
    predictions.to_csv(run_dir / "predictions.csv", index=False)
    members = pd.DataFrame(member_rows)
    for stat_index, stat in enumerate(("mean", "std")):
        row = {"member": stat}
        for column in members.columns[1:]:
            row[column] = mean_std(members[column].to_numpy(), metrics_cfg.std_mode)[stat_index]
        member_rows.append(row)
    pd.DataFrame(member_rows).to_csv(run_dir / "member_metrics.csv", index=False)


def cmd_occlusion(args: argparse.Namespace, cfg: RunConfig, run_dir: Path) -> None:
    if args.case:
        case = load_case(args.case)
    elif args.manifest and args.case_id:
        manifest = load_manifest(args.manifest)
        rows = [r for r in manifest if r.case_id == args.case_id]
        if not rows:
            raise DataError(f"Case {args.case_id} is not in {args.manifest}")
        case = manifest.subset(rows).load_cases()[0]
    else:
        raise ConfigError("occlusion needs --case or --manifest with --case-id")

    arch = checkpoint_architecture(args.checkpoint)
    model = build_network(arch).to(default_device())
    load_checkpoint(args.checkpoint, model, strict=True)
    model.eval()
    case = preprocess_case(case, arch.backbone.input_size, cfg.data.norm_region)

    ocfg = cfg.occlusion
    if args.slice_index is not None:
        ocfg = ocfg.model_copy(update={"slice_index": args.slice_index})
    result = occlusion_raw(model, case, ocfg)
    saliency = occlusion_postprocess(result.raw, ocfg, result.baseline_prob)
    export_overlay(
        saliency,
        case,
        ocfg.sequence,
        ocfg.slice_index,
        run_dir / f"{case.id}_saliency.png",
        alpha=ocfg.alpha,
        colormap=ocfg.colormap,
    )
    np.save(run_dir / f"{case.id}_raw.npy", result.raw)
    if args.dump_mismatch:
        export_mismatch_map(model, case, run_dir)


COMMANDS: Dict[str, Callable[[argparse.Namespace, RunConfig, Path], None]] = {
    "phantom": cmd_phantom,
    "train": cmd_train,
    "crossval": cmd_crossval,
    "ablate": cmd_ablate,
    "evaluate": cmd_evaluate,
    "occlusion": cmd_occlusion,
}


def _phantom_overrides(args: argparse.Namespace) -> List[str]:
    extra = []
    if args.n is not None:
        extra.append(f"data.phantom.n_cases={args.n}")
    if args.mutant_fraction is not None:
        extra.append(f"data.phantom.mutant_fraction={args.mutant_fraction}")
    if args.seed is not None:
        extra.append(f"data.phantom.master_seed={args.seed}")
    return extra


def run(args: argparse.Namespace) -> Path:
    """Resolve the config, prepare the run directory and execute a subcommand."""
    extra = _phantom_overrides(args) if args.command == "phantom" else []
    cfg = resolve_config(args, extra)
    run_dir = make_run_dir(args.out, args.command)
    run_logger = get_run_logger(run_dir, args.command)
    seed_everything(cfg.train.seed)
    write_resolved_config(cfg, run_dir)
    write_seed_record(
        run_dir,
        cfg.train.seed,
        command=args.command,
        phantom_master_seed=cfg.data.phantom.master_seed,
    )
    write_versions_manifest(run_dir)
    run_logger.info(f"Running '{args.command}' in {run_dir}")
    COMMANDS[args.command](args, cfg, run_dir)
    run_logger.info(f"Finished '{args.command}'")
    return run_dir


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse argv, run the subcommand and map failures to exit codes.

    Returns:
        0 on success; 2 config/usage, 3 data, 4 divergence, 5 I/O
    """
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    try:
        run(args)
    except PipelineError as e:
        logger.error(f"{args.command} failed: {type(e).__name__}: {e}")
        return e.exit_code
    except IndexError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_USAGE
    except OSError as e:
        logger.error(f"{args.command} failed with an I/O error: {e}")
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
