"""Command-line interface tying the pipeline together.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training abort.
Every piece of randomness flows from one seed, resolved as: --seed flag,
then the config file's seed, then the EDMTT_SEED environment variable,
then 0.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from pathlib import Path

from .aggregate import aggregate_all, aggregate_windows
from .errors import EdmttError, NonFiniteActivation
from .evaluate import DEFAULT_ABLATION_MASKS, ablate, evaluate, write_ablation_csv
from .ingest import (
    ALL_GROUPS,
    DEFAULT_MIN_CONFIDENCE,
    FeatureGroup,
    load_dataset,
    parse_openface_csv,
)
from .model import ModelConfig, load_model
from .sampler import raw_class_of, stratified_split
from .synthdata import DEFAULT_CLASS_PROBS, generate, write_dataset
from .train import train

SEED_ENV_VAR = "EDMTT_SEED"
DEFAULT_VAL_FRACTION = 0.25


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1, not argparse's default 2 (2 is reserved for data errors)
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_groups(text: str) -> tuple[FeatureGroup, ...]:
    names = [t.strip() for t in text.split(",") if t.strip()]
    if not names:
        raise argparse.ArgumentTypeError("at least one feature group is required")
    try:
        groups = tuple(FeatureGroup.from_name(n) for n in names)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if len(set(groups)) != len(groups):
        raise argparse.ArgumentTypeError(f"duplicate feature group in {text!r}")
    return groups


def _parse_probs(text: str) -> tuple[float, ...]:
    try:
        probs = tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"class probabilities must be numbers, "
                                         f"got {text!r}") from None
    if len(probs) != 4:
        raise argparse.ArgumentTypeError("exactly 4 class probabilities required")
    return probs


def _resolve_seed(flag_value: int | None, file_value=None) -> int:
    if flag_value is not None:
        return flag_value
    if file_value is not None:
        return int(file_value)
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise EdmttError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    return 0


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise EdmttError(f"config file not found: {p}")
    try:
        with open(p) as fh:
            values = json.load(fh)
    except json.JSONDecodeError as exc:
        raise EdmttError(f"{p}: invalid JSON config ({exc})") from None
    if not isinstance(values, dict):
        raise EdmttError(f"{p}: config must be a JSON object")
    return values


def _build_config(args, feature_dim: int) -> ModelConfig:
    values = _load_config_file(getattr(args, "config", None))
    values["feature_dim"] = feature_dim
    values["seed"] = _resolve_seed(args.seed, values.get("seed"))
    if getattr(args, "a", None) is not None:
        values["window_count"] = args.a
    if getattr(args, "margin", None) is not None:
        values["margin"] = args.margin
    if getattr(args, "triplet_weight", None) is not None:
        values["triplet_weight"] = args.triplet_weight
    try:
        return ModelConfig(**values)
    except TypeError as exc:
        raise EdmttError(f"config: unknown field ({exc})") from None
    except ValueError as exc:
        raise EdmttError(f"config: {exc}") from None


def _resolved_window_count(args) -> int:
    # resolution order: --a flag, config file, default 100
    if getattr(args, "a", None) is not None:
        return args.a
    values = _load_config_file(getattr(args, "config", None))
    return int(values.get("window_count", 100))


def _load_split(args, groups, window_count: int):
    sequences = load_dataset(args.features_dir, args.labels, groups,
                             min_confidence=args.min_confidence)
    aggregated = aggregate_all(sequences, window_count)
    raw = [raw_class_of(s.label) for s in aggregated]
    split_rng = random.Random(_resolve_seed(args.seed))
    train_idx, val_idx = stratified_split(raw, args.val_fraction, split_rng)
    return sequences, aggregated, train_idx, val_idx


def cmd_synth(args) -> int:
    seed = _resolve_seed(args.seed)
    samples = generate(args.samples, num_frames=args.frames,
                       class_probs=args.class_probs, noise=args.sigma, seed=seed)
    features_dir, labels_path = write_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples to {features_dir} "
          f"(labels: {labels_path})")
    return 0


def cmd_train(args) -> int:
    groups = args.groups
    window_count = _resolved_window_count(args)
    _, aggregated, train_idx, val_idx = _load_split(args, groups, window_count)
    config = _build_config(args, feature_dim=aggregated[0].stat_count)
    train_set = [aggregated[i] for i in train_idx]
    val_set = [aggregated[i] for i in val_idx]

    def report(rec):
        if rec.epoch % args.log_every == 0 or rec.epoch == config.epochs - 1:
            print(f"epoch {rec.epoch}: train_mse={rec.train_mse:.6f} "
                  f"train_triplet={rec.train_triplet:.6f} val_mse={rec.val_mse:.6f}")

    _, log = train(train_set, val_set, config, feature_groups=groups,
                   out_dir=args.out, resume_from=args.resume, on_epoch=report)
    print(f"best validation mse {log.best_val_mse:.6f} at epoch {log.best_epoch}; "
          f"artifacts in {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.checkpoint)
    sequences = load_dataset(args.features_dir, args.labels, model.feature_groups,
                             min_confidence=args.min_confidence)
    aggregated = aggregate_all(sequences, model.config.window_count)
    report = evaluate(model, aggregated)
    sys.stdout.write(report.render_text())
    if args.out is not None:
        Path(args.out).write_text(report.to_json())
        print(f"report written to {args.out}")
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.checkpoint)
    seq = parse_openface_csv(args.csv, model.feature_groups,
                             min_confidence=args.min_confidence)
    agg = aggregate_windows(seq, model.config.window_count)
    value = model.predict_engagement([agg])[0]
    print(f"{value:.4f}")
    return 0


def cmd_ablate(args) -> int:
    window_count = _resolved_window_count(args)
    sequences, _, train_idx, val_idx = _load_split(args, ALL_GROUPS, window_count)
    config = _build_config(args, feature_dim=1)  # per-mask dim set inside ablate
    rows = ablate(DEFAULT_ABLATION_MASKS, sequences, config,
                  window_count=window_count, train_indices=train_idx,
                  val_indices=val_idx)
    write_ablation_csv(rows, args.out)
    print("gaze pose rotation aus val_mse")
    for row in rows:
        print(f"{row.mask[0]:>4d} {row.mask[1]:>4d} {row.mask[2]:>8d} "
              f"{row.mask[3]:>3d} {row.val_mse:.6f}")
    print(f"table written to {args.out}")
    return 0


def _add_data_flags(p: _Parser) -> None:
    p.add_argument("--features-dir", required=True,
                   help="directory of per-sample feature CSVs")
    p.add_argument("--labels", required=True, help="sample_id,raw_label CSV")
    p.add_argument("--min-confidence", type=float, default=DEFAULT_MIN_CONFIDENCE,
                   help="drop frames below this detector confidence")


def _add_train_flags(p: _Parser) -> None:
    p.add_argument("--config", help="JSON file with model configuration fields")
    p.add_argument("--a", type=int, default=None,
                   help="window count for aggregation (default 100)")
    p.add_argument("--margin", type=float, default=None, help="triplet margin")
    p.add_argument("--triplet-weight", type=float, default=None,
                   help="weight of the triplet loss term")
    p.add_argument("--val-fraction", type=float, default=DEFAULT_VAL_FRACTION,
                   help="per-class fraction held out for validation")


def build_parser() -> _Parser:
    parser = _Parser(prog="edmtt",
                     description="Engagement regression with multi-task "
                                 "(MSE + triplet) training")
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help=f"master seed (fallback: config file, then "
                             f"{SEED_ENV_VAR}, then 0)")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset",
                       parents=[common])
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--samples", type=int, default=195)
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--sigma", type=float, default=0.1, help="noise level")
    p.add_argument("--class-probs", type=_parse_probs, default=DEFAULT_CLASS_PROBS,
                   help="comma list of 4 class probabilities")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train a model")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--groups", type=_parse_groups, default=ALL_GROUPS,
                   help="comma list of gaze,pose,rotation,aus")
    p.add_argument("--out", required=True, help="output directory for "
                   "checkpoints and the training log")
    p.add_argument("--resume", default=None, help="resume from a train-state "
                   "checkpoint")
    p.add_argument("--log-every", type=int, default=25)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="evaluate a checkpoint on a dataset")
    _add_data_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default=None, help="also write the report as JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", parents=[common], help="predict engagement for one CSV")
    p.add_argument("csv", help="one feature CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--min-confidence", type=float, default=DEFAULT_MIN_CONFIDENCE)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ablate", parents=[common], help="run the feature-set ablation grid")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NonFiniteActivation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (EdmttError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
