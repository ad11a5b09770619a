"""Command-line surface for the screening pipeline.

Subcommands mirror the pipeline stages so each step can be exercised and
debugged in isolation; stage subcommands reuse completed artifacts from the
output directory by default. Exit codes: 0 success, 2 validation error,
3 provider error. Logs go to stderr, artifacts to the output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, PipelineConfig, load_config, with_overrides
from .core import DatasetError
from .gbt import ModelFormatError, load_model
from .pipeline import PipelineRun, StageError, run_many, run_pipeline
from .providers.base import ProviderError
from .synth import SynthConfig, generate

logger = logging.getLogger("doris")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PROVIDER = 3


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    return with_overrides(
        cfg,
        dataset=getattr(args, "dataset", None),
        out_dir=getattr(args, "out", None),
        seed=getattr(args, "seed", None),
        k=getattr(args, "k", None),
        m=getattr(args, "m", None),
        alpha=getattr(args, "alpha", None),
        beta=getattr(args, "beta", None),
    )


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to the flat key=value config file")
    parser.add_argument("--dataset", help="override the dataset path")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--seed", type=int, help="override the pipeline seed")
    parser.add_argument(
        "--fresh", action="store_true",
        help="recompute every stage instead of reusing completed artifacts",
    )


def _stage_command(args: argparse.Namespace, until: str) -> int:
    cfg = _resolve_config(args)
    run = run_pipeline(cfg, resume=not args.fresh, until=until)
    if until == "eval" and run.report is not None:
        print(json.dumps(run.report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    config = SynthConfig(
        n_users=args.n,
        prevalence=args.prevalence,
        posts_per_user=args.posts_per_user,
        symptom_injection_rate=args.injection_rate,
        seed=args.seed,
    )
    path = generate(config, args.out)
    print(path)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if args.seeds:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        summary = run_many(cfg, seeds, ablations=args.ablations, resume=not args.fresh)
        print(json.dumps({"seeds": summary["seeds"], "mean": summary["mean"]}, indent=2, sort_keys=True))
        return EXIT_OK
    run = run_pipeline(cfg, resume=not args.fresh)
    if args.explain or cfg.explain_enabled:
        if not cfg.explain_enabled:
            run.explain_users()
    assert run.report is not None
    print(json.dumps(run.report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    run = PipelineRun(cfg, resume=not args.fresh)
    if args.model:
        run.run(until="split")
        model, calibrator = load_model(args.model)
        if calibrator is None:
            raise ModelFormatError(f"model {args.model!r} has no calibrator; run calibrate first")
        artifact = run.out / f"report_{args.split}.json"
        report = run.evaluate_split(args.split, artifact, model=model, calibrator=calibrator)
    else:
        run.run(until="eval")
        report = run.report
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_explain(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    run = run_pipeline(cfg, resume=not args.fresh)
    user_ids = [args.user] if args.user else None
    reports = run.explain_users(user_ids)
    for report in reports if args.user else reports[:1]:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    if not args.user:
        print(f"wrote {len(reports)} reports to {run.out / 'explanations'}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="doris",
        description="Depression-screening pipeline over user post histories",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort file")
    p.add_argument("--n", type=int, default=2000, help="number of users")
    p.add_argument("--prevalence", type=float, default=0.05)
    p.add_argument("--posts-per-user", type=int, default=69)
    p.add_argument("--injection-rate", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", default="cohort.jsonl")
    p.set_defaults(func=cmd_synth)

    for name, until, help_text in (
        ("ingest", "truncate", "load, validate and window the dataset"),
        ("filter", "filter", "risk-score posts and select the top-k%% for annotation"),
        ("annotate", "annotate", "annotate selected posts against the nine criteria"),
        ("mood", "mood", "select emotional posts and summarize mood courses"),
        ("featurize", "featurize", "build per-user feature vectors"),
        ("train", "calibrate", "train the boosted classifier and calibrate it"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name in ("filter", "annotate"):
            p.add_argument("--k", type=float, help="annotation budget in percent")
        if name in ("mood", "featurize"):
            p.add_argument("--m", type=float, help="emotional-post percentile")
            p.add_argument("--alpha", type=float, help="mood-summary weight")
            p.add_argument("--beta", type=float, help="emotional-mean weight")
        p.set_defaults(func=lambda a, u=until: _stage_command(a, u))

    p = sub.add_parser("eval", help="evaluate the trained model on a split")
    _add_common(p)
    p.add_argument("--model", help="path to a saved model.json (defaults to the pipeline's)")
    p.add_argument("--split", default="test", choices=("train", "validation", "test"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="emit evidence-backed explanation reports")
    _add_common(p)
    p.add_argument("--user", help="explain a single user id (default: whole test split)")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("run", help="run the full pipeline end to end")
    _add_common(p)
    p.add_argument("--k", type=float, help="annotation budget in percent")
    p.add_argument("--m", type=float, help="emotional-post percentile")
    p.add_argument("--alpha", type=float, help="mood-summary weight")
    p.add_argument("--beta", type=float, help="emotional-mean weight")
    p.add_argument("--seeds", help="comma-separated seeds; emits the averaged report")
    p.add_argument("--ablations", action="store_true", help="add the feature-ablation harness")
    p.add_argument("--explain", action="store_true", help="also write explanation reports")
    p.set_defaults(func=cmd_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except StageError as exc:
        cause = exc.__cause__
        logger.error("%s", exc)
        if isinstance(cause, ProviderError):
            return EXIT_PROVIDER
        return EXIT_VALIDATION
    except ProviderError as exc:
        logger.error("provider error: %s", exc)
        return EXIT_PROVIDER
    except (ConfigError, DatasetError, ModelFormatError, FileNotFoundError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
