import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from scn.config import RunConfig, settings
from scn.errors import ConfigError, SCNError
from scn.services.evaluation_service import EvaluationService
from scn.services.gradcheck_service import run_gradcheck_suite
from scn.services.gridsearch_service import GRID_METRICS, MARGINS, GridSearchService
from scn.services.plot_service import PLOT_FILE, emit_plot
from scn.services.training_service import METRICS_FILE, TrainingService

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

# 作为 --flag 暴露的 RunConfig 字段，取值交给 pydantic 做类型转换
_NON_FLAG_FIELDS = {"output_dir", "data_dir"}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("run configuration", "overrides values from --config")
    group.add_argument("--config", help="flat 'key = value' config file")
    group.add_argument("--data-dir", dest="data_dir", help=f"dataset root (default: {settings.SCN_DATA_DIR})")
    group.add_argument("--output-dir", dest="output_dir", help="run directory")
    for name, field in RunConfig.model_fields.items():
        if name in _NON_FLAG_FIELDS:
            continue
        flag = "--" + name.replace("_", "-")
        if field.annotation is bool:
            group.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction, default=None)
        else:
            group.add_argument(flag, dest=name, default=None, metavar=name.upper())


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    keys = set(RunConfig.model_fields)
    return {k: v for k, v in vars(args).items() if k in keys and v is not None}


def _load_config(args: argparse.Namespace) -> RunConfig:
    config_path = getattr(args, "config", None)
    if config_path and not Path(config_path).is_file():
        raise ConfigError(f"config file not found: {config_path}")
    return RunConfig.from_file(config_path, _overrides(args))


def cmd_train(args: argparse.Namespace) -> int:
    config = _load_config(args)
    result = TrainingService(config).run()
    print(f"final train_loss={result.final_train_loss:.6f} test_loss={result.final_test_loss:.6f}")
    print(f"run directory: {result.run_dir}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = _load_config(args)
    result = EvaluationService(config, args.checkpoint).run()
    print(result.csv(), end="")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    report = run_gradcheck_suite(args.seed)
    print(report.format())
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_gridsearch(args: argparse.Namespace) -> int:
    config = _load_config(args)
    margins = [float(m) for m in args.margins.split(",")] if args.margins else MARGINS
    metrics = args.metrics.split(",") if args.metrics else GRID_METRICS
    result = GridSearchService(config, margins, metrics).run()
    print(result.csv(), end="")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    source = Path(args.metrics)
    metrics_csv = source / METRICS_FILE if source.is_dir() else source
    output = args.output or metrics_csv.parent / PLOT_FILE
    print(emit_plot(metrics_csv, output))
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("scn.main:app", host=args.host, port=args.port, reload=args.reload)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scn",
        description="Siamese capsule networks: training, evaluation and diagnostics",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a siamese network and write a run directory")
    _add_config_flags(train)
    train.set_defaults(handler=cmd_train)

    evaluate = sub.add_parser("eval", help="evaluate a checkpoint, write eval.csv and density.csv")
    _add_config_flags(evaluate)
    evaluate.add_argument("--checkpoint", help="checkpoint file (default: <run dir>/checkpoint_final.ckpt)")
    evaluate.set_defaults(handler=cmd_eval)

    gradcheck = sub.add_parser("gradcheck", help="finite-difference check of every differentiable layer")
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.set_defaults(handler=cmd_gradcheck)

    grid = sub.add_parser("gridsearch", help="k-fold sweep over margin and distance metric")
    _add_config_flags(grid)
    grid.add_argument("--margins", help="comma separated margins (default: 0.2,0.5,1.0,2.0)")
    grid.add_argument("--metrics", help="comma separated metrics (default: all)")
    grid.set_defaults(handler=cmd_gridsearch)

    plot = sub.add_parser("plot", help="render metrics.csv as an SVG loss curve")
    plot.add_argument("metrics", help="metrics.csv or a run directory")
    plot.add_argument("-o", "--output", help="SVG path (default: next to metrics.csv)")
    plot.set_defaults(handler=cmd_plot)

    serve = sub.add_parser("serve", help="start the run dashboard")
    serve.add_argument("--host", default=settings.API_HOST)
    serve.add_argument("--port", type=int, default=settings.API_PORT)
    serve.add_argument("--reload", action="store_true")
    serve.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(level=settings.LOG_LEVEL)
    try:
        return args.handler(args)
    except ConfigError as e:
        logger.error(f"❌ configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (SCNError, OSError) as e:
        logger.error(f"❌ {args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
