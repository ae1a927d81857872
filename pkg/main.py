import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from config.config_loader import ConfigLoader, RunConfig
from core.errors import SkinGroupsError
from handlers.command_handler import (
    HELP_TEXT,
    handle_debias_command,
    handle_evaluate_command,
    handle_generate_command,
    handle_partition_command,
    handle_report_command,
    handle_transfer_command,
    summary_json,
)
from storage.artifacts import write_manifest
from utils.version_utils import get_full_version_string

LOG_FORMAT = '%(asctime)s [%(levelname)s] %(name)s: %(message)s'

logger = logging.getLogger(__name__)


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='skingroups',
        description=HELP_TEXT,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument('--version', action='version', version=get_full_version_string())
    parser.add_argument('--config', help='YAML run configuration')
    parser.add_argument('--seed', type=int)
    parser.add_argument('--output', help='output directory')
    parser.add_argument('--threads', type=int, help='search workers')
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', action='store_true')
    verbosity.add_argument('--quiet', action='store_true')

    sub = parser.add_subparsers(dest='command', required=True)

    gen = sub.add_parser('generate', help='generate a synthetic dataset')
    gen.add_argument('--preset', choices=['paper-uniform', 'paper-truncnormal', 'paper-biased'])
    gen.add_argument('--n', type=int)
    gen.add_argument('--scores', action='store_true', help='add biased scores and y_hat')

    def data_options(p, grid=True):
        p.add_argument('--input', help='dataset CSV')
        p.add_argument('--lab-coordinate', dest='lab_coordinate', choices=['lightness', 'ita', 'lightness_hue'],
                       help='read L,a,b columns and convert to this coordinate')
        p.add_argument('--target', choices=['y', 'y_hat', 'score'])
        p.add_argument('--score-threshold', dest='score_threshold', type=float)
        p.add_argument('--ci-level', dest='ci_level', type=float)
        if grid:
            p.add_argument('--method', choices=['fairgroups', 'kmeans', 'fixed'])
            p.add_argument('--k', type=int)
            p.add_argument('--m', type=int)
            p.add_argument('--m2', type=int)
            p.add_argument('--grid-low', dest='grid_low', type=float)
            p.add_argument('--grid-high', dest='grid_high', type=float)
            p.add_argument('--grid-low2', dest='grid_low2', type=float)
            p.add_argument('--grid-high2', dest='grid_high2', type=float)
            p.add_argument('--min-group-count', dest='min_group_count', type=int)
            p.add_argument('--no-fast-path', dest='fast_path', action='store_const', const=False)
            p.add_argument('--scheme', choices=['fitzpatrick_ita', 'l60', 'default_2d'])
            p.add_argument('--thresholds', type=_floats)

    part = sub.add_parser('partition', help='fit or build a partition')
    data_options(part)
    part.add_argument('--name', help='output file stem (default: partition)')

    ev = sub.add_parser('evaluate', help='evaluate a partition on a dataset')
    data_options(ev)
    ev.add_argument('--partition', required=True)
    ev.add_argument('--against', help='second partition for the Rand index')
    ev.add_argument('--compare', action='store_true', help='also fit FairGroups and K-Means for comparison')

    tr = sub.add_parser('transfer', help='apply a fitted partition to another dataset')
    data_options(tr)
    tr.add_argument('--partition', required=True)
    tr.add_argument('--refit', action='store_true')

    de = sub.add_parser('debias', help='optimal-transport post-processing report')
    data_options(de, grid=False)
    de.add_argument('--partition', required=True)
    de.add_argument('--alphas', type=_floats)
    de.add_argument('--test-fraction', dest='test_fraction', type=float)
    de.add_argument('--quantile-resolution', dest='quantile_resolution', type=int)
    de.add_argument('--hgr-bins', dest='hgr_bins', type=int)

    rep = sub.add_parser('report', help='per-group statistics for a partition')
    data_options(rep, grid=False)
    rep.add_argument('--partition', required=True)
    return parser


def _setup_logging(verbose: bool, quiet: bool):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(format=LOG_FORMAT, level=level, stream=sys.stderr)
    root.setLevel(level)


def _dispatch(args, cfg: RunConfig):
    if args.command == 'generate':
        return handle_generate_command(cfg, scores=args.scores)
    if args.command == 'partition':
        return handle_partition_command(cfg, name=args.name)
    if args.command == 'evaluate':
        return handle_evaluate_command(cfg, args.partition, against=args.against, compare=args.compare)
    if args.command == 'transfer':
        return handle_transfer_command(cfg, args.partition, refit=args.refit)
    if args.command == 'debias':
        return handle_debias_command(cfg, args.partition)
    return handle_report_command(cfg, args.partition)


def run(argv: Optional[List[str]] = None) -> int:
    """命令行入口。返回退出码：0 成功，1 参数 / 数据校验失败，2 无可行划分"""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    _setup_logging(args.verbose, args.quiet)

    try:
        loader = ConfigLoader(args.config)
        overrides = {key: getattr(args, key, None) for key in RunConfig.model_fields}
        cfg = loader.run_config(overrides)
        logger.info(f"{args.command}: seed={cfg.seed}, output={cfg.output}")
        result = _dispatch(args, cfg)
        inputs = list(result.inputs)
        if args.config:
            inputs.append(Path(args.config))
        write_manifest(
            Path(cfg.output) / 'manifest.json',
            subcommand=args.command,
            argv=argv,
            config=cfg.model_dump(),
            inputs=inputs,
            outputs=result.outputs,
            seed=cfg.seed,
        )
    except SkinGroupsError as e:
        print(f"error[{e.kind}]: {e}", file=sys.stderr)
        return e.exit_code
    except (FileNotFoundError, PermissionError, IsADirectoryError) as e:
        print(f"error[io]: {e}", file=sys.stderr)
        return 1

    print(summary_json(result.summary))
    return 0


if __name__ == '__main__':
    try:
        sys.exit(run())
    except KeyboardInterrupt:
        logger.info("Stopped by user")
        sys.exit(130)
