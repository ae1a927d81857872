"""
各子命令的处理函数。每个函数接收校验后的 RunConfig 与子命令自身的选项，
写出声明的文件，并返回供标准输出打印的摘要与输入 / 输出清单（写入 manifest）。
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from config.config_loader import RunConfig
from core.debias import BarycenterSpec, debias_report, group_cdf_table
from core.domain import Dataset, Target, assign_groups
from core.errors import ConfigError
from core.metrics import FairnessMeasure, binary_di_from_assignment, group_stats, rand_index, variance_of_assignment
from core.segment import (
    FixedScheme,
    SearchConfig,
    SearchMethod,
    bias_amplification_report,
    compare_methods,
    evaluate_partition,
    fit_partition,
    transfer_compare,
    transfer_evaluate,
)
from core.synth import PAPER_SCORE_SHIFT, generate_biased_scores, generate_preset, paper_biased_preset
from storage.artifacts import read_partition, run_timestamp, write_partition, write_transport
from storage.dataset_io import read_dataset, read_lab_dataset, write_dataset

logger = logging.getLogger(__name__)

HELP_TEXT = (
    "SkinGroups 命令一览\n\n"
    "  generate   按预设生成合成数据集 (dataset.csv)\n"
    "  partition  在数据集上搜索 / 构造 K 组划分 (partition.json)\n"
    "  evaluate   在数据集上评估已有划分，可与另一划分比较 Rand 指数\n"
    "  transfer   把在 A 上拟合的划分迁移到 B 上评估，可选在 B 上重新拟合\n"
    "  debias     按划分做最优传输后处理，输出各 α 下的指标表\n"
    "  report     输出每组统计、Φ、置信区间与方差 (report.json / report_groups.csv)\n\n"
    "全局参数：--config <yaml> --seed <n> --output <目录> --threads <n>\n"
    "每次运行都会在输出目录写入 manifest.json，记录参数、输入摘要与依赖版本。"
)

SCORE_NOISE_SD = 0.1


@dataclass
class CommandResult:
    summary: Dict[str, Any]
    inputs: List[Path] = field(default_factory=list)
    outputs: List[Path] = field(default_factory=list)


def _output_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.output)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_dataset(cfg: RunConfig) -> Dataset:
    if cfg.input is None:
        raise ConfigError("this command needs an input dataset (--input)")
    if cfg.lab_coordinate is not None:
        return read_lab_dataset(cfg.input, cfg.lab_coordinate)
    return read_dataset(cfg.input)


def search_config(cfg: RunConfig, dimension: int) -> SearchConfig:
    if dimension == 2:
        m = (cfg.m2, cfg.m2)
        low = (cfg.grid_low, cfg.grid_low2)
        high = (cfg.grid_high, cfg.grid_high2)
    else:
        m, low, high = cfg.m, cfg.grid_low, cfg.grid_high
    return SearchConfig(
        k=cfg.k,
        m=m,
        low=low,
        high=high,
        method=SearchMethod(cfg.method),
        target=Target(cfg.target),
        threshold=cfg.score_threshold,
        min_group_count=cfg.min_group_count,
        fast_path=cfg.fast_path,
        threads=cfg.threads,
        scheme=None if cfg.scheme is None else FixedScheme(cfg.scheme),
        thresholds=cfg.thresholds,
        level=cfg.ci_level,
    )


def _write_json(summary: Dict[str, Any], path: Path):
    path.write_text(summary_json(summary) + "\n", encoding="utf-8")


def _write_rows(rows: List[Dict[str, Any]], path: Path):
    pd.DataFrame(rows).to_csv(path, index=False, lineterminator="\n")


def _partition_summary(partition) -> Dict[str, Any]:
    summary = {
        "k": partition.k,
        "method": partition.method,
        "dimension": partition.dimension,
        "objective": partition.objective,
    }
    if partition.dimension == 1:
        summary["cut_values"] = partition.cut_values()
    else:
        rects = partition.rectangles
        edges = partition.grid.edges
        summary["rectangles"] = None if rects is None else [
            [float(edges[0][x0]), float(edges[0][x1]), float(edges[1][y0]), float(edges[1][y1])]
            for x0, x1, y0, y1 in rects
        ]
    return summary


def handle_generate_command(cfg: RunConfig, scores: bool = False) -> CommandResult:
    """处理 generate：按预设生成样本，可附加带组间偏移的打分"""
    if cfg.preset == "paper-biased":
        dataset = paper_biased_preset(cfg.n, cfg.seed, SCORE_NOISE_SD)
    else:
        dataset = generate_preset(cfg.preset, cfg.n, cfg.seed)
        if scores:
            dataset = generate_biased_scores(dataset, PAPER_SCORE_SHIFT, SCORE_NOISE_SD, cfg.seed + 1)
    path = _output_dir(cfg) / "dataset.csv"
    write_dataset(dataset, path)
    summary = {
        "preset": cfg.preset,
        "n": len(dataset),
        "seed": cfg.seed,
        "positive_rate": float(dataset.y.mean()),
        "dataset": str(path),
    }
    return CommandResult(summary=summary, outputs=[path])


def handle_partition_command(cfg: RunConfig, name: Optional[str] = None) -> CommandResult:
    """处理 partition：搜索或构造划分并写出 JSON"""
    dataset = _load_dataset(cfg)
    config = search_config(cfg, dataset.dimension)
    result = fit_partition(dataset, config)
    metadata = {**result.partition.metadata, "seed": cfg.seed, "timestamp": run_timestamp()}
    partition = result.partition.with_result(metadata=metadata)
    path = _output_dir(cfg) / f"{name or 'partition'}.json"
    write_partition(partition, path)
    summary = _partition_summary(partition)
    summary.update(
        variance=result.objective,
        groups=result.stats.rows(),
        diagnostics={k: v for k, v in result.diagnostics.items() if isinstance(v, (int, float, str, bool))},
        partition=str(path),
    )
    logger.info(f"partition objective {result.objective:.6f} (K={partition.k}, {partition.method})")
    return CommandResult(summary=summary, inputs=[Path(cfg.input)], outputs=[path])


def handle_evaluate_command(cfg: RunConfig, partition_path: str, against: Optional[str] = None, compare: bool = False) -> CommandResult:
    """处理 evaluate：在数据集上评估划分；可选与另一划分比较，或与搜索方法对比"""
    dataset = _load_dataset(cfg)
    partition = read_partition(partition_path)
    config = search_config(cfg, dataset.dimension)
    result = evaluate_partition(dataset, partition, config, clamp=True)
    summary = _partition_summary(partition)
    summary.update(variance=result.objective, groups=result.stats.rows(), clamped=result.assignment.clamped)
    if partition.k == 2:
        check = binary_di_from_assignment(result.assignment)
        summary["binary_di"] = check._asdict()
    inputs = [Path(cfg.input), Path(partition_path)]
    if against is not None:
        other = read_partition(against)
        other_assignment = assign_groups(dataset, other, target=config.target, clamp=True, threshold=config.threshold)
        summary["rand_index"] = rand_index(result.assignment, other_assignment)
        summary["against_variance"] = variance_of_assignment(other_assignment)
        inputs.append(Path(against))
    if compare:
        summary["comparison"] = compare_methods(dataset, config, reference=partition)
    return CommandResult(summary=summary, inputs=inputs)


def handle_transfer_command(cfg: RunConfig, partition_path: str, refit: bool = False) -> CommandResult:
    """处理 transfer：把已有划分用于新数据（越界样本截断到边界组）"""
    dataset = _load_dataset(cfg)
    partition = read_partition(partition_path)
    config = search_config(cfg, dataset.dimension)
    if refit:
        outcome = transfer_compare(partition, None, dataset, config)
        transferred = outcome["transferred"]
        summary = {
            "variance_transferred": outcome["variance_transferred"],
            "variance_refit": outcome["variance_refit"],
            "rand_index": outcome["rand_index"],
            "refit": _partition_summary(outcome["refit"].partition),
        }
    else:
        transferred = transfer_evaluate(partition, dataset, config.target, config.level, config.threshold)
        summary = {"variance_transferred": transferred.variance}
    summary.update(
        partition=_partition_summary(partition),
        groups=transferred.stats.rows(),
        clamped=transferred.clamped,
    )
    path = _output_dir(cfg) / "transfer.json"
    _write_json(summary, path)
    return CommandResult(summary=summary, inputs=[Path(cfg.input), Path(partition_path)], outputs=[path])


def handle_debias_command(cfg: RunConfig, partition_path: str) -> CommandResult:
    """
    处理 debias：对每个 α 在训练集拟合、测试集评估。
    transport.json 保存列表中最后一个 α 的映射，CDF 表基于同一映射在测试集上计算。
    """
    dataset = _load_dataset(cfg)
    partition = read_partition(partition_path)
    if not cfg.alphas:
        raise ConfigError("debias needs at least one alpha")
    report = debias_report(
        dataset,
        partition,
        alphas=cfg.alphas,
        spec=BarycenterSpec(cfg.quantile_resolution),
        test_fraction=cfg.test_fraction,
        seed=cfg.seed,
        hgr_bins=cfg.hgr_bins,
        threshold=cfg.score_threshold,
    )
    out = _output_dir(cfg)
    transport = report.transports[float(cfg.alphas[-1])]
    transport_path = out / "transport.json"
    write_transport(transport, transport_path)

    table = [{**row, "alpha": "baseline" if row["alpha"] is None else row["alpha"]} for row in report.rows]
    report_path = out / "debias_report.csv"
    _write_rows(table, report_path)

    test = dataset.subset(report.test_index)
    labels = assign_groups(test, partition, clamp=True).labels
    cdf_path = out / "debias_cdf.csv"
    _write_rows(group_cdf_table(test.score, labels, transport), cdf_path)

    summary = {
        "rows": table,
        "train_size": report.train_size,
        "test_size": report.test_size,
        "transport_alpha": transport.alpha,
        "transport": str(transport_path),
    }
    return CommandResult(
        summary=summary,
        inputs=[Path(cfg.input), Path(partition_path)],
        outputs=[transport_path, report_path, cdf_path],
    )


def handle_report_command(cfg: RunConfig, partition_path: str) -> CommandResult:
    """处理 report：每组统计与方差；有 y_hat 时附带偏差放大比较"""
    dataset = _load_dataset(cfg)
    partition = read_partition(partition_path)
    target = Target(cfg.target)
    assignment = assign_groups(dataset, partition, target=target, clamp=True, threshold=cfg.score_threshold)
    stats = group_stats(assignment, cfg.ci_level)
    summary = _partition_summary(partition)
    summary.update(
        variance=variance_of_assignment(assignment, FairnessMeasure.ONE_VS_ALL_DI),
        overall_rate=stats.rate,
        ci_level=cfg.ci_level,
        n=assignment.n,
        clamped=assignment.clamped,
        groups=stats.rows(),
    )
    if dataset.y_hat is not None:
        summary["amplification"] = [
            {
                "group": row.group,
                "phi_y": row.phi_y,
                "ci_y": list(row.ci_y),
                "phi_y_hat": row.phi_y_hat,
                "ci_y_hat": list(row.ci_y_hat),
                "amplified": row.amplified,
            }
            for row in bias_amplification_report(dataset, partition, cfg.ci_level)
        ]
    out = _output_dir(cfg)
    json_path = out / "report.json"
    csv_path = out / "report_groups.csv"
    _write_json(summary, json_path)
    _write_rows(stats.rows(), csv_path)
    return CommandResult(summary=summary, inputs=[Path(cfg.input), Path(partition_path)], outputs=[json_path, csv_path])


def summary_json(summary: Dict[str, Any]) -> str:
    return json.dumps(summary, indent=2, sort_keys=True, default=_json_default)


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")
