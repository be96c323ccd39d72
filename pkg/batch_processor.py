#!/usr/bin/env python3
"""
验收检查集 - 批量运行验收标准并汇总

Usage:
    python batch_processor.py --output-dir ./output/bundle
    python batch_processor.py --output-dir ./output/bundle --criteria 1,8,9,10
    python batch_processor.py --bundle bundle.yaml --output-dir ./output/bundle
"""

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import yaml
from colorama import Fore, Style, init as colorama_init
from tqdm import tqdm

from src.modules.acceptance import (
    CRITERIA,
    FAIL,
    PASS,
    REPORT_ONLY,
    SKIPPED,
    BundleSpec,
    CriterionResult,
    run_criterion,
)
from src.utils.exceptions import ConfigurationError, PermLabError
from src.utils.logger import get_logger, setup_logger
from src.utils.result_io import write_json
from config.settings import PATH_LOGS_DIR, PATH_OUTPUT_DIR, PERFORMANCE_MAX_WORKERS

logger = get_logger(__name__)

STATUS_COLORS = {
    PASS: Fore.GREEN,
    FAIL: Fore.RED,
    SKIPPED: Fore.YELLOW,
    REPORT_ONLY: Fore.CYAN,
}


def report_bundle(
    specs: Sequence[BundleSpec],
    output_dir: str,
    max_workers: int = 1,
    progress: bool = True
) -> Dict[str, Any]:
    """
    运行检查集并写出汇总

    每个条目的每条标准作为一个任务并行执行；子任务失败只标记该行。

    Args:
        specs: 检查集条目（空列表得到空汇总）
        output_dir: 输出目录，写 summary.json 与 criterion_XX[_k].json
        max_workers: 最大并行线程数
        progress: 是否显示进度条

    Returns:
        dict: 汇总统计 {total, passed, failed, skipped, report_only, rows}
    """
    output_path = Path(output_dir)
    output_path.mkdir(parents=True, exist_ok=True)

    jobs = [(k, number, spec) for k, spec in enumerate(specs) for number in spec.criteria]
    results: Dict[tuple, CriterionResult] = {}

    if jobs:
        logger.info(f"检查集: {len(specs)} 个条目, {len(jobs)} 条标准, {max_workers} 个线程")
        with ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
            futures = {
                executor.submit(run_criterion, number, spec): (k, number)
                for k, number, spec in jobs
            }
            with tqdm(total=len(futures), desc="验收进度", disable=not progress) as pbar:
                for future in as_completed(futures):
                    key = futures[future]
                    results[key] = future.result()
                    pbar.update(1)

    rows = []
    for k, number, _ in jobs:
        result = results[(k, number)]
        suffix = f"_{k}" if len(specs) > 1 else ""
        artifact = output_path / f"criterion_{number:02d}{suffix}.json"
        write_json(str(artifact), result.to_dict())
        rows.append({
            'entry': k, 'number': number, 'title': result.title,
            'status': result.status, 'reason': result.reason, 'artifact': artifact.name,
        })

    summary = {
        'total': len(rows),
        'passed': sum(r['status'] == PASS for r in rows),
        'failed': sum(r['status'] == FAIL for r in rows),
        'skipped': sum(r['status'] == SKIPPED for r in rows),
        'report_only': sum(r['status'] == REPORT_ONLY for r in rows),
        'rows': rows,
    }
    write_json(str(output_path / "summary.json"), summary)
    return summary


def format_table(summary: Dict[str, Any]) -> str:
    """带颜色的汇总表"""
    lines = [f"{'#':>3}  {'状态':<12} 标准"]
    for row in summary['rows']:
        color = STATUS_COLORS.get(row['status'], '')
        status = f"{color}{row['status']:<12}{Style.RESET_ALL}"
        reason = f"  ({row['reason']})" if row['reason'] else ""
        lines.append(f"{row['number']:>3}  {status} {row['title']}{reason}")
    return "\n".join(lines)


def parse_criteria(text: str) -> List[int]:
    try:
        numbers = [int(part) for part in text.split(',') if part.strip()]
    except ValueError as e:
        raise ConfigurationError(f"--criteria 应为逗号分隔的编号: {text!r}") from e
    unknown = [n for n in numbers if n not in CRITERIA]
    if unknown:
        raise ConfigurationError(f"未知的标准编号: {unknown}", {'criteria': unknown})
    return numbers


def load_bundle(path: str) -> List[BundleSpec]:
    """读取 YAML 检查集：条目映射组成的列表"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f) or []
    except (OSError, yaml.YAMLError) as e:
        raise ConfigurationError(f"检查集文件无法读取: {path}: {e}") from e
    if not isinstance(data, list) or not all(isinstance(entry, dict) for entry in data):
        raise ConfigurationError(f"检查集文件应为映射列表: {path}")
    return [BundleSpec.from_mapping(entry) for entry in data]


def main(argv: Optional[List[str]] = None) -> int:
    """主函数"""
    parser = argparse.ArgumentParser(description='permlab 验收检查集')
    parser.add_argument(
        '--output-dir',
        default=str(Path(PATH_OUTPUT_DIR or "output") / "bundle"),
        help='汇总与各标准结果的输出目录'
    )
    parser.add_argument('--bundle', help='YAML 检查集文件（条目列表）')
    parser.add_argument('--criteria', help='只运行这些标准，例如 1,8,9')
    parser.add_argument('--cap-states', dest='cap_states', type=int, help='配置空间状态数上限')
    parser.add_argument('--cap-group', dest='cap_group', type=int, help='N! 上限')
    parser.add_argument('--permanent-cap', dest='permanent_cap', type=int, help='积和式阶数上限')
    parser.add_argument(
        '--workers',
        type=int,
        default=PERFORMANCE_MAX_WORKERS,
        help=f'最大并行线程数 (默认: {PERFORMANCE_MAX_WORKERS})'
    )
    parser.add_argument('-v', '--verbose', action='store_true', help='详细日志输出')
    args = parser.parse_args(argv)

    setup_logger(verbose=args.verbose, log_dir=PATH_LOGS_DIR or "logs")
    colorama_init()

    try:
        if args.bundle:
            specs = load_bundle(args.bundle)
        else:
            overrides = {
                key: getattr(args, key)
                for key in ('cap_states', 'cap_group', 'permanent_cap')
                if getattr(args, key) is not None
            }
            if args.criteria:
                overrides['criteria'] = parse_criteria(args.criteria)
            specs = [BundleSpec.from_mapping(overrides)]
    except PermLabError as e:
        print(f"错误: {e.message}", file=sys.stderr)
        return e.exit_code

    summary = report_bundle(specs, args.output_dir, args.workers)

    print("\n" + "=" * 50)
    print(format_table(summary))
    print("=" * 50)
    print(f"总计: {summary['total']}  通过: {summary['passed']}  失败: {summary['failed']}  "
          f"跳过: {summary['skipped']}  仅报告: {summary['report_only']}")

    return 0 if summary['failed'] == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
