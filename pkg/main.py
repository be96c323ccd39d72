#!/usr/bin/env python3
"""
permlab - 命令行入口

Usage:
    python main.py --task catalan --order 10 --format csv --out catalan.csv
    python main.py --task restrict-check --dim 1 --edge 3 --r 0.5 --out restrict.json
    python main.py --task diagrams --n 3 --kind full --time-grid 0:4:0.5
    python main.py --config experiment.yaml --seed 7

退出码: 0 成功, 2 配置错误, 3 前置条件不满足, 4 超出规模上限, 1 其他错误
"""

import argparse
import json
import signal
import sys
import time
import traceback
from typing import Any, Dict, List, Optional

from src import __version__
from src.modules.experiment_runner import TASKS, ExperimentConfig, load_config_file, run
from src.utils.exceptions import PermLabError
from src.utils.logger import setup_logger
from src.utils.result_io import write_json
from config.settings import LOG_CONSOLE_OUTPUT, LOG_FILE_OUTPUT, PATH_LOGS_DIR

logger = None

# 命令行参数名 -> ExperimentConfig 字段
FLAG_FIELDS = (
    'task', 'dim', 'edge', 'time', 'time_grid', 'r', 'order', 'seed', 'step', 'out',
    'format', 'threads', 'cap_states', 'cap_group', 'n', 'kind', 'z', 'rho',
    'vertices', 'imax', 'count', 'sizes',
)


def signal_handler(signum, frame):
    """信号处理器 - 中断时以非零状态退出"""
    if logger:
        logger.warning("收到中断信号，退出")
    sys.exit(1)


def setup_signal_handlers():
    signal.signal(signal.SIGINT, signal_handler)
    signal.signal(signal.SIGTERM, signal_handler)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='permlab - 置换群随机游走、扩展方程与树图渐近的数值实验',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
示例:
  %(prog)s --task heat-kernel --edge 5 --time 2          # 热核两路对照
  %(prog)s --task catalan --order 10 --format csv --out a.csv
  %(prog)s --task eq51 --vertices 100 --imax 3            # 连通模式计数最大化
  %(prog)s --task permanent --edge 10 --time-grid 0:200:50
        """
    )
    # 默认值全部为 None: 只有显式给出的参数才覆盖配置文件
    parser.add_argument('--task', choices=TASKS, help='实验任务')
    parser.add_argument('--config', help='YAML 配置文件（ExperimentConfig 的键）')
    parser.add_argument('--dim', type=int, help='晶格维数 d')
    parser.add_argument('--edge', type=int, help='晶格边长 L')
    time_group = parser.add_mutually_exclusive_group()
    time_group.add_argument('--time', type=float, help='单个时刻 t')
    time_group.add_argument('--time-grid', dest='time_grid', help='时间网格 a:b:step（含两端）')
    parser.add_argument('--r', type=float, help='两体势参数 r')
    parser.add_argument('--order', type=int, help='级数截断阶数 / Catalan 表长度')
    parser.add_argument('--seed', type=int, help='随机种子')
    parser.add_argument('--step', type=float, help='时间推进步长')
    parser.add_argument('--out', help='输出文件路径')
    parser.add_argument('--format', choices=('json', 'csv'), help='输出格式')
    parser.add_argument('--threads', type=int, help='线程数（默认取 PERMLAB_THREADS 或配置）')
    parser.add_argument('--cap-states', dest='cap_states', type=int, help='配置空间状态数上限')
    parser.add_argument('--cap-group', dest='cap_group', type=int, help='N! 上限')
    parser.add_argument('--n', type=int, help='树图粒子数')
    parser.add_argument('--kind', choices=('lower', 'full'), help='T_n (lower) 或 T̃_n (full)')
    parser.add_argument('--z', type=float, help='生成函数自变量')
    parser.add_argument('--rho', type=float, help='ρ 变体的密度')
    parser.add_argument('--vertices', type=int, help='连通模式计数的顶点数 N')
    parser.add_argument('--imax', type=int, help='最大簇下标')
    parser.add_argument('--count', type=int, help='采样数')
    parser.add_argument('--sizes', help='外推用的边长序列，如 8,12,16（diagrams 任务）')
    parser.add_argument('-v', '--verbose', action='store_true', help='详细日志输出')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    return parser


def collect_config(args: argparse.Namespace) -> ExperimentConfig:
    """默认值 < 环境变量 < 配置文件 < 命令行参数"""
    mapping: Dict[str, Any] = {}
    if args.config:
        mapping.update(load_config_file(args.config))
    for key in FLAG_FIELDS:
        value = getattr(args, key)
        if value is not None:
            mapping[key] = value
    # 命令行上的单个时刻覆盖配置文件里的网格，反之亦然
    if args.time is not None:
        mapping.pop('time_grid', None)
    if args.time_grid is not None:
        mapping.pop('time', None)
    return ExperimentConfig.from_mapping(mapping)


def emit_error(record: Dict[str, Any], out: Optional[str]) -> None:
    """错误记录写到 stderr，并在给定输出路径时写入该文件"""
    sys.stderr.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
    if out:
        try:
            write_json(out, record)
        except OSError as e:
            if logger:
                logger.warning(f"错误记录写入失败: {out}: {e}")


def main(argv: Optional[List[str]] = None) -> int:
    """主函数 - 解析参数、运行实验、映射退出码"""
    global logger

    setup_signal_handlers()
    args = build_parser().parse_args(argv)

    logger = setup_logger(
        verbose=args.verbose,
        log_dir=PATH_LOGS_DIR or "logs",
        console_output=LOG_CONSOLE_OUTPUT,
        file_output=LOG_FILE_OUTPUT
    )

    start_time = time.time()
    out = args.out
    try:
        cfg = collect_config(args)
        out = cfg.out
        logger.info("=" * 60)
        logger.info(f"permlab {__version__}: 任务 {cfg.task}")
        logger.info("=" * 60)

        envelope = run(cfg)
        if not cfg.out:
            sys.stdout.write(envelope.to_json())

        logger.info(f"完成，用时 {time.time() - start_time:.2f}秒")
        return 0

    except PermLabError as e:
        logger.error(f"{type(e).__name__}: {e.message}")
        emit_error(e.to_record(), out)
        return e.exit_code
    except KeyboardInterrupt:
        logger.warning("用户中断操作")
        return 1
    except Exception as e:
        logger.error(f"未处理的异常: {e}")
        logger.error(traceback.format_exc())
        emit_error({'error': str(e), 'type': type(e).__name__, 'exit_code': 1, 'details': {}}, out)
        return 1


if __name__ == "__main__":
    sys.exit(main())
