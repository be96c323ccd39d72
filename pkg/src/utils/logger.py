#!/usr/bin/env python3
"""
日志工具模块 - 统一的日志系统

功能:
- 支持多级别输出（DEBUG, INFO, WARNING, ERROR）
- 同时输出到控制台和文件
- 按大小轮转日志文件
- 包含模块名称、行号、时间戳

版本: v1.0
"""

import logging
import sys
from pathlib import Path
from datetime import datetime
from logging.handlers import RotatingFileHandler

ROOT_LOGGER_NAME = "permlab"


def setup_logger(
    verbose: bool = False,
    log_dir: str = "logs",
    console_output: bool = True,
    file_output: bool = True
) -> logging.Logger:
    """
    设置日志系统

    Args:
        verbose: 是否启用详细输出
        log_dir: 日志文件目录
        console_output: 是否输出到控制台（stderr，避免污染结果输出）
        file_output: 是否写日志文件

    Returns:
        logging.Logger: 配置好的日志记录器
    """
    logger = logging.getLogger(ROOT_LOGGER_NAME)
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)

    # 清除已有处理器
    logger.handlers.clear()

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - [%(filename)s:%(lineno)d] - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    if console_output:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(logging.DEBUG if verbose else logging.INFO)
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

    if file_output:
        log_path = Path(log_dir)
        log_path.mkdir(parents=True, exist_ok=True)
        log_file = log_path / f"permlab_{datetime.now().strftime('%Y%m%d')}.log"
        file_handler = RotatingFileHandler(
            log_file,
            maxBytes=10*1024*1024,  # 10MB
            backupCount=5,
            encoding='utf-8'
        )
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger


def get_logger(name: str = None) -> logging.Logger:
    """
    获取日志记录器

    模块名会挂到 permlab 根记录器下，例如 src.modules.group_walk
    对应 permlab.src.modules.group_walk。

    Args:
        name: 模块名称

    Returns:
        logging.Logger: 日志记录器实例
    """
    if name is None:
        return logging.getLogger(ROOT_LOGGER_NAME)
    return logging.getLogger(f"{ROOT_LOGGER_NAME}.{name}")
