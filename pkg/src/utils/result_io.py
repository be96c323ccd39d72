#!/usr/bin/env python3
"""
结果读写模块 - JSON / CSV / JSON-lines 的统一读写

功能:
- 把 numpy 数组、分数等转换成可序列化的纯 Python 值
- JSON 写出使用排序键，保证同样的结果写出同样的字节
- CSV 浮点用 repr 保留全部精度
- 扩展场文件: 首行 JSON 头 + CSV 正文

版本: v1.0
"""

import csv
import io
import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np

from src.utils.exceptions import ResultFormatError


def to_jsonable(value: Any) -> Any:
    """
    递归转换为 JSON 可序列化的值

    Args:
        value: 任意值

    Returns:
        Any: 纯 Python 值（dict/list/int/float/str/bool/None）
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, Fraction):
        return str(value)
    return value


def dumps_json(data: Any) -> str:
    """确定性的 JSON 文本（排序键、两格缩进、结尾换行）"""
    return json.dumps(to_jsonable(data), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path: str, data: Any) -> str:
    """写出 JSON 文件，返回路径"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(data), encoding='utf-8')
    return str(path)


def read_json(path: str) -> Any:
    """读取 JSON 文件"""
    try:
        return json.loads(Path(path).read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as e:
        raise ResultFormatError(str(e), str(path)) from e


def _format_cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """写出 CSV 文件（首行为列名）"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([_format_cell(v) for v in row])
    path.write_text(buffer.getvalue(), encoding='utf-8')
    return str(path)


def read_csv(path: str) -> Tuple[List[str], List[List[str]]]:
    """读取 CSV 文件，返回 (列名, 行)"""
    try:
        with open(path, 'r', encoding='utf-8', newline='') as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise ResultFormatError(str(e), str(path)) from e
    if not rows:
        raise ResultFormatError("空 CSV 文件", str(path))
    return rows[0], rows[1:]


def write_jsonl(path: str, records: Iterable[Dict[str, Any]]) -> str:
    """写出 JSON-lines 文件，每条记录一行"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for record in records:
            f.write(json.dumps(to_jsonable(record), sort_keys=True) + "\n")
    return str(path)


def read_jsonl(path: str) -> List[Dict[str, Any]]:
    """读取 JSON-lines 文件"""
    records = []
    try:
        with open(path, 'r', encoding='utf-8') as f:
            for line_no, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as e:
                    raise ResultFormatError(f"第 {line_no} 行: {e}", str(path)) from e
    except OSError as e:
        raise ResultFormatError(str(e), str(path)) from e
    return records


def write_header_csv(path: str, header: Dict[str, Any], columns: Sequence[str],
                     rows: Iterable[Sequence[Any]]) -> str:
    """写出 "JSON 头 + CSV 正文" 格式的文件"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buffer = io.StringIO()
    buffer.write(json.dumps(to_jsonable(header), sort_keys=True) + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(list(columns))
    for row in rows:
        writer.writerow([_format_cell(v) for v in row])
    path.write_text(buffer.getvalue(), encoding='utf-8')
    return str(path)


def read_header_csv(path: str) -> Tuple[Dict[str, Any], List[str], List[List[str]]]:
    """读取 "JSON 头 + CSV 正文" 格式的文件，返回 (头, 列名, 行)"""
    try:
        text = Path(path).read_text(encoding='utf-8')
    except OSError as e:
        raise ResultFormatError(str(e), str(path)) from e
    first, _, body = text.partition("\n")
    try:
        header = json.loads(first)
    except json.JSONDecodeError as e:
        raise ResultFormatError(f"JSON 头无效: {e}", str(path)) from e
    rows = list(csv.reader(io.StringIO(body)))
    if not rows:
        raise ResultFormatError("缺少 CSV 正文", str(path))
    return header, rows[0], rows[1:]
