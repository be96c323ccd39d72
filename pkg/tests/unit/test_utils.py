#!/usr/bin/env python3
"""
工具模块单元测试

测试场景:
- RK4 推进精度与输出时刻
- 1/L 外推、全变差
- 结果文件读写与格式错误
- 异常的退出码与错误记录
- 配置文件与环境变量覆盖、日志处理器

版本: v1.0
"""

import json
import logging
import math
import os
import shutil
import sys
import tempfile
import unittest
from fractions import Fraction
from pathlib import Path
from unittest import mock

import numpy as np

# 添加项目根目录到路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from config.settings import Config
from src.utils.exceptions import (
    CapExceededError,
    ConfigurationError,
    PermLabError,
    PreconditionError,
    ResultFormatError,
    SingularityError,
)
from src.utils.logger import get_logger, setup_logger
from src.utils.numerics import (
    multinomial_tv_stderr,
    richardson_extrapolate,
    rk4_integrate,
    total_variation,
)
from src.utils.result_io import (
    dumps_json,
    read_csv,
    read_header_csv,
    read_json,
    read_jsonl,
    write_csv,
    write_header_csv,
    write_jsonl,
)


class TestNumerics(unittest.TestCase):
    """数值工具测试"""

    def test_rk4_exponential_decay(self):
        (state,) = rk4_integrate(lambda y: -y, np.array([1.0]), [1.0], 0.01)
        self.assertAlmostEqual(float(state[0]), math.exp(-1.0), delta=1e-9)

    def test_rk4_output_times(self):
        states = rk4_integrate(lambda y: np.ones_like(y), np.zeros(2), [0.0, 0.5, 1.0], 0.3)
        self.assertEqual(len(states), 3)
        np.testing.assert_array_equal(states[0], [0.0, 0.0])
        np.testing.assert_allclose(states[1], [0.5, 0.5], atol=1e-14)
        np.testing.assert_allclose(states[2], [1.0, 1.0], atol=1e-14)

    def test_rk4_invalid(self):
        with self.assertRaises(PreconditionError):
            rk4_integrate(lambda y: y, np.ones(1), [1.0], 0.0)
        with self.assertRaises(PreconditionError):
            rk4_integrate(lambda y: y, np.ones(1), [1.0, 0.5], 0.1)

    def test_richardson_quadratic(self):
        sizes = [8, 12, 16]
        values = [2.0 + 3.0 / L - 1.0 / L ** 2 for L in sizes]
        limit, uncertainty = richardson_extrapolate(sizes, values)
        self.assertAlmostEqual(limit, 2.0, delta=1e-10)
        self.assertGreater(uncertainty, 0.0)

    def test_richardson_single_point(self):
        limit, uncertainty = richardson_extrapolate([8], [1.5])
        self.assertEqual(limit, 1.5)
        self.assertTrue(math.isinf(uncertainty))
        with self.assertRaises(PreconditionError):
            richardson_extrapolate([8, 12], [1.0])

    def test_total_variation(self):
        self.assertEqual(total_variation(np.array([1.0, 0.0]), np.array([0.5, 0.5])), 0.5)
        self.assertAlmostEqual(multinomial_tv_stderr(np.array([0.5, 0.5]), 100), 0.05, delta=1e-15)


class TestResultIO(unittest.TestCase):
    """结果读写测试"""

    def setUp(self):
        self.temp_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_json_is_deterministic(self):
        first = dumps_json({'b': np.float64(0.5), 'a': [np.int64(3), Fraction(1, 3)]})
        second = dumps_json({'a': [3, Fraction(1, 3)], 'b': 0.5})
        self.assertEqual(first, second)
        self.assertEqual(json.loads(first), {'a': [3, '1/3'], 'b': 0.5})

    def test_csv_keeps_float_precision(self):
        path = write_csv(str(self.temp_dir / "sub" / "x.csv"), ['i', 'v'], [(0, 0.1 + 0.2), (1, np.float64(1e-17))])
        header, rows = read_csv(path)
        self.assertEqual(header, ['i', 'v'])
        self.assertEqual(float(rows[0][1]), 0.1 + 0.2)
        self.assertEqual(rows[1], ['1', '1e-17'])

    def test_jsonl_bad_line(self):
        path = write_jsonl(str(self.temp_dir / "a.jsonl"), [{'k': 1}, {'k': 2}])
        self.assertEqual(read_jsonl(path), [{'k': 1}, {'k': 2}])
        with open(path, 'a', encoding='utf-8') as f:
            f.write("{not json\n")
        with self.assertRaises(ResultFormatError) as ctx:
            read_jsonl(path)
        self.assertIn("第 3 行", ctx.exception.message)

    def test_header_csv(self):
        path = write_header_csv(str(self.temp_dir / "f.csv"), {'L': 3}, ['index', 'value'], [(0, 1.0)])
        header, columns, rows = read_header_csv(path)
        self.assertEqual(header, {'L': 3})
        self.assertEqual(columns, ['index', 'value'])
        self.assertEqual(rows, [['0', '1.0']])

    def test_missing_and_invalid_files(self):
        with self.assertRaises(ResultFormatError):
            read_json(str(self.temp_dir / "absent.json"))
        bad = self.temp_dir / "bad.csv"
        bad.write_text("not a header\nindex,value\n", encoding='utf-8')
        with self.assertRaises(ResultFormatError):
            read_header_csv(str(bad))


class TestExceptions(unittest.TestCase):
    """异常测试"""

    def test_exit_codes(self):
        self.assertEqual(PermLabError("x").exit_code, 1)
        self.assertEqual(ConfigurationError("x").exit_code, 2)
        self.assertEqual(PreconditionError("x").exit_code, 3)
        self.assertEqual(SingularityError(0.3).exit_code, 3)
        self.assertEqual(CapExceededError("N!", 120, 100).exit_code, 4)

    def test_record(self):
        record = CapExceededError("N!", 120, 100).to_record()
        self.assertEqual(record['type'], 'CapExceededError')
        self.assertEqual(record['exit_code'], 4)
        self.assertEqual(record['details'], {'what': 'N!', 'size': 120, 'cap': 100})
        json.dumps(record)


class TestConfig(unittest.TestCase):
    """配置管理测试"""

    def setUp(self):
        self.temp_dir = Path(tempfile.mkdtemp())
        self.path = self.temp_dir / "conf.yaml"
        self.path.write_text("paths:\n  output_dir: out\nsampling:\n  seed: 1\n", encoding='utf-8')

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_dotted_access(self):
        cfg = Config(str(self.path))
        self.assertEqual(cfg.get('sampling.seed'), 1)
        self.assertEqual(cfg.get('sampling.count', 7), 7)
        self.assertTrue(Path(cfg.get('paths.output_dir')).is_absolute())

    def test_env_override(self):
        with mock.patch.dict(os.environ, {'PERMLAB_SEED': '42', 'PERMLAB_CAP_GROUP': 'many'}):
            cfg = Config(str(self.path))
        self.assertEqual(cfg.get('sampling.seed'), 42)
        self.assertIsNone(cfg.get('group_walk.cap_group'))

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            Config(str(self.temp_dir / "absent.yaml"))


class TestLogger(unittest.TestCase):
    """日志系统测试"""

    def setUp(self):
        self.temp_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        for handler in logging.getLogger("permlab").handlers:
            handler.close()
        logging.getLogger("permlab").handlers.clear()
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_setup_is_idempotent(self):
        setup_logger(log_dir=str(self.temp_dir), console_output=False)
        logger = setup_logger(log_dir=str(self.temp_dir), console_output=False)
        self.assertEqual(len(logger.handlers), 1)
        get_logger("tests").info("写入日志")
        self.assertEqual(len(list(self.temp_dir.glob("permlab_*.log"))), 1)

    def test_child_logger_name(self):
        self.assertEqual(get_logger("src.modules.group_walk").name, "permlab.src.modules.group_walk")


if __name__ == '__main__':
    unittest.main()
