#!/usr/bin/env python3
"""
实验编排模块单元测试

测试场景:
- 时间网格解析
- 配置校验（未知键、类型、任务名、互斥项）
- YAML 配置文件读取
- 任务运行、CSV/JSON 输出与计时附带文件
- 结果信封的读回与跨线程数的确定性

版本: v1.0
"""

import json
import os
import shutil
import sys
import tempfile
import unittest
from pathlib import Path

# 添加项目根目录到路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from src.modules.experiment_runner import (
    TASK_HANDLERS,
    TASKS,
    ExperimentConfig,
    ResultEnvelope,
    load_config_file,
    parse_time_grid,
    run,
    timing_path,
)
from src.utils.exceptions import CapExceededError, ConfigurationError, PreconditionError


class TestTimeGrid(unittest.TestCase):
    """时间网格解析测试"""

    def test_inclusive_grid(self):
        self.assertEqual(parse_time_grid("0:1:0.25"), (0.0, 0.25, 0.5, 0.75, 1.0))
        self.assertEqual(len(parse_time_grid("0:4:0.5")), 9)

    def test_decimal_step_is_exact(self):
        self.assertEqual(parse_time_grid("0:0.3:0.1"), (0.0, 0.1, 0.2, 0.3))

    def test_single_point(self):
        self.assertEqual(parse_time_grid("2:2:1"), (2.0,))

    def test_invalid(self):
        for text in ("0:1", "a:b:c", "0:1:0", "1:0:0.1", "0:1:-0.5"):
            with self.assertRaises(ConfigurationError, msg=text) as ctx:
                parse_time_grid(text)
            self.assertEqual(ctx.exception.exit_code, 2)


class TestExperimentConfig(unittest.TestCase):
    """配置校验测试"""

    def test_defaults(self):
        cfg = ExperimentConfig.from_mapping({'task': 'catalan'})
        self.assertEqual(cfg.dim, 1)
        self.assertEqual(cfg.format, 'json')
        self.assertEqual(cfg.times(), [1.0])

    def test_every_task_has_handler(self):
        self.assertEqual(set(TASKS), set(TASK_HANDLERS))

    def test_unknown_key(self):
        with self.assertRaises(ConfigurationError) as ctx:
            ExperimentConfig.from_mapping({'task': 'catalan', 'colour': 'red'})
        self.assertEqual(ctx.exception.details['unknown_keys'], ['colour'])

    def test_missing_and_unknown_task(self):
        with self.assertRaises(ConfigurationError):
            ExperimentConfig.from_mapping({'edge': 4})
        with self.assertRaises(ConfigurationError):
            ExperimentConfig.from_mapping({'task': 'plot-curves'})

    def test_type_checks(self):
        for mapping in ({'edge': '4'}, {'edge': 4.0}, {'dim': True}, {'r': 'half'}, {'kind': 3}):
            mapping = dict(mapping, task='heat-kernel')
            with self.assertRaises(ConfigurationError, msg=str(mapping)):
                ExperimentConfig.from_mapping(mapping)

    def test_integer_promoted_to_float(self):
        cfg = ExperimentConfig.from_mapping({'task': 'heat-kernel', 'time': 2})
        self.assertIsInstance(cfg.time, float)

    def test_enumerated_values(self):
        with self.assertRaises(ConfigurationError):
            ExperimentConfig.from_mapping({'task': 'catalan', 'format': 'xml'})
        with self.assertRaises(ConfigurationError):
            ExperimentConfig.from_mapping({'task': 'diagrams', 'kind': 'upper'})

    def test_time_and_grid_exclusive(self):
        with self.assertRaises(ConfigurationError):
            ExperimentConfig.from_mapping({'task': 'extend', 'time': 1.0, 'time_grid': '0:1:0.5'})

    def test_grid_forms(self):
        from_text = ExperimentConfig.from_mapping({'task': 'extend', 'time_grid': '0.5:1.5:0.5'})
        from_list = ExperimentConfig.from_mapping({'task': 'extend', 'time_grid': [0.5, 1, 1.5]})
        self.assertEqual(from_text.times(), [0.5, 1.0, 1.5])
        self.assertEqual(from_text.time_grid, from_list.time_grid)

    def test_sizes_forms(self):
        from_text = ExperimentConfig.from_mapping({'task': 'diagrams', 'sizes': '8, 12,16'})
        from_list = ExperimentConfig.from_mapping({'task': 'diagrams', 'sizes': [8, 12, 16]})
        self.assertEqual(from_text.sizes, (8, 12, 16))
        self.assertEqual(from_text.sizes, from_list.sizes)
        for raw in ('', 'a,b', [8, 1.5], [], 8):
            with self.assertRaises(ConfigurationError, msg=repr(raw)):
                ExperimentConfig.from_mapping({'task': 'diagrams', 'sizes': raw})

    def test_parameters_omit_output_settings(self):
        cfg = ExperimentConfig.from_mapping({'task': 'sample', 'out': 'x.json', 'threads': 3, 'time_grid': '0:1:0.5'})
        params = cfg.parameters()
        self.assertNotIn('out', params)
        self.assertNotIn('threads', params)
        self.assertEqual(params['time_grid'], [0.0, 0.5, 1.0])


class TestConfigFile(unittest.TestCase):
    """配置文件测试"""

    def setUp(self):
        self.temp_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_hyphenated_keys(self):
        path = self.temp_dir / "exp.yaml"
        path.write_text("task: group-walk\nedge: 4\ncap-group: 100\ntime-grid: '0:1:0.5'\n", encoding='utf-8')
        mapping = load_config_file(str(path))
        self.assertEqual(mapping['cap_group'], 100)
        cfg = ExperimentConfig.from_mapping(mapping)
        self.assertEqual(cfg.times(), [0.0, 0.5, 1.0])

    def test_not_a_mapping(self):
        path = self.temp_dir / "list.yaml"
        path.write_text("- task: catalan\n", encoding='utf-8')
        with self.assertRaises(ConfigurationError):
            load_config_file(str(path))

    def test_missing_file(self):
        with self.assertRaises(ConfigurationError):
            load_config_file(str(self.temp_dir / "absent.yaml"))


class TestRun(unittest.TestCase):
    """任务运行测试"""

    def setUp(self):
        self.temp_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def _run(self, **mapping):
        return run(ExperimentConfig.from_mapping(mapping))

    def test_catalan_csv(self):
        out = str(self.temp_dir / "catalan.csv")
        envelope = self._run(task='catalan', order=10, format='csv', out=out)
        lines = Path(out).read_text(encoding='utf-8').splitlines()
        self.assertEqual(lines[0], 'i,A_i')
        self.assertEqual(lines[-1], '10,16796')
        self.assertTrue(envelope.values['matches_closed_form'])
        timing = json.loads(Path(timing_path(out)).read_text(encoding='utf-8'))
        self.assertEqual(timing['task'], 'catalan')
        self.assertGreaterEqual(timing['runtime_seconds'], 0.0)

    def test_json_envelope_round_trip(self):
        out = str(self.temp_dir / "walk.json")
        envelope = self._run(task='group-walk', edge=4, time_grid='0:1:0.5', out=out)
        loaded = ResultEnvelope.load(out)
        self.assertEqual(loaded, envelope)
        self.assertEqual(loaded.provenance['tool'], 'permlab')
        self.assertEqual(loaded.values['curve'][0]['identity_weight'], 1.0)

    def test_heat_kernel_routes(self):
        envelope = self._run(task='heat-kernel', edge=4, time=1.0)
        self.assertLessEqual(envelope.values['curve'][0]['route_difference'], 1e-10)

    def test_restrict_check(self):
        envelope = self._run(task='restrict-check', edge=3, r=0.5, time_grid='0.5:1.5:0.5')
        self.assertLessEqual(envelope.values['max_defect'], 1e-6)
        self.assertEqual(len(envelope.values['curve']), 3)

    def test_sample_artifact(self):
        out = str(self.temp_dir / "sample.json")
        self._run(task='sample', edge=4, time=1.0, count=200, seed=5, out=out)
        lines = Path(f"{out}.samples.jsonl").read_text(encoding='utf-8').splitlines()
        self.assertEqual(len(lines), 200)

    def test_sample_independent_of_threads(self):
        one = self._run(task='sample', edge=5, time=0.7, count=3000, seed=11, threads=1)
        many = self._run(task='sample', edge=5, time=0.7, count=3000, seed=11, threads=3)
        self.assertEqual(one.to_json(), many.to_json())

    def test_extend_artifact(self):
        out = str(self.temp_dir / "extend.json")
        envelope = self._run(task='extend', edge=3, time=0.5, step=0.01, out=out)
        self.assertAlmostEqual(envelope.values['curve'][0]['mass_B'], 1.0, delta=1e-9)
        self.assertTrue(Path(f"{out}.field.csv").exists())

    def test_diagrams(self):
        envelope = self._run(task='diagrams', edge=5, n=3, kind='lower', time_grid='0:2:1')
        self.assertEqual(envelope.values['target_limit'], -1)
        self.assertAlmostEqual(envelope.values['curve'][0]['value'], 0.0, delta=1e-14)

    def test_diagrams_extrapolation_sidecar(self):
        out = self.temp_dir / "diagrams.json"
        envelope = self._run(task='diagrams', edge=5, n=2, kind='lower', time_grid='0:2:1', sizes='6,8,10', out=str(out))
        self.assertIsNotNone(envelope.values['extrapolated_limit'])
        self.assertAlmostEqual(envelope.values['extrapolated_limit'], 1.0, delta=0.05)
        self.assertEqual(envelope.values['finite_size']['sizes'], [6, 8, 10])
        curve_lines = Path(f"{out}.curve.csv").read_text(encoding='utf-8').splitlines()
        self.assertEqual(curve_lines[0], 't,value')
        self.assertEqual(len(curve_lines), 4)
        sidecar = json.loads((self.temp_dir / "diagrams.json.curve.json").read_text(encoding='utf-8'))
        for key in ('n', 'kind', 'L', 'd', 'step', 'extrapolated_limit', 'uncertainty'):
            self.assertIn(key, sidecar)
        self.assertEqual(sidecar['L'], 5)
        self.assertEqual(sidecar['extrapolated_limit'], envelope.values['extrapolated_limit'])

    def test_diagrams_without_sizes(self):
        envelope = self._run(task='diagrams', edge=5, n=2, kind='lower', time=1.0)
        self.assertIsNone(envelope.values['extrapolated_limit'])
        self.assertNotIn('finite_size', envelope.values)

    def test_eq51(self):
        envelope = self._run(task='eq51', vertices=10, imax=1)
        self.assertEqual(envelope.values['counts'], [2])
        self.assertFalse(envelope.values['eq54_solvable'])

    def test_rho_and_genfun(self):
        rho = self._run(task='rho', rho=0.3)
        self.assertLessEqual(rho.values['difference'], 1e-10)
        genfun = self._run(task='genfun', z=0.1)
        self.assertLessEqual(genfun.values['difference'], 1e-12)

    def test_permanent(self):
        envelope = self._run(task='permanent', edge=3, time_grid='0:50:50')
        curve = envelope.values['curve']
        self.assertAlmostEqual(curve[0]['permanent'], 1.0, delta=1e-12)
        self.assertAlmostEqual(curve[-1]['permanent'], 2.0 / 9.0, delta=1e-9)

    def test_module_errors_propagate(self):
        with self.assertRaises(PreconditionError) as ctx:
            self._run(task='heat-kernel', edge=2)
        self.assertEqual(ctx.exception.message, "L must be ≥ 3")
        with self.assertRaises(PreconditionError):
            self._run(task='rho', rho=0.6)
        with self.assertRaises(PreconditionError):
            self._run(task='extend', edge=3, step=0.0)
        with self.assertRaises(CapExceededError):
            self._run(task='group-walk', edge=5, cap_group=100)


if __name__ == '__main__':
    unittest.main()
