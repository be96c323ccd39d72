#!/usr/bin/env python3
"""
树图计算模块单元测试

测试场景:
- 单次相互作用的两条计算路径
- T_2、T_3 闭式与初等对称多项式路径
- Dyson 层级 ODE 与 Gauss-Legendre 直接求积对照
- 完整树图和 T̃_n（T̃_2 退化、线程数无关）
- 伸缩求和恒等式
- 非树项随 t 收敛、有限尺寸外推、结果落盘

版本: v1.0
"""

import json
import math
import os
import shutil
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

# 添加项目根目录到路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from src.modules.diagram_engine import (
    DysonTerm,
    T_n_lower_limits,
    T_tilde_n,
    dyson_curve,
    dyson_oracle,
    dyson_quadrature,
    finite_size_limit,
    lower_limit_target,
    save_evaluation,
    single_interaction_rate,
    spanning_sequences,
    t2_closed_form,
    t3_closed_form,
    telescopic_identity_check,
    telescopic_identity_total,
    theorem1_contribution,
)
from src.modules.lattice_core import build_lattice
from src.utils.exceptions import PreconditionError


class TestSingleInteraction(unittest.TestCase):
    """单次相互作用测试"""

    def test_rate_matches_time_derivative(self):
        lattice = build_lattice(1, 5)
        for z2 in (0, 1, 2):
            a = theorem1_contribution(lattice, 0, z2, 0.3)
            b = single_interaction_rate(lattice, 0, z2, 0.3)
            self.assertAlmostEqual(a, b, delta=1e-13)

    def test_diagonal_weight_factor(self):
        lattice = build_lattice(2, 3)
        base = single_interaction_rate(lattice, 0, 4, 0.5)
        scaled = single_interaction_rate(lattice, 0, 4, 0.5, r=0.5)
        self.assertAlmostEqual(scaled, 1.5 * base, delta=1e-13)

    def test_bad_vertex(self):
        with self.assertRaises(PreconditionError):
            theorem1_contribution(build_lattice(1, 3), 0, 3, 1.0)


class TestLowerLimits(unittest.TestCase):
    """只保留下限的贡献测试"""

    def test_t2_equals_dyson_term(self):
        lattice = build_lattice(1, 5)
        for t in (0.2, 1.0):
            oracle = dyson_oracle(lattice, 2, [(0, 1)], t)
            self.assertAlmostEqual(oracle, t2_closed_form(lattice, t), delta=1e-9)

    def test_t2_by_quadrature(self):
        lattice = build_lattice(1, 4)
        value = dyson_quadrature(lattice, 2, [(0, 1)], 1.5)
        self.assertAlmostEqual(value, t2_closed_form(lattice, 1.5), delta=1e-10)

    def test_t3_closed_form(self):
        for L in (4, 5, 7):
            lattice = build_lattice(1, L)
            for t in (0.3, 1.7):
                value = T_n_lower_limits(lattice, 3, t).final_value
                self.assertAlmostEqual(value, t3_closed_form(lattice, t), delta=1e-12)

    def test_zero_time(self):
        lattice = build_lattice(1, 6)
        for n in (2, 3, 4):
            self.assertAlmostEqual(T_n_lower_limits(lattice, n, 0.0).final_value, 0.0, delta=1e-14)

    def test_curve_on_grid(self):
        evaluation = T_n_lower_limits(build_lattice(1, 6), 2, [0.5, 1.0, 2.0])
        self.assertEqual([s for s, _ in evaluation.curve], [0.5, 1.0, 2.0])
        self.assertEqual(evaluation.method, 'closed-form')
        values = [v for _, v in evaluation.curve]
        self.assertTrue(all(a < b for a, b in zip(values, values[1:])))

    def test_targets(self):
        self.assertEqual(lower_limit_target(2), 1)
        self.assertEqual(lower_limit_target(3), -1)
        self.assertEqual(lower_limit_target(4), 1)

    def test_unsupported_arguments(self):
        lattice = build_lattice(1, 5)
        with self.assertRaises(PreconditionError):
            T_n_lower_limits(lattice, 5, 1.0)
        with self.assertRaises(PreconditionError):
            T_n_lower_limits(lattice, 2, [1.0, 0.5])
        with self.assertRaises(PreconditionError):
            T_n_lower_limits(build_lattice(1, 3), 4, 1.0)


class TestDysonHierarchy(unittest.TestCase):
    """Dyson 层级与直接求积对照"""

    def test_two_interactions_match_quadrature(self):
        lattice = build_lattice(1, 3)
        for sequence in ([(0, 1), (1, 2)], [(0, 2), (0, 1)]):
            oracle = dyson_oracle(lattice, 3, sequence, 0.8)
            quadrature = dyson_quadrature(lattice, 3, sequence, 0.8)
            self.assertAlmostEqual(oracle, quadrature, delta=1e-8, msg=str(sequence))

    def test_single_start_configuration(self):
        lattice = build_lattice(1, 4)
        oracle = dyson_oracle(lattice, 2, [(0, 1)], 0.6, z=(0, 2))
        quadrature = dyson_quadrature(lattice, 2, [(0, 1)], 0.6, z=(0, 2))
        self.assertAlmostEqual(oracle, quadrature, delta=1e-9)

    def test_empty_sequence_is_mass(self):
        term = dyson_curve(build_lattice(1, 4), 2, [], [0.5, 1.0])
        self.assertEqual([v for _, v in term.curve], [3.0, 3.0])

    def test_sequence_validation(self):
        lattice = build_lattice(1, 4)
        with self.assertRaises(PreconditionError):
            dyson_oracle(lattice, 2, [(0, 0)], 1.0)
        with self.assertRaises(PreconditionError):
            dyson_oracle(lattice, 3, [(0, 1), (1, 2), (0, 2)], 1.0)
        with self.assertRaises(PreconditionError):
            dyson_oracle(lattice, 4, [(0, 1)], 1.0)

    def test_non_tree_term_converges(self):
        lattice = build_lattice(1, 12)
        term = dyson_curve(lattice, 2, [(0, 1), (0, 1)], [8.0, 16.0, 32.0, 64.0], step=0.01)
        self.assertFalse(term.is_tree)
        values = [v for _, v in term.curve]
        increments = [abs(b - a) for a, b in zip(values, values[1:])]
        self.assertTrue(all(b < a for a, b in zip(increments, increments[1:])), msg=str(increments))


class TestFullTree(unittest.TestCase):
    """完整树图和测试"""

    def test_spanning_sequences(self):
        self.assertEqual(len(spanning_sequences(2)), 1)
        self.assertEqual(len(spanning_sequences(3)), 6)
        # K_4 有 16 棵生成树，每棵 3! 种时间顺序
        self.assertEqual(len(spanning_sequences(4)), 96)

    def test_tree_flag(self):
        self.assertTrue(DysonTerm(n=3, pair_sequence=((0, 1), (1, 2)), curve=()).is_tree)
        self.assertFalse(DysonTerm(n=3, pair_sequence=((0, 1), (0, 1)), curve=()).is_tree)

    def test_t2_tilde_is_closed_form(self):
        lattice = build_lattice(1, 6)
        full = T_tilde_n(lattice, 2, [0.5, 2.0])
        lower = T_n_lower_limits(lattice, 2, [0.5, 2.0])
        self.assertEqual(full.curve, lower.curve)

    def test_independent_of_thread_count(self):
        lattice = build_lattice(1, 4)
        one = T_tilde_n(lattice, 3, [0.5, 1.0], step=0.01, workers=1)
        many = T_tilde_n(lattice, 3, [0.5, 1.0], step=0.01, workers=3)
        self.assertEqual(one.curve, many.curve)
        self.assertEqual(one.kind, 'full')

    def test_zero_time(self):
        value = T_tilde_n(build_lattice(1, 4), 3, 0.0, step=0.01).final_value
        self.assertEqual(value, 0.0)


class TestTelescopicIdentity(unittest.TestCase):
    """伸缩求和恒等式测试"""

    def test_random_fields(self):
        lattice = build_lattice(2, 4)
        rng = np.random.default_rng(2024)
        for n in (3, 4):
            for _ in range(20):
                fields = [rng.normal(size=lattice.N) for _ in range(n)]
                lhs, rhs = telescopic_identity_total(lattice, n, fields)
                self.assertLessEqual(abs(lhs - rhs), 1e-10 * max(1.0, abs(rhs)))

    def test_single_point(self):
        lattice = build_lattice(1, 5)
        fields = [np.arange(5.0) + k for k in range(3)]
        lhs, rhs = telescopic_identity_check(lattice, 3, 2, 0, fields)
        self.assertAlmostEqual(lhs, rhs, delta=1e-12)

    def test_arguments(self):
        lattice = build_lattice(1, 5)
        fields = [np.ones(5)] * 3
        with self.assertRaises(PreconditionError):
            telescopic_identity_check(lattice, 2, 0, 0, fields[:2])
        with self.assertRaises(PreconditionError):
            telescopic_identity_check(lattice, 3, 0, 1, fields)
        with self.assertRaises(PreconditionError):
            telescopic_identity_check(lattice, 4, 0, 0, fields)


class TestExtrapolation(unittest.TestCase):
    """有限尺寸外推与落盘测试"""

    def setUp(self):
        self.temp_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_polynomial_in_inverse_size(self):
        result = finite_size_limit(lambda lat, t: 2.0 + 3.0 / lat.L - 1.0 / lat.L ** 2, sizes=(8, 12, 16))
        self.assertAlmostEqual(result.limit, 2.0, delta=1e-9)
        self.assertEqual(result.times, (16.0, 36.0, 64.0))
        self.assertTrue(result.monotone_toward(2.0))

    def test_save_evaluation(self):
        evaluation = T_n_lower_limits(build_lattice(1, 5), 3, [0.5, 1.0])
        csv_path, json_path = save_evaluation(evaluation, str(self.temp_dir / "t3.csv"))
        lines = Path(csv_path).read_text(encoding='utf-8').splitlines()
        self.assertEqual(lines[0], 't,value')
        self.assertEqual(len(lines), 3)
        sidecar = json.loads(Path(json_path).read_text(encoding='utf-8'))
        self.assertEqual(sidecar['n'], 3)
        self.assertEqual(sidecar['kind'], 'lower')
        self.assertTrue(math.isclose(float(lines[2].split(',')[1]), evaluation.final_value))


if __name__ == '__main__':
    unittest.main()
