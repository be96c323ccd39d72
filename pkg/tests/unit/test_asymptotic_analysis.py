#!/usr/bin/env python3
"""
渐近分析模块单元测试

测试场景:
- 连通模式计数的精确值与直接枚举对照
- 整数簇分布上的最大化（穷举与坐标上升）
- S(p) 的上确界与边界处的 q
- ρ 变体的数值与形式级数恒等
- Ryser 积和式与热核矩阵的积和式

版本: v1.0
"""

import math
import os
import sys
import unittest
from fractions import Fraction
from itertools import permutations

import numpy as np

# 添加项目根目录到路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from src.modules.asymptotic_analysis import (
    ConnectivityProfile,
    attempt_eq54,
    catalan_mass,
    conjecture2_permanent,
    continuous_q,
    enumerate_cluster_assignments,
    eq51_by_enumeration,
    eq51_log_value,
    eq57_residual,
    eval_eq51,
    maximize_eq51,
    q_tilde_target,
    rho_series_identity,
    rho_variant,
    ryser_permanent,
    truncated_eq54_root,
)
from src.modules.lattice_core import build_lattice
from src.modules.series_combinatorics import catalan_by_recursion
from src.utils.exceptions import CapExceededError, PreconditionError


def brute_force_permanent(matrix: np.ndarray) -> float:
    n = matrix.shape[0]
    return sum(math.prod(matrix[i, sigma[i]] for i in range(n)) for sigma in permutations(range(n)))


class TestConnectivityCount(unittest.TestCase):
    """连通模式计数测试"""

    def test_single_pair(self):
        value = eval_eq51(10, ConnectivityProfile(N=10, counts=(1,)))
        self.assertEqual(value.exact, Fraction(9, 2))
        self.assertAlmostEqual(value.per_vertex_log, math.log(4.5) / 10, delta=1e-15)

    def test_empty_profile(self):
        self.assertEqual(eval_eq51(7, ConnectivityProfile(N=7, counts=())).exact, 1)
        self.assertEqual(eval_eq51(7, ConnectivityProfile(N=7, counts=(0, 0))).exact, 1)

    def test_matches_enumeration(self):
        for N in range(2, 9):
            for counts in ((1,), (2,), (0, 1), (1, 1), (2, 1), (0, 2)):
                profile_size = sum((i + 1) * m for i, m in enumerate(counts, start=1))
                if profile_size > N:
                    continue
                profile = ConnectivityProfile(N=N, counts=counts)
                self.assertEqual(
                    eval_eq51(N, profile).exact, eq51_by_enumeration(N, profile),
                    msg=f"N={N}, counts={counts}"
                )

    def test_assignment_count(self):
        # 4 个顶点分成两个无序的对：3 种
        self.assertEqual(enumerate_cluster_assignments(4, (2,)), 3)
        self.assertEqual(enumerate_cluster_assignments(5, (0, 1)), 10)

    def test_log_route_matches_exact(self):
        log_catalan = [math.log(a) for a in catalan_by_recursion(3).values]
        for counts in ((3, 1, 0), (0, 2, 1), (5, 0, 2)):
            exact = eval_eq51(40, ConnectivityProfile(N=40, counts=counts)).per_vertex_log
            self.assertAlmostEqual(eq51_log_value(40, counts, log_catalan), exact, delta=1e-12)

    def test_explicit_table(self):
        profile = ConnectivityProfile(N=12, counts=(1, 2))
        table = catalan_by_recursion(2)
        self.assertEqual(eval_eq51(12, profile, table).exact, eval_eq51(12, profile).exact)
        with self.assertRaises(PreconditionError):
            eval_eq51(12, profile, catalan_by_recursion(1))

    def test_profile_validation(self):
        with self.assertRaises(PreconditionError):
            ConnectivityProfile(N=5, counts=(3,))
        with self.assertRaises(PreconditionError):
            ConnectivityProfile(N=5, counts=(-1,))
        with self.assertRaises(PreconditionError):
            eval_eq51(6, ConnectivityProfile(N=5, counts=(1,)))

    def test_fractions(self):
        self.assertEqual(ConnectivityProfile(N=10, counts=(2, 1)).fractions, (0.2, 0.1))


class TestMaximization(unittest.TestCase):
    """簇分布最大化测试"""

    def test_small_exhaustive(self):
        result = maximize_eq51(10, 1)
        self.assertEqual(result.method, 'exhaustive')
        self.assertEqual(result.profile.counts, (2,))
        self.assertAlmostEqual(result.q_N, math.log(6.3) / 10, delta=1e-12)

    def test_trivial_index(self):
        result = maximize_eq51(50, 0)
        self.assertEqual(result.method, 'trivial')
        self.assertEqual(result.q_N, 0.0)

    def test_increases_with_N(self):
        results = [maximize_eq51(N, 3) for N in (50, 100, 200, 400)]
        values = [r.q_N for r in results]
        self.assertTrue(all(a < b for a, b in zip(values, values[1:])), msg=str(values))
        self.assertEqual(results[0].method, 'exhaustive')
        self.assertEqual(results[-1].method, 'coordinate-ascent')
        self.assertAlmostEqual(values[-1], results[-1].continuous_q, delta=0.05)

    def test_continuous_limit(self):
        p = truncated_eq54_root(1)
        self.assertAlmostEqual(p, (math.sqrt(5) - 1) / 2, delta=1e-10)
        self.assertAlmostEqual(continuous_q(1), -1 + p + p * p / 2 - math.log(p), delta=1e-10)
        self.assertEqual(continuous_q(0), 0.0)

    def test_caps(self):
        with self.assertRaises(CapExceededError) as ctx:
            maximize_eq51(20000, 1)
        self.assertEqual(ctx.exception.exit_code, 4)
        with self.assertRaises(CapExceededError):
            maximize_eq51(10, 17)
        with self.assertRaises(PreconditionError):
            maximize_eq51(0, 1)


class TestCatalanMass(unittest.TestCase):
    """S(p) 上确界测试"""

    def test_supremum(self):
        report = attempt_eq54()
        self.assertEqual(report.supremum, 0.5)
        self.assertEqual(report.p_at_supremum, 0.25)
        self.assertTrue(report.increasing)
        self.assertFalse(report.solvable)
        self.assertAlmostEqual(report.q_at_boundary, math.log(2.0), delta=1e-14)
        self.assertEqual(len(report.samples), 1000)

    def test_interior_value(self):
        self.assertAlmostEqual(catalan_mass(0.1), 0.1127017, delta=1e-7)
        series = sum(math.comb(2 * i, i) // (i + 1) * 0.1 ** (i + 1) for i in range(80))
        self.assertAlmostEqual(catalan_mass(0.1), series, delta=1e-14)

    def test_outside_domain(self):
        for p in (0.0, 0.3, -0.1):
            with self.assertRaises(PreconditionError):
                catalan_mass(p)


class TestRhoVariant(unittest.TestCase):
    """ρ 变体测试"""

    def test_matches_target(self):
        for rho in (1e-8, 0.1, 0.3, 0.45):
            point = rho_variant(rho, 64)
            self.assertLessEqual(point.difference, 1e-10, msg=f"rho={rho}")
            self.assertLessEqual(point.eq57_residual, 1e-12)

    def test_exact_argument(self):
        point = rho_variant(Fraction(1, 4), 64)
        self.assertAlmostEqual(point.q_tilde_series, q_tilde_target(0.25), delta=1e-12)
        self.assertEqual(point.p, 0.75)

    def test_partial_sum_converges(self):
        point = rho_variant(0.1, 64)
        self.assertAlmostEqual(point.q_tilde_partial, point.q_tilde_target, delta=1e-14)

    def test_domain(self):
        for rho in (0.0, 0.5, 0.7):
            with self.assertRaises(PreconditionError):
                rho_variant(rho)

    def test_residual_above_half(self):
        self.assertAlmostEqual(eq57_residual(0.6), 1.0 / 3.0, delta=1e-12)
        self.assertAlmostEqual(eq57_residual(0.8), 0.75, delta=1e-12)
        with self.assertRaises(PreconditionError):
            eq57_residual(1.0)

    def test_formal_series_identity(self):
        identity = rho_series_identity(16)
        self.assertTrue(identity.equal)
        self.assertEqual(identity.mismatches(), [])
        self.assertEqual(identity.q_tilde[0], 0)
        self.assertEqual(identity.q_tilde[1], Fraction(1, 2))


class TestPermanent(unittest.TestCase):
    """积和式测试"""

    def test_small_matrices(self):
        self.assertEqual(ryser_permanent(np.eye(4)), 1.0)
        self.assertAlmostEqual(ryser_permanent(np.ones((3, 3))), 6.0, delta=1e-12)
        self.assertAlmostEqual(ryser_permanent(np.array([[1.0, 2.0], [3.0, 4.0]])), 10.0, delta=1e-12)
        self.assertEqual(ryser_permanent(np.zeros((0, 0))), 1.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(17)
        for n in (3, 5, 6):
            matrix = rng.random((n, n))
            self.assertAlmostEqual(ryser_permanent(matrix), brute_force_permanent(matrix), delta=1e-10)

    def test_requires_square(self):
        with self.assertRaises(PreconditionError):
            ryser_permanent(np.ones((2, 3)))

    def test_heat_kernel_limits(self):
        start = conjecture2_permanent(build_lattice(1, 4), 0.0)
        self.assertAlmostEqual(start.permanent, 1.0, delta=1e-12)
        late = conjecture2_permanent(build_lattice(1, 3), 50.0)
        self.assertAlmostEqual(late.target, 2.0 / 9.0, delta=1e-15)
        self.assertLessEqual(late.gap, 1e-9)
        self.assertTrue(late.within_bounds)

    def test_equilibrium_on_ten_sites(self):
        report = conjecture2_permanent(build_lattice(1, 10), 200.0)
        self.assertLessEqual(report.gap, 1e-6)
        self.assertAlmostEqual(report.root, (math.factorial(10) / 10 ** 10) ** 0.1, delta=1e-6)

    def test_intermediate_time_in_bounds(self):
        report = conjecture2_permanent(build_lattice(1, 6), 1.0)
        self.assertTrue(report.within_bounds)
        self.assertGreater(report.permanent, report.target)

    def test_cap(self):
        with self.assertRaises(CapExceededError):
            conjecture2_permanent(build_lattice(1, 5), 1.0, cap=4)


if __name__ == '__main__':
    unittest.main()
