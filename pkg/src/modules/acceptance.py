#!/usr/bin/env python3
"""
验收标准模块 - 十三条验收检查的可调用实现

功能:
- 每条标准是一个函数，返回 (状态, 明细)
- 超出规模上限时记为 skipped 并附原因
- 其余异常记为 fail，整个检查集仍然跑完

状态取值: pass / fail / report-only / skipped

版本: v1.0
"""

import math
import traceback
from dataclasses import dataclass, field, fields
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.modules.asymptotic_analysis import (
    attempt_eq54,
    conjecture2_permanent,
    eq57_residual,
    rho_series_identity,
    rho_variant,
)
from src.modules.diagram_engine import (
    T_tilde_n,
    dyson_oracle,
    full_tree_extrapolation,
    lower_limit_extrapolation,
    lower_limit_target,
    t2_closed_form,
    telescopic_identity_check,
)
from src.modules.extension_pde import (
    PairPotentialSpec,
    build_configuration_space,
    conjecture1_curve,
    evolve_extended_curve,
    restrict_to_distinct,
    restriction_defect,
    total_mass_B,
)
from src.modules.group_walk import evolve_group, marginal_total_variation, sample_walk
from src.modules.lattice_core import build_lattice, heat_kernel_ode, heat_kernel_spectral
from src.modules.series_combinatorics import catalan_by_recursion, catalan_closed_form
from src.utils.exceptions import CapExceededError, ConfigurationError, PermLabError
from src.utils.logger import get_logger
from src.utils.result_io import dumps_json
from config.settings import config

logger = get_logger(__name__)

PASS, FAIL, REPORT_ONLY, SKIPPED = 'pass', 'fail', 'report-only', 'skipped'

Outcome = Tuple[str, Dict[str, Any]]


@dataclass(frozen=True)
class BundleSpec:
    """检查集的一个条目：要跑的标准与各项规模上限"""
    criteria: Tuple[int, ...] = tuple(range(1, 14))
    cap_states: Optional[int] = None
    cap_group: Optional[int] = None
    permanent_cap: Optional[int] = None
    threads: Optional[int] = None
    seed: int = config.get('sampling.seed', 20240601)
    samples: int = config.get('sampling.count', 100000)

    @classmethod
    def from_mapping(cls, mapping: Dict[str, Any]) -> 'BundleSpec':
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ConfigurationError(f"检查集条目含未知键: {', '.join(unknown)}", {'unknown_keys': unknown})
        values = dict(mapping)
        if 'criteria' in values:
            criteria = values['criteria']
            if not isinstance(criteria, (list, tuple)) or any(
                    isinstance(c, bool) or not isinstance(c, int) or c not in CRITERIA for c in criteria):
                raise ConfigurationError(f"criteria 应为 1..13 的整数列表: {criteria!r}")
            values['criteria'] = tuple(criteria)
        for key in ('cap_states', 'cap_group', 'permanent_cap', 'threads', 'seed', 'samples'):
            value = values.get(key)
            if value is not None and (isinstance(value, bool) or not isinstance(value, int)):
                raise ConfigurationError(f"{key} 应为整数: {value!r}")
        return cls(**values)


@dataclass(frozen=True)
class CriterionResult:
    """一条标准的执行结果"""
    number: int
    title: str
    status: str
    details: Dict[str, Any] = field(default_factory=dict)
    reason: str = ''

    def to_dict(self) -> Dict[str, Any]:
        return {
            'number': self.number, 'title': self.title, 'status': self.status,
            'reason': self.reason, 'details': self.details,
        }


def _verdict(ok: bool) -> str:
    return PASS if ok else FAIL


# ---------------------------------------------------------------------------
# 标准
# ---------------------------------------------------------------------------

RESTRICTION_TIMES = (0.25, 0.5, 1.0, 2.0, 5.0)


def restriction_identity(spec: BundleSpec) -> Outcome:
    """限制恒等式: f^e 在互异配置上等于群上的 f"""
    rows = []
    for L in (3, 4):
        lattice = build_lattice(1, L)
        space = build_configuration_space(lattice, cap=spec.cap_states)
        exact = {t: evolve_group(lattice, t, cap=spec.cap_group) for t in RESTRICTION_TIMES}
        for r in (0.0, 0.5, -0.5):
            fields_t = evolve_extended_curve(PairPotentialSpec(r=r), space, RESTRICTION_TIMES, estimate_error=False)
            defect = max(restriction_defect(restrict_to_distinct(space, f), exact[f.t]) for f in fields_t)
            rows.append({'L': L, 'r': r, 'max_defect': defect})
    worst = max(row['max_defect'] for row in rows)
    return _verdict(worst <= 1e-6), {'rows': rows, 'max_defect': worst}


def equilibria(spec: BundleSpec) -> Outcome:
    """t 较大时群分布趋于 1/N!，热核趋于 1/N"""
    group_rows, kernel_rows = [], []
    for L in (3, 4):
        dist = evolve_group(build_lattice(1, L), 50.0, cap=spec.cap_group)
        deviation = float(np.max(np.abs(dist.weights - 1.0 / math.factorial(L))))
        group_rows.append({'L': L, 'deviation': deviation})
    for L in (3, 4, 5):
        kernel = heat_kernel_spectral(build_lattice(1, L), 100.0)
        deviation = float(np.max(np.abs(kernel.entries - 1.0 / L)))
        kernel_rows.append({'L': L, 'deviation': deviation})
    ok = all(r['deviation'] <= 1e-8 for r in group_rows) and all(r['deviation'] <= 1e-10 for r in kernel_rows)
    return _verdict(ok), {'group_walk': group_rows, 'heat_kernel': kernel_rows}


HEAT_KERNEL_DIMS = tuple(config.get('heat_kernel.check_dims', [1, 2]))
HEAT_KERNEL_EDGES = tuple(config.get('heat_kernel.check_edges', [3, 4, 5]))
HEAT_KERNEL_TIMES = (0.1, 1.0, 3.0)
SEMIGROUP_TIMES = (0.1, 0.5, 1.0)


def heat_kernel_routes(spec: BundleSpec) -> Outcome:
    """谱方法与 RK4 两路一致，且满足半群性质"""
    route, semigroup = 0.0, 0.0
    grid = [(d, L) for d in HEAT_KERNEL_DIMS for L in HEAT_KERNEL_EDGES]
    for d, L in grid:
        lattice = build_lattice(d, L)
        for t in HEAT_KERNEL_TIMES:
            a = heat_kernel_spectral(lattice, t).entries
            b = heat_kernel_ode(lattice, t).entries
            route = max(route, float(np.max(np.abs(a - b))))
        kernels = {t: heat_kernel_spectral(lattice, t).entries for t in SEMIGROUP_TIMES}
        for t1 in SEMIGROUP_TIMES:
            for t2 in SEMIGROUP_TIMES:
                product = kernels[t1] @ kernels[t2]
                exact = heat_kernel_spectral(lattice, t1 + t2).entries
                semigroup = max(semigroup, float(np.max(np.abs(product - exact))))
    return _verdict(route <= 1e-10 and semigroup <= 1e-9), {
        'grid': grid, 'route_difference': route, 'semigroup_defect': semigroup,
    }


def two_particle_diagrams(spec: BundleSpec) -> Outcome:
    """n = 2: 闭式 T_2 与 Dyson 对照一致，T_2(50) = 1 − 1/N"""
    lattice = build_lattice(1, 5)
    rows = []
    for t in (0.5, 1.0, 2.0):
        closed = t2_closed_form(lattice, t)
        oracle = dyson_oracle(lattice, 2, [(0, 1)], t)
        rows.append({'t': t, 'closed_form': closed, 'oracle': oracle, 'difference': abs(closed - oracle)})
    equilibrium = abs(t2_closed_form(lattice, 50.0) - (1.0 - 1.0 / lattice.N))
    ok = all(row['difference'] <= 1e-8 for row in rows) and equilibrium <= 1e-8
    return _verdict(ok), {'rows': rows, 'equilibrium_gap': equilibrium}


def lower_limit_three(spec: BundleSpec) -> Outcome:
    """n = 3 下限贡献按 1/L 外推到 a_2 = −1"""
    result = lower_limit_extrapolation(3)
    target = lower_limit_target(3)
    monotone = result.monotone_toward(target)
    ok = abs(result.limit - target) <= 0.05 * abs(target) and monotone
    return _verdict(ok), {
        'sizes': result.sizes, 'values': result.values, 'limit': result.limit,
        'uncertainty': result.uncertainty, 'target': target, 'monotone': monotone,
    }


def full_tree_three(spec: BundleSpec) -> Outcome:
    """n = 3 完整树图和外推到 A_2 = 2；T̃_2 与 T_2 恒等"""
    result = full_tree_extrapolation(3)
    target = catalan_closed_form(2)
    lattice = build_lattice(1, 5)
    times = [0.5, 1.0, 2.0]
    identical = all(
        v == t2_closed_form(lattice, t) for t, v in T_tilde_n(lattice, 2, times, workers=spec.threads).curve
    )
    monotone = result.monotone_toward(target)
    ok = abs(result.limit - target) <= 0.1 * target and monotone and identical
    return _verdict(ok), {
        'sizes': result.sizes, 'values': result.values, 'limit': result.limit,
        'uncertainty': result.uncertainty, 'target': target, 'T2_identical': identical,
        'monotone': monotone,
    }


def telescopic_identity(spec: BundleSpec) -> Outcome:
    """随机场上伸缩求和恒等式两侧相等"""
    rng = np.random.default_rng(spec.seed)
    lattice = build_lattice(2, 4)
    worst = 0.0
    trials = 100
    for n in (3, 4):
        for _ in range(trials):
            fields_n = [rng.random(lattice.N) for _ in range(n)]
            y = int(rng.integers(lattice.N))
            direction = int(rng.integers(lattice.d))
            lhs, rhs = telescopic_identity_check(lattice, n, y, direction, fields_n)
            worst = max(worst, abs(lhs - rhs))
    return _verdict(worst <= 1e-10), {'trials_per_n': trials, 'max_difference': worst}


def catalan_recursion(spec: BundleSpec) -> Outcome:
    """递推与二项式闭式逐项相等"""
    table = catalan_by_recursion(64)
    listed = list(table.values[1:5])
    ok = table.matches_closed_form() and listed == [1, 2, 5, 14]
    return _verdict(ok), {'K': table.K, 'A_1_to_A_4': listed, 'A_64': table[64]}


def rho_variant_identity(spec: BundleSpec) -> Outcome:
    """ρ 变体: 形式级数逐项相等，数值残差与失效点"""
    identity = rho_series_identity(32)
    numeric = {rho: rho_variant(rho, 64).difference for rho in (0.1, 0.3, 0.45)}
    residuals = {rho: eq57_residual(rho) for rho in (0.05, 0.15, 0.25, 0.35, 0.45)}
    breakdown = eq57_residual(0.6)
    ok = (
        identity.equal
        and all(v <= 1e-8 for v in numeric.values())
        and all(v <= 1e-10 for v in residuals.values())
        and breakdown >= 0.1
    )
    return _verdict(ok), {
        'series_equal': identity.equal, 'mismatches': identity.mismatches(),
        'numeric_differences': numeric, 'eq57_residuals': residuals, 'breakdown_residual': breakdown,
    }


def frustration(spec: BundleSpec) -> Outcome:
    """S(p) 的上确界为 1/2，方程 1 = S(p) 无解"""
    report = attempt_eq54()
    ok = abs(report.supremum - 0.5) <= 1e-9 and not report.solvable and report.increasing
    return _verdict(ok), {
        'supremum': report.supremum, 'solvable': report.solvable, 'q_at_boundary': report.q_at_boundary,
    }


PERMANENT_TIMES = (0.0, 0.5, 1.0, 2.0, 5.0, 20.0, 50.0, 200.0)


def permanent_probe(spec: BundleSpec) -> Outcome:
    """热核积和式趋于 N!/N^N 且始终在 [N!/N^N, 1] 内"""
    lattice = build_lattice(1, 10)
    reports = [conjecture2_permanent(lattice, t, cap=spec.permanent_cap) for t in PERMANENT_TIMES]
    curve = [{'t': r.t, 'permanent': r.permanent, 'within_bounds': r.within_bounds} for r in reports]
    values = [r.permanent for r in reports]
    monotone = all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
    ok = reports[-1].gap <= 1e-6 and all(r.within_bounds for r in reports)
    return _verdict(ok), {'curve': curve, 'final_gap': reports[-1].gap, 'target': reports[-1].target, 'monotone': monotone}


def monte_carlo_marginal(spec: BundleSpec) -> Outcome:
    """采样边缘分布与热核列的全变差在 3σ̂ 内，且与线程数无关"""
    lattice = build_lattice(1, 8)
    single = sample_walk(lattice, 2.0, spec.samples, spec.seed, workers=1)
    parallel = sample_walk(lattice, 2.0, spec.samples, spec.seed, workers=max(2, spec.threads or 4))
    tv, stderr = marginal_total_variation(single, 0)
    replay = single.samples.tobytes() == parallel.samples.tobytes()
    return _verdict(tv <= 3.0 * stderr and replay), {'total_variation': tv, 'stderr': stderr, 'replay_identical': replay}


CONJECTURE1_TIMES = (0.25, 0.5, 1.0, 2.0, 5.0)


def conjecture1_report(spec: BundleSpec) -> Outcome:
    """Σ_A f^e 的曲线，并列 C_N；只报告"""
    curves, conserved, reproducible = {}, True, True
    for L in (3, 4):
        lattice = build_lattice(1, L)
        curve = conjecture1_curve(lattice, CONJECTURE1_TIMES, cap=spec.cap_states)
        again = conjecture1_curve(lattice, CONJECTURE1_TIMES, cap=spec.cap_states)
        reproducible &= dumps_json(curve) == dumps_json(again)
        conserved &= all(abs(row['mass_B'] - 1.0) <= 1e-8 for row in curve)
        curves[L] = curve
    status = REPORT_ONLY if conserved and reproducible else FAIL
    return status, {'curves': curves, 'mass_B_conserved': conserved, 'reproducible': reproducible}


@dataclass(frozen=True)
class Criterion:
    number: int
    title: str
    check: Callable[[BundleSpec], Outcome]


CRITERIA: Dict[int, Criterion] = {
    c.number: c for c in (
        Criterion(1, "限制恒等式", restriction_identity),
        Criterion(2, "平衡态", equilibria),
        Criterion(3, "热核两路一致", heat_kernel_routes),
        Criterion(4, "两粒子树图", two_particle_diagrams),
        Criterion(5, "T_3 下限外推", lower_limit_three),
        Criterion(6, "T̃_3 完整树图外推", full_tree_three),
        Criterion(7, "伸缩求和恒等式", telescopic_identity),
        Criterion(8, "Catalan 递推", catalan_recursion),
        Criterion(9, "ρ 变体", rho_variant_identity),
        Criterion(10, "S(p) 上确界", frustration),
        Criterion(11, "积和式探针", permanent_probe),
        Criterion(12, "蒙特卡罗边缘分布", monte_carlo_marginal),
        Criterion(13, "总质量曲线", conjecture1_report),
    )
}


def run_criterion(number: int, spec: Optional[BundleSpec] = None) -> CriterionResult:
    """
    执行一条标准，规模超限记为 skipped，其他错误记为 fail

    Args:
        number: 标准编号 1..13
        spec: 检查集条目（默认全部默认值）

    Returns:
        CriterionResult: 结果
    """
    spec = spec or BundleSpec()
    if number not in CRITERIA:
        raise ConfigurationError(f"未知的标准编号: {number}", {'criterion': number})
    criterion = CRITERIA[number]
    logger.info(f"验收 #{number}: {criterion.title}")
    try:
        status, details = criterion.check(spec)
    except CapExceededError as e:
        logger.warning(f"验收 #{number} 跳过: {e.message}")
        return CriterionResult(number, criterion.title, SKIPPED, e.details, reason=e.message)
    except PermLabError as e:
        logger.error(f"验收 #{number} 失败: {e.message}")
        return CriterionResult(number, criterion.title, FAIL, e.details, reason=e.message)
    except Exception as e:
        logger.error(f"验收 #{number} 异常: {e}")
        logger.debug(traceback.format_exc())
        return CriterionResult(number, criterion.title, FAIL, {}, reason=f"{type(e).__name__}: {e}")
    logger.info(f"验收 #{number}: {status}")
    return CriterionResult(number, criterion.title, status, details)


def run_criteria(numbers: Sequence[int], spec: Optional[BundleSpec] = None) -> List[CriterionResult]:
    return [run_criterion(n, spec) for n in numbers]
