#!/usr/bin/env python3
"""
渐近分析模块 - 连通模式计数、q 与 q̃ 指数、积和式探针

功能:
- 连通模式计数表达式的精确大整数求值（及 lgamma 对数路径）
- 整数簇分布上的最大化（小规模穷举，大规模坐标上升）
- S(p) = Σ A_i p^{i+1} 的上确界 1/2：方程 1 = S(p) 无解
- ρ 变体：p = 1 − ρ，q̃ 级数与目标式的数值与形式级数比对
- 热核矩阵的 Ryser 积和式及其目标 N!/N^N

版本: v1.0
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from src.modules.lattice_core import LatticeSpec, heat_kernel_spectral
from src.modules.series_combinatorics import (
    CatalanTable,
    PowerSeries,
    catalan_closed_form,
    cluster_integral_closed_form,
)
from src.utils.exceptions import CapExceededError, PreconditionError
from src.utils.logger import get_logger
from config.settings import config

PERMANENT_CAP = config.get('asymptotics.permanent_cap', 14)
EQ51_MAX_VERTICES = config.get('asymptotics.eq51_max_vertices', 10000)
EQ51_MAX_INDEX = config.get('asymptotics.eq51_max_index', 16)
DEFAULT_ORDER = config.get('series.order', 64)
EXHAUSTIVE_LIMIT = 200000

logger = get_logger(__name__)


# ---------------------------------------------------------------------------
# 连通模式计数
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConnectivityProfile:
    """
    N 个顶点中 (i+1) 顶点连通簇的个数 m_i，counts[i−1] = m_i

    x_i = m_i / N。
    """
    N: int
    counts: Tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(m) for m in self.counts)
        object.__setattr__(self, 'counts', counts)
        if any(m < 0 for m in counts):
            raise PreconditionError(f"簇个数必须非负: {counts}", {'counts': list(counts)})
        if self.vertices_used > self.N:
            raise PreconditionError(
                f"Σ(i+1)m_i = {self.vertices_used} 超过 N = {self.N}",
                {'counts': list(counts), 'N': self.N}
            )

    @property
    def max_index(self) -> int:
        return len(self.counts)

    @property
    def vertices_used(self) -> int:
        return sum((i + 1) * m for i, m in enumerate(self.counts, start=1))

    @property
    def fractions(self) -> Tuple[float, ...]:
        return tuple(m / self.N for m in self.counts)


@dataclass(frozen=True)
class Eq51Value:
    """精确值与每顶点对数 (1/N)·ln(value)"""
    profile: ConnectivityProfile
    exact: Fraction
    per_vertex_log: float


def _catalan_values(A: Optional[CatalanTable], upto: int) -> Tuple[int, ...]:
    if A is None:
        return tuple(catalan_closed_form(i) for i in range(upto + 1))
    if A.K < upto:
        raise PreconditionError(f"Catalan 表只到 A_{A.K}，需要 A_{upto}")
    return A.values


def _log_fraction(value: Fraction) -> float:
    return math.log(value.numerator) - math.log(value.denominator)


def eval_eq51(N: int, profile: ConnectivityProfile, A: Optional[CatalanTable] = None) -> Eq51Value:
    """
    精确求值 Π_i (A_i i!/N^i)^{m_i} · N!/(S!(N−S)!) · S!/(Π m_i! Π((i+1)!)^{m_i})

    S = Σ(i+1)m_i。三个因子依次对应簇贡献、参与顶点的选择与顶点间的连通指派。

    Args:
        N: 顶点数
        profile: 簇分布（profile.N 必须等于 N）
        A: Catalan 表（默认用闭式）

    Returns:
        Eq51Value: 精确分数与每顶点对数
    """
    if profile.N != N:
        raise PreconditionError(f"簇分布的 N = {profile.N} 与 {N} 不符")
    values = _catalan_values(A, profile.max_index)

    S = profile.vertices_used
    cluster_factor = Fraction(1)
    assignment_denominator = 1
    for i, m in enumerate(profile.counts, start=1):
        if m == 0:
            continue
        cluster_factor *= Fraction(values[i] * math.factorial(i), N ** i) ** m
        assignment_denominator *= math.factorial(m) * math.factorial(i + 1) ** m

    selection = Fraction(math.factorial(N), math.factorial(S) * math.factorial(N - S))
    assignment = Fraction(math.factorial(S), assignment_denominator)
    exact = cluster_factor * selection * assignment
    return Eq51Value(profile=profile, exact=exact, per_vertex_log=_log_fraction(exact) / N)


def eq51_log_value(N: int, counts: Sequence[int], log_catalan: Sequence[float]) -> float:
    """
    lgamma 路径的每顶点对数（搜索时使用，S! 已约去）

    Args:
        N: 顶点数
        counts: m_1..m_I
        log_catalan: ln A_0..ln A_I

    Returns:
        float: (1/N)·ln(value)
    """
    S = 0
    total = math.lgamma(N + 1)
    log_n = math.log(N)
    for i, m in enumerate(counts, start=1):
        if m == 0:
            continue
        S += (i + 1) * m
        total += m * (log_catalan[i] + math.lgamma(i + 1) - i * log_n - math.lgamma(i + 2))
        total -= math.lgamma(m + 1)
    total -= math.lgamma(N - S + 1)
    return total / N


def enumerate_cluster_assignments(N: int, counts: Sequence[int]) -> int:
    """
    直接枚举：把 N 个带标号顶点中的一部分分成 m_i 个大小为 i+1 的无序簇的方式数

    先按大小类依次选出有序的簇序列，再除以各类内部的排列数 Π m_i!。
    """
    sizes = [i + 1 for i, m in enumerate(counts, start=1) for _ in range(m)]

    def place(remaining: frozenset, k: int) -> int:
        if k == len(sizes):
            return 1
        return sum(
            place(remaining - frozenset(block), k + 1)
            for block in combinations(sorted(remaining), sizes[k])
        )

    ordered = place(frozenset(range(N)), 0)
    return ordered // math.prod(math.factorial(m) for m in counts)


def eq51_by_enumeration(N: int, profile: ConnectivityProfile, A: Optional[CatalanTable] = None) -> Fraction:
    """簇指派计数 × 簇贡献，独立于阶乘公式"""
    values = _catalan_values(A, profile.max_index)
    weight = Fraction(1)
    for i, m in enumerate(profile.counts, start=1):
        weight *= Fraction(values[i] * math.factorial(i), N ** i) ** m
    return weight * enumerate_cluster_assignments(N, profile.counts)


def truncated_eq54_root(I_max: int) -> float:
    """1 = Σ_{i=0}^{I_max} A_i p^{i+1} 在 (0, 1] 内的根"""
    values = [catalan_closed_form(i) for i in range(I_max + 1)]
    return brentq(lambda p: sum(a * p ** (i + 1) for i, a in enumerate(values)) - 1.0, 1e-12, 1.0)


def _profile_count(N: int, I_max: int) -> int:
    return math.prod(N // (i + 1) + 1 for i in range(1, I_max + 1))


def _enumerate_profiles(N: int, I_max: int):
    def rec(i: int, budget: int, prefix: Tuple[int, ...]):
        if i > I_max:
            yield prefix
            return
        for m in range(budget // (i + 1) + 1):
            yield from rec(i + 1, budget - (i + 1) * m, prefix + (m,))

    yield from rec(1, N, ())


def _coordinate_ascent(N: int, start: List[int], log_catalan: Sequence[float]) -> Tuple[List[int], float]:
    counts = list(start)
    best = eq51_log_value(N, counts, log_catalan)
    improved = True
    while improved:
        improved = False
        for idx in range(len(counts)):
            i = idx + 1
            used_rest = sum((k + 2) * m for k, m in enumerate(counts)) - (i + 1) * counts[idx]
            hi = (N - used_rest) // (i + 1)

            def value(m: int) -> float:
                trial = counts.copy()
                trial[idx] = m
                return eq51_log_value(N, trial, log_catalan)

            # 固定其余坐标时目标关于 m_i 是凹的，二分前向差分的符号
            lo, top = 0, hi
            while lo < top:
                mid = (lo + top) // 2
                if value(mid + 1) > value(mid):
                    lo = mid + 1
                else:
                    top = mid
            candidate = value(lo)
            if candidate > best + 1e-15:
                counts[idx] = lo
                best = candidate
                improved = True
    return counts, best


@dataclass(frozen=True)
class Eq51Maximum:
    """最大化结果"""
    profile: ConnectivityProfile
    q_N: float
    method: str
    continuous_q: Optional[float] = None


def continuous_q(I_max: int) -> float:
    """
    连续极限下的 q = −1 + Σ_{i≤I} A_i p^{i+1}/(i+1) − ln p，p 取截断方程的根
    """
    if I_max == 0:
        return 0.0
    p = truncated_eq54_root(I_max)
    series = sum(catalan_closed_form(i) * p ** (i + 1) / (i + 1) for i in range(I_max + 1))
    return -1.0 + series - math.log(p)


def maximize_eq51(N: int, I_max: int, A: Optional[CatalanTable] = None) -> Eq51Maximum:
    """
    在整数簇分布上最大化每顶点对数

    分布格点数不超过 EXHAUSTIVE_LIMIT 时穷举；否则从若干确定性起点做坐标上升，
    其中一个起点是连续最优 x_i = A_i p^{i+1}/(i+1) 的取整。

    Args:
        N: 顶点数 (≤ 配置上限)
        I_max: 最大簇下标 (≤ 配置上限)
        A: Catalan 表

    Returns:
        Eq51Maximum: 最优分布与 q_N

    Raises:
        CapExceededError: N 或 I_max 超出上限
    """
    if N > EQ51_MAX_VERTICES:
        raise CapExceededError("顶点数 N", N, EQ51_MAX_VERTICES)
    if I_max > EQ51_MAX_INDEX:
        raise CapExceededError("簇下标 I_max", I_max, EQ51_MAX_INDEX)
    if N < 1 or I_max < 0:
        raise PreconditionError(f"要求 N ≥ 1 且 I_max ≥ 0: N={N}, I_max={I_max}")

    if I_max == 0:
        return Eq51Maximum(profile=ConnectivityProfile(N=N, counts=()), q_N=0.0, method='trivial', continuous_q=0.0)

    values = _catalan_values(A, I_max)
    log_catalan = [math.log(v) for v in values[:I_max + 1]]

    if _profile_count(N, I_max) <= EXHAUSTIVE_LIMIT:
        best_counts, best = None, -math.inf
        for counts in _enumerate_profiles(N, I_max):
            value = eq51_log_value(N, counts, log_catalan)
            if value > best:
                best_counts, best = list(counts), value
        method = 'exhaustive'
    else:
        p = truncated_eq54_root(I_max)
        guess = [int(round(values[i] * p ** (i + 1) / (i + 1) * N)) for i in range(1, I_max + 1)]
        while sum((i + 1) * m for i, m in enumerate(guess, start=1)) > N:
            k = max(range(I_max), key=lambda idx: guess[idx])
            guess[k] -= 1
        starts = [guess, [0] * I_max]
        best_counts, best = None, -math.inf
        for start in starts:
            counts, value = _coordinate_ascent(N, start, log_catalan)
            if value > best:
                best_counts, best = counts, value
        method = 'coordinate-ascent'

    logger.info(f"最大化: N={N}, I_max={I_max}, 方法={method}, q_N={best:.8f}")
    return Eq51Maximum(
        profile=ConnectivityProfile(N=N, counts=tuple(best_counts)),
        q_N=best, method=method, continuous_q=continuous_q(I_max)
    )


# ---------------------------------------------------------------------------
# S(p) 的上确界
# ---------------------------------------------------------------------------

def catalan_mass(p: float) -> float:
    """S(p) = Σ_{i≥0} A_i p^{i+1} = (1 − √(1−4p))/2，0 < p ≤ 1/4"""
    if not 0.0 < p <= 0.25:
        raise PreconditionError(f"p 必须在 (0, 1/4] 内: {p}", {'p': p})
    return 2.0 * p / (1.0 + math.sqrt(1.0 - 4.0 * p))


@dataclass(frozen=True)
class Eq54Report:
    """方程 1 = S(p) 在级数收敛域上的求解尝试"""
    supremum: float
    p_at_supremum: float
    increasing: bool
    solvable: bool
    q_at_boundary: float
    samples: Tuple[Tuple[float, float], ...] = field(repr=False)


def attempt_eq54(grid_size: int = 1000) -> Eq54Report:
    """
    在 (0, 1/4] 上求 S(p)，确认上确界 S(1/4) = 1/2 < 1，方程无解

    同时记录边界点 p = 1/4 处的 q = −1 + F(p) − ln p（等于 ln 2）。

    Returns:
        Eq54Report: 上确界、单调性与边界处的 q
    """
    grid = np.linspace(0.25 / grid_size, 0.25, grid_size)
    samples = tuple((float(p), catalan_mass(float(p))) for p in grid)
    values = [s for _, s in samples]
    increasing = all(b > a for a, b in zip(values, values[1:]))
    supremum = catalan_mass(0.25)
    q_boundary = -1.0 + cluster_integral_closed_form(0.25) - math.log(0.25)

    logger.info(f"S(p) 上确界 = {supremum:.12f} (p = 1/4)，方程 1 = S(p) {'有' if supremum >= 1 else '无'}解")
    return Eq54Report(
        supremum=supremum, p_at_supremum=0.25, increasing=increasing,
        solvable=supremum >= 1.0, q_at_boundary=q_boundary, samples=samples
    )


# ---------------------------------------------------------------------------
# ρ 变体
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RhoPoint:
    """ρ 变体在 p = 1 − ρ 处的结果"""
    rho: float
    p: float
    order: int
    q_tilde_series: float
    q_tilde_target: float
    q_tilde_partial: float
    eq57_residual: float

    @property
    def difference(self) -> float:
        return abs(self.q_tilde_series - self.q_tilde_target)


def eq57_residual(rho: float) -> float:
    """
    |Σ A_i p^{i+1} ρ^i − 1|，p = 1 − ρ，按闭式 2p/(1 + √(1−4ρp)) 求值

    ρ < 1/2 时为 0（舍入内）；ρ > 1/2 时等于 |(1−ρ)/ρ − 1|。
    """
    if not 0.0 < rho < 1.0:
        raise PreconditionError(f"ρ 必须在 (0, 1) 内: {rho}", {'rho': rho})
    p = 1.0 - rho
    w = math.sqrt(max(0.0, 1.0 - 4.0 * rho * p))
    return abs(2.0 * p / (1.0 + w) - 1.0)


def q_tilde_target(rho: float) -> float:
    """1 + ((1−ρ)/ρ)·ln(1−ρ)"""
    return 1.0 + (1.0 - rho) / rho * math.log1p(-rho)


def rho_variant(rho: Union[float, Fraction], order: int = DEFAULT_ORDER) -> RhoPoint:
    """
    p = 1 − ρ 代入 q̃ = −1 + Σ A_i p^{i+1} ρ^i/(i+1) − ln p，与目标式比较

    部分和用精确有理数求到 order 阶；截断尾界超过舍入量级时用闭式 F(ρp)/ρ 补齐尾部。

    Args:
        rho: 0 < ρ < 1/2
        order: 级数阶数

    Returns:
        RhoPoint: 两种 q̃ 及方程残差

    Raises:
        PreconditionError: ρ 越界
    """
    if not 0 < rho < Fraction(1, 2):
        raise PreconditionError(f"ρ 必须在 (0, 1/2) 内: {rho}", {'rho': float(rho)})

    exact_rho = Fraction(rho)
    p = 1 - exact_rho
    z = exact_rho * p
    partial = sum(
        (Fraction(catalan_closed_form(i), i + 1) * p * z ** i for i in range(order + 1)),
        Fraction(0)
    )
    partial_value = float(partial)

    bound = (4.0 * float(z)) ** (order + 1) / (1.0 - 4.0 * float(z))
    if bound > 1e-15:
        tail = cluster_integral_closed_form(float(z)) / float(exact_rho) - partial_value
    else:
        tail = 0.0

    log_p = math.log1p(-float(exact_rho))
    q_partial = -1.0 + partial_value - log_p
    return RhoPoint(
        rho=float(rho), p=float(p), order=order,
        q_tilde_series=q_partial + tail,
        q_tilde_target=q_tilde_target(float(rho)),
        q_tilde_partial=q_partial,
        eq57_residual=eq57_residual(float(rho))
    )


@dataclass(frozen=True)
class RhoSeriesIdentity:
    """两个 ρ 形式级数的逐项比较"""
    order: int
    q_tilde: PowerSeries
    target: PowerSeries

    @property
    def equal(self) -> bool:
        return self.q_tilde == self.target

    def mismatches(self) -> List[int]:
        return [k for k in range(self.order + 1) if self.q_tilde[k] != self.target[k]]


def rho_series_identity(order: int = 32) -> RhoSeriesIdentity:
    """
    把 q̃(ρ)（p = 1 − ρ）与 1 + ((1−ρ)/ρ)ln(1−ρ) 都展开成 ρ 的精确有理级数

    i 阶项 A_i p^{i+1} ρ^i/(i+1) 的最低次为 ρ^i，因此截到 order 阶只需 i ≤ order。
    """
    one_minus = PowerSeries([1, -1], order)
    log_one_minus = PowerSeries.log_one_minus(order)

    q_tilde = PowerSeries.constant(-1, order) - log_one_minus
    p_power = one_minus
    for i in range(order + 1):
        term = p_power * PowerSeries.monomial(i, order, Fraction(catalan_closed_form(i), i + 1))
        q_tilde = q_tilde + term
        p_power = p_power * one_minus

    target = one_minus * PowerSeries.log_one_minus(order + 1).divide_by_variable() + 1
    return RhoSeriesIdentity(order=order, q_tilde=q_tilde, target=target)


# ---------------------------------------------------------------------------
# 积和式
# ---------------------------------------------------------------------------

def ryser_permanent(matrix: np.ndarray) -> float:
    """
    Ryser 容斥公式，按 Gray 码逐位翻转列集合

    perm(A) = (−1)^n Σ_{S} (−1)^{|S|} Π_i Σ_{j∈S} a_ij
    """
    A = np.asarray(matrix, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise PreconditionError(f"积和式要求方阵: {A.shape}")
    if n == 0:
        return 1.0

    rowsums = np.zeros(n)
    total = 0.0
    gray = 0
    for k in range(1, 1 << n):
        j = (k & -k).bit_length() - 1
        gray ^= 1 << j
        if gray >> j & 1:
            rowsums += A[:, j]
        else:
            rowsums -= A[:, j]
        sign = -1.0 if bin(gray).count('1') % 2 else 1.0
        total += sign * float(np.prod(rowsums))
    return (-1.0) ** n * total


@dataclass(frozen=True)
class PermanentReport:
    """热核矩阵积和式与目标 1/C_N"""
    N: int
    t: float
    permanent: float
    root: float
    target: float
    within_bounds: bool

    @property
    def gap(self) -> float:
        return abs(self.permanent - self.target)


def conjecture2_permanent(lattice: LatticeSpec, t: float, cap: Optional[int] = None) -> PermanentReport:
    """
    Σ_{x⃗∈B} Π_i (e^{Δt})_{i,x_i} = perm(e^{Δt})

    双随机矩阵的积和式落在 [N!/N^N, 1]，下端正是 t → ∞ 的极限。

    Args:
        lattice: 晶格
        t: 时间
        cap: N 上限（默认取配置）

    Returns:
        PermanentReport: 积和式、N 次方根、目标值

    Raises:
        CapExceededError: N 超出上限
    """
    cap = PERMANENT_CAP if cap is None else cap
    N = lattice.N
    if N > cap:
        raise CapExceededError("积和式阶数 N", N, cap)

    kernel = heat_kernel_spectral(lattice, t)
    value = ryser_permanent(kernel.entries)
    target = math.factorial(N) / N ** N
    tolerance = 1e-12
    within = target - tolerance <= value <= 1.0 + tolerance
    root = max(value, 0.0) ** (1.0 / N)

    logger.debug(f"积和式: N={N}, t={t}, perm={value:.12g}, 目标={target:.12g}")
    return PermanentReport(N=N, t=float(t), permanent=value, root=root, target=target, within_bounds=within)
