#!/usr/bin/env python3
"""
树图计算模块 - Dyson 展开中的连通树图贡献

功能:
- 单次相互作用的解析速率 Σ_y (Δφ_1·φ_2 + φ_1·Δφ_2) 及其暴力求和对照
- 只保留下限的贡献 T_n(t)（n = 2, 3, 4）
- 含上限的完整树图和 T̃_n(t)（n = 2, 3）
- Dyson 层级 ODE 对照：u_0' = Δu_0, u_m' = Δu_m + V_{p_m} u_{m−1}
- 两重时间积分的 Gauss-Legendre 直接求积（独立于层级 ODE）
- 伸缩求和恒等式两侧的直接求值
- t = c·L² 下按 1/L 外推的有限尺寸极限
- 曲线 CSV + JSON 附带文件

粒子与粒子对编号都从 0 开始；z_0 由平移不变性固定在顶点 0。

版本: v1.0
"""

import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from itertools import combinations, permutations
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.modules.extension_pde import (
    ConfigurationSpace,
    ExtendedField,
    PairPotentialSpec,
    apply_potential,
    build_configuration_space,
    laplacian_operator,
    pair_operator,
)
from src.modules.lattice_core import (
    LatticeSpec,
    SiteField,
    apply_laplacian,
    build_lattice,
    heat_kernel_spectral,
)
from src.modules.series_combinatorics import SignConstant
from src.utils.exceptions import PreconditionError
from src.utils.logger import get_logger
from src.utils.numerics import richardson_extrapolate, rk4_integrate
from src.utils.result_io import write_csv, write_json
from config.settings import config

DIAGRAM_STEP = config.get('diagrams.step', 0.002)
EXTRAPOLATION_STEP = config.get('diagrams.extrapolation_step', 0.05)
TIME_SCALE = config.get('diagrams.time_scale', 0.25)
SIZES = tuple(config.get('diagrams.sizes', [8, 12, 16]))
MAX_WORKERS = config.get('performance.max_workers', 4)

SUMMATIONS = ('distinct', 'all')

logger = get_logger(__name__)

Pair = Tuple[int, int]
Times = Union[float, Sequence[float]]


@dataclass(frozen=True)
class DysonTerm:
    """一个时间有序相互作用序列的贡献曲线"""
    n: int
    pair_sequence: Tuple[Pair, ...]
    curve: Tuple[Tuple[float, float], ...]

    @property
    def is_tree(self) -> bool:
        return len(self.pair_sequence) == self.n - 1 and _spans(self.n, self.pair_sequence)


@dataclass(frozen=True)
class DiagramEvaluation:
    """T_n(t) 或 T̃_n(t) 的曲线，可附外推极限"""
    n: int
    kind: str
    d: int
    L: int
    curve: Tuple[Tuple[float, float], ...]
    step: Optional[float] = None
    method: str = ''
    extrapolated_limit: Optional[float] = None
    uncertainty: Optional[float] = None

    @property
    def final_value(self) -> float:
        return self.curve[-1][1]


def _as_times(t: Times) -> List[float]:
    times = [float(t)] if np.isscalar(t) else [float(x) for x in t]
    if not times:
        raise PreconditionError("时间网格为空")
    for a, b in zip(times, times[1:]):
        if b <= a:
            raise PreconditionError("时间网格必须严格递增", {'times': times})
    if times[0] < 0:
        raise PreconditionError(f"时间必须非负: {times[0]}", {'t': times[0]})
    return times


def _spans(n: int, pairs: Sequence[Pair]) -> bool:
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in pairs:
        parent[find(i)] = find(j)
    return len({find(v) for v in range(n)}) == 1


def spanning_sequences(n: int) -> List[Tuple[Pair, ...]]:
    """长度 n−1、覆盖全部 n 个粒子的有序粒子对序列"""
    pairs = list(combinations(range(n), 2))
    return [seq for seq in permutations(pairs, n - 1) if _spans(n, seq)]


# ---------------------------------------------------------------------------
# 单次相互作用
# ---------------------------------------------------------------------------

def theorem1_contribution(lattice: LatticeSpec, z1: int, z2: int, t1: float) -> float:
    """
    Σ_y d/dt(φ_1 φ_2) 在 t = t_1 处的值，φ_i 为从 z_i 出发的热核列

    导数按 Σ_y (Δφ_1·φ_2 + φ_1·Δφ_2) 解析给出。

    Args:
        lattice: 晶格
        z1, z2: 起点（允许相同）
        t1: 时刻 (≥ 0)

    Returns:
        float: 贡献值
    """
    lattice.check_vertex(z1)
    lattice.check_vertex(z2)
    kernel = heat_kernel_spectral(lattice, t1)
    phi1, phi2 = kernel.column(z1), kernel.column(z2)
    return float(np.dot(apply_laplacian(lattice, phi1), phi2) + np.dot(phi1, apply_laplacian(lattice, phi2)))


def single_interaction_rate(lattice: LatticeSpec, z1: int, z2: int, t1: float, r: float = 0.0) -> float:
    """
    暴力求和 ⟨1, V_{01}(φ_1⊗φ_2)⟩：在两粒子配置空间上作用势再对终态求和

    r = 0 时等于 theorem1_contribution；一般情形带因子 (1 + r)。
    """
    lattice.check_vertex(z1)
    lattice.check_vertex(z2)
    space = build_configuration_space(lattice, particles=2)
    kernel = heat_kernel_spectral(lattice, t1)
    product = np.outer(kernel.column(z1), kernel.column(z2)).reshape(-1)
    applied = apply_potential(PairPotentialSpec(r=r), space, ExtendedField(t=t1, values=product))
    return float(applied.values.sum())


# ---------------------------------------------------------------------------
# 只保留下限的贡献
# ---------------------------------------------------------------------------

def _lower_limit_value(kernel: np.ndarray, n: int) -> float:
    """
    (−1)^n Σ_{z_1..z_{n−1} 互异且 ≠ 0} Σ_y K_{0y} Π_k K_{z_k y}

    对每个 y，有序互异求和等于 (n−1)! 乘以 {K_{zy}}_{z≠0} 的 n−1 阶初等对称多项式。
    """
    phi0 = kernel[0]
    others = kernel[1:]
    elementary = [np.ones(kernel.shape[1])] + [np.zeros(kernel.shape[1]) for _ in range(n - 1)]
    for row in others:
        for k in range(n - 1, 0, -1):
            elementary[k] = elementary[k] + row * elementary[k - 1]
    total = math.factorial(n - 1) * float(np.dot(phi0, elementary[n - 1]))
    return (-1) ** n * total


def t2_closed_form(lattice: LatticeSpec, t: float) -> float:
    """T_2(t) = 1 − Σ_y K(t)_{0y}²"""
    phi = heat_kernel_spectral(lattice, t).column(0)
    return 1.0 - float(np.dot(phi, phi))


def t3_closed_form(lattice: LatticeSpec, t: float) -> float:
    """T_3(t) = −(1 − 3‖φ‖² + 2Σ_y φ³)"""
    phi = heat_kernel_spectral(lattice, t).column(0)
    return -(1.0 - 3.0 * float(np.dot(phi, phi)) + 2.0 * float(np.sum(phi ** 3)))


def T_n_lower_limits(lattice: LatticeSpec, n: int, t: Times) -> DiagramEvaluation:
    """
    只保留下限的 n 粒子树图贡献 T_n(t)

    z_0 固定在 0，其余起点在互异元组上求和；整体符号取 (−1)^n，
    n = 2 时即 1 − Σ_y φ²，t → ∞ 时趋于 a_{n−1}。

    Args:
        lattice: 晶格
        n: 粒子数 (2, 3, 4)
        t: 单个时刻或严格递增的时间网格

    Returns:
        DiagramEvaluation: kind='lower'

    Raises:
        PreconditionError: n 不受支持
    """
    if n not in (2, 3, 4):
        raise PreconditionError(f"T_n 只支持 n ∈ {{2, 3, 4}}: {n}", {'n': n})
    if lattice.N < n:
        raise PreconditionError(f"顶点数 {lattice.N} 少于粒子数 {n}")
    times = _as_times(t)
    if n == 2:
        curve = tuple((s, t2_closed_form(lattice, s)) for s in times)
        method = 'closed-form'
    else:
        curve = tuple((s, _lower_limit_value(heat_kernel_spectral(lattice, s).entries, n)) for s in times)
        method = 'elementary-symmetric'
    return DiagramEvaluation(n=n, kind='lower', d=lattice.d, L=lattice.L, curve=curve, method=method)


# ---------------------------------------------------------------------------
# Dyson 对照
# ---------------------------------------------------------------------------

def _validate_sequence(n: int, pair_sequence: Sequence[Pair]) -> Tuple[Pair, ...]:
    if n not in (2, 3):
        raise PreconditionError(f"Dyson 对照只支持 n ∈ {{2, 3}}: {n}", {'n': n})
    if len(pair_sequence) > 2:
        raise PreconditionError(f"相互作用序列过长: {len(pair_sequence)} > 2")
    out = []
    for i, j in pair_sequence:
        i, j = int(i), int(j)
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise PreconditionError(f"粒子对无效: ({i}, {j})", {'pair': [i, j], 'n': n})
        out.append((min(i, j), max(i, j)))
    return tuple(out)


def initial_condition(
    space: ConfigurationSpace,
    z: Optional[Sequence[int]] = None,
    summation: str = 'distinct'
) -> np.ndarray:
    """
    层级 ODE 的初值

    给定 z 时为单个 δ；否则 z_0 = 0，其余起点按 summation 求和
    ('distinct': 互异元组, 'all': 任意)。
    """
    state = np.zeros(space.size)
    if z is not None:
        state[space.encode(z)] = 1.0
        return state
    if summation not in SUMMATIONS:
        raise PreconditionError(f"未知的求和方式: {summation}", {'summation': summation})
    mask = space.digits[:, 0] == 0
    if summation == 'distinct':
        mask &= space.distinct_mask()
    state[mask] = 1.0
    return state


def dyson_curve(
    lattice: LatticeSpec,
    n: int,
    pair_sequence: Sequence[Pair],
    t: Times,
    step: float = DIAGRAM_STEP,
    z: Optional[Sequence[int]] = None,
    summation: str = 'distinct',
    cap: Optional[int] = None
) -> DysonTerm:
    """
    对终态求和的时间有序项，沿时间网格一次推进

    状态为 (u_0, …, u_{k−1}, acc)，acc' = ⟨V_{p_k}^T 1, u_{k−1}⟩；
    末端传播子保持质量，因此省去。

    Args:
        lattice: 晶格
        n: 粒子数 (2, 3)
        pair_sequence: 按时间先后排列的粒子对，长度 ≤ 2
        t: 时刻或时间网格
        step: RK4 步长
        z: 单个初始配置；None 时按 summation 求和
        summation: 'distinct' 或 'all'
        cap: 状态数上限

    Returns:
        DysonTerm: 贡献曲线
    """
    sequence = _validate_sequence(n, pair_sequence)
    times = _as_times(t)
    space = build_configuration_space(lattice, particles=n, cap=cap)
    u0 = initial_condition(space, z, summation)

    k = len(sequence)
    if k == 0:
        mass = float(u0.sum())
        return DysonTerm(n=n, pair_sequence=(), curve=tuple((s, mass) for s in times))

    lap = laplacian_operator(space)
    potentials = [pair_operator(space, i, j, 0.0) for i, j in sequence]
    readout = potentials[-1].T @ np.ones(space.size)
    S = space.size

    def rhs(state: np.ndarray) -> np.ndarray:
        out = np.empty_like(state)
        out[:S] = lap @ state[:S]
        for m in range(1, k):
            u_m = state[m * S:(m + 1) * S]
            out[m * S:(m + 1) * S] = lap @ u_m + potentials[m - 1] @ state[(m - 1) * S:m * S]
        out[-1] = readout @ state[(k - 1) * S:k * S]
        return out

    start = np.concatenate([u0, np.zeros((k - 1) * S), [0.0]])
    states = rk4_integrate(rhs, start, times, step)
    logger.debug(f"Dyson 层级: n={n}, 序列={sequence}, L={lattice.L}, 步长={step}")
    return DysonTerm(n=n, pair_sequence=sequence, curve=tuple((s, float(u[-1])) for s, u in zip(times, states)))


def dyson_oracle(
    lattice: LatticeSpec,
    n: int,
    pair_sequence: Sequence[Pair],
    t: float,
    step: float = DIAGRAM_STEP,
    z: Optional[Sequence[int]] = None,
    summation: str = 'distinct',
    cap: Optional[int] = None
) -> float:
    """dyson_curve 在单个时刻的值"""
    return dyson_curve(lattice, n, pair_sequence, float(t), step, z, summation, cap).curve[-1][1]


def _apply_free(space: ConfigurationSpace, kernel: np.ndarray, values: np.ndarray) -> np.ndarray:
    """e^{Δs} 在 Λ^n 上等于单粒子热核的张量积，逐轴收缩"""
    tensor = values.reshape(space.shape)
    for axis in range(space.particles):
        tensor = np.moveaxis(np.tensordot(kernel, tensor, axes=([1], [axis])), 0, axis)
    return tensor.reshape(-1)


def dyson_quadrature(
    lattice: LatticeSpec,
    n: int,
    pair_sequence: Sequence[Pair],
    t: float,
    nodes: int = 32,
    z: Optional[Sequence[int]] = None,
    summation: str = 'distinct'
) -> float:
    """
    同一时间有序项的 Gauss-Legendre 直接求积

    传播子用谱热核的张量积，与层级 ODE 互为独立对照。

    Args:
        lattice: 晶格
        n: 粒子数 (2, 3)
        pair_sequence: 长度 1 或 2 的序列
        t: 终止时刻
        nodes: 每个时间变量的求积节点数
        z, summation: 同 dyson_curve

    Returns:
        float: 积分值
    """
    sequence = _validate_sequence(n, pair_sequence)
    if not sequence:
        raise PreconditionError("直接求积要求至少一次相互作用")
    space = build_configuration_space(lattice, particles=n)
    u0 = initial_condition(space, z, summation)
    potentials = [pair_operator(space, i, j, 0.0) for i, j in sequence]
    readout = potentials[-1].T @ np.ones(space.size)

    x, w = np.polynomial.legendre.leggauss(nodes)

    def propagate(s: float, values: np.ndarray) -> np.ndarray:
        return _apply_free(space, heat_kernel_spectral(lattice, s).entries, values)

    def scaled(upper: float) -> Tuple[np.ndarray, np.ndarray]:
        return upper * (x + 1.0) / 2.0, upper * w / 2.0

    outer_s, outer_w = scaled(float(t))
    total = 0.0
    if len(sequence) == 1:
        for s, weight in zip(outer_s, outer_w):
            total += weight * float(readout @ propagate(s, u0))
        return total

    for t2, w2 in zip(outer_s, outer_w):
        inner_s, inner_w = scaled(t2)
        inner = 0.0
        for t1, w1 in zip(inner_s, inner_w):
            kicked = potentials[0] @ propagate(t1, u0)
            inner += w1 * float(readout @ propagate(t2 - t1, kicked))
        total += w2 * inner
    return total


# ---------------------------------------------------------------------------
# 完整树图和
# ---------------------------------------------------------------------------

def T_tilde_n(
    lattice: LatticeSpec,
    n: int,
    t: Times,
    step: float = DIAGRAM_STEP,
    summation: str = 'distinct',
    workers: Optional[int] = None
) -> DiagramEvaluation:
    """
    含上限的完整树图和 T̃_n(t)

    对全部张成序列求 Dyson 项之和再除以 (n−1)!（交换其余起点的标号给出相同的和）。
    n = 2 时只有一个单重积分，没有嵌套上限，T̃_2 与 T_2 的闭式恒等。

    Args:
        lattice: 晶格
        n: 粒子数 (2, 3)
        t: 时刻或时间网格
        step: 层级 ODE 步长
        summation: 起点求和方式
        workers: 线程数

    Returns:
        DiagramEvaluation: kind='full'
    """
    if n not in (2, 3):
        raise PreconditionError(f"T̃_n 只支持 n ∈ {{2, 3}}: {n}", {'n': n})
    times = _as_times(t)
    if n == 2 and summation == 'distinct':
        curve = tuple((s, t2_closed_form(lattice, s)) for s in times)
        return DiagramEvaluation(n=2, kind='full', d=lattice.d, L=lattice.L, curve=curve, method='closed-form')

    sequences = spanning_sequences(n)
    workers = MAX_WORKERS if workers is None else max(1, int(workers))
    terms: List[Optional[DysonTerm]] = [None] * len(sequences)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_index = {
            executor.submit(dyson_curve, lattice, n, seq, times, step, None, summation): idx
            for idx, seq in enumerate(sequences)
        }
        for future in as_completed(future_to_index):
            terms[future_to_index[future]] = future.result()

    # 按序列顺序累加，结果与线程调度无关
    norm = math.factorial(n - 1)
    values = np.zeros(len(times))
    for term in terms:
        values += np.array([v for _, v in term.curve])
    curve = tuple((s, float(v) / norm) for s, v in zip(times, values))
    logger.info(f"T̃_{n}: L={lattice.L}, 求和={summation}, 末值={curve[-1][1]:.6f}")
    return DiagramEvaluation(
        n=n, kind='full', d=lattice.d, L=lattice.L, curve=curve,
        step=step, method=f'dyson-hierarchy/{summation}'
    )


# ---------------------------------------------------------------------------
# 伸缩求和恒等式
# ---------------------------------------------------------------------------

def telescopic_identity_check(
    lattice: LatticeSpec,
    n: int,
    y: int,
    direction: int,
    fields: Sequence[SiteField]
) -> Tuple[float, float]:
    """
    在给定 y 与方向上求伸缩求和恒等式的两侧

    左侧: 对前 n−1 个场的全部排列求
      [Σ_{j=0}^{n−2} φ_1(y)…φ_j(y) φ_{j+1}(ye)…φ_{n−2}(ye)]·(φ_{n−1}(y) − φ_{n−1}(ye))·(φ_n(y) − φ_n(ye))
    右侧: (n−1)!·[Π_{k<n} φ_k(y) − Π_{k<n} φ_k(ye)]·(φ_n(y) − φ_n(ye))

    Args:
        lattice: 晶格
        n: 场的个数 (≥ 3)
        y: 顶点
        direction: 方向编号 m，ye = y + e_m
        fields: n 个场

    Returns:
        Tuple[float, float]: (左侧, 右侧)
    """
    if n < 3:
        raise PreconditionError(f"伸缩恒等式要求 n ≥ 3: {n}", {'n': n})
    if len(fields) != n:
        raise PreconditionError(f"需要 {n} 个场，实际 {len(fields)}")
    lattice.check_vertex(y)
    if not 0 <= direction < lattice.d:
        raise PreconditionError(f"方向越界: {direction}", {'direction': direction})

    ye = int(lattice.forward[direction][y])
    here = [float(f[y]) for f in fields]
    there = [float(f[ye]) for f in fields]
    last = here[n - 1] - there[n - 1]

    lhs = 0.0
    for order in permutations(range(n - 1)):
        chain = 0.0
        for j in range(n - 1):
            term = 1.0
            for k in order[:j]:
                term *= here[k]
            for k in order[j:n - 2]:
                term *= there[k]
            chain += term
        v = order[n - 2]
        lhs += chain * (here[v] - there[v]) * last

    rhs = math.factorial(n - 1) * (math.prod(here[:n - 1]) - math.prod(there[:n - 1])) * last
    return lhs, rhs


def telescopic_identity_total(lattice: LatticeSpec, n: int, fields: Sequence[SiteField]) -> Tuple[float, float]:
    """两侧对全部 y 与方向求和"""
    lhs = rhs = 0.0
    for y in range(lattice.N):
        for m in range(lattice.d):
            a, b = telescopic_identity_check(lattice, n, y, m, fields)
            lhs += a
            rhs += b
    return lhs, rhs


# ---------------------------------------------------------------------------
# 有限尺寸外推
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteSizeResult:
    """t = c·L² 下的有限尺寸序列及其 1/L 外推"""
    sizes: Tuple[int, ...]
    times: Tuple[float, ...]
    values: Tuple[float, ...]
    limit: float
    uncertainty: float
    method: str = 'richardson-1/L'

    def monotone_toward(self, target: float) -> bool:
        gaps = [abs(v - target) for v in self.values]
        return all(b < a for a, b in zip(gaps, gaps[1:]))


def finite_size_limit(
    evaluator: Callable[[LatticeSpec, float], float],
    sizes: Sequence[int] = SIZES,
    time_scale: float = TIME_SCALE,
    d: int = 1
) -> FiniteSizeResult:
    """
    在 t = time_scale·L² 处求值并按 1/L 多项式外推

    Args:
        evaluator: (lattice, t) → 数值
        sizes: 边长序列
        time_scale: 扩散标度系数
        d: 维数

    Returns:
        FiniteSizeResult: 序列与外推极限
    """
    times, values = [], []
    for L in sizes:
        lattice = build_lattice(d, L)
        t = time_scale * L * L
        times.append(t)
        values.append(float(evaluator(lattice, t)))
        logger.info(f"有限尺寸: L={L}, t={t:g}, 值={values[-1]:.8f}")
    limit, uncertainty = richardson_extrapolate(sizes, values)
    return FiniteSizeResult(
        sizes=tuple(sizes), times=tuple(times), values=tuple(values),
        limit=limit, uncertainty=uncertainty
    )


def lower_limit_extrapolation(n: int, sizes: Sequence[int] = SIZES, time_scale: float = TIME_SCALE) -> FiniteSizeResult:
    """T_n 的有限尺寸外推，目标 a_{n−1}"""
    return finite_size_limit(lambda lat, t: T_n_lower_limits(lat, n, t).final_value, sizes, time_scale)


def full_tree_extrapolation(
    n: int,
    sizes: Sequence[int] = SIZES,
    time_scale: float = TIME_SCALE,
    step: float = EXTRAPOLATION_STEP
) -> FiniteSizeResult:
    """T̃_n 的有限尺寸外推，目标 A_{n−1}"""
    return finite_size_limit(lambda lat, t: T_tilde_n(lat, n, t, step).final_value, sizes, time_scale)


def with_extrapolation(evaluation: DiagramEvaluation, result: FiniteSizeResult) -> DiagramEvaluation:
    """把外推结果附到曲线上"""
    return DiagramEvaluation(
        n=evaluation.n, kind=evaluation.kind, d=evaluation.d, L=evaluation.L,
        curve=evaluation.curve, step=evaluation.step, method=evaluation.method,
        extrapolated_limit=result.limit, uncertainty=result.uncertainty
    )


def lower_limit_target(n: int) -> int:
    """a_{n−1}"""
    return SignConstant()[n - 1]


def save_evaluation(evaluation: DiagramEvaluation, path: str) -> Tuple[str, str]:
    """写出曲线 CSV (t, value) 与 JSON 附带文件"""
    csv_path = write_csv(path, ['t', 'value'], evaluation.curve)
    sidecar = {
        'n': evaluation.n,
        'kind': evaluation.kind,
        'L': evaluation.L,
        'd': evaluation.d,
        'step': evaluation.step,
        'method': evaluation.method,
        'extrapolated_limit': evaluation.extrapolated_limit,
        'uncertainty': evaluation.uncertainty,
    }
    json_path = write_json(str(Path(path).with_suffix('.json')), sidecar)
    return csv_path, json_path
