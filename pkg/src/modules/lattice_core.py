#!/usr/bin/env python3
"""
晶格核心模块 - 周期 d 维立方晶格、拉普拉斯算子、热核与常数 C_N

功能:
- 构造周期晶格 Λ（顶点按坐标字典序编号）
- 晶格拉普拉斯 Δ（每条边速率 1，不做 1/2d 归一化）
- 热核 e^{Δt}：离散傅里叶谱方法 + RK4 对照路径
- C_N = N^N / N! 的精确有理值及其 N 次方根

版本: v1.0
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import List, Sequence, Tuple

import numpy as np

from src.utils.exceptions import PreconditionError
from src.utils.logger import get_logger
from src.utils.numerics import rk4_integrate
from config.settings import config

HEAT_KERNEL_ODE_STEP = config.get('heat_kernel.ode_step', 0.001)

logger = get_logger(__name__)

# 场 φ: Λ → R，直接用长度 N 的 numpy 向量表示
SiteField = np.ndarray


@dataclass(frozen=True)
class LatticeSpec:
    """周期晶格 Λ：维数 d、边长 L、顶点数 N = L^d 与最近邻边"""
    d: int
    L: int
    N: int
    edges: Tuple[Tuple[int, int], ...]
    # forward[m][v] = v + e_m, backward[m][v] = v − e_m
    forward: np.ndarray = field(repr=False, compare=False)
    backward: np.ndarray = field(repr=False, compare=False)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def coords(self, v: int) -> Tuple[int, ...]:
        """顶点编号 → 坐标（第一个坐标为最高位）"""
        out = []
        for _ in range(self.d):
            out.append(v % self.L)
            v //= self.L
        return tuple(reversed(out))

    def index(self, coords: Sequence[int]) -> int:
        """坐标 → 顶点编号（坐标按 L 取模）"""
        if len(coords) != self.d:
            raise PreconditionError(f"坐标维数应为 {self.d}: {coords}")
        v = 0
        for c in coords:
            v = v * self.L + (c % self.L)
        return v

    def neighbors(self, v: int) -> List[int]:
        """顶点 v 的 2d 个最近邻"""
        self.check_vertex(v)
        out = []
        for m in range(self.d):
            out.append(int(self.forward[m][v]))
            out.append(int(self.backward[m][v]))
        return out

    def check_vertex(self, v: int) -> None:
        if not 0 <= v < self.N:
            raise PreconditionError(f"顶点编号越界: {v} (N = {self.N})", {'vertex': v})

    def translation(self, offset: Sequence[int]) -> np.ndarray:
        """平移 τ: x ↦ x + offset，返回长度 N 的顶点置换"""
        tau = np.arange(self.N)
        for m, shift in enumerate(offset):
            for _ in range(shift % self.L):
                tau = self.forward[m][tau]
        return tau


def build_lattice(d: int, L: int) -> LatticeSpec:
    """
    构造周期立方晶格

    Args:
        d: 维数 (≥ 1)
        L: 边长 (≥ 3；L = 2 时一对顶点会被计成两条边)

    Returns:
        LatticeSpec: 晶格描述

    Raises:
        PreconditionError: d < 1 或 L < 3
    """
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise PreconditionError("d must be ≥ 1", {'d': d})
    if not isinstance(L, (int, np.integer)) or L < 3:
        raise PreconditionError("L must be ≥ 3", {'L': L})
    return _build_lattice_cached(int(d), int(L))


@lru_cache(maxsize=64)
def _build_lattice_cached(d: int, L: int) -> LatticeSpec:
    N = L ** d
    grid = np.arange(N).reshape((L,) * d)
    forward = np.empty((d, N), dtype=np.int64)
    backward = np.empty((d, N), dtype=np.int64)
    for m in range(d):
        # roll(-1) 把 x+e_m 处的编号搬到 x 处
        forward[m] = np.roll(grid, -1, axis=m).reshape(N)
        backward[m] = np.roll(grid, 1, axis=m).reshape(N)
    forward.setflags(write=False)
    backward.setflags(write=False)

    edges = tuple(
        (v, int(forward[m][v]))
        for v in range(N)
        for m in range(d)
    )
    logger.debug(f"构造晶格 d={d}, L={L}, N={N}, 边数={len(edges)}")
    return LatticeSpec(d=d, L=L, N=N, edges=edges, forward=forward, backward=backward)


def laplacian_matrix(lattice: LatticeSpec) -> np.ndarray:
    """晶格拉普拉斯的稠密矩阵 (Δ)_{ij}"""
    N = lattice.N
    lap = -2.0 * lattice.d * np.eye(N)
    for a, b in lattice.edges:
        lap[a, b] += 1.0
        lap[b, a] += 1.0
    return lap


def apply_laplacian(lattice: LatticeSpec, phi: SiteField) -> SiteField:
    """
    作用晶格拉普拉斯 (Δφ)(i) = Σ_{j∼i} (φ(j) − φ(i))

    Args:
        lattice: 晶格
        phi: 长度 N 的场

    Returns:
        SiteField: Δφ

    Raises:
        PreconditionError: 长度不匹配
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (lattice.N,):
        raise PreconditionError(
            f"场长度应为 {lattice.N}, 实际 {phi.shape}",
            {'expected': lattice.N, 'actual': list(phi.shape)}
        )
    out = -2.0 * lattice.d * phi
    for m in range(lattice.d):
        out = out + phi[lattice.forward[m]] + phi[lattice.backward[m]]
    return out


@dataclass(frozen=True)
class HeatKernelMatrix:
    """热核矩阵 (e^{Δt})_{ij}"""
    t: float
    entries: np.ndarray = field(repr=False, compare=False)

    def column(self, i: int) -> SiteField:
        """从顶点 i 出发的热核列 (e^{Δt})_{i,·}（矩阵对称）"""
        return self.entries[:, i].copy()


def _ring_kernel(L: int, t: float) -> np.ndarray:
    """一维环上的热核：(1/L) Σ_k e^{−tλ_k} cos(2πk(a−b)/L)"""
    k = np.arange(L)
    decay = np.exp(-t * 2.0 * (1.0 - np.cos(2.0 * np.pi * k / L)))
    diff = np.subtract.outer(np.arange(L), np.arange(L))
    phases = np.cos(2.0 * np.pi * np.multiply.outer(diff, k) / L)
    return (phases @ decay) / L


def heat_kernel_spectral(lattice: LatticeSpec, t: float) -> HeatKernelMatrix:
    """
    谱方法计算热核

    周期晶格的拉普拉斯按坐标可分离，d 维热核是一维环热核的 Kronecker 积，
    与顶点的字典序编号一致。

    Args:
        lattice: 晶格
        t: 时间 (≥ 0)

    Returns:
        HeatKernelMatrix: 热核矩阵
    """
    if t < 0:
        raise PreconditionError(f"时间必须非负: {t}", {'t': t})
    ring = _ring_kernel(lattice.L, float(t))
    entries = ring
    for _ in range(lattice.d - 1):
        entries = np.kron(entries, ring)
    return HeatKernelMatrix(t=float(t), entries=entries)


def heat_kernel_ode(lattice: LatticeSpec, t: float, step: float = HEAT_KERNEL_ODE_STEP) -> HeatKernelMatrix:
    """
    RK4 时间推进计算热核（谱方法的独立对照）

    所有列同时推进：dK/dt = ΔK, K(0) = I。

    Args:
        lattice: 晶格
        t: 时间 (≥ 0)
        step: 最大步长 (> 0)

    Returns:
        HeatKernelMatrix: 热核矩阵
    """
    if not step > 0:
        raise PreconditionError(f"步长必须为正: {step}", {'step': step})
    if t < 0:
        raise PreconditionError(f"时间必须非负: {t}", {'t': t})
    lap = laplacian_matrix(lattice)
    (entries,) = rk4_integrate(lambda k: lap @ k, np.eye(lattice.N), [float(t)], step)
    return HeatKernelMatrix(t=float(t), entries=entries)


@dataclass(frozen=True)
class CConstant:
    """C_N = N^N / N!"""
    N: int
    exact: Fraction
    value: float
    root: float


def c_constant(N: int) -> CConstant:
    """
    计算 C_N = N^N / N! 及 C_N^{1/N}

    精确值用大整数分数；N 次方根通过对数计算，避免大数溢出。

    Args:
        N: 顶点数 (≥ 1)

    Returns:
        CConstant: 精确值、浮点值与 N 次方根
    """
    if N < 1:
        raise PreconditionError(f"N 必须 ≥ 1: {N}", {'N': N})
    exact = Fraction(N ** N, math.factorial(N))
    try:
        value = float(exact)
    except OverflowError:
        value = math.inf
    root = math.exp((N * math.log(N) - math.lgamma(N + 1)) / N)
    return CConstant(N=N, exact=exact, value=value, root=root)
