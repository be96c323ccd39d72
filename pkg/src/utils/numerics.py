#!/usr/bin/env python3
"""
数值工具模块 - 各模块共用的积分与外推工具

功能:
- 固定步长 RK4 积分（支持一次推进输出多个时刻）
- 有限尺寸 Richardson 外推
- 全变差距离及其插值标准误差

版本: v1.0
"""

import math
from typing import Callable, List, Sequence, Tuple

import numpy as np

from src.utils.exceptions import PreconditionError


def rk4_step(state: np.ndarray, rhs: Callable[[np.ndarray], np.ndarray], dt: float) -> np.ndarray:
    """
    Runge-Kutta 4 单步推进

    Args:
        state: 当前状态
        rhs: 右端函数 f(y)，方程为 dy/dt = f(y)
        dt: 步长

    Returns:
        np.ndarray: 推进后的状态（新数组）
    """
    half = dt / 2.0
    k1 = rhs(state)
    k2 = rhs(state + half * k1)
    k3 = rhs(state + half * k2)
    k4 = rhs(state + dt * k3)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_integrate(
    rhs: Callable[[np.ndarray], np.ndarray],
    y0: np.ndarray,
    times: Sequence[float],
    step: float
) -> List[np.ndarray]:
    """
    用固定步长 RK4 从 t=0 推进，返回各输出时刻的状态

    每段 [t_k, t_{k+1}] 被均匀切分为 ceil(Δt/step) 个子步，
    因此实际步长不超过 step，且输出时刻精确落在网格上。

    Args:
        rhs: 右端函数
        y0: t=0 时的状态
        times: 输出时刻（非负、非降）
        step: 最大步长

    Returns:
        List[np.ndarray]: 与 times 一一对应的状态副本

    Raises:
        PreconditionError: 步长非正或时刻为负/乱序
    """
    if not step > 0:
        raise PreconditionError(f"步长必须为正: {step}", {'step': step})

    state = np.array(y0, dtype=float, copy=True)
    current = 0.0
    results = []

    for t in times:
        if t < 0 or t < current - 1e-15:
            raise PreconditionError(f"输出时刻必须非负且非降: {t}", {'t': t})
        span = t - current
        if span > 0:
            n_steps = max(1, int(math.ceil(span / step - 1e-12)))
            dt = span / n_steps
            for _ in range(n_steps):
                state = rk4_step(state, rhs, dt)
            current = t
        results.append(state.copy())

    return results


def richardson_extrapolate(sizes: Sequence[float], values: Sequence[float]) -> Tuple[float, float]:
    """
    以 h = 1/L 为变量做多项式外推到 h = 0

    用全部点拟合 len-1 次多项式作为极限估计，
    用最后两点的线性外推之差作为不确定度。

    Args:
        sizes: 晶格边长序列
        values: 对应的有限尺寸值

    Returns:
        Tuple[float, float]: (外推极限, 不确定度)
    """
    if len(sizes) != len(values) or len(sizes) == 0:
        raise PreconditionError("外推需要等长且非空的尺寸/数值序列")

    h = np.array([1.0 / s for s in sizes], dtype=float)
    v = np.array(values, dtype=float)
    if len(h) == 1:
        return float(v[0]), float('inf')

    full = float(np.polyval(np.polyfit(h, v, len(h) - 1), 0.0))
    linear = float(np.polyval(np.polyfit(h[-2:], v[-2:], 1), 0.0))
    return full, abs(full - linear)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    """全变差距离 ½Σ|p−q|"""
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def multinomial_tv_stderr(p_hat: np.ndarray, count: int) -> float:
    """
    全变差估计的插值标准误差 σ̂ = ½ Σ sqrt(p̂(1−p̂)/n)

    Args:
        p_hat: 经验频率
        count: 样本量

    Returns:
        float: σ̂
    """
    p_hat = np.asarray(p_hat, dtype=float)
    return 0.5 * float(np.sqrt(p_hat * (1.0 - p_hat) / count).sum())
