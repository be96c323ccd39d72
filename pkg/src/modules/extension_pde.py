#!/usr/bin/env python3
"""
扩展方程模块 - Λ^n 上的热方程加成对势 ∂f/∂t = Δf + Vf

功能:
- 配置空间 Λ^n 的混合进制编号（n 个粒子，n = N 时含全部 N! 个互异配置）
- 成对势 V_{ij} 的两体模板（乘积函数上的定义按线性延拓到任意场）
- 稀疏生成元 Δ + V 的装配
- RK4 时间推进 + 步长减半误差估计
- 限制到互异配置并与置换群演化比对
- 总质量 Σ_A f^e 随 t 的曲线（与 C_N 并列报告）
- 场文件的 JSON 头 + CSV 持久化

版本: v1.0
"""

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from src.modules.group_walk import GroupDistribution, permutation_table
from src.modules.lattice_core import LatticeSpec, build_lattice, c_constant, laplacian_matrix
from src.utils.exceptions import CapExceededError, PreconditionError, ResultFormatError
from src.utils.logger import get_logger
from src.utils.numerics import rk4_integrate
from src.utils.result_io import read_header_csv, write_header_csv
from config.settings import config

CAP_STATES = config.get('extension.cap_states', 1000000)
EXTENSION_STEP = config.get('extension.step', 0.005)
R_MAX = config.get('extension.r_max', 1.0)

logger = get_logger(__name__)


# ---------------------------------------------------------------------------
# 配置空间
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfigurationSpace:
    """
    Λ^n：配置 (x_0, …, x_{n−1}) 的编号为 Σ_k x_k N^{n−1−k}

    数组视图下，场 reshape 成 (N,)*n 后第 k 个轴就是 x_k。
    """
    lattice: LatticeSpec
    particles: int
    size: int
    weights: Tuple[int, ...]
    digits: np.ndarray = field(repr=False, compare=False)

    @property
    def N(self) -> int:
        return self.lattice.N

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.N,) * self.particles

    def encode(self, config_tuple: Sequence[int]) -> int:
        if len(config_tuple) != self.particles:
            raise PreconditionError(f"配置长度应为 {self.particles}: {tuple(config_tuple)}")
        for x in config_tuple:
            self.lattice.check_vertex(int(x))
        return int(sum(int(x) * w for x, w in zip(config_tuple, self.weights)))

    def decode(self, index: int) -> Tuple[int, ...]:
        if not 0 <= index < self.size:
            raise PreconditionError(f"配置编号越界: {index}", {'index': index})
        return tuple(int(x) for x in self.digits[index])

    def encode_many(self, tuples: np.ndarray) -> np.ndarray:
        return np.asarray(tuples, dtype=np.int64) @ np.array(self.weights, dtype=np.int64)

    def identity_index(self) -> int:
        """x_k = k 的配置"""
        return self.encode(list(range(self.particles)))

    def distinct_mask(self) -> np.ndarray:
        """各坐标两两不同的配置"""
        mask = np.ones(self.size, dtype=bool)
        for i, j in combinations(range(self.particles), 2):
            mask &= self.digits[:, i] != self.digits[:, j]
        return mask

    def distinct_indices(self) -> np.ndarray:
        """
        B 中的配置编号，按置换的 Lehmer 秩排列

        只对 n = N 有意义，此时 |B| = N!。
        """
        if self.particles != self.N:
            raise PreconditionError(
                "只有粒子数等于顶点数时互异配置才与置换一一对应",
                {'particles': self.particles, 'N': self.N}
            )
        return self.encode_many(permutation_table(self.N))


def build_configuration_space(
    lattice: LatticeSpec,
    particles: Optional[int] = None,
    cap: Optional[int] = None
) -> ConfigurationSpace:
    """
    构造配置空间 Λ^n

    Args:
        lattice: 晶格
        particles: 粒子数 n（默认 N）
        cap: 状态数上限（默认取配置）

    Returns:
        ConfigurationSpace: 配置空间

    Raises:
        CapExceededError: N^n 超出上限
    """
    n = lattice.N if particles is None else int(particles)
    if n < 1:
        raise PreconditionError(f"粒子数必须 ≥ 1: {n}", {'particles': n})
    cap = CAP_STATES if cap is None else cap
    size = lattice.N ** n
    if size > cap:
        raise CapExceededError("配置空间 N^n", size, cap)

    weights = tuple(lattice.N ** (n - 1 - k) for k in range(n))
    grids = np.indices((lattice.N,) * n).reshape(n, -1).T.astype(np.int64)
    grids.setflags(write=False)
    return ConfigurationSpace(lattice=lattice, particles=n, size=size, weights=weights, digits=grids)


# ---------------------------------------------------------------------------
# 场与势
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExtendedField:
    """f^e(x⃗, t)：长度 N^n 的实向量"""
    t: float
    values: np.ndarray = field(repr=False, compare=False)
    step: Optional[float] = None
    error_estimate: Optional[float] = None

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class PairPotentialSpec:
    """
    V = Σ V_{ij}，粒子编号从 0 开始

    active_pairs 为 None 时取全部粒子对。
    """
    r: float = 0.0
    active_pairs: Optional[Tuple[Tuple[int, int], ...]] = None

    def __post_init__(self):
        if abs(self.r) > R_MAX:
            raise PreconditionError(f"|r| 超出上限 {R_MAX}: {self.r}", {'r': self.r, 'r_max': R_MAX})
        if self.active_pairs is not None:
            pairs = tuple(tuple(sorted((int(i), int(j)))) for i, j in self.active_pairs)
            for i, j in pairs:
                if i == j or i < 0:
                    raise PreconditionError(f"粒子对无效: ({i}, {j})", {'pair': [i, j]})
            object.__setattr__(self, 'active_pairs', tuple(sorted(set(pairs))))

    def pairs(self, particles: int) -> List[Tuple[int, int]]:
        if self.active_pairs is None:
            return list(combinations(range(particles), 2))
        for i, j in self.active_pairs:
            if j >= particles:
                raise PreconditionError(f"粒子对 ({i}, {j}) 超出粒子数 {particles}")
        return list(self.active_pairs)


@lru_cache(maxsize=32)
def two_body_matrix(d: int, L: int, r: float) -> sparse.csr_matrix:
    """
    V_{ij} 在坐标 (x_i, x_j) 上的 N²×N² 模板，行列编号 a·N + b

    对每个 y 与方向 m (ye = y + e_m)，选择子 (y,ye)、(ye,y) 权重 1，(y,y)、(ye,ye) 权重 r，
    每一行都乘以 −[F(y,y) − F(y,ye) − F(ye,y) + F(ye,ye)]。
    """
    lattice = build_lattice(d, L)
    N = lattice.N
    rows, cols, data = [], [], []
    for y in range(N):
        for m in range(d):
            ye = int(lattice.forward[m][y])
            pattern = (
                (y * N + y, 1.0),
                (y * N + ye, -1.0),
                (ye * N + y, -1.0),
                (ye * N + ye, 1.0),
            )
            selectors = ((y, ye, 1.0), (ye, y, 1.0), (y, y, r), (ye, ye, r))
            for a, b, weight in selectors:
                if weight == 0:
                    continue
                for col, sign in pattern:
                    rows.append(a * N + b)
                    cols.append(col)
                    data.append(-weight * sign)
    return sparse.csr_matrix((data, (rows, cols)), shape=(N * N, N * N))


def _check_length(space: ConfigurationSpace, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != (space.size,):
        raise PreconditionError(
            f"场长度应为 {space.size}, 实际 {values.shape}",
            {'expected': space.size, 'actual': list(values.shape)}
        )
    return values


def apply_potential(spec: PairPotentialSpec, space: ConfigurationSpace, field_in: ExtendedField) -> ExtendedField:
    """
    作用成对势 V = Σ V_{ij}

    两体模板作用在 (x_i, x_j) 两个轴上，其余坐标原样保留。

    Args:
        spec: 势参数
        space: 配置空间
        field_in: 输入场

    Returns:
        ExtendedField: V f

    Raises:
        PreconditionError: 场长度不匹配
    """
    values = _check_length(space, field_in.values)
    N = space.N
    M = two_body_matrix(space.lattice.d, space.lattice.L, float(spec.r))
    tensor = values.reshape(space.shape)
    out = np.zeros_like(tensor)
    for i, j in spec.pairs(space.particles):
        moved = np.moveaxis(tensor, (i, j), (0, 1))
        rest = moved.shape[2:]
        applied = (M @ moved.reshape(N * N, -1)).reshape((N, N) + rest)
        out += np.moveaxis(applied, (0, 1), (i, j))
    return ExtendedField(t=field_in.t, values=out.reshape(-1))


@lru_cache(maxsize=16)
def _laplacian_operator_cached(d: int, L: int, particles: int) -> sparse.csr_matrix:
    lattice = build_lattice(d, L)
    N = lattice.N
    single = sparse.csr_matrix(laplacian_matrix(lattice))
    total = sparse.csr_matrix((N ** particles, N ** particles))
    for k in range(particles):
        left = sparse.identity(N ** k, format='csr')
        right = sparse.identity(N ** (particles - 1 - k), format='csr')
        total = total + sparse.kron(sparse.kron(left, single), right, format='csr')
    return total.tocsr()


def laplacian_operator(space: ConfigurationSpace) -> sparse.csr_matrix:
    """Λ^n 上逐坐标求和的拉普拉斯"""
    return _laplacian_operator_cached(space.lattice.d, space.lattice.L, space.particles)


def pair_operator(space: ConfigurationSpace, i: int, j: int, r: float) -> sparse.csr_matrix:
    """
    V_{ij} 在整个 Λ^n 上的稀疏矩阵

    对每个配置 s，按 (x_i, x_j) 找到模板行，列号只改变第 i、j 两位。
    """
    N = space.N
    M = two_body_matrix(space.lattice.d, space.lattice.L, float(r))
    xi = space.digits[:, i]
    xj = space.digits[:, j]
    local_row = xi * N + xj
    starts = M.indptr[local_row]
    counts = M.indptr[local_row + 1] - starts

    source = np.repeat(np.arange(space.size), counts)
    offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    position = np.repeat(starts, counts) + offsets
    local_col = M.indices[position]
    target = (
        source
        + (local_col // N - xi[source]) * space.weights[i]
        + (local_col % N - xj[source]) * space.weights[j]
    )
    return sparse.csr_matrix((M.data[position], (source, target)), shape=(space.size, space.size))


def potential_operator(spec: PairPotentialSpec, space: ConfigurationSpace) -> sparse.csr_matrix:
    """V = Σ_{(i,j)} V_{ij}"""
    total = sparse.csr_matrix((space.size, space.size))
    for i, j in spec.pairs(space.particles):
        total = total + pair_operator(space, i, j, spec.r)
    return total.tocsr()


def extension_generator(spec: PairPotentialSpec, space: ConfigurationSpace) -> sparse.csr_matrix:
    """
    Δ + V

    重复项相加后，互异配置行里指向碰撞配置的系数恰好抵消为 0。
    """
    generator = (laplacian_operator(space) + potential_operator(spec, space)).tocsr()
    generator.sum_duplicates()
    generator.eliminate_zeros()
    return generator


# ---------------------------------------------------------------------------
# 演化
# ---------------------------------------------------------------------------

def _identity_delta(space: ConfigurationSpace) -> np.ndarray:
    state = np.zeros(space.size)
    state[space.identity_index()] = 1.0
    return state


def evolve_extended_curve(
    spec: PairPotentialSpec,
    space: ConfigurationSpace,
    times: Sequence[float],
    step: float = EXTENSION_STEP,
    estimate_error: bool = True
) -> List[ExtendedField]:
    """
    一次推进输出多个时刻的 f^e

    初值为恒等配置 x_k = k 处的 δ。estimate_error 时再以 step/2 推进一次，
    误差估计取 max|f_h − f_{h/2}| / 15。

    Args:
        spec: 势参数
        space: 配置空间
        times: 输出时刻（非负、非降）
        step: RK4 步长
        estimate_error: 是否做步长减半估计

    Returns:
        List[ExtendedField]: 各时刻的场
    """
    if not step > 0:
        raise PreconditionError(f"步长必须为正: {step}", {'step': step})
    generator = extension_generator(spec, space)
    rhs = lambda u: generator @ u
    start = _identity_delta(space)

    logger.info(f"推进扩展方程: n={space.particles}, 状态数={space.size}, r={spec.r}, 步长={step}")
    states = rk4_integrate(rhs, start, list(times), step)
    if estimate_error:
        refined = rk4_integrate(rhs, start, list(times), step / 2.0)
        errors = [float(np.max(np.abs(a - b))) / 15.0 for a, b in zip(states, refined)]
    else:
        errors = [None] * len(states)

    return [
        ExtendedField(t=float(t), values=u, step=step, error_estimate=err)
        for t, u, err in zip(times, states, errors)
    ]


def evolve_extended(
    spec: PairPotentialSpec,
    space: ConfigurationSpace,
    t: float,
    step: float = EXTENSION_STEP,
    estimate_error: bool = True
) -> ExtendedField:
    """
    从恒等配置的 δ 推进到时刻 t

    Args:
        spec: 势参数
        space: 配置空间（N^n 已按上限检查）
        t: 时间 (≥ 0)
        step: RK4 步长 (> 0)
        estimate_error: 是否给出步长减半误差估计

    Returns:
        ExtendedField: f^e(·, t)
    """
    if t < 0:
        raise PreconditionError(f"时间必须非负: {t}", {'t': t})
    (result,) = evolve_extended_curve(spec, space, [float(t)], step, estimate_error)
    return result


def restrict_to_distinct(space: ConfigurationSpace, field_in: ExtendedField) -> GroupDistribution:
    """
    读出互异配置上的值，按置换秩重排

    Args:
        space: 配置空间（粒子数等于顶点数）
        field_in: 扩展场

    Returns:
        GroupDistribution: 限制得到的群分布
    """
    values = _check_length(space, field_in.values)
    weights = values[space.distinct_indices()].copy()
    return GroupDistribution(d=space.lattice.d, L=space.lattice.L, t=field_in.t, weights=weights)


def total_mass_A(field_in: ExtendedField) -> float:
    """Σ_{Λ^n} f^e"""
    return float(np.sum(field_in.values))


def total_mass_B(space: ConfigurationSpace, field_in: ExtendedField) -> float:
    """Σ_B f^e"""
    return float(np.sum(field_in.values[space.distinct_mask()]))


def restriction_defect(restricted: GroupDistribution, exact: GroupDistribution) -> float:
    """max_B |f^e − f|"""
    return float(np.max(np.abs(restricted.weights - exact.weights)))


def conjecture1_curve(
    lattice: LatticeSpec,
    times: Sequence[float],
    r: float = 0.0,
    step: float = EXTENSION_STEP,
    cap: Optional[int] = None
) -> List[dict]:
    """
    Σ_A f^e 与 Σ_B f^e 随 t 的曲线，并列目标值 C_N

    只做测量，不判定质量是否趋于 C_N。
    """
    space = build_configuration_space(lattice, cap=cap)
    spec = PairPotentialSpec(r=r)
    target = c_constant(lattice.N)
    mask = space.distinct_mask()
    fields = evolve_extended_curve(spec, space, times, step, estimate_error=False)
    return [
        {
            't': f.t,
            'mass_A': total_mass_A(f),
            'mass_B': float(np.sum(f.values[mask])),
            'C_N': target.value,
        }
        for f in fields
    ]


# ---------------------------------------------------------------------------
# 持久化
# ---------------------------------------------------------------------------

def save_field(path: str, space: ConfigurationSpace, field_in: ExtendedField, r: float) -> str:
    """写出 JSON 头 {d, L, r, t, step, particles} + CSV (index, value)"""
    header = {
        'd': space.lattice.d,
        'L': space.lattice.L,
        'r': r,
        't': field_in.t,
        'step': field_in.step,
        'particles': space.particles,
    }
    rows = ((k, v) for k, v in enumerate(field_in.values))
    return write_header_csv(path, header, ['index', 'value'], rows)


def load_field(path: str) -> Tuple[dict, ExtendedField]:
    """读取 save_field 写出的场文件"""
    header, columns, rows = read_header_csv(path)
    if columns != ['index', 'value']:
        raise ResultFormatError(f"列名应为 index,value: {columns}", str(path))
    try:
        values = np.array([float(v) for _, v in rows])
    except ValueError as e:
        raise ResultFormatError(str(e), str(path)) from e
    expected = (header['L'] ** header['d']) ** header['particles']
    if len(values) != expected:
        raise ResultFormatError(f"数据行数 {len(values)} 与头信息 {expected} 不符", str(path))
    return header, ExtendedField(t=header['t'], values=values, step=header.get('step'))


def free_product_field(space: ConfigurationSpace, kernels: Iterable[np.ndarray]) -> np.ndarray:
    """Π_k φ_k(x_k)：各坐标独立场的张量积"""
    out = np.ones(1)
    for phi in kernels:
        out = np.multiply.outer(out, phi).reshape(-1)
    if len(out) != space.size:
        raise PreconditionError("因子个数与粒子数不符")
    return out
