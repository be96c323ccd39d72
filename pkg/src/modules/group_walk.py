#!/usr/bin/env python3
"""
置换群随机游走模块 - e^{-Ht} 在对称群上的精确演化与蒙特卡罗采样

功能:
- Lehmer 码排序：置换 ↔ 秩 [0, N!)，恒等置换秩为 0
- 均匀化（Poisson 化幂级数）精确求解 df/dt = −H f
- 单顶点边缘分布（应等于热核列）
- 基于计数器型随机数发生器的可复现并行采样
- 采样批次的 JSON-lines 持久化
- 经验成对分布与独立乘积之间的全变差

版本: v1.0
"""

import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import permutations
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.stats import poisson

from src.modules.lattice_core import LatticeSpec, SiteField, build_lattice, heat_kernel_spectral
from src.utils.exceptions import CapExceededError, PreconditionError, ResultFormatError
from src.utils.logger import get_logger
from src.utils.numerics import multinomial_tv_stderr, total_variation
from src.utils.result_io import read_jsonl, write_jsonl
from config.settings import config

CAP_GROUP = config.get('group_walk.cap_group', 40320)
TAIL_TOLERANCE = config.get('group_walk.tail_tolerance', 1e-12)
MAX_WORKERS = config.get('performance.max_workers', 4)
SAMPLE_CHUNK = 2048

logger = get_logger(__name__)


# ---------------------------------------------------------------------------
# 置换编号
# ---------------------------------------------------------------------------

@lru_cache(maxsize=16)
def permutation_table(N: int) -> np.ndarray:
    """
    全部 N! 个置换，第 r 行就是秩为 r 的置换

    itertools.permutations 的输出顺序正是字典序，与 Lehmer 秩一致。
    """
    table = np.array(list(permutations(range(N))), dtype=np.int64).reshape(-1, N)
    table.setflags(write=False)
    return table


def lehmer_rank(perms: np.ndarray) -> np.ndarray:
    """
    批量计算 Lehmer 秩

    Args:
        perms: 形状 (M, N) 的置换数组，或单个长度 N 的置换

    Returns:
        np.ndarray: 形状 (M,) 的秩（单个置换时为标量数组）
    """
    perms = np.asarray(perms, dtype=np.int64)
    single = perms.ndim == 1
    if single:
        perms = perms[None, :]
    N = perms.shape[1]
    ranks = np.zeros(perms.shape[0], dtype=np.int64)
    for k in range(N):
        smaller_after = (perms[:, k + 1:] < perms[:, k:k + 1]).sum(axis=1)
        ranks += smaller_after * math.factorial(N - 1 - k)
    return ranks[0] if single else ranks


def lehmer_decode(rank: int, N: int) -> Tuple[int, ...]:
    """Lehmer 秩 → 置换元组 (p(0), …, p(N−1))"""
    if not 0 <= rank < math.factorial(N):
        raise PreconditionError(f"秩越界: {rank} (N = {N})", {'rank': rank, 'N': N})
    remaining = list(range(N))
    out = []
    for k in range(N):
        f = math.factorial(N - 1 - k)
        digit, rank = divmod(rank, f)
        out.append(remaining.pop(digit))
    return tuple(out)


def inverse_ranks(N: int) -> np.ndarray:
    """秩 r → 逆置换的秩"""
    table = permutation_table(N)
    return lehmer_rank(np.argsort(table, axis=1))


def translate_permutation(lattice: LatticeSpec, offset: Sequence[int]) -> np.ndarray:
    """
    平移共轭 g ↦ τ g τ^{-1} 在秩上的作用

    Args:
        lattice: 晶格
        offset: 平移向量

    Returns:
        np.ndarray: 长度 N! 的秩映射
    """
    tau = lattice.translation(offset)
    tau_inv = np.argsort(tau)
    table = permutation_table(lattice.N)
    conjugated = tau[table[:, tau_inv]]
    return lehmer_rank(conjugated)


# ---------------------------------------------------------------------------
# 精确演化
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GroupDistribution:
    """f(g, t)：按 Lehmer 秩索引的 N! 维概率向量"""
    d: int
    L: int
    t: float
    weights: np.ndarray = field(repr=False, compare=False)
    tail_bound: float = 0.0
    terms: int = 0

    @property
    def N(self) -> int:
        return self.L ** self.d

    def weight_of(self, perm: Sequence[int]) -> float:
        return float(self.weights[int(lehmer_rank(np.asarray(perm)))])


def _check_group_cap(N: int, cap: int) -> int:
    size = math.factorial(N)
    if size > cap:
        raise CapExceededError("置换群 N!", size, cap)
    return size


@lru_cache(maxsize=8)
def _transposition_operator(d: int, L: int) -> sparse.csr_matrix:
    """A = Σ_edges I_ab，作用在秩向量上（对称、非负）"""
    lattice = build_lattice(d, L)
    table = permutation_table(lattice.N)
    size = table.shape[0]
    rows, cols = [], []
    source = np.arange(size)
    for a, b in lattice.edges:
        swapped = np.where(table == a, b, np.where(table == b, a, table))
        rows.append(source)
        cols.append(lehmer_rank(swapped))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = np.ones(len(rows))
    return sparse.csr_matrix((data, (rows, cols)), shape=(size, size))


def evolve_group(
    lattice: LatticeSpec,
    t: float,
    cap: Optional[int] = None,
    tail_tolerance: float = TAIL_TOLERANCE
) -> GroupDistribution:
    """
    从恒等置换出发精确演化 f(g, t)

    e^{-Ht} = e^{-Et} Σ_k (Et)^k/k! (A/E)^k，Poisson 尾部截断至 tail_tolerance。

    Args:
        lattice: 晶格
        t: 时间 (≥ 0)
        cap: N! 上限（默认取配置）
        tail_tolerance: 截断尾界

    Returns:
        GroupDistribution: 演化结果

    Raises:
        CapExceededError: N! 超出上限
        PreconditionError: t < 0
    """
    cap = CAP_GROUP if cap is None else cap
    size = _check_group_cap(lattice.N, cap)
    if t < 0:
        raise PreconditionError(f"时间必须非负: {t}", {'t': t})

    weights = np.zeros(size)
    weights[0] = 1.0
    if t == 0:
        return GroupDistribution(d=lattice.d, L=lattice.L, t=0.0, weights=weights)

    E = lattice.num_edges
    mu = E * float(t)
    operator = _transposition_operator(lattice.d, lattice.L) / E
    terms = int(poisson.isf(tail_tolerance, mu)) + 1
    pmf = poisson.pmf(np.arange(terms + 1), mu)
    tail = float(poisson.sf(terms, mu))

    state = weights
    result = pmf[0] * state
    for k in range(1, terms + 1):
        state = operator @ state
        result = result + pmf[k] * state

    logger.debug(f"均匀化: N={lattice.N}, Et={mu:.3f}, 项数={terms + 1}, 尾界={tail:.2e}")
    return GroupDistribution(
        d=lattice.d, L=lattice.L, t=float(t),
        weights=result, tail_bound=tail, terms=terms + 1
    )


def marginal_of_vertex(dist: GroupDistribution, i: int) -> SiteField:
    """
    p(i) 在 f 下的分布

    Args:
        dist: 群分布
        i: 顶点编号

    Returns:
        SiteField: 长度 N 的概率向量
    """
    N = dist.N
    if not 0 <= i < N:
        raise PreconditionError(f"顶点编号越界: {i} (N = {N})", {'vertex': i})
    table = permutation_table(N)
    return np.bincount(table[:, i], weights=dist.weights, minlength=N)


# ---------------------------------------------------------------------------
# 蒙特卡罗采样
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WalkSampleBatch:
    """采样批次：每行是一个终态配置 (p(0), …, p(N−1))"""
    seed: int
    t: float
    d: int
    L: int
    samples: np.ndarray = field(repr=False, compare=False)

    @property
    def count(self) -> int:
        return int(self.samples.shape[0])

    @property
    def N(self) -> int:
        return self.L ** self.d

    def to_records(self) -> List[dict]:
        return [{'index': k, 'tuple': row.tolist()} for k, row in enumerate(self.samples)]


def sample_generator(seed: int, index: int) -> np.random.Generator:
    """由 (seed, 样本序号) 决定的 Philox 计数器型发生器"""
    key = ((int(seed) % (1 << 64)) << 64) | int(index)
    return np.random.Generator(np.random.Philox(key=key))


def _sample_chunk(edges: np.ndarray, N: int, t: float, seed: int, start: int, stop: int) -> np.ndarray:
    E = len(edges)
    out = np.empty((stop - start, N), dtype=np.int64)
    for row, index in enumerate(range(start, stop)):
        rng = sample_generator(seed, index)
        jumps = rng.poisson(E * t)
        pos = list(range(N))
        occ = list(range(N))
        for e in rng.integers(0, E, size=jumps):
            a, b = edges[e]
            i, j = occ[a], occ[b]
            occ[a], occ[b] = j, i
            pos[i], pos[j] = b, a
        out[row] = pos
    return out


def sample_walk(
    lattice: LatticeSpec,
    t: float,
    count: int,
    seed: int,
    workers: Optional[int] = None
) -> WalkSampleBatch:
    """
    采样连续时间交换过程的终态配置

    每个样本: K ~ Poisson(E·t)，再施加 K 个均匀随机的边交换。
    样本 k 只依赖 (seed, k)，结果与线程数无关。

    Args:
        lattice: 晶格
        t: 时间 (≥ 0)
        count: 样本数 (≥ 1)
        seed: 随机种子
        workers: 线程数（默认取配置）

    Returns:
        WalkSampleBatch: 采样批次
    """
    if count < 1:
        raise PreconditionError(f"样本数必须 ≥ 1: {count}", {'count': count})
    if t < 0:
        raise PreconditionError(f"时间必须非负: {t}", {'t': t})
    workers = MAX_WORKERS if workers is None else max(1, int(workers))

    edges = np.array(lattice.edges, dtype=np.int64)
    bounds = [(s, min(s + SAMPLE_CHUNK, count)) for s in range(0, count, SAMPLE_CHUNK)]
    chunks = [None] * len(bounds)

    logger.info(f"开始采样: N={lattice.N}, t={t}, count={count}, seed={seed}, 线程={workers}")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_chunk = {
            executor.submit(_sample_chunk, edges, lattice.N, float(t), seed, start, stop): idx
            for idx, (start, stop) in enumerate(bounds)
        }
        for future in as_completed(future_to_chunk):
            chunks[future_to_chunk[future]] = future.result()

    samples = np.concatenate(chunks, axis=0)
    samples.setflags(write=False)
    return WalkSampleBatch(seed=int(seed), t=float(t), d=lattice.d, L=lattice.L, samples=samples)


def save_batch(batch: WalkSampleBatch, path: str) -> str:
    """批次写成 JSON-lines，每行 {index, tuple}"""
    return write_jsonl(path, batch.to_records())


def load_batch(path: str, lattice: LatticeSpec, t: float, seed: int) -> WalkSampleBatch:
    """
    读取 JSON-lines 批次

    元数据 (t, seed, 晶格) 不在行内，由调用方提供。
    """
    records = read_jsonl(path)
    rows = []
    for expected, record in enumerate(records):
        if record.get('index') != expected or len(record.get('tuple', [])) != lattice.N:
            raise ResultFormatError(f"第 {expected + 1} 条记录无效", str(path))
        rows.append(record['tuple'])
    samples = np.array(rows, dtype=np.int64).reshape(-1, lattice.N)
    return WalkSampleBatch(seed=int(seed), t=float(t), d=lattice.d, L=lattice.L, samples=samples)


def empirical_marginal(batch: WalkSampleBatch, i: int) -> SiteField:
    """p(i) 的经验分布"""
    return np.bincount(batch.samples[:, i], minlength=batch.N) / batch.count


def marginal_total_variation(batch: WalkSampleBatch, i: int) -> Tuple[float, float]:
    """
    经验单顶点边缘分布与热核列之间的全变差

    Returns:
        Tuple[float, float]: (TV, 插值标准误差 σ̂)
    """
    lattice = build_lattice(batch.d, batch.L)
    p_hat = empirical_marginal(batch, i)
    exact = heat_kernel_spectral(lattice, batch.t).column(i)
    return total_variation(p_hat, exact), multinomial_tv_stderr(p_hat, batch.count)


def sample_permutation_frequencies(batch: WalkSampleBatch) -> np.ndarray:
    """按 Lehmer 秩统计的经验置换频率（长度 N!）"""
    ranks = lehmer_rank(batch.samples)
    return np.bincount(ranks, minlength=math.factorial(batch.N)) / batch.count


@dataclass(frozen=True)
class PairGap:
    """成对分布与独立乘积之间的全变差"""
    i: int
    j: int
    t: float
    gap: float
    stderr: float


def empirical_pair_gap(batch: WalkSampleBatch, i: int, j: int) -> PairGap:
    """
    (p(i), p(j)) 的经验联合分布与热核列乘积之间的全变差

    只做报告，不判定通过与否。

    Args:
        batch: 采样批次
        i, j: 两个不同的顶点

    Returns:
        PairGap: 全变差与标准误差
    """
    if i == j:
        raise PreconditionError("成对间隙要求 i ≠ j", {'i': i, 'j': j})
    N = batch.N
    for v in (i, j):
        if not 0 <= v < N:
            raise PreconditionError(f"顶点编号越界: {v} (N = {N})", {'vertex': v})

    lattice = build_lattice(batch.d, batch.L)
    kernel = heat_kernel_spectral(lattice, batch.t)
    product = np.outer(kernel.column(i), kernel.column(j)).ravel()
    joint = np.bincount(batch.samples[:, i] * N + batch.samples[:, j], minlength=N * N) / batch.count

    return PairGap(
        i=i, j=j, t=batch.t,
        gap=total_variation(joint, product),
        stderr=multinomial_tv_stderr(joint, batch.count)
    )
