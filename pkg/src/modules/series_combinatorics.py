#!/usr/bin/env python3
"""
形式幂级数模块 - 精确有理数截断幂级数、Catalan 递推与生成函数

功能:
- PowerSeries: 系数为 int/Fraction 的截断幂级数（加减乘幂、复合、积分、倒数、对数）
- 交错常数 a_i = −(−1)^i
- A_i 的递推构造，与 Catalan 闭式逐项比对
- 生成函数 f(z) = Σ_{i≥1} A_i z^i 的级数/闭式双路径求值
- 函数方程 p + p·f(ρp) = 1 (p = 1 − ρ) 的残差检查

版本: v1.0
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Dict, List, Sequence, Tuple, Union

from src.utils.exceptions import PreconditionError, SingularityError
from src.utils.logger import get_logger
from config.settings import config

DEFAULT_ORDER = config.get('series.order', 64)

logger = get_logger(__name__)

Coefficient = Union[int, Fraction]


class PowerSeries:
    """
    截断到 order 次的形式幂级数

    所有运算结果截断到两个操作数中较小的阶数，系数保持精确。
    """

    __slots__ = ('_coefficients', 'order')

    def __init__(self, coefficients: Sequence[Coefficient], order: int):
        if order < 0:
            raise PreconditionError(f"截断阶数必须非负: {order}", {'order': order})
        coeffs = list(coefficients[:order + 1])
        coeffs.extend([0] * (order + 1 - len(coeffs)))
        self._coefficients = tuple(coeffs)
        self.order = order

    # ---- 构造 ----

    @classmethod
    def constant(cls, value: Coefficient, order: int) -> 'PowerSeries':
        return cls([value], order)

    @classmethod
    def monomial(cls, power: int, order: int, value: Coefficient = 1) -> 'PowerSeries':
        coeffs = [0] * (order + 1)
        if power <= order:
            coeffs[power] = value
        return cls(coeffs, order)

    @classmethod
    def log_one_minus(cls, order: int) -> 'PowerSeries':
        """ln(1 − z) = −Σ_{k≥1} z^k / k"""
        return cls([0] + [Fraction(-1, k) for k in range(1, order + 1)], order)

    # ---- 访问 ----

    @property
    def coefficients(self) -> Tuple[Coefficient, ...]:
        return self._coefficients

    def coef(self, power: int) -> Coefficient:
        """t^power 的系数；超出截断阶数时报错"""
        if power < 0:
            return 0
        if power > self.order:
            raise PreconditionError(
                f"请求 {power} 次系数超出截断阶数 {self.order}",
                {'power': power, 'order': self.order}
            )
        return self._coefficients[power]

    def __getitem__(self, power: int) -> Coefficient:
        return self.coef(power)

    def __len__(self) -> int:
        return self.order + 1

    def __repr__(self) -> str:
        head = ", ".join(str(c) for c in self._coefficients[:6])
        return f"PowerSeries([{head}{', …' if self.order > 5 else ''}], order={self.order})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PowerSeries):
            return NotImplemented
        order = min(self.order, other.order)
        return self._coefficients[:order + 1] == other._coefficients[:order + 1]

    def __hash__(self) -> int:
        return hash(self._coefficients)

    # ---- 算术 ----

    def _coerce(self, other) -> 'PowerSeries':
        if isinstance(other, PowerSeries):
            return other
        if isinstance(other, Rational):
            return PowerSeries.constant(other, self.order)
        return NotImplemented

    def __neg__(self) -> 'PowerSeries':
        return PowerSeries([-c for c in self._coefficients], self.order)

    def __add__(self, other) -> 'PowerSeries':
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        order = min(self.order, other.order)
        return PowerSeries(
            [self._coefficients[k] + other._coefficients[k] for k in range(order + 1)],
            order
        )

    __radd__ = __add__

    def __sub__(self, other) -> 'PowerSeries':
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other) -> 'PowerSeries':
        return (-self) + other

    def __mul__(self, other) -> 'PowerSeries':
        if isinstance(other, Rational):
            return PowerSeries([other * c for c in self._coefficients], self.order)
        if not isinstance(other, PowerSeries):
            return NotImplemented
        order = min(self.order, other.order)
        a, b = self._coefficients, other._coefficients
        out = []
        for n in range(order + 1):
            total = 0
            for k in range(n + 1):
                if a[k] and b[n - k]:
                    total += a[k] * b[n - k]
            out.append(total)
        return PowerSeries(out, order)

    __rmul__ = __mul__

    def __pow__(self, exponent: int) -> 'PowerSeries':
        if not isinstance(exponent, int) or exponent < 0:
            raise PreconditionError(f"幂指数必须为非负整数: {exponent}")
        result = PowerSeries.constant(1, self.order)
        base = self
        while exponent:
            if exponent & 1:
                result = result * base
            exponent >>= 1
            if exponent:
                base = base * base
        return result

    def truncate(self, order: int) -> 'PowerSeries':
        return PowerSeries(self._coefficients, min(order, self.order))

    def compose(self, inner: 'PowerSeries') -> 'PowerSeries':
        """
        复合 self(inner(t))，要求 inner 常数项为 0

        Horner 形式从最高次往回累乘。
        """
        if inner.coef(0) != 0:
            raise PreconditionError("复合要求内层级数常数项为 0")
        order = min(self.order, inner.order)
        result = PowerSeries.constant(self._coefficients[order], order)
        inner = inner.truncate(order)
        for k in range(order - 1, -1, -1):
            result = result * inner + self._coefficients[k]
        return result

    def derivative(self) -> 'PowerSeries':
        order = max(self.order - 1, 0)
        coeffs = [k * self._coefficients[k] for k in range(1, self.order + 1)]
        return PowerSeries(coeffs or [0], order)

    def integral(self) -> 'PowerSeries':
        """常数项为 0 的原函数，阶数加一"""
        coeffs = [0] + [Fraction(c, k + 1) if c else 0 for k, c in enumerate(self._coefficients)]
        return PowerSeries(coeffs, self.order + 1)

    def divide_by_variable(self) -> 'PowerSeries':
        """除以 t（要求常数项为 0），阶数减一"""
        if self._coefficients[0] != 0:
            raise PreconditionError("常数项非零，不能除以变量")
        if self.order == 0:
            return PowerSeries([0], 0)
        return PowerSeries(self._coefficients[1:], self.order - 1)

    def reciprocal(self) -> 'PowerSeries':
        """1 / self，要求常数项非零"""
        c0 = self._coefficients[0]
        if c0 == 0:
            raise PreconditionError("常数项为 0 的级数不可逆")
        inv0 = Fraction(1) / c0
        out = [inv0]
        for n in range(1, self.order + 1):
            total = sum(self._coefficients[k] * out[n - k] for k in range(1, n + 1))
            out.append(-total * inv0)
        return PowerSeries(out, self.order)

    def log(self) -> 'PowerSeries':
        """ln(self)，要求常数项为 1"""
        if self._coefficients[0] != 1:
            raise PreconditionError("对数要求常数项为 1")
        return (self.derivative() * self.reciprocal()).integral().truncate(self.order)

    def evaluate(self, x: Union[float, Fraction]) -> Union[float, Fraction]:
        """按 Horner 求和；Fraction 输入得到精确值"""
        total = 0
        for c in reversed(self._coefficients):
            total = total * x + c
        return total


# ---------------------------------------------------------------------------
# 常数与 Catalan 表
# ---------------------------------------------------------------------------

def a_constant(i: int) -> int:
    """
    交错常数 a_i = −(−1)^i

    Args:
        i: 下标 (≥ 1)

    Returns:
        int: a_i
    """
    if i < 1:
        raise PreconditionError(f"a_i 要求 i ≥ 1: {i}", {'i': i})
    return 1 if i % 2 else -1


class SignConstant:
    """a: i ↦ −(−1)^i 的映射视图"""

    def __getitem__(self, i: int) -> int:
        return a_constant(i)

    def values(self, upto: int) -> List[int]:
        return [a_constant(i) for i in range(1, upto + 1)]


def catalan_closed_form(i: int) -> int:
    """C(2i, i) / (i + 1)"""
    if i < 0:
        raise PreconditionError(f"下标必须非负: {i}", {'i': i})
    return math.comb(2 * i, i) // (i + 1)


@dataclass(frozen=True)
class CatalanTable:
    """A_0, …, A_K"""
    values: Tuple[int, ...]

    @property
    def K(self) -> int:
        return len(self.values) - 1

    def __getitem__(self, i: int) -> int:
        return self.values[i]

    def rows(self) -> List[Tuple[int, int]]:
        return list(enumerate(self.values))

    def matches_closed_form(self) -> bool:
        return all(v == catalan_closed_form(i) for i, v in enumerate(self.values))


class _PowerCoefficients:
    """
    P^m 的系数缓存，P 的系数逐个补充

    P 常数项为 1 时，b_n = (1/n) Σ_{k=1}^{n} ((m+1)k − n) a_k b_{n−k}；
    b_n 只依赖 a_0..a_n，因此可在 A_i 逐个确定的同时按需延伸。
    """

    def __init__(self, base: List[int], m: int):
        self.base = base
        self.m = m
        self.cache = [1]

    def __getitem__(self, n: int) -> int:
        a, b, m = self.base, self.cache, self.m
        while len(b) <= n:
            j = len(b)
            total = sum(((m + 1) * k - j) * a[k] * b[j - k] for k in range(1, j + 1))
            # 整数系数级数的幂仍是整数系数，除法是整除
            b.append(total // j)
        return b[n]


def catalan_by_recursion(K: int) -> CatalanTable:
    """
    按 A_i = a_i + Σ_{k=1}^{i−1} a_k · coef(P^{2k+1}, t^{i−k}) 逐项构造

    P = Σ_j A_j t^j 只用到已确定的 A_0..A_{i−1}。

    Args:
        K: 最高下标 (≥ 0)

    Returns:
        CatalanTable: A_0..A_K（精确整数）
    """
    if K < 0:
        raise PreconditionError(f"K 必须非负: {K}", {'K': K})

    values = [1]
    powers: Dict[int, _PowerCoefficients] = {}
    for i in range(1, K + 1):
        total = a_constant(i)
        for k in range(1, i):
            m = 2 * k + 1
            if m not in powers:
                powers[m] = _PowerCoefficients(values, m)
            total += a_constant(k) * powers[m][i - k]
        values.append(total)

    logger.debug(f"递推得到 A_0..A_{K}")
    return CatalanTable(values=tuple(values))


def catalan_series(order: int) -> PowerSeries:
    """Σ_{i≥0} A_i z^i（闭式系数）"""
    return PowerSeries([catalan_closed_form(i) for i in range(order + 1)], order)


# ---------------------------------------------------------------------------
# 生成函数
# ---------------------------------------------------------------------------

def _sqrt_one_minus_4z(z: float) -> float:
    return math.sqrt(1.0 - 4.0 * float(z))


def generating_function_closed_form(z: float) -> float:
    """f(z) = (1 − √(1−4z)) / (1 + √(1−4z))，z ≤ 1/4"""
    if z > 0.25:
        raise SingularityError(float(z))
    w = _sqrt_one_minus_4z(z)
    return (1.0 - w) / (1.0 + w)


def cluster_integral_closed_form(z: float) -> float:
    """
    F(z) = Σ_{i≥0} A_i z^{i+1}/(i+1) = 1 − W + ln((1+W)/2)，W = √(1−4z)

    F' 即 Catalan 生成函数。
    """
    if z > 0.25:
        raise SingularityError(float(z))
    w = _sqrt_one_minus_4z(z)
    return 1.0 - w + math.log1p((w - 1.0) / 2.0)


@dataclass(frozen=True)
class GeneratingFunctionValue:
    """f(z) 的两条求值路径"""
    z: float
    order: int
    series: float
    closed_form: float
    truncation_bound: float

    @property
    def difference(self) -> float:
        return abs(self.series - self.closed_form)


def generating_function_value(z: Union[float, Fraction], order: int = DEFAULT_ORDER) -> GeneratingFunctionValue:
    """
    求 f(z)：截断级数 Σ_{i=1}^{order} A_i z^i 与闭式

    截断误差上界取 A_i ≤ 4^i 给出的 (4|z|)^{order+1} / (1 − 4|z|)。

    Args:
        z: 实数或精确有理数，|z| ≤ 1/4
        order: 截断阶数

    Returns:
        GeneratingFunctionValue: 两路结果与截断上界

    Raises:
        SingularityError: |z| > 1/4（级数发散）
    """
    if abs(z) > Fraction(1, 4):
        raise SingularityError(float(z))

    series = catalan_series(order) - 1
    value = series.evaluate(z)
    closed = generating_function_closed_form(float(z))

    ratio = 4.0 * abs(float(z))
    bound = math.inf if ratio >= 1.0 else ratio ** (order + 1) / (1.0 - ratio)

    logger.debug(f"f({float(z)}) 级数={float(value):.12g} 闭式={closed:.12g} 上界={bound:.2e}")
    return GeneratingFunctionValue(
        z=float(z), order=order, series=float(value),
        closed_form=closed, truncation_bound=bound
    )


@dataclass(frozen=True)
class FunctionalEquationCheck:
    """p + p·f(ρp) = 1 的检查结果"""
    rho: float
    p: float
    order: int
    residual_closed_form: float
    residual_series: float
    truncation_bound: float
    holds: bool


def verify_functional_equation(
    rho: Union[float, Fraction],
    order: int = DEFAULT_ORDER,
    allow_breakdown: bool = False,
    tolerance: float = 1e-12
) -> FunctionalEquationCheck:
    """
    代入 p = 1 − ρ 检查 p + p·f(ρp) = 1

    ρ < 1/2 时 √(1 − 4ρp) = 1 − 2ρ，恒等式成立；ρ > 1/2 时平方根落在另一支，
    闭式给出 p + p·f = (1−ρ)/ρ。

    Args:
        rho: 密度，默认要求 0 < ρ < 1/2
        order: 级数路径的截断阶数
        allow_breakdown: 允许 1/2 ≤ ρ < 1，用于展示恒等式失效
        tolerance: 判定 holds 的闭式残差阈值

    Returns:
        FunctionalEquationCheck: 两路残差

    Raises:
        PreconditionError: ρ 越界
    """
    upper = 1.0 if allow_breakdown else 0.5
    if not 0.0 < float(rho) < upper:
        raise PreconditionError(
            f"ρ 必须在 (0, {upper}) 内: {rho}",
            {'rho': float(rho), 'allow_breakdown': allow_breakdown}
        )

    p = 1 - rho
    z = rho * p
    gf = generating_function_value(z, order)
    residual_closed = abs(float(p) + float(p) * gf.closed_form - 1.0)
    residual_series = abs(float(p) + float(p) * gf.series - 1.0)

    return FunctionalEquationCheck(
        rho=float(rho), p=float(p), order=order,
        residual_closed_form=residual_closed,
        residual_series=residual_series,
        truncation_bound=float(p) * gf.truncation_bound,
        holds=residual_closed <= tolerance
    )
