#!/usr/bin/env python3
"""
实验编排模块 - 配置校验、任务分发、结果信封

功能:
- ExperimentConfig: 校验键名、类型与任务名（数值前提交给各模块）
- 时间网格 "a:b:step" 解析（含端点）
- 按任务分发到各计算模块，汇总为 ResultEnvelope
- 写出 JSON 信封或 CSV 表，运行时长写入 <out>.timing.json

版本: v1.0
"""

import time
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from src import __version__
from src.modules.asymptotic_analysis import (
    attempt_eq54,
    conjecture2_permanent,
    maximize_eq51,
    rho_variant,
)
from src.modules.diagram_engine import (
    DIAGRAM_STEP,
    EXTRAPOLATION_STEP,
    T_n_lower_limits,
    T_tilde_n,
    full_tree_extrapolation,
    lower_limit_extrapolation,
    lower_limit_target,
    save_evaluation,
    with_extrapolation,
)
from src.modules.extension_pde import (
    EXTENSION_STEP,
    PairPotentialSpec,
    build_configuration_space,
    conjecture1_curve,
    evolve_extended_curve,
    restrict_to_distinct,
    restriction_defect,
    save_field,
    total_mass_A,
    total_mass_B,
)
from src.modules.group_walk import (
    evolve_group,
    empirical_marginal,
    marginal_total_variation,
    sample_walk,
    save_batch,
)
from src.modules.lattice_core import (
    HEAT_KERNEL_ODE_STEP,
    build_lattice,
    heat_kernel_ode,
    heat_kernel_spectral,
)
from src.modules.series_combinatorics import (
    catalan_by_recursion,
    catalan_closed_form,
    generating_function_value,
    verify_functional_equation,
)
from src.utils.exceptions import ConfigurationError
from src.utils.logger import get_logger
from src.utils.result_io import dumps_json, read_json, to_jsonable, write_csv, write_json
from config.settings import config

logger = get_logger(__name__)

TASKS = (
    'heat-kernel', 'group-walk', 'sample', 'extend', 'restrict-check', 'diagrams',
    'catalan', 'genfun', 'rho', 'eq51', 'permanent', 'conjecture1-report',
)
FORMATS = ('json', 'csv')
KINDS = ('lower', 'full')

DEFAULT_TIME = 1.0
DEFAULT_T_GRID = tuple(config.get('extension.t_grid', [0.25, 0.5, 1.0, 2.0, 5.0]))


# ---------------------------------------------------------------------------
# 配置
# ---------------------------------------------------------------------------

def parse_time_grid(text: str) -> Tuple[float, ...]:
    """
    解析 "a:b:step"，包含两端

    Raises:
        ConfigurationError: 格式错误、步长非正或 b < a
    """
    parts = str(text).split(':')
    if len(parts) != 3:
        raise ConfigurationError(f"时间网格格式应为 a:b:step: {text!r}", {'time_grid': text})
    try:
        # 十进制字符串按精确分数展开，网格点不受浮点累积误差影响
        a, b, step = (Fraction(p.strip()) for p in parts)
    except (ValueError, ZeroDivisionError) as e:
        raise ConfigurationError(f"时间网格无法解析: {text!r}", {'time_grid': text}) from e
    if step <= 0 or b < a:
        raise ConfigurationError(f"时间网格要求 step > 0 且 b ≥ a: {text!r}", {'time_grid': text})
    count = int((b - a) // step) + 1
    return tuple(float(a + k * step) for k in range(count))


@dataclass(frozen=True)
class ExperimentConfig:
    """一次实验的完整参数；字段名即配置文件与命令行的键名"""
    task: str
    dim: int = config.get('lattice.dim', 1)
    edge: int = config.get('lattice.edge', 3)
    time: Optional[float] = None
    time_grid: Optional[Tuple[float, ...]] = None
    r: float = 0.0
    order: int = config.get('series.order', 64)
    seed: int = config.get('sampling.seed', 20240601)
    step: Optional[float] = None
    out: Optional[str] = None
    format: str = 'json'
    threads: Optional[int] = None
    cap_states: Optional[int] = None
    cap_group: Optional[int] = None
    n: int = 2
    kind: str = 'lower'
    z: float = 0.1
    rho: float = 0.3
    vertices: int = 10
    imax: int = 1
    count: int = config.get('sampling.count', 100000)
    sizes: Optional[Tuple[int, ...]] = None

    @classmethod
    def from_mapping(cls, mapping: Dict[str, Any]) -> 'ExperimentConfig':
        """
        从字典构造并校验

        Raises:
            ConfigurationError: 未知键、类型不符、任务名或格式无效
        """
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ConfigurationError(f"未知配置键: {', '.join(unknown)}", {'unknown_keys': unknown})
        if 'task' not in mapping:
            raise ConfigurationError("缺少 task", {'known_tasks': list(TASKS)})

        values = {}
        for key, raw in mapping.items():
            values[key] = _coerce_field(key, raw)
        cfg = cls(**values)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigurationError(f"未知任务: {self.task}", {'task': self.task, 'known_tasks': list(TASKS)})
        if self.format not in FORMATS:
            raise ConfigurationError(f"未知输出格式: {self.format}", {'format': self.format})
        if self.kind not in KINDS:
            raise ConfigurationError(f"未知图类型: {self.kind}", {'kind': self.kind})
        if self.time is not None and self.time_grid is not None:
            raise ConfigurationError("time 与 time_grid 只能给一个")

    def times(self, default: Sequence[float] = (DEFAULT_TIME,)) -> List[float]:
        if self.time_grid is not None:
            return list(self.time_grid)
        if self.time is not None:
            return [self.time]
        return list(default)

    def parameters(self) -> Dict[str, Any]:
        """回显参数（去掉输出位置与线程数，这两项不影响结果）"""
        data = asdict(self)
        for key in ('out', 'threads'):
            data.pop(key)
        return to_jsonable(data)


_INT_FIELDS = {'dim', 'edge', 'order', 'seed', 'threads', 'cap_states', 'cap_group', 'n', 'vertices', 'imax', 'count'}
_FLOAT_FIELDS = {'time', 'r', 'step', 'z', 'rho'}
_STR_FIELDS = {'task', 'out', 'format', 'kind'}


def _coerce_field(key: str, raw: Any) -> Any:
    if raw is None:
        return None
    if key in _INT_FIELDS:
        if isinstance(raw, bool) or not isinstance(raw, int):
            raise ConfigurationError(f"{key} 应为整数: {raw!r}", {key: repr(raw)})
        return raw
    if key in _FLOAT_FIELDS:
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigurationError(f"{key} 应为数值: {raw!r}", {key: repr(raw)})
        return float(raw)
    if key in _STR_FIELDS:
        if not isinstance(raw, str):
            raise ConfigurationError(f"{key} 应为字符串: {raw!r}", {key: repr(raw)})
        return raw
    if key == 'time_grid':
        if isinstance(raw, str):
            return parse_time_grid(raw)
        if isinstance(raw, (list, tuple)) and all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in raw):
            return tuple(float(x) for x in raw)
        raise ConfigurationError(f"time_grid 应为 a:b:step 或数值列表: {raw!r}")
    if key == 'sizes':
        items = raw.split(',') if isinstance(raw, str) else raw
        if not isinstance(items, (list, tuple)) or not items:
            raise ConfigurationError(f"sizes 应为非空的边长列表: {raw!r}", {'sizes': repr(raw)})
        try:
            sizes = tuple(int(x.strip()) if isinstance(x, str) else x for x in items)
        except ValueError as e:
            raise ConfigurationError(f"sizes 无法解析: {raw!r}", {'sizes': repr(raw)}) from e
        if any(isinstance(x, bool) or not isinstance(x, int) for x in sizes):
            raise ConfigurationError(f"sizes 应为整数列表: {raw!r}", {'sizes': repr(raw)})
        return sizes
    raise ConfigurationError(f"未知配置键: {key}")


def load_config_file(path: str) -> Dict[str, Any]:
    """读取 YAML/JSON 配置文件中的 ExperimentConfig 键"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigurationError(f"配置文件无法读取: {path}: {e}", {'path': str(path)}) from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"配置文件顶层应为映射: {path}", {'path': str(path)})
    return {str(k).replace('-', '_'): v for k, v in data.items()}


# ---------------------------------------------------------------------------
# 结果信封
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResultEnvelope:
    """{task, parameters, values, provenance}；序列化后可无损读回"""
    task: str
    parameters: Dict[str, Any]
    values: Dict[str, Any]
    provenance: Dict[str, Any]
    runtime_seconds: float = field(default=0.0, compare=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'task': self.task,
            'parameters': self.parameters,
            'values': self.values,
            'provenance': self.provenance,
        }

    def to_json(self) -> str:
        return dumps_json(self.to_dict())

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ResultEnvelope':
        return cls(
            task=data['task'], parameters=data['parameters'],
            values=data['values'], provenance=data['provenance']
        )

    @classmethod
    def load(cls, path: str) -> 'ResultEnvelope':
        return cls.from_dict(read_json(path))


@dataclass
class TaskOutput:
    """单个任务的输出：信封值、CSV 表、额外来源信息"""
    values: Dict[str, Any]
    columns: Sequence[str]
    rows: List[Sequence[Any]]
    provenance: Dict[str, Any] = field(default_factory=dict)
    artifacts: Dict[str, Callable[[str], str]] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# 任务
# ---------------------------------------------------------------------------

def _lattice(cfg: ExperimentConfig):
    return build_lattice(cfg.dim, cfg.edge)


def _step(cfg: ExperimentConfig, default: float) -> float:
    return default if cfg.step is None else cfg.step


def _task_heat_kernel(cfg: ExperimentConfig) -> TaskOutput:
    lattice = _lattice(cfg)
    step = _step(cfg, HEAT_KERNEL_ODE_STEP)
    curve, rows = [], []
    for t in cfg.times():
        spectral = heat_kernel_spectral(lattice, t)
        ode = heat_kernel_ode(lattice, t, step)
        column = spectral.column(0)
        curve.append({
            't': t,
            'column_0': column,
            'route_difference': float(np.max(np.abs(spectral.entries - ode.entries))),
            'row_sum_deviation': float(np.max(np.abs(spectral.entries.sum(axis=1) - 1.0))),
        })
        rows.extend((t, j, float(v)) for j, v in enumerate(column))
    return TaskOutput(
        values={'N': lattice.N, 'curve': curve},
        columns=['t', 'vertex', 'value'], rows=rows,
        provenance={'ode_step': step}
    )


def _task_group_walk(cfg: ExperimentConfig) -> TaskOutput:
    lattice = _lattice(cfg)
    curve, rows = [], []
    for t in cfg.times():
        dist = evolve_group(lattice, t, cap=cfg.cap_group)
        curve.append({
            't': t,
            'identity_weight': float(dist.weights[0]),
            'total': float(dist.weights.sum()),
            'max_deviation_from_uniform': float(np.max(np.abs(dist.weights - 1.0 / len(dist.weights)))),
            'tail_bound': dist.tail_bound,
            'terms': dist.terms,
        })
        rows.extend((t, rank, float(w)) for rank, w in enumerate(dist.weights))
    return TaskOutput(
        values={'N': lattice.N, 'curve': curve},
        columns=['t', 'rank', 'weight'], rows=rows
    )


def _task_sample(cfg: ExperimentConfig) -> TaskOutput:
    lattice = _lattice(cfg)
    t = cfg.times()[-1]
    batch = sample_walk(lattice, t, cfg.count, cfg.seed, workers=cfg.threads)
    tv, stderr = marginal_total_variation(batch, 0)
    marginal = empirical_marginal(batch, 0)
    return TaskOutput(
        values={
            'N': lattice.N, 't': t, 'count': batch.count,
            'marginal_0': marginal, 'total_variation': tv, 'stderr': stderr,
        },
        columns=['vertex', 'empirical'], rows=[(j, float(p)) for j, p in enumerate(marginal)],
        provenance={'rng': 'philox(seed, index)'},
        artifacts={'samples.jsonl': lambda path: save_batch(batch, path)}
    )


def _task_extend(cfg: ExperimentConfig) -> TaskOutput:
    lattice = _lattice(cfg)
    step = _step(cfg, EXTENSION_STEP)
    space = build_configuration_space(lattice, cap=cfg.cap_states)
    spec = PairPotentialSpec(r=cfg.r)
    evolved = evolve_extended_curve(spec, space, cfg.times(DEFAULT_T_GRID), step)
    curve = [
        {'t': f.t, 'mass_A': total_mass_A(f), 'mass_B': total_mass_B(space, f), 'error_estimate': f.error_estimate}
        for f in evolved
    ]
    last = evolved[-1]
    return TaskOutput(
        values={'N': lattice.N, 'states': space.size, 'curve': curve},
        columns=['t', 'mass_A', 'mass_B', 'error_estimate'],
        rows=[(c['t'], c['mass_A'], c['mass_B'], c['error_estimate']) for c in curve],
        provenance={'step': step},
        artifacts={'field.csv': lambda path: save_field(path, space, last, cfg.r)}
    )


def _task_restrict_check(cfg: ExperimentConfig) -> TaskOutput:
    lattice = _lattice(cfg)
    step = _step(cfg, EXTENSION_STEP)
    space = build_configuration_space(lattice, cap=cfg.cap_states)
    spec = PairPotentialSpec(r=cfg.r)
    evolved = evolve_extended_curve(spec, space, cfg.times(DEFAULT_T_GRID), step, estimate_error=False)
    curve = []
    for f in evolved:
        exact = evolve_group(lattice, f.t, cap=cfg.cap_group)
        curve.append({
            't': f.t,
            'defect': restriction_defect(restrict_to_distinct(space, f), exact),
            'mass_B': total_mass_B(space, f),
        })
    max_defect = max(c['defect'] for c in curve)
    logger.info(f"限制恒等式: L={lattice.L}, r={cfg.r}, 最大偏差={max_defect:.3e}")
    return TaskOutput(
        values={'N': lattice.N, 'curve': curve, 'max_defect': max_defect},
        columns=['t', 'defect', 'mass_B'],
        rows=[(c['t'], c['defect'], c['mass_B']) for c in curve],
        provenance={'step': step}
    )


def _task_diagrams(cfg: ExperimentConfig) -> TaskOutput:
    lattice = _lattice(cfg)
    times = cfg.times()
    if cfg.kind == 'lower':
        evaluation = T_n_lower_limits(lattice, cfg.n, times)
        target = lower_limit_target(cfg.n)
        step = None
    else:
        step = _step(cfg, DIAGRAM_STEP)
        evaluation = T_tilde_n(lattice, cfg.n, times, step, workers=cfg.threads)
        target = catalan_closed_form(cfg.n - 1)

    finite_size = None
    if cfg.sizes is not None:
        # 边长序列给定时在 t = c·L² 处求值并按 1/L 外推
        if cfg.kind == 'lower':
            finite_size = lower_limit_extrapolation(cfg.n, cfg.sizes)
        else:
            finite_size = full_tree_extrapolation(cfg.n, cfg.sizes, step=_step(cfg, EXTRAPOLATION_STEP))
        evaluation = with_extrapolation(evaluation, finite_size)
        logger.info(f"外推极限: {finite_size.limit:.6f} ± {finite_size.uncertainty:.2e} (目标 {target})")

    values = {
        'n': cfg.n, 'kind': cfg.kind, 'N': lattice.N,
        'curve': [{'t': t, 'value': v} for t, v in evaluation.curve],
        'target_limit': target, 'method': evaluation.method,
        'extrapolated_limit': evaluation.extrapolated_limit,
        'uncertainty': evaluation.uncertainty,
    }
    if finite_size is not None:
        values['finite_size'] = {
            'sizes': finite_size.sizes, 'times': finite_size.times, 'values': finite_size.values,
            'monotone': finite_size.monotone_toward(target),
        }
    return TaskOutput(
        values=values,
        columns=['t', 'value'], rows=list(evaluation.curve),
        provenance={'step': step},
        artifacts={'curve.csv': lambda path: save_evaluation(evaluation, path)[0]}
    )


def _task_catalan(cfg: ExperimentConfig) -> TaskOutput:
    table = catalan_by_recursion(cfg.order)
    return TaskOutput(
        values={'values': list(table.values), 'matches_closed_form': table.matches_closed_form()},
        columns=['i', 'A_i'], rows=table.rows(),
        provenance={'order': cfg.order}
    )


def _task_genfun(cfg: ExperimentConfig) -> TaskOutput:
    value = generating_function_value(cfg.z, cfg.order)
    record = {
        'z': value.z, 'series': value.series, 'closed_form': value.closed_form,
        'difference': value.difference, 'truncation_bound': value.truncation_bound,
    }
    return TaskOutput(
        values=record,
        columns=['z', 'series', 'closed_form', 'truncation_bound'],
        rows=[(value.z, value.series, value.closed_form, value.truncation_bound)],
        provenance={'order': cfg.order}
    )


def _task_rho(cfg: ExperimentConfig) -> TaskOutput:
    point = rho_variant(cfg.rho, cfg.order)
    check = verify_functional_equation(cfg.rho, cfg.order)
    record = {
        'rho': point.rho, 'p': point.p,
        'q_tilde_series': point.q_tilde_series, 'q_tilde_target': point.q_tilde_target,
        'difference': point.difference,
        'residuals': {
            'eq57': point.eq57_residual,
            'functional_equation_closed_form': check.residual_closed_form,
            'functional_equation_series': check.residual_series,
        },
    }
    return TaskOutput(
        values=record,
        columns=['rho', 'p', 'q_tilde_series', 'q_tilde_target', 'eq57_residual'],
        rows=[(point.rho, point.p, point.q_tilde_series, point.q_tilde_target, point.eq57_residual)],
        provenance={'order': cfg.order}
    )


def _task_eq51(cfg: ExperimentConfig) -> TaskOutput:
    best = maximize_eq51(cfg.vertices, cfg.imax)
    report = attempt_eq54()
    return TaskOutput(
        values={
            'N': cfg.vertices, 'I_max': cfg.imax,
            'counts': list(best.profile.counts), 'q_N': best.q_N, 'method': best.method,
            'continuous_q': best.continuous_q,
            'supremum_S': report.supremum, 'eq54_solvable': report.solvable,
            'q_at_boundary': report.q_at_boundary,
        },
        columns=['i', 'm_i'],
        rows=[(i, m) for i, m in enumerate(best.profile.counts, start=1)]
    )


def _task_permanent(cfg: ExperimentConfig) -> TaskOutput:
    lattice = _lattice(cfg)
    reports = [conjecture2_permanent(lattice, t) for t in cfg.times()]
    curve = [
        {'t': rep.t, 'permanent': rep.permanent, 'root': rep.root,
         'target': rep.target, 'within_bounds': rep.within_bounds}
        for rep in reports
    ]
    return TaskOutput(
        values={'N': lattice.N, 'curve': curve},
        columns=['t', 'permanent', 'root', 'target'],
        rows=[(c['t'], c['permanent'], c['root'], c['target']) for c in curve]
    )


def _task_conjecture1(cfg: ExperimentConfig) -> TaskOutput:
    lattice = _lattice(cfg)
    step = _step(cfg, EXTENSION_STEP)
    curve = conjecture1_curve(lattice, cfg.times(DEFAULT_T_GRID), r=cfg.r, step=step, cap=cfg.cap_states)
    return TaskOutput(
        values={'N': lattice.N, 'curve': curve, 'report_only': True},
        columns=['t', 'mass_A', 'mass_B', 'C_N'],
        rows=[(c['t'], c['mass_A'], c['mass_B'], c['C_N']) for c in curve],
        provenance={'step': step}
    )


TASK_HANDLERS: Dict[str, Callable[[ExperimentConfig], TaskOutput]] = {
    'heat-kernel': _task_heat_kernel,
    'group-walk': _task_group_walk,
    'sample': _task_sample,
    'extend': _task_extend,
    'restrict-check': _task_restrict_check,
    'diagrams': _task_diagrams,
    'catalan': _task_catalan,
    'genfun': _task_genfun,
    'rho': _task_rho,
    'eq51': _task_eq51,
    'permanent': _task_permanent,
    'conjecture1-report': _task_conjecture1,
}


# ---------------------------------------------------------------------------
# 运行
# ---------------------------------------------------------------------------

def timing_path(out: str) -> str:
    return f"{out}.timing.json"


def run(cfg: ExperimentConfig) -> ResultEnvelope:
    """
    执行一次实验并写出结果

    Args:
        cfg: 已校验的实验配置

    Returns:
        ResultEnvelope: 结果信封

    Raises:
        PermLabError: 各模块的前提、上限错误原样向上传递
    """
    cfg.validate()
    logger.info(f"运行任务: {cfg.task}")
    start = time.perf_counter()
    output = TASK_HANDLERS[cfg.task](cfg)
    runtime = time.perf_counter() - start

    provenance = {'tool': 'permlab', 'version': __version__, 'seed': cfg.seed}
    provenance.update(output.provenance)
    envelope = ResultEnvelope(
        task=cfg.task, parameters=cfg.parameters(), values=to_jsonable(output.values),
        provenance=provenance, runtime_seconds=runtime
    )

    if cfg.out:
        if cfg.format == 'csv':
            write_csv(cfg.out, output.columns, output.rows)
        else:
            write_json(cfg.out, envelope.to_dict())
        for suffix, writer in output.artifacts.items():
            writer(f"{cfg.out}.{suffix}")
        write_json(timing_path(cfg.out), {'task': cfg.task, 'runtime_seconds': runtime})
        logger.info(f"结果已写出: {cfg.out} ({runtime:.2f}s)")

    return envelope
