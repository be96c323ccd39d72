#!/usr/bin/env python3
"""
自定义异常模块 - 定义项目特定的异常类型

每个异常都带有退出码和可机读的错误记录，命令行入口据此决定进程退出状态。

版本: v1.0
"""

from typing import Any, Dict, Optional


class PermLabError(Exception):
    """基础异常类 - 所有自定义异常的父类"""

    exit_code = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.details = details or {}
        super().__init__(message)

    def to_record(self) -> Dict[str, Any]:
        """
        生成可机读的错误记录

        Returns:
            Dict: {error, type, exit_code, details}
        """
        return {
            'error': self.message,
            'type': type(self).__name__,
            'exit_code': self.exit_code,
            'details': self.details,
        }


class ConfigurationError(PermLabError):
    """配置错误（未知键、未知任务、无法解析的时间网格）"""
    exit_code = 2


class PreconditionError(PermLabError):
    """模块前置条件不满足（L < 3、t < 0、ρ 越界等）"""
    exit_code = 3


class SingularityError(PreconditionError):
    """级数路径越过 z = 1/4 奇点"""

    def __init__(self, z: float):
        self.z = z
        super().__init__(f"级数在 z = {z} 处发散 (奇点位于 z = 1/4)", {'z': z})


class CapExceededError(PermLabError):
    """状态空间或群规模超出配置上限"""
    exit_code = 4

    def __init__(self, what: str, size: int, cap: int):
        self.what = what
        self.size = size
        self.cap = cap
        super().__init__(
            f"{what} 规模 {size} 超出上限 {cap}",
            {'what': what, 'size': size, 'cap': cap}
        )


class ResultFormatError(PermLabError):
    """结果文件格式错误"""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(f"结果文件解析失败: {message}", {'path': path})
