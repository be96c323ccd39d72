"""permlab - 置换群随机游走与树图渐近的数值实验"""

__version__ = "1.0.0"
