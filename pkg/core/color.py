"""CIELAB 肤色坐标换算：ITA 与色相角"""
import math

import numpy as np

from core.errors import DomainError


def lab_to_ita(L: float, b: float) -> float:
    """ITA = arctan((L* - 50) / b*) · 180/π"""
    if b == 0:
        raise DomainError("ITA is undefined for b* = 0")
    return math.degrees(math.atan((L - 50.0) / b))


def lab_to_hue(a: float, b: float) -> float:
    """h* = arctan(b* / a*) · 180/π，按象限映射到 [0°, 360°)"""
    if a == 0 and b == 0:
        raise DomainError("hue is undefined for a* = b* = 0")
    h = math.degrees(math.atan2(b, a)) % 360.0
    # 极小负角取模后会舍入到 360.0
    if h >= 360.0:
        h = 0.0
    return h + 0.0


def lab_to_ita_array(L, b) -> np.ndarray:
    L = np.asarray(L, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(b == 0):
        i = int(np.flatnonzero(b == 0)[0])
        raise DomainError(f"ITA is undefined for b* = 0 (row {i})")
    return np.degrees(np.arctan((L - 50.0) / b))


def lab_to_hue_array(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    both_zero = (a == 0) & (b == 0)
    if np.any(both_zero):
        i = int(np.flatnonzero(both_zero)[0])
        raise DomainError(f"hue is undefined for a* = b* = 0 (row {i})")
    h = np.mod(np.degrees(np.arctan2(b, a)), 360.0)
    return np.where(h >= 360.0, 0.0, h) + 0.0
