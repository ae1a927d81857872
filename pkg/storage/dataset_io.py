"""
样本 CSV 的读写。

列：一维 `l` 或二维 `l1,l2`，`y` ∈ {0,1}，可选 `score` ∈ [0,1] 与 `y_hat` ∈ {0,1}。
表头必需，列顺序任意，未知列告警后忽略。报错中的行号以文件为准（表头为第 1 行）。
"""
import logging
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
import pandas as pd

from core.color import lab_to_hue_array, lab_to_ita_array
from core.domain import Dataset
from core.errors import DataFormatError, DomainError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SAMPLE_COLUMNS = ("l", "l1", "l2", "y", "score", "y_hat")
LAB_COLUMNS = ("L", "a", "b", "y", "score", "y_hat")
LAB_COORDINATES = ("lightness", "ita", "lightness_hue")


def _read_table(path: PathLike, known) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8", skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise DataFormatError(1, "file is empty; a header row is required")
    except pd.errors.ParserError as e:
        raise DataFormatError(_parser_line(str(e)), f"malformed row ({e})")
    frame.columns = [c.strip() for c in frame.columns]
    unknown = [c for c in frame.columns if c not in known]
    if unknown:
        logger.warning(f"{path.name}: ignoring unknown columns {unknown}")
    if frame.empty:
        raise DataFormatError(2, "no data rows")
    return frame


def _parser_line(message: str) -> int:
    # pandas: "Expected 3 fields in line 5, saw 4"
    words = message.replace(",", " ").split()
    for before, word in zip(words, words[1:]):
        if before == "line" and word.isdigit():
            return int(word)
    return 0


def _column(frame: pd.DataFrame, name: str, check: Optional[Callable[[float], bool]] = None, expected: str = "") -> np.ndarray:
    raw = frame[name].tolist()
    try:
        values = np.array(raw, dtype=float)
    except ValueError:
        values = None
    if values is None or not np.all(np.isfinite(values)):
        for i, text in enumerate(raw):
            try:
                v = float(text)
            except ValueError:
                raise DataFormatError(i + 2, f"column {name!r} has non-numeric value {text!r}")
            if not np.isfinite(v):
                raise DataFormatError(i + 2, f"column {name!r} has non-finite value {text!r}")
        values = np.array([float(text) for text in raw])
    if check is not None:
        bad = [i for i, v in enumerate(values) if not check(v)]
        if bad:
            raise DataFormatError(bad[0] + 2, f"column {name!r} is {raw[bad[0]]!r}, expected {expected}")
    return values


def _is_binary(v: float) -> bool:
    return v == 0.0 or v == 1.0


def _is_unit(v: float) -> bool:
    return 0.0 <= v <= 1.0


def _outcomes(frame: pd.DataFrame):
    if "y" not in frame.columns:
        raise DataFormatError(1, "missing required column 'y'")
    y = _column(frame, "y", _is_binary, "0 or 1").astype(np.int8)
    score = _column(frame, "score", _is_unit, "a value in [0, 1]") if "score" in frame.columns else None
    y_hat = _column(frame, "y_hat", _is_binary, "0 or 1").astype(np.int8) if "y_hat" in frame.columns else None
    return y, score, y_hat


def read_dataset(path: PathLike) -> Dataset:
    frame = _read_table(path, SAMPLE_COLUMNS)
    if "l" in frame.columns:
        if "l1" in frame.columns or "l2" in frame.columns:
            raise DataFormatError(1, "use either 'l' or 'l1,l2', not both")
        l = _column(frame, "l")
    elif "l1" in frame.columns and "l2" in frame.columns:
        l = np.column_stack((_column(frame, "l1"), _column(frame, "l2")))
    else:
        raise DataFormatError(1, "missing sensitive attribute column ('l' or 'l1,l2')")
    y, score, y_hat = _outcomes(frame)
    logger.debug(f"read {len(frame)} samples from {path}")
    return Dataset(l=l, y=y, score=score, y_hat=y_hat)


def read_lab_dataset(path: PathLike, coordinate: str = "lightness") -> Dataset:
    """
    读取 CIELAB 肤色列 `L,a,b` 并换算敏感坐标：
    lightness → L*，ita → ITA，lightness_hue → 二维 (L*, h*)。
    """
    if coordinate not in LAB_COORDINATES:
        raise DomainError(f"unknown Lab coordinate {coordinate!r}, expected one of {list(LAB_COORDINATES)}")
    frame = _read_table(path, LAB_COLUMNS)
    missing = [c for c in ("L", "a", "b") if c not in frame.columns]
    if missing:
        raise DataFormatError(1, f"missing Lab columns {missing}")
    lightness = _column(frame, "L")
    a = _column(frame, "a")
    b = _column(frame, "b")
    if coordinate == "lightness":
        l = lightness
    elif coordinate == "ita":
        l = lab_to_ita_array(lightness, b)
    else:
        l = np.column_stack((lightness, lab_to_hue_array(a, b)))
    y, score, y_hat = _outcomes(frame)
    logger.info(f"read {len(frame)} Lab samples from {path} as {coordinate}")
    return Dataset(l=l, y=y, score=score, y_hat=y_hat)


def write_dataset(dataset: Dataset, path: PathLike):
    """浮点数按最短可逆十进制写出，读回后逐位相同"""
    columns = {}
    if dataset.dimension == 1:
        columns["l"] = dataset.l[:, 0]
    else:
        columns["l1"] = dataset.l[:, 0]
        columns["l2"] = dataset.l[:, 1]
    columns["y"] = dataset.y.astype(np.int64)
    if dataset.score is not None:
        columns["score"] = dataset.score
    if dataset.y_hat is not None:
        columns["y_hat"] = dataset.y_hat.astype(np.int64)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(columns)
    for name in ("l", "l1", "l2", "score"):
        if name in frame.columns:
            frame[name] = [repr(float(v)) for v in frame[name]]
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    logger.info(f"wrote {len(dataset)} samples to {path}")

