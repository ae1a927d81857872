"""
划分与传输映射的 JSON 文档，以及每次运行写出的 manifest。

文档字段顺序固定，浮点数按最短可逆形式输出，同一对象总是得到逐字节相同的文件。
读入时先校验 kind 与 schema_version，再做完整校验；任何失败都不返回半成品对象。
"""
import hashlib
import logging
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from core.debias import TransportMap
from core.domain import Grid, Partition
from core.errors import ArtifactError
from utils.version_utils import TOOL_NAME, dependency_versions, get_version

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

PathLike = Union[str, Path]


def _native(value):
    """numpy 标量与数组转为 JSON 可表示的 Python 值"""
    if isinstance(value, dict):
        return {str(k): _native(v) for k, v in sorted(value.items())}
    if isinstance(value, (list, tuple)):
        return [_native(v) for v in value]
    if isinstance(value, np.ndarray):
        return _native(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value


class _Header(BaseModel):
    model_config = ConfigDict(extra="ignore")

    kind: str
    schema_version: int


class PartitionDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["partition"] = "partition"
    schema_version: int = SCHEMA_VERSION
    dimension: int
    k: int
    method: str
    measure: str
    objective: Optional[float] = None
    grid_edges: List[List[float]]
    boundaries: Optional[List[int]] = None
    cut_values: Optional[List[float]] = None
    rectangles: Optional[List[List[int]]] = None
    # 不连通划分（K-Means）按行优先存放每个网格单元的组号
    cell_labels: Optional[List[int]] = None
    metadata: Dict[str, Any] = {}

    @classmethod
    def from_partition(cls, partition: Partition) -> "PartitionDocument":
        doc = dict(
            dimension=partition.dimension,
            k=partition.k,
            method=partition.method,
            measure=partition.measure,
            objective=partition.objective,
            grid_edges=[e.tolist() for e in partition.grid.edges],
            metadata=_native(partition.metadata),
        )
        if partition.dimension == 1 and partition.boundaries is not None:
            doc["boundaries"] = list(partition.boundaries)
            doc["cut_values"] = partition.cut_values()
        elif partition.dimension == 2 and partition.rectangles is not None:
            doc["rectangles"] = [list(r) for r in partition.rectangles]
        else:
            doc["cell_labels"] = partition.cell_labels.ravel().tolist()
        return cls(**doc)

    def to_partition(self) -> Partition:
        grid = Grid(tuple(self.grid_edges))
        if grid.dimension != self.dimension:
            raise ArtifactError(f"partition declares dimension {self.dimension} but has {grid.dimension} grid axes")
        common = dict(method=self.method, measure=self.measure, objective=self.objective, metadata=dict(self.metadata))
        if self.boundaries is not None:
            partition = Partition.from_boundaries(grid, self.boundaries, **common)
        elif self.rectangles is not None:
            partition = Partition.from_rectangles(grid, [tuple(r) for r in self.rectangles], **common)
        elif self.cell_labels is not None:
            partition = Partition(grid=grid, cell_labels=np.array(self.cell_labels).reshape(grid.shape), **common)
        else:
            raise ArtifactError("partition has neither boundaries, rectangles nor cell labels")
        if partition.k != self.k:
            raise ArtifactError(f"partition declares K={self.k} but describes {partition.k} groups")
        return partition


class TransportDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["transport"] = "transport"
    schema_version: int = SCHEMA_VERSION
    alpha: float
    t: float
    distance: float
    resolution: int
    groups: List[int]
    weights: List[float]
    knots: List[float]
    barycenter: List[float]
    source: List[List[float]]
    target: List[List[float]]
    metadata: Dict[str, Any] = {}

    @classmethod
    def from_transport(cls, transport: TransportMap) -> "TransportDocument":
        return cls(
            alpha=transport.alpha,
            t=transport.t,
            distance=transport.distance,
            resolution=transport.resolution,
            groups=list(transport.groups),
            weights=transport.weights.tolist(),
            knots=transport.knots.tolist(),
            barycenter=transport.barycenter.tolist(),
            source=transport.source.tolist(),
            target=transport.target.tolist(),
            metadata=_native(transport.metadata),
        )

    def to_transport(self) -> TransportMap:
        if len(self.knots) != self.resolution:
            raise ArtifactError(f"transport declares R={self.resolution} but has {len(self.knots)} knots")
        return TransportMap(
            knots=np.array(self.knots),
            groups=tuple(self.groups),
            source=np.array(self.source),
            target=np.array(self.target),
            barycenter=np.array(self.barycenter),
            weights=np.array(self.weights),
            alpha=self.alpha,
            t=self.t,
            distance=self.distance,
            metadata=dict(self.metadata),
        )


def _write_document(document: BaseModel, path: PathLike):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(document.model_dump_json(indent=2) + "\n", encoding="utf-8")


def _read_document(path: PathLike, model, kind: str):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{kind} file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        header = _Header.model_validate_json(text)
    except ValidationError as e:
        raise ArtifactError(f"{path}: not a valid {kind} document ({e.error_count()} errors: {e.errors()[0]['msg']})")
    if header.kind != kind:
        raise ArtifactError(f"{path}: expected a {kind} document, found {header.kind!r}")
    if header.schema_version != SCHEMA_VERSION:
        raise ArtifactError(
            f"{path}: schema version {header.schema_version} is not supported (expected {SCHEMA_VERSION})"
        )
    try:
        return model.model_validate_json(text)
    except ValidationError as e:
        raise ArtifactError(f"{path}: invalid {kind} document: {e.errors()[0]['msg']} at {e.errors()[0]['loc']}")


def write_partition(partition: Partition, path: PathLike):
    _write_document(PartitionDocument.from_partition(partition), path)
    logger.info(f"partition (K={partition.k}) written to {path}")


def read_partition(path: PathLike) -> Partition:
    document = _read_document(path, PartitionDocument, "partition")
    try:
        return document.to_partition()
    except ArtifactError:
        raise
    except ValueError as e:
        raise ArtifactError(f"{path}: inconsistent partition: {e}")


def write_transport(transport: TransportMap, path: PathLike):
    _write_document(TransportDocument.from_transport(transport), path)
    logger.info(f"transport map (alpha={transport.alpha}) written to {path}")


def read_transport(path: PathLike) -> TransportMap:
    document = _read_document(path, TransportDocument, "transport")
    try:
        return document.to_transport()
    except ArtifactError:
        raise
    except ValueError as e:
        raise ArtifactError(f"{path}: inconsistent transport map: {e}")


def file_sha256(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def run_timestamp() -> str:
    """设置了 SOURCE_DATE_EPOCH 时使用该时间，便于复现构建"""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        moment = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    else:
        moment = datetime.now(timezone.utc)
    return moment.replace(microsecond=0).isoformat()


class RunManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: int = SCHEMA_VERSION
    tool: str
    version: str
    subcommand: str
    argv: List[str]
    seed: Optional[int] = None
    config: Dict[str, Any]
    inputs: Dict[str, str]
    outputs: List[str]
    dependencies: Dict[str, str]
    timestamp: str


def write_manifest(
    path: PathLike,
    subcommand: str,
    argv: Sequence[str],
    config: Dict[str, Any],
    inputs: Sequence[PathLike],
    outputs: Sequence[PathLike],
    seed: Optional[int] = None,
):
    manifest = RunManifest(
        tool=TOOL_NAME,
        version=get_version(),
        subcommand=subcommand,
        argv=[str(a) for a in argv],
        seed=seed,
        config=_native(config),
        inputs={str(p): file_sha256(p) for p in inputs},
        outputs=sorted(str(p) for p in outputs),
        dependencies=dependency_versions(),
        timestamp=run_timestamp(),
    )
    _write_document(manifest, path)
    logger.debug(f"manifest written to {path}")
