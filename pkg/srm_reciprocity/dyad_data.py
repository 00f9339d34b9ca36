"""
Directed dyadic observation data.

Reads, validates and indexes ``ego,alter,successes,trials,covariate`` tables.
Node labels are relabelled to dense indices, unordered dyads get dense ids, and
every container is canonically ordered so that the row order of the input file
never changes the dataset.

Block designs are accepted: any subset of ordered pairs may be present, and a
dyad observed in a single direction still gets its own dyad effects.
"""

import csv
import hashlib
import io
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DataValidationError, UnobservedDyadError
from .settings import read_key_value_file

logger = logging.getLogger(__name__)

DEFAULT_COLUMNS = ('ego', 'alter', 'successes', 'trials', 'covariate')
COVARIATE_TRANSFORMS = ('none', 'center', 'standardize')
DEFAULT_SYMMETRY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class NodeId:
    """External label and dense internal index of a node."""
    label: str
    index: int


@dataclass(frozen=True)
class DirectedObservation:
    """Successes out of trials for behaviour directed from ego to alter."""
    ego: NodeId
    alter: NodeId
    successes: int
    trials: int
    covariate: float
    line: Optional[int] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class DyadIndex:
    """Unordered node pair; ``lo.index < hi.index``."""
    lo: NodeId
    hi: NodeId
    id: int


@dataclass(frozen=True)
class CovariateTransform:
    """Affine map from the original covariate scale to the model scale."""
    kind: str = 'none'
    center: float = 0.0
    scale: float = 1.0

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.center) / self.scale

    def invert(self, x):
        return np.asarray(x, dtype=float) * self.scale + self.center

    def to_dict(self) -> Dict[str, Union[str, float]]:
        return {'kind': self.kind, 'center': self.center, 'scale': self.scale}

    @classmethod
    def from_dict(cls, data: Optional[Dict]) -> 'CovariateTransform':
        if not data:
            return cls()
        return cls(kind=str(data.get('kind', 'none')),
                   center=float(data.get('center', 0.0)),
                   scale=float(data.get('scale', 1.0)))


@dataclass(frozen=True)
class IngestConfig:
    """Column names and covariate handling for :func:`load_csv`."""
    ego_column: str = 'ego'
    alter_column: str = 'alter'
    successes_column: str = 'successes'
    trials_column: str = 'trials'
    covariate_column: str = 'covariate'
    covariate_transform: str = 'none'
    symmetry_tolerance: float = DEFAULT_SYMMETRY_TOLERANCE

    def __post_init__(self):
        if self.covariate_transform not in COVARIATE_TRANSFORMS:
            raise ValueError(f"covariate_transform must be one of {COVARIATE_TRANSFORMS}, "
                             f"got {self.covariate_transform!r}")
        if not self.symmetry_tolerance >= 0:
            raise ValueError("symmetry_tolerance must be non-negative")

    @property
    def columns(self) -> Tuple[str, str, str, str, str]:
        return (self.ego_column, self.alter_column, self.successes_column,
                self.trials_column, self.covariate_column)


@dataclass(frozen=True)
class DatasetSummary:
    n_nodes: int
    n_observations: int
    n_dyads: int
    both_directions_fraction: float
    covariate_min: float
    covariate_max: float
    covariate_mean: float
    total_trials: int
    total_successes: int

    @property
    def pooled_rate(self) -> float:
        return self.total_successes / self.total_trials if self.total_trials else float('nan')

    def to_dict(self) -> Dict[str, float]:
        return {
            'n_nodes': self.n_nodes,
            'n_observations': self.n_observations,
            'n_dyads': self.n_dyads,
            'both_directions_fraction': self.both_directions_fraction,
            'covariate_min': self.covariate_min,
            'covariate_max': self.covariate_max,
            'covariate_mean': self.covariate_mean,
            'total_trials': self.total_trials,
            'total_successes': self.total_successes,
            'pooled_rate': self.pooled_rate,
        }


# (ego label, alter label, successes, trials, covariate, source line)
ObservationRecord = Tuple[str, str, int, int, float, Optional[int]]


@dataclass(frozen=True)
class NetworkDataset:
    """
    Validated, canonically ordered directed dyadic data.

    Build instances with :meth:`from_records` (or :func:`load_csv`); the
    constructor only re-checks structural invariants.
    """
    nodes: Tuple[NodeId, ...]
    observations: Tuple[DirectedObservation, ...]
    dyads: Tuple[DyadIndex, ...]
    covariate_symmetric: bool = True
    covariate_transform: CovariateTransform = field(default_factory=CovariateTransform)
    source: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        for position, node in enumerate(self.nodes):
            if node.index != position:
                raise DataValidationError(f"node indices must be contiguous, {node.label!r} has {node.index}")
        for position, dyad in enumerate(self.dyads):
            if dyad.id != position or dyad.lo.index >= dyad.hi.index:
                raise DataValidationError(f"malformed dyad index {dyad}")
        seen = set()
        lookup = {(d.lo.index, d.hi.index) for d in self.dyads}
        used = set()
        for obs in self.observations:
            pair = (obs.ego.index, obs.alter.index)
            if pair in seen:
                raise DataValidationError(f"duplicate ordered pair {obs.ego.label}->{obs.alter.label}")
            seen.add(pair)
            key = (min(pair), max(pair))
            if key not in lookup:
                raise DataValidationError(f"observation {obs.ego.label}->{obs.alter.label} has no dyad")
            used.add(key)
        if used != lookup:
            raise DataValidationError("dataset contains dyads without observations")

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------
    @classmethod
    def from_records(cls, records: Iterable[ObservationRecord],
                     covariate_transform: str = 'none',
                     symmetry_tolerance: float = DEFAULT_SYMMETRY_TOLERANCE,
                     roster: Optional[Sequence[str]] = None,
                     source: Optional[Union[str, Path]] = None) -> 'NetworkDataset':
        """
        Validate raw records and build the canonical dataset.

        Args:
            records: (ego, alter, successes, trials, covariate, line) tuples
            covariate_transform: 'none', 'center' or 'standardize'
            symmetry_tolerance: allowed |x_ij - x_ji| within a dyad
            roster: optional full list of node labels (may include isolates)
            source: file the records came from, used in error messages

        Raises:
            DataValidationError: on any invariant violation
        """
        records = list(records)
        if not records:
            raise DataValidationError("dataset contains no observations", path=source)

        by_pair: Dict[Tuple[str, str], ObservationRecord] = {}
        for record in records:
            ego, alter, successes, trials, covariate, line = record
            if ego == alter:
                raise DataValidationError(f"self-loop {ego!r}->{alter!r}", line=line, path=source)
            if successes < 0:
                raise DataValidationError("negative successes", line=line, path=source)
            if trials < 1:
                raise DataValidationError("trials must be at least 1", line=line, path=source)
            if successes > trials:
                raise DataValidationError("successes exceed trials", line=line, path=source)
            if not math.isfinite(covariate):
                raise DataValidationError("covariate is not finite", line=line, path=source)
            previous = by_pair.get((ego, alter))
            if previous is not None:
                raise DataValidationError(
                    f"duplicate ordered pair {ego!r}->{alter!r} (first seen at line {previous[5]})",
                    line=line, path=source)
            by_pair[(ego, alter)] = record

        for (ego, alter), record in by_pair.items():
            reverse = by_pair.get((alter, ego))
            if reverse is None or ego > alter:
                continue
            if abs(record[4] - reverse[4]) > symmetry_tolerance:
                raise DataValidationError(
                    f"asymmetric covariate within dyad {ego!r}-{alter!r}: "
                    f"{record[4]!r} vs {reverse[4]!r} (line {reverse[5]})",
                    line=record[5], path=source)

        labels = set(roster) if roster is not None else set()
        for ego, alter in by_pair:
            labels.add(ego)
            labels.add(alter)
        if roster is not None and len(labels) != len(set(roster)):
            raise DataValidationError("observations reference nodes outside the roster", path=source)
        nodes = tuple(NodeId(label=label, index=i) for i, label in enumerate(_sort_labels(labels)))
        node_by_label = {node.label: node for node in nodes}

        ordered = sorted(by_pair.values(),
                         key=lambda r: (node_by_label[r[0]].index, node_by_label[r[1]].index))
        pairs = sorted({(min(node_by_label[r[0]].index, node_by_label[r[1]].index),
                         max(node_by_label[r[0]].index, node_by_label[r[1]].index)) for r in ordered})
        dyads = tuple(DyadIndex(lo=nodes[lo], hi=nodes[hi], id=k) for k, (lo, hi) in enumerate(pairs))
        observations = tuple(
            DirectedObservation(ego=node_by_label[r[0]], alter=node_by_label[r[1]],
                                successes=int(r[2]), trials=int(r[3]), covariate=float(r[4]), line=r[5])
            for r in ordered
        )

        raw = np.array([obs.covariate for obs in observations], dtype=float)
        transform = _fit_transform(raw, covariate_transform)
        if transform.kind != 'none':
            logger.info(f"Covariate transform '{transform.kind}': center={transform.center:.6g}, "
                        f"scale={transform.scale:.6g}")

        return cls(nodes=nodes, observations=observations, dyads=dyads, covariate_symmetric=True,
                   covariate_transform=transform, source=str(source) if source is not None else None)

    # ------------------------------------------------------------------
    # dimensions and vectorised views
    # ------------------------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_observations(self) -> int:
        return len(self.observations)

    @property
    def n_dyads(self) -> int:
        return len(self.dyads)

    @cached_property
    def ego_index(self) -> np.ndarray:
        return _frozen(np.array([obs.ego.index for obs in self.observations], dtype=np.intp))

    @cached_property
    def alter_index(self) -> np.ndarray:
        return _frozen(np.array([obs.alter.index for obs in self.observations], dtype=np.intp))

    @cached_property
    def dyad_index(self) -> np.ndarray:
        return _frozen(np.array([self._dyad_lookup[_key(obs.ego.index, obs.alter.index)].id
                                 for obs in self.observations], dtype=np.intp))

    @cached_property
    def successes(self) -> np.ndarray:
        return _frozen(np.array([obs.successes for obs in self.observations], dtype=float))

    @cached_property
    def trials(self) -> np.ndarray:
        return _frozen(np.array([obs.trials for obs in self.observations], dtype=float))

    @cached_property
    def raw_covariate(self) -> np.ndarray:
        return _frozen(np.array([obs.covariate for obs in self.observations], dtype=float))

    @cached_property
    def covariate(self) -> np.ndarray:
        """Covariate on the model scale (after the ingest transform)."""
        return _frozen(self.covariate_transform.apply(self.raw_covariate))

    @cached_property
    def _dyad_lookup(self) -> Dict[Tuple[int, int], DyadIndex]:
        return {(d.lo.index, d.hi.index): d for d in self.dyads}

    @cached_property
    def _node_lookup(self) -> Dict[str, NodeId]:
        return {node.label: node for node in self.nodes}

    # ------------------------------------------------------------------
    # lookups
    # ------------------------------------------------------------------
    def node(self, ref: Union[NodeId, int, str]) -> NodeId:
        """Resolve a NodeId, dense index or label."""
        if isinstance(ref, NodeId):
            if ref.index >= self.n_nodes or self.nodes[ref.index] != ref:
                raise KeyError(f"unknown node {ref}")
            return ref
        if isinstance(ref, (int, np.integer)):
            if not 0 <= int(ref) < self.n_nodes:
                raise KeyError(f"node index {ref} out of range 0..{self.n_nodes - 1}")
            return self.nodes[int(ref)]
        try:
            return self._node_lookup[str(ref)]
        except KeyError:
            raise KeyError(f"unknown node label {ref!r}") from None

    def dyad_of(self, i: Union[NodeId, int, str], j: Union[NodeId, int, str]) -> DyadIndex:
        """
        Symmetric dyad index of nodes i and j.

        Raises:
            ValueError: if i and j are the same node
            UnobservedDyadError: if neither direction of the pair was observed
        """
        first, second = self.node(i), self.node(j)
        if first.index == second.index:
            raise ValueError(f"self-pair {first.label!r} has no dyad")
        try:
            return self._dyad_lookup[_key(first.index, second.index)]
        except KeyError:
            raise UnobservedDyadError(f"dyad {first.label!r}-{second.label!r} is not observed") from None

    def both_directions_mask(self) -> np.ndarray:
        """Boolean per dyad: True when both directions are observed."""
        counts = np.bincount(self.dyad_index, minlength=self.n_dyads)
        return counts == 2

    def fingerprint(self) -> str:
        """SHA-256 of the canonical CSV serialisation plus the covariate transform."""
        buffer = io.StringIO()
        _write_rows(self, buffer)
        buffer.write(repr(sorted(self.covariate_transform.to_dict().items())))
        return hashlib.sha256(buffer.getvalue().encode('utf-8')).hexdigest()


def _key(i: int, j: int) -> Tuple[int, int]:
    return (i, j) if i < j else (j, i)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _sort_labels(labels: Iterable[str]) -> List[str]:
    """Numeric order when every label is an integer, lexicographic otherwise."""
    labels = list(labels)
    try:
        return sorted(labels, key=lambda label: (int(label), label))
    except ValueError:
        return sorted(labels)


def _fit_transform(raw: np.ndarray, kind: str) -> CovariateTransform:
    if kind == 'none':
        return CovariateTransform()
    center = float(np.mean(raw))
    if kind == 'center':
        return CovariateTransform(kind='center', center=center, scale=1.0)
    scale = float(np.std(raw))
    if scale == 0.0:
        logger.warning("Covariate is constant; standardizing with scale 1")
        scale = 1.0
    return CovariateTransform(kind='standardize', center=center, scale=scale)


def _parse_count(value: Optional[str], name: str, line: int, path: Path) -> int:
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise DataValidationError(f"malformed row: {name} {value!r} is not a number", line=line, path=path) from None
    if not math.isfinite(number) or not number.is_integer():
        raise DataValidationError(f"malformed row: {name} {value!r} is not an integer", line=line, path=path)
    return int(number)


def _parse_real(value: Optional[str], name: str, line: int, path: Path) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise DataValidationError(f"malformed row: {name} {value!r} is not a number", line=line, path=path) from None


def load_ingest_config(path: Union[str, Path]) -> IngestConfig:
    """
    Read an :class:`IngestConfig` from a key-value file.

    Recognised keys: ego, alter, successes, trials, covariate (column names),
    covariate_transform, symmetry_tolerance.
    """
    values = read_key_value_file(path)
    known = set(DEFAULT_COLUMNS) | {'covariate_transform', 'symmetry_tolerance'}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ValueError(f"Unknown ingest config keys in {path}: {unknown}")
    kwargs = {f"{name}_column": values[name] for name in DEFAULT_COLUMNS if name in values}
    if 'covariate_transform' in values:
        kwargs['covariate_transform'] = values['covariate_transform']
    if 'symmetry_tolerance' in values:
        kwargs['symmetry_tolerance'] = float(values['symmetry_tolerance'])
    return IngestConfig(**kwargs)


def load_csv(path: Union[str, Path], config: Optional[IngestConfig] = None) -> NetworkDataset:
    """
    Load and validate a directed dyadic CSV file.

    Args:
        path: UTF-8, comma-separated file with a header row
        config: column names and covariate handling (defaults if None)

    Returns:
        Validated NetworkDataset

    Raises:
        FileNotFoundError: if the file does not exist
        DataValidationError: on a malformed row or an invariant violation;
            the message carries the offending line number
    """
    config = config or IngestConfig()
    csv_path = Path(path)
    if not csv_path.exists():
        raise FileNotFoundError(f"Dataset file not found: {csv_path}")

    records: List[ObservationRecord] = []
    with open(csv_path, 'r', encoding='utf-8-sig', newline='') as f:
        reader = csv.DictReader(f)
        header = [name.strip() for name in (reader.fieldnames or [])]
        missing = [name for name in config.columns if name not in header]
        if missing:
            raise DataValidationError(f"header is missing columns {missing}", line=1, path=csv_path)
        reader.fieldnames = header
        ego_col, alter_col, successes_col, trials_col, covariate_col = config.columns

        for row in reader:
            line = reader.line_num
            if None in row or any(row.get(name) is None for name in config.columns):
                raise DataValidationError("malformed row: wrong number of fields", line=line, path=csv_path)
            if all(not (value or '').strip() for value in row.values()):
                continue
            ego = row[ego_col].strip()
            alter = row[alter_col].strip()
            if not ego or not alter:
                raise DataValidationError("malformed row: empty node label", line=line, path=csv_path)
            records.append((
                ego,
                alter,
                _parse_count(row[successes_col], 'successes', line, csv_path),
                _parse_count(row[trials_col], 'trials', line, csv_path),
                _parse_real(row[covariate_col], 'covariate', line, csv_path),
                line,
            ))

    dataset = NetworkDataset.from_records(records, covariate_transform=config.covariate_transform,
                                          symmetry_tolerance=config.symmetry_tolerance, source=csv_path)
    logger.info(f"Loaded {dataset.n_observations} observations over {dataset.n_nodes} nodes "
                f"and {dataset.n_dyads} dyads from {csv_path}")
    return dataset


def _write_rows(dataset: NetworkDataset, handle) -> None:
    writer = csv.writer(handle, lineterminator='\n')
    writer.writerow(DEFAULT_COLUMNS)
    for obs in dataset.observations:
        writer.writerow([obs.ego.label, obs.alter.label, obs.successes, obs.trials, repr(obs.covariate)])


def write_csv(dataset: NetworkDataset, path: Union[str, Path]) -> Path:
    """Write the dataset in canonical order with original-scale covariates."""
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, 'w', encoding='utf-8', newline='') as f:
        _write_rows(dataset, f)
    return out_path


def summarize(dataset: NetworkDataset) -> DatasetSummary:
    """Counts, design completeness and covariate range of a dataset."""
    raw = dataset.raw_covariate
    both = dataset.both_directions_mask()
    return DatasetSummary(
        n_nodes=dataset.n_nodes,
        n_observations=dataset.n_observations,
        n_dyads=dataset.n_dyads,
        both_directions_fraction=float(np.mean(both)) if dataset.n_dyads else 0.0,
        covariate_min=float(np.min(raw)),
        covariate_max=float(np.max(raw)),
        covariate_mean=float(np.mean(raw)),
        total_trials=int(sum(obs.trials for obs in dataset.observations)),
        total_successes=int(sum(obs.successes for obs in dataset.observations)),
    )
