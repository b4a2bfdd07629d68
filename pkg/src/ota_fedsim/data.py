"""Synthetic two-class datasets, iid partitioning and CSV persistence."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List

import numpy as np

from ota_fedsim.errors import ConfigError, ParseError
from ota_fedsim.losses import Sample


@dataclass
class LabeledDataset:
    """Binary-classification dataset stored as arrays.

    ``features`` is (n, m) with the bias coordinate (always 1.0) last;
    ``labels`` is an n-vector of 0/1.
    """

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError("features must be a nonempty (n, m) matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must match the number of rows")
        if not np.all(np.isin(self.labels, (0, 1))):
            raise ValueError("labels must be 0 or 1")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> tuple[int, int]:
        ones = int(self.labels.sum())
        return self.n_samples - ones, ones

    def samples(self) -> Iterator[Sample]:
        for row, z in zip(self.features, self.labels):
            yield Sample(features=row, label=int(z))


@dataclass
class Partition:
    """Disjoint per-agent shards whose union is the source dataset."""

    shards: List[LabeledDataset]

    @property
    def n_agents(self) -> int:
        return len(self.shards)


def generate_gaussian_blobs(
    dim: int,
    n_per_class: tuple[int, int],
    centers: tuple[np.ndarray, np.ndarray],
    sigma: float,
    seed: int,
) -> LabeledDataset:
    """Two isotropic Gaussian blobs with a unit bias coordinate appended.

    ``dim`` counts the bias, so each center must have ``dim - 1``
    coordinates. Class c points are drawn around ``centers[c]`` with
    standard deviation ``sigma`` and labeled c. Deterministic given seed.
    """
    if dim < 2:
        raise ConfigError(f"need at least one feature plus the bias, got dim={dim}")
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    c0 = np.asarray(centers[0], dtype=np.float64)
    c1 = np.asarray(centers[1], dtype=np.float64)
    if c0.shape != (dim - 1,) or c1.shape != (dim - 1,):
        raise ConfigError(f"centers must have {dim - 1} coordinates each")
    if np.array_equal(c0, c1):
        raise ConfigError("blob centers must be distinct")
    if min(n_per_class) < 1:
        raise ConfigError("need at least one sample per class")

    rng = np.random.default_rng(seed)
    raw0 = c0 + sigma * rng.standard_normal((n_per_class[0], dim - 1))
    raw1 = c1 + sigma * rng.standard_normal((n_per_class[1], dim - 1))
    feats = np.vstack([raw0, raw1])
    feats = np.hstack([feats, np.ones((feats.shape[0], 1))])
    labels = np.concatenate([np.zeros(n_per_class[0], dtype=np.int64), np.ones(n_per_class[1], dtype=np.int64)])
    return LabeledDataset(features=feats, labels=labels)


def partition_iid(ds: LabeledDataset, n_agents: int, seed: int, max_retries: int = 100) -> Partition:
    """Shuffle and split into equal shards, each containing both classes.

    The sample count must divide evenly (equal shard sizes keep the
    unweighted global average meaningful). Reshuffles up to
    ``max_retries`` times if some shard ends up single-class.
    """
    if n_agents < 1:
        raise ConfigError(f"need at least one agent, got {n_agents}")
    if ds.n_samples % n_agents != 0:
        raise ConfigError(f"{ds.n_samples} samples not divisible into {n_agents} equal shards")
    shard_size = ds.n_samples // n_agents
    rng = np.random.default_rng(seed)

    for _ in range(max_retries):
        perm = rng.permutation(ds.n_samples)
        shards = []
        ok = True
        for i in range(n_agents):
            idx = perm[i * shard_size : (i + 1) * shard_size]
            shard = LabeledDataset(features=ds.features[idx], labels=ds.labels[idx])
            counts = shard.class_counts()
            if n_agents > 1 and min(counts) == 0 and min(ds.class_counts()) > 0:
                ok = False
                break
            shards.append(shard)
        if ok:
            return Partition(shards=shards)
    raise ConfigError(f"could not produce class-balanced shards after {max_retries} shuffles")


def save_csv(ds: LabeledDataset, path) -> None:
    """Write ``u_0..u_{m-1},z`` rows with 17-significant-digit floats."""
    path = Path(path)
    header = ",".join([f"u_{j}" for j in range(ds.dim)] + ["z"])
    lines = [header]
    for row, z in zip(ds.features, ds.labels):
        lines.append(",".join(f"{x:.17g}" for x in row) + f",{int(z)}")
    path.write_text("\n".join(lines) + "\n")


def load_csv(path) -> LabeledDataset:
    """Inverse of :func:`save_csv`; raises :class:`ParseError` with line numbers."""
    path = Path(path)
    text = path.read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() != ""]
    if not lines:
        raise ParseError("empty dataset file", line=1)
    header = lines[0].split(",")
    if header[-1] != "z" or any(h != f"u_{j}" for j, h in enumerate(header[:-1])):
        raise ParseError(f"bad header {lines[0]!r}", line=1)
    dim = len(header) - 1
    feats, labels = [], []
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != dim + 1:
            raise ParseError(f"expected {dim + 1} columns, got {len(parts)}", line=lineno)
        try:
            row = [float(p) for p in parts[:-1]]
        except ValueError as exc:
            raise ParseError(f"bad float: {exc}", line=lineno) from None
        if parts[-1] not in ("0", "1"):
            raise ParseError(f"label must be 0 or 1, got {parts[-1]!r}", line=lineno)
        feats.append(row)
        labels.append(int(parts[-1]))
    if not feats:
        raise ParseError("no data rows", line=1)
    return LabeledDataset(features=np.array(feats), labels=np.array(labels))
