"""Multiplex network containers, validation and file I/O.

A multiplex is an ordered list of square adjacency matrices on a shared node
set. Files on disk are either an edge list (``layer,i,j,w`` with 1-based
indices) or adjacency CSVs (one ``<label>.csv`` per layer), optionally with a
``manifest.json`` describing N, M, directedness, family and labels.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import shortest_path

BINARY = "binary"
COUNT = "count"

MANIFEST_NAME = "manifest.json"
EDGE_LIST_NAME = "edges.csv"


class ValidationError(ValueError):
    """Raised when network data violates a structural invariant."""


class ParseError(ValueError):
    """Raised when a data file cannot be parsed into integer weights."""


def infer_family(weights: np.ndarray) -> str:
    return BINARY if np.all((weights == 0) | (weights == 1)) else COUNT


@dataclass(frozen=True)
class Network:
    weights: np.ndarray
    directed: bool = False
    family: str = ""

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValidationError(f"adjacency must be square, got shape {w.shape}")
        if w.size and not np.issubdtype(w.dtype, np.integer):
            if not np.all(np.isfinite(w)) or np.any(w != np.round(w)):
                raise ParseError("edge weights must be integers")
        w = w.astype(np.int64)
        if np.any(w < 0):
            raise ParseError("edge weights must be non-negative")
        if np.any(np.diag(w) != 0):
            raise ValidationError("self-loops are not allowed (non-zero diagonal)")
        if not self.directed and not np.array_equal(w, w.T):
            raise ValidationError("undirected network has an asymmetric adjacency matrix")
        family = self.family or infer_family(w)
        if family not in (BINARY, COUNT):
            raise ValidationError(f"unknown edge family {family!r}")
        if family == BINARY and np.any(w > 1):
            raise ValidationError("binary network has entries outside {0, 1}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "family", family)

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]

    def binarized(self) -> np.ndarray:
        return (self.weights > 0).astype(np.int64)


@dataclass(frozen=True)
class Multiplex:
    networks: tuple
    labels: tuple = field(default=())

    def __post_init__(self):
        nets = tuple(self.networks)
        if len(nets) < 1:
            raise ValidationError("a multiplex needs at least one network")
        n = nets[0].n_nodes
        directed = nets[0].directed
        for net in nets:
            if net.n_nodes != n:
                raise ValidationError("all networks must share the same node set")
            if net.directed != directed:
                raise ValidationError("mixed directedness in multiplex")
        # family is a multiplex-level property: count if any layer has counts
        family = COUNT if any(net.family == COUNT for net in nets) else BINARY
        nets = tuple(
            net if net.family == family else Network(net.weights, net.directed, family)
            for net in nets
        )
        labels = tuple(self.labels) if self.labels else tuple(f"layer{m + 1}" for m in range(len(nets)))
        if len(labels) != len(nets):
            raise ValidationError("number of labels does not match number of networks")
        if len(set(labels)) != len(labels):
            raise ValidationError("layer labels must be unique")
        object.__setattr__(self, "networks", nets)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_arrays(cls, arrays: Iterable[np.ndarray], directed: bool = False,
                    labels: Sequence[str] = (), family: str = "") -> "Multiplex":
        arrays = [np.asarray(a) for a in arrays]
        if not family:
            family = COUNT if any(infer_family(a) == COUNT for a in arrays) else BINARY
        return cls(tuple(Network(a, directed, family) for a in arrays), tuple(labels))

    @property
    def n_nodes(self) -> int:
        return self.networks[0].n_nodes

    @property
    def n_networks(self) -> int:
        return len(self.networks)

    @property
    def directed(self) -> bool:
        return self.networks[0].directed

    @property
    def family(self) -> str:
        return self.networks[0].family

    def stack(self) -> np.ndarray:
        """Return an ``(M, N, N)`` integer array of all layers."""
        return np.stack([net.weights for net in self.networks])

    def __len__(self) -> int:
        return self.n_networks

    def __getitem__(self, m: int) -> Network:
        return self.networks[m]


def dyad_indices(n_nodes: int, directed: bool) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices of the dyads that enter the likelihood.

    Directed networks use every ordered pair i != j; undirected networks use
    each unordered pair once (i < j).
    """
    if directed:
        rows, cols = np.nonzero(~np.eye(n_nodes, dtype=bool))
        return rows, cols
    return np.triu_indices(n_nodes, k=1)


def dyad_iterator(net: Network):
    """Yield the (i, j) dyads of ``net`` as 0-based index pairs."""
    rows, cols = dyad_indices(net.n_nodes, net.directed)
    return list(zip(rows.tolist(), cols.tolist()))


def geodesic_distance_matrix(net: Network) -> np.ndarray:
    """Hop-count shortest paths on the binarized graph.

    Unreachable pairs are set to (largest finite off-diagonal distance + 1) so
    the matrix stays usable as MDS input.
    """
    adj = net.binarized()
    dist = shortest_path(adj, method="D", directed=net.directed, unweighted=True)
    finite = np.isfinite(dist)
    off = finite & ~np.eye(net.n_nodes, dtype=bool)
    max_finite = dist[off].max() if off.any() else 0.0
    dist[~finite] = max_finite + 1.0
    np.fill_diagonal(dist, 0.0)
    return dist


# ---------------------------------------------------------------------------
# file I/O


def _read_manifest(directory: Path) -> dict | None:
    path = directory / MANIFEST_NAME
    if path.exists():
        with open(path) as fh:
            return json.load(fh)
    return None


def _parse_int(token: str, where: str) -> int:
    token = token.strip()
    try:
        value = float(token)
    except ValueError as exc:
        raise ParseError(f"{where}: cannot parse {token!r} as a number") from exc
    if not np.isfinite(value) or value != int(value):
        raise ParseError(f"{where}: weight {token!r} is not an integer")
    if value < 0:
        raise ParseError(f"{where}: negative weight {token!r}")
    return int(value)


def _load_edge_list(path: Path, directed: bool, n_nodes: int | None,
                    n_layers: int | None) -> list[np.ndarray]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, rec in enumerate(reader, start=1):
            if not rec or rec[0].strip().startswith("#"):
                continue
            if rec[0].strip().lower() == "layer":
                continue
            if len(rec) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 fields (layer,i,j,w)")
            layer, i, j = (_parse_int(t, f"{path}:{lineno}") for t in rec[:3])
            w = _parse_int(rec[3], f"{path}:{lineno}")
            rows.append((layer, i, j, w))
    if n_nodes is None:
        n_nodes = max((max(r[1], r[2]) for r in rows), default=0)
    if n_layers is None:
        n_layers = max((r[0] for r in rows), default=1)
    mats = [np.zeros((n_nodes, n_nodes), dtype=np.int64) for _ in range(n_layers)]
    seen = [dict() for _ in range(n_layers)]
    for layer, i, j, w in rows:
        if not (1 <= layer <= n_layers and 1 <= i <= n_nodes and 1 <= j <= n_nodes):
            raise ParseError(f"edge ({layer},{i},{j}) out of range for M={n_layers}, N={n_nodes}")
        if i == j:
            if w != 0:
                raise ValidationError(f"self-loop on node {i} in layer {layer}")
            continue
        key = (i, j) if directed else (min(i, j), max(i, j))
        prev = seen[layer - 1].get(key)
        if prev is not None and prev != w:
            if directed:
                raise ParseError(f"conflicting duplicate edge {key} in layer {layer}")
            raise ValidationError(f"asymmetric weights for dyad {key} in layer {layer}")
        seen[layer - 1][key] = w
        mats[layer - 1][i - 1, j - 1] = w
        if not directed:
            mats[layer - 1][j - 1, i - 1] = w
    return mats


def _read_matrix_rows(lines: list[str], where: str) -> np.ndarray:
    data = [[_parse_int(tok, where) for tok in line.split(",")] for line in lines]
    return np.array(data, dtype=np.int64).reshape(len(data), -1) if data else np.zeros((0, 0), np.int64)


def _load_adjacency(path: Path, labels: Sequence[str] | None) -> tuple[list[np.ndarray], list[str]]:
    if path.is_dir():
        if labels is None:
            labels = sorted(p.stem for p in path.glob("*.csv") if p.name != EDGE_LIST_NAME)
        mats = []
        for label in labels:
            file = path / f"{label}.csv"
            with open(file) as fh:
                lines = [ln.strip() for ln in fh if ln.strip()]
            mats.append(_read_matrix_rows(lines, str(file)))
        return mats, list(labels)
    # stacked file: layers separated by '#'-prefixed header lines or blank lines
    mats, found_labels, block, label = [], [], [], None
    with open(path) as fh:
        lines = fh.read().splitlines()
    for line in lines + [""]:
        text = line.strip()
        if text.startswith("#") or not text:
            if block:
                mats.append(_read_matrix_rows(block, str(path)))
                found_labels.append(label or f"layer{len(mats)}")
                block, label = [], None
            if text.startswith("#"):
                label = text[1:].strip() or None
            continue
        block.append(text)
    return mats, list(labels) if labels else found_labels


def load_multiplex(path, format: str = "edge-list", directed: bool | None = None,
                   n_nodes: int | None = None, n_layers: int | None = None,
                   labels: Sequence[str] | None = None) -> Multiplex:
    """Load and validate a multiplex.

    ``path`` may be a data directory (holding ``manifest.json`` and either
    ``edges.csv`` or per-layer adjacency files) or a single file. Manifest
    entries fill in any argument left as ``None``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    manifest = _read_manifest(path if path.is_dir() else path.parent)
    if manifest:
        directed = manifest.get("directed", directed) if directed is None else directed
        n_nodes = n_nodes or manifest.get("n_nodes")
        n_layers = n_layers or manifest.get("n_networks")
        labels = labels or manifest.get("labels")
        format = manifest.get("format", format)
    directed = bool(directed)
    family = manifest.get("family", "") if manifest else ""

    if format == "edge-list":
        file = path / EDGE_LIST_NAME if path.is_dir() else path
        mats = _load_edge_list(file, directed, n_nodes, n_layers)
    elif format == "adjacency-csv":
        mats, labels = _load_adjacency(path, labels)
        if not directed:
            for m, mat in enumerate(mats):
                if not np.array_equal(mat, mat.T):
                    raise ValidationError(f"layer {m + 1} is asymmetric but directed=false")
    else:
        raise ValueError(f"unknown format {format!r}")
    return Multiplex.from_arrays(mats, directed=directed, labels=labels or (), family=family)


def save_multiplex(mx: Multiplex, directory, format: str = "edge-list") -> Path:
    """Write ``mx`` plus a manifest into ``directory``; returns the directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if format == "edge-list":
        with open(directory / EDGE_LIST_NAME, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["layer", "i", "j", "w"])
            for m, net in enumerate(mx.networks, start=1):
                rows, cols = dyad_indices(mx.n_nodes, mx.directed)
                w = net.weights[rows, cols]
                for i, j, val in zip(rows[w > 0], cols[w > 0], w[w > 0]):
                    writer.writerow([m, i + 1, j + 1, int(val)])
    elif format == "adjacency-csv":
        for label, net in zip(mx.labels, mx.networks):
            np.savetxt(directory / f"{label}.csv", net.weights, fmt="%d", delimiter=",")
    else:
        raise ValueError(f"unknown format {format!r}")
    manifest = {
        "n_nodes": mx.n_nodes,
        "n_networks": mx.n_networks,
        "directed": mx.directed,
        "family": mx.family,
        "labels": list(mx.labels),
        "format": format,
    }
    with open(directory / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, indent=2)
    return directory


def multiplex_equal(a: Multiplex, b: Multiplex) -> bool:
    return (
        a.labels == b.labels
        and a.directed == b.directed
        and a.family == b.family
        and a.n_networks == b.n_networks
        and all(np.array_equal(x.weights, y.weights) for x, y in zip(a.networks, b.networks))
    )


def data_digest(directory) -> str:
    """SHA-256 over the data files in ``directory`` (sorted by name)."""
    h = hashlib.sha256()
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.is_file()) if directory.is_dir() else [directory]
    for p in files:
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


__all__ = [
    "BINARY", "COUNT", "Network", "Multiplex", "ValidationError", "ParseError",
    "dyad_indices", "dyad_iterator", "geodesic_distance_matrix", "load_multiplex",
    "save_multiplex", "multiplex_equal", "data_digest", "infer_family",
]
