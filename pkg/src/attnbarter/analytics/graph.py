"""Directed follow graph with compressed adjacency and reciprocity statistics."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from ..errors import DataError


class GraphWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FollowGraph:
    """Immutable follow graph; ``src[k]`` follows ``dst[k]``.

    Node ids are dense integers mapped to the string ids in ``ids``. Edges are
    sorted by (src, dst) and unique; ``mutual[k]`` marks edges whose reverse
    edge also exists.
    """

    ids: tuple[str, ...]
    src: np.ndarray
    dst: np.ndarray
    mutual: np.ndarray = field(repr=False)
    out_ptr: np.ndarray = field(repr=False)
    in_ptr: np.ndarray = field(repr=False)
    in_src: np.ndarray = field(repr=False)
    diagnostics: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_index_pairs(cls, ids, src, dst, diagnostics=None) -> "FollowGraph":
        """Build from integer endpoint arrays; drops self-loops and duplicates."""
        ids = tuple(str(i) for i in ids)
        n = len(ids)
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        diag = dict(diagnostics or {})
        keep = src != dst
        diag["self_loops"] = diag.get("self_loops", 0) + int((~keep).sum())
        keys = src[keep] * n + dst[keep]
        uniq = np.unique(keys)
        diag["duplicates"] = diag.get("duplicates", 0) + int(keys.size - uniq.size)
        src, dst = uniq // n, uniq % n
        rev = dst * n + src
        pos = np.searchsorted(uniq, rev)
        pos = np.minimum(pos, max(uniq.size - 1, 0))
        mutual = uniq[pos] == rev if uniq.size else np.zeros(0, dtype=bool)
        out_ptr = np.concatenate([[0], np.cumsum(np.bincount(src, minlength=n))])
        order = np.lexsort((src, dst))
        in_ptr = np.concatenate([[0], np.cumsum(np.bincount(dst, minlength=n))])
        graph = cls(ids, src, dst, mutual, out_ptr, in_ptr, src[order], diag)
        return graph

    @classmethod
    def from_edges(cls, pairs, nodes=()) -> "FollowGraph":
        """Build from (src_id, dst_id) pairs; ``nodes`` adds isolated ids."""
        pairs = list(pairs)
        s = [str(a) for a, _ in pairs]
        d = [str(b) for _, b in pairs]
        return _from_id_arrays(np.array(s, dtype=object), np.array(d, dtype=object), nodes)

    @property
    def n_nodes(self) -> int:
        return len(self.ids)

    @property
    def n_edges(self) -> int:
        return int(self.src.size)

    def index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.ids)}

    def followees(self, i: int) -> np.ndarray:
        return self.dst[self.out_ptr[i] : self.out_ptr[i + 1]]

    def followers(self, i: int) -> np.ndarray:
        return self.in_src[self.in_ptr[i] : self.in_ptr[i + 1]]

    def out_degree(self) -> np.ndarray:
        return np.diff(self.out_ptr)

    def in_degree(self) -> np.ndarray:
        return np.diff(self.in_ptr)

    def reciprocal_degree(self) -> np.ndarray:
        return np.bincount(self.src[self.mutual], minlength=self.n_nodes)

    def subgraph(self, keep_ids) -> "FollowGraph":
        """Induced subgraph on ``keep_ids`` (ids absent from the graph are isolated nodes)."""
        keep_ids = sorted(set(str(k) for k in keep_ids))
        old = self.index()
        new_of_old = np.full(self.n_nodes, -1, dtype=np.int64)
        for new, name in enumerate(keep_ids):
            if name in old:
                new_of_old[old[name]] = new
        s, d = new_of_old[self.src], new_of_old[self.dst]
        ok = (s >= 0) & (d >= 0)
        return FollowGraph.from_index_pairs(keep_ids, s[ok], d[ok])

    def is_consistent(self) -> bool:
        """Out- and in-adjacency describe the same edge set."""
        if self.out_degree().sum() != self.in_degree().sum():
            return False
        rebuilt = np.sort(self.in_src * self.n_nodes + np.repeat(np.arange(self.n_nodes), self.in_degree()))
        return bool(np.array_equal(rebuilt, self.src * self.n_nodes + self.dst))


def _from_id_arrays(src_ids, dst_ids, nodes=(), diagnostics=None) -> FollowGraph:
    """Graph from string endpoint arrays; ids are stripped and sorted."""
    m = len(src_ids)
    raw = np.concatenate(
        [
            np.asarray(src_ids, dtype=object),
            np.asarray(dst_ids, dtype=object),
            np.asarray([str(v) for v in nodes], dtype=object),
        ]
    )
    # factorize raw strings first, then clean only the distinct values
    codes, uniques = pd.factorize(raw)
    cleaned = np.array([str(u).strip() for u in uniques], dtype=object)
    final, names = pd.factorize(cleaned, sort=True)
    codes = final[codes] if codes.size else codes
    return FollowGraph.from_index_pairs([str(u) for u in names], codes[:m], codes[m : 2 * m], diagnostics)


def load_edges(path, has_header: bool = False, strict: bool = False, nodes=()) -> FollowGraph:
    """Read a comma-separated ``src,dst`` edge list (an optional third ``kind`` column is ignored).

    Malformed lines are reported with their 1-based line numbers; ``strict``
    turns them into a :class:`DataError`, otherwise they are skipped with a
    warning. Duplicate edges and self-loops are dropped with a warning.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"edge file not found: {path}")
    try:
        frame = pd.read_csv(
            path,
            header=None,
            names=["src", "dst", "kind"],
            dtype=str,
            skiprows=1 if has_header else 0,
            skip_blank_lines=False,
            keep_default_na=False,
            na_filter=True,
            engine="c",
        )
        src, dst, malformed = _screen_rows(frame, 2 if has_header else 1)
    except pd.errors.ParserError:
        src, dst, malformed = _load_edges_slow(path, has_header)
    except pd.errors.EmptyDataError:
        src, dst, malformed = np.array([], dtype=object), np.array([], dtype=object), []
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read edge file {path}: {exc}") from exc
    if malformed:
        shown = ", ".join(str(k) for k in malformed[:20])
        msg = f"{path}: {len(malformed)} malformed line(s) at line {shown}"
        if strict:
            raise DataError(msg)
        warnings.warn(msg, GraphWarning, stacklevel=2)
    graph = _from_id_arrays(src, dst, nodes, {"malformed_lines": len(malformed)})
    for key in ("duplicates", "self_loops"):
        if graph.diagnostics[key]:
            warnings.warn(f"{path}: dropped {graph.diagnostics[key]} {key.replace('_', '-')}", GraphWarning, stacklevel=2)
    return graph


def _empty_mask(column: pd.Series) -> np.ndarray:
    """Rows whose cell is missing or whitespace, testing each distinct value once."""
    codes, uniques = pd.factorize(column, use_na_sentinel=True)
    blank_u = np.array([not str(u).strip() for u in uniques], dtype=bool)
    out = codes < 0
    has = ~out
    out[has] = blank_u[codes[has]]
    return out


def _screen_rows(frame: pd.DataFrame, first_line: int):
    empty_s = _empty_mask(frame["src"])
    empty_d = _empty_mask(frame["dst"])
    bad = empty_s | empty_d
    idx = np.flatnonzero(bad)
    kind_empty = frame["kind"].iloc[idx].fillna("").str.strip().eq("").to_numpy()
    blank = empty_s[idx] & empty_d[idx] & kind_empty
    malformed = [int(k) + first_line for k in idx[~blank]]
    ok = ~bad
    return frame["src"].to_numpy(dtype=object)[ok], frame["dst"].to_numpy(dtype=object)[ok], malformed


def _load_edges_slow(path: Path, has_header: bool):
    src, dst, malformed = [], [], []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if has_header and lineno == 1:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) not in (2, 3) or not row[0].strip() or not row[1].strip():
                malformed.append(lineno)
                continue
            src.append(row[0].strip())
            dst.append(row[1].strip())
    return np.array(src, dtype=object), np.array(dst, dtype=object), malformed


STAT_COLUMNS = (
    "id",
    "followers",
    "followees",
    "ratio",
    "reciprocal",
    "recip_over_followers",
    "recip_over_followees",
)


@dataclass(frozen=True)
class NetworkStats:
    """Per-node counts; undefined ratios are NaN and tallied in ``diagnostics``."""

    ids: tuple[str, ...]
    followers: np.ndarray
    followees: np.ndarray
    ratio: np.ndarray
    reciprocal: np.ndarray
    recip_over_followers: np.ndarray
    recip_over_followees: np.ndarray
    diagnostics: dict

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({name: getattr(self, name) for name in STAT_COLUMNS})

    def row_values(self, k: int) -> tuple:
        return (self.ids[k], *(getattr(self, name)[k] for name in STAT_COLUMNS[1:]))

    def row(self, node_id: str) -> dict:
        k = self.ids.index(str(node_id))
        return {name: (getattr(self, name)[k] if name != "id" else self.ids[k]) for name in STAT_COLUMNS}


def _safe_div(num, den):
    out = np.full(num.shape, np.nan)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


def network_stats(graph: FollowGraph) -> NetworkStats:
    fol = graph.in_degree()
    fee = graph.out_degree()
    rec = graph.reciprocal_degree()
    diag = {
        "ratio_undefined": int((fee == 0).sum()),
        "recip_over_followers_undefined": int((fol == 0).sum()),
        "recip_over_followees_undefined": int((fee == 0).sum()),
    }
    return NetworkStats(
        graph.ids,
        fol,
        fee,
        _safe_div(fol.astype(float), fee),
        rec,
        _safe_div(rec.astype(float), fol),
        _safe_div(rec.astype(float), fee),
        diag,
    )
