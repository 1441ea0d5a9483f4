"""On-disk formats: headered CSV tables and JSON manifests.

Floats are written with ``repr`` (shortest round-tripping form), so a write
followed by a read returns the same doubles.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import CommunityPartition, MultiDataset

MANIFEST = "manifest.json"
PARTITION = "partition.csv"
TRUE_PANEL = "true_panel.csv"
TRUTH_LABELS = "truth_labels.csv"


class FormatError(ValueError):
    """Malformed input file; the message names the file and line."""


def predictor_names(p: int) -> list[str]:
    width = max(4, len(str(p)))
    return [f"g{j + 1:0{width}d}" for j in range(p)]


def _fmt(x) -> str:
    return repr(float(x))


def _write_rows(path: Path, header: list[str], rows) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_rows(path: Path, expect: list[str] | None = None):
    """Header plus ``(line_number, cells)`` pairs, checking column counts."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: file not found")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty file, expected a header line")
    header = [h.strip() for h in rows[0]]
    if expect is not None and header != expect:
        raise FormatError(f"{path}:1: header {header} does not match expected {expect}")
    body = []
    for i, cells in enumerate(rows[1:], start=2):
        if not cells:
            continue
        if len(cells) != len(header):
            raise FormatError(f"{path}:{i}: {len(cells)} cells but the header has {len(header)}")
        body.append((i, cells))
    return header, body


def _float(path, line, col, cell) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise FormatError(f"{path}:{line}: column {col!r} has non-numeric value {cell!r}") from None
    if not np.isfinite(v):
        raise FormatError(f"{path}:{line}: column {col!r} is not finite ({cell!r})")
    return v


def _int(path, line, col, cell) -> int:
    try:
        return int(cell)
    except ValueError:
        raise FormatError(f"{path}:{line}: column {col!r} must be an integer, got {cell!r}") from None


# -- numeric tables -----------------------------------------------------------

def write_matrix(path, X: np.ndarray) -> None:
    X = np.asarray(X, dtype=float)
    _write_rows(path, predictor_names(X.shape[1]), ([_fmt(v) for v in row] for row in X.tolist()))


def read_matrix(path) -> np.ndarray:
    header, body = _read_rows(path)
    if header != predictor_names(len(header)):
        raise FormatError(f"{path}:1: predictor columns must be named {predictor_names(len(header))[0]}..")
    out = np.empty((len(body), len(header)))
    for r, (line, cells) in enumerate(body):
        out[r] = [_float(path, line, h, c) for h, c in zip(header, cells)]
    return out


def write_response(path, y: np.ndarray) -> None:
    _write_rows(path, ["y"], ([_fmt(v)] for v in np.asarray(y, dtype=float).tolist()))


def read_response(path) -> np.ndarray:
    _, body = _read_rows(path, ["y"])
    return np.array([_float(path, line, "y", cells[0]) for line, cells in body])


def write_partition(path, partition: CommunityPartition) -> None:
    names = predictor_names(partition.p)
    _write_rows(path, ["predictor", "community"],
                ([n, str(int(g) + 1)] for n, g in zip(names, partition.assignment.tolist())))


def read_partition(path, p: int | None = None) -> CommunityPartition:
    """Community ids are 1-based and must cover 1..L without gaps."""
    _, body = _read_rows(path, ["predictor", "community"])
    names = predictor_names(len(body))
    ids = []
    for (line, (name, cid)), want in zip(body, names):
        if name.strip() != want:
            raise FormatError(f"{path}:{line}: expected predictor {want}, got {name!r}")
        c = _int(path, line, "community", cid)
        if c < 1:
            raise FormatError(f"{path}:{line}: unknown community id {c} (ids start at 1)")
        ids.append(c)
    if p is not None and len(ids) != p:
        raise FormatError(f"{path}: {len(ids)} predictors listed but the data have {p}")
    L = max(ids) if ids else 0
    missing = sorted(set(range(1, L + 1)) - set(ids))
    if missing:
        line = 1 + next(i for i, c in enumerate(ids, start=1) if c == L)
        raise FormatError(f"{path}:{line}: unknown community id {L}; ids {missing} never appear")
    return CommunityPartition(np.array(ids) - 1, L)


def write_panel(path, panel: np.ndarray) -> None:
    panel = np.asarray(panel, dtype=float)
    K = panel.shape[1]
    header = ["predictor"] + [f"beta_k{k + 1}" for k in range(K)]
    names = predictor_names(panel.shape[0])
    _write_rows(path, header, ([n] + [_fmt(v) for v in row] for n, row in zip(names, panel.tolist())))


def read_panel(path) -> np.ndarray:
    header, body = _read_rows(path)
    K = len(header) - 1
    if K < 1 or header != ["predictor"] + [f"beta_k{k + 1}" for k in range(K)]:
        raise FormatError(f"{path}:1: expected columns predictor,beta_k1..beta_kK, got {header}")
    names = predictor_names(len(body))
    out = np.empty((len(body), K))
    for r, (line, cells) in enumerate(body):
        if cells[0].strip() != names[r]:
            raise FormatError(f"{path}:{line}: expected predictor {names[r]}, got {cells[0]!r}")
        out[r] = [_float(path, line, h, c) for h, c in zip(header[1:], cells[1:])]
    return out


def write_labels(path, labels: np.ndarray) -> None:
    """Commonality labels, one row per community and adjacent dataset pair."""
    labels = np.asarray(labels, dtype=bool)
    rows = ([str(l + 1), str(k + 1), str(k + 2), "1" if labels[l, k] else "0"]
            for l in range(labels.shape[0]) for k in range(labels.shape[1]))
    _write_rows(path, ["community", "dataset_a", "dataset_b", "common"], rows)


def read_labels(path) -> np.ndarray:
    _, body = _read_rows(path, ["community", "dataset_a", "dataset_b", "common"])
    cells = [(line, [_int(path, line, "value", c) for c in row]) for line, row in body]
    if not cells:
        return np.zeros((0, 0), dtype=bool)
    L = max(r[0] for _, r in cells)
    K1 = max(r[1] for _, r in cells)
    out = np.zeros((L, K1), dtype=bool)
    seen = np.zeros((L, K1), dtype=bool)
    for line, (l, a, b, c) in cells:
        if l < 1 or a < 1 or b != a + 1 or c not in (0, 1):
            raise FormatError(f"{path}:{line}: invalid label row {(l, a, b, c)}")
        out[l - 1, a - 1] = c == 1
        seen[l - 1, a - 1] = True
    if not seen.all():
        raise FormatError(f"{path}: label table is incomplete")
    return out


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise FormatError(f"{path}: file not found") from None
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}:{e.lineno}: {e.msg}") from None


def write_table(path, rows: list[dict]) -> None:
    """Generic headered CSV of dicts; floats via ``repr``, None as empty."""
    if not rows:
        _write_rows(path, [], [])
        return
    header = list(rows[0])

    def cell(v):
        if v is None:
            return ""
        if isinstance(v, (bool, np.bool_)):
            return "1" if v else "0"
        if isinstance(v, (float, np.floating)):
            return _fmt(v)
        return str(v)

    _write_rows(path, header, ([cell(r[h]) for h in header] for r in rows))


# -- scenario directories ----------------------------------------------------

@dataclass
class DataDir:
    data: MultiDataset
    partition: CommunityPartition
    true_panel: np.ndarray | None = None
    labels: np.ndarray | None = None
    manifest: dict | None = None


def save_replicate(directory, data: MultiDataset, partition: CommunityPartition,
                   true_panel=None, labels=None) -> list[str]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for k in range(data.K):
        write_matrix(directory / f"X_{k + 1}.csv", data.X[k])
        write_response(directory / f"y_{k + 1}.csv", data.y[k])
        written += [f"X_{k + 1}.csv", f"y_{k + 1}.csv"]
    write_partition(directory / PARTITION, partition)
    written.append(PARTITION)
    if true_panel is not None:
        write_panel(directory / TRUE_PANEL, true_panel)
        written.append(TRUE_PANEL)
    if labels is not None:
        write_labels(directory / TRUTH_LABELS, labels)
        written.append(TRUTH_LABELS)
    return written


def load_replicate(directory) -> DataDir:
    """Read ``X_k.csv``/``y_k.csv`` for k = 1, 2, ... plus partition and optional truth."""
    directory = Path(directory)
    X, y = [], []
    k = 1
    while (directory / f"X_{k}.csv").exists():
        X.append(read_matrix(directory / f"X_{k}.csv"))
        y.append(read_response(directory / f"y_{k}.csv"))
        if X[-1].shape[0] != y[-1].shape[0]:
            raise FormatError(f"{directory}/y_{k}.csv: {y[-1].shape[0]} responses for "
                              f"{X[-1].shape[0]} design rows")
        k += 1
    if not X:
        raise FormatError(f"{directory}: no X_1.csv found")
    if len({Xk.shape[1] for Xk in X}) != 1:
        raise FormatError(f"{directory}: datasets have different numbers of predictors")
    data = MultiDataset(X, y)
    partition = read_partition(directory / PARTITION, data.p)
    truth = read_panel(directory / TRUE_PANEL) if (directory / TRUE_PANEL).exists() else None
    labels = read_labels(directory / TRUTH_LABELS) if (directory / TRUTH_LABELS).exists() else None
    manifest = read_json(directory / MANIFEST) if (directory / MANIFEST).exists() else None
    return DataDir(data, partition, truth, labels, manifest)
