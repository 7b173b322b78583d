"""CSV and JSON writers for distributions, paths, matrices and approximate geodesics.

CSV output has a header row, follows RFC 4180 quoting and prints floats
with 17 significant digits so values round-trip exactly.  Every writer has
a JSON twin with the same field names.
"""

from __future__ import annotations

import csv
import io
import json

import numpy as np

from .errors import DomainError
from .forest import mask_leaves
from .riemann import GeodesicPath
from .twostate import CharacterDistribution

FLOAT_FORMAT = "{:.17g}"


def fmt(x) -> str:
    """Float with 17 significant digits (``inf``/``nan`` spelled out)."""
    return FLOAT_FORMAT.format(float(x))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=True) + "\n"


def _float_list(a):
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


# ---------------------------------------------------------------------------
# character distributions


def distribution_rows(dist: CharacterDistribution):
    bits = dist.bits()
    return [
        {"index": i, "bits": "".join(str(int(b)) for b in bits[i]), "prob": float(p)}
        for i, p in enumerate(dist.probs)
    ]


def distribution_csv(dist: CharacterDistribution) -> str:
    """Columns ``index, bits, prob``; ``bits`` lists leaf 1 first."""
    rows = distribution_rows(dist)
    return _csv(["index", "bits", "prob"], [[r["index"], r["bits"], fmt(r["prob"])] for r in rows])


def distribution_json(dist: CharacterDistribution) -> str:
    return _json({"n_leaves": dist.n_leaves, "rows": distribution_rows(dist)})


# ---------------------------------------------------------------------------
# shot geodesics


def path_header(dim: int) -> list[str]:
    return ["t", *[f"x_{i + 1}" for i in range(dim)], "cumlen", "termination"]


def path_csv(path: GeodesicPath) -> str:
    """Columns ``t, x_1..x_d, cumlen, termination``.  The termination reason
    is written on the last row only."""
    n, d = path.x.shape
    rows = []
    for k in range(n):
        term = path.termination if k == n - 1 else ""
        rows.append([fmt(path.t[k]), *(fmt(v) for v in path.x[k]), fmt(path.cumulative_length[k]), term])
    return _csv(path_header(d), rows)


def path_json(path: GeodesicPath) -> str:
    return _json(
        {
            "parametrization": path.parametrization,
            "termination": path.termination,
            "t": _float_list(path.t),
            "x": [_float_list(row) for row in path.x],
            "cumlen": _float_list(path.cumulative_length),
        }
    )


# ---------------------------------------------------------------------------
# matrices


def matrix_csv(M, labels=None) -> str:
    """Square matrix, row-major.  The header row holds ``labels`` (default
    ``1..n``)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DomainError("expected a 2-D matrix")
    labels = [str(i + 1) for i in range(M.shape[1])] if labels is None else [str(x) for x in labels]
    return _csv(labels, [[fmt(v) for v in row] for row in M])


def matrix_json(M, labels=None) -> str:
    M = np.asarray(M, dtype=float)
    labels = [str(i + 1) for i in range(M.shape[1])] if labels is None else [str(x) for x in labels]
    return _json({"labels": labels, "matrix": [_float_list(row) for row in M]})


def read_matrix_csv(text: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DomainError("empty matrix file")
    body = rows[1:] if _is_header(rows[0]) else rows
    M = np.array([[float(v) for v in r] for r in body if r], dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError("matrix file is not square")
    return M


def _is_header(row) -> bool:
    try:
        [float(v) for v in row]
    except ValueError:
        return True
    # an all-integer first row of 1..n is the default label header
    return all(v.strip().isdigit() for v in row) and [int(v) for v in row] == list(range(1, len(row) + 1))


# ---------------------------------------------------------------------------
# approximate geodesics


def _topology_table(points):
    ids, table = {}, []
    for w in points:
        key = w.topology
        if key not in ids:
            ids[key] = len(table)
            table.append(
                {
                    "id": ids[key],
                    "splits": w.topology.split_strings(),
                    "components": [mask_leaves(c) for c in w.components],
                }
            )
    return ids, table


def geodesic_rows(approx):
    ids, table = _topology_table(approx.points)
    seg = np.concatenate([[0.0], np.asarray(approx.segment_lengths, dtype=float)])
    cum = np.cumsum(seg)
    rows = [
        {"index": i, "topology": ids[w.topology], "lambda": _float_list(w.lam), "seglen": float(seg[i]),
         "cumlen": float(cum[i])}
        for i, w in enumerate(approx.points)
    ]
    return rows, table


def geodesic_csv(approx) -> tuple[str, str]:
    """Rows ``index, topology-id, lambda_1..lambda_m, seglen, cumlen`` and the
    JSON sidecar mapping topology ids to split sets.

    ``seglen`` is the length of the segment ending at the row's point, so the
    first row has ``seglen = 0``.  Rows are padded to the widest topology.
    """
    rows, table = geodesic_rows(approx)
    width = max(len(r["lambda"]) for r in rows)
    header = ["index", "topology-id", *[f"lambda_{i + 1}" for i in range(width)], "seglen", "cumlen"]
    body = []
    for r in rows:
        lam = [fmt(v) for v in r["lambda"]] + [""] * (width - len(r["lambda"]))
        body.append([r["index"], r["topology"], *lam, fmt(r["seglen"]), fmt(r["cumlen"])])
    return _csv(header, body), _json({"topologies": table})


def geodesic_json(approx) -> str:
    rows, table = geodesic_rows(approx)
    return _json({"total_length": float(approx.total_length), "rows": rows, "topologies": table})
