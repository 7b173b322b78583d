import csv
import io
import json

import numpy as np
import pytest

from waldspace import io as wio
from waldspace.errors import DomainError
from waldspace.forest import read_wald
from waldspace.projection import symmetrized_geodesic
from waldspace.riemann import EuclideanMetric, shoot_geodesic
from waldspace.twostate import full_distribution


def rows_of(text):
    return list(csv.reader(io.StringIO(text)))


def test_floats_round_trip_exactly():
    rng = np.random.default_rng(0)
    for x in rng.standard_normal(200) * 10.0 ** rng.integers(-8, 8, 200):
        assert float(wio.fmt(x)) == x
    assert wio.fmt(np.inf) == "inf"


def test_distribution_csv_and_json():
    d = full_distribution(read_wald("(1:0,2:0.5)", weights="lambda"))
    text = wio.distribution_csv(d)
    assert text.endswith("\r\n")
    rows = rows_of(text)
    assert rows[0] == ["index", "bits", "prob"]
    assert rows[2] == ["1", "10", "0.125"]
    obj = json.loads(wio.distribution_json(d))
    assert obj["rows"][1] == {"index": 1, "bits": "10", "prob": 0.125}


def test_path_csv_termination_on_last_row():
    p = shoot_geodesic(EuclideanMetric(2), [0.0, 0.0], [1.0, 0.0], step_dt=0.25, max_time=1.0)
    rows = rows_of(wio.path_csv(p))
    assert rows[0] == ["t", "x_1", "x_2", "cumlen", "termination"]
    assert [r[-1] for r in rows[1:-1]] == [""] * (len(rows) - 2)
    assert rows[-1][-1] == "reached_time"
    assert float(rows[-1][3]) == pytest.approx(1.0)
    obj = json.loads(wio.path_json(p))
    assert obj["termination"] == "reached_time" and len(obj["x"]) == len(rows) - 1


@pytest.mark.parametrize("labels", [None, ["a", "b", "c"]])
def test_matrix_csv_round_trip(labels):
    M = np.random.default_rng(1).standard_normal((3, 3))
    text = wio.matrix_csv(M, labels)
    assert rows_of(text)[0] == (labels or ["1", "2", "3"])
    np.testing.assert_array_equal(wio.read_matrix_csv(text), M)


def test_read_matrix_without_header():
    np.testing.assert_array_equal(wio.read_matrix_csv("1,0.5\n0.5,1\n"), [[1, 0.5], [0.5, 1]])
    with pytest.raises(DomainError):
        wio.read_matrix_csv("1,2,3\n4,5,6\n")
    with pytest.raises(DomainError):
        wio.read_matrix_csv("")


def test_geodesic_csv_with_sidecar():
    a = read_wald("((1:1,2:1):0.5,3:1,4:1)")
    b = read_wald("((1:1,3:1):0.5,2:1,4:1)")
    g = symmetrized_geodesic(a, b, k=4)
    text, sidecar = wio.geodesic_csv(g)
    rows = rows_of(text)
    assert rows[0][:2] == ["index", "topology-id"] and rows[0][-2:] == ["seglen", "cumlen"]
    assert len(rows) == len(g.points) + 1
    assert float(rows[1][-2]) == 0.0
    assert float(rows[-1][-1]) == pytest.approx(g.total_length, rel=1e-14)
    table = json.loads(sidecar)["topologies"]
    ids = {int(r[1]) for r in rows[1:]}
    assert ids == {t["id"] for t in table}
    assert len(table) >= 2
    obj = json.loads(wio.geodesic_json(g))
    assert obj["total_length"] == pytest.approx(g.total_length)
