import json
import math

import numpy as np
import pytest

from dentlab import DomainError, OutputError, TreeSpec, gen_tree
from dentlab.geometry import Metric, PointCloud, ScoredMap
from dentlab.io import cloud_to_dict, dumps, parse_cloud, rows_to_csv, write_text


def test_identity_when_f_missing():
    f = parse_cloud('{"dim": 2, "points": [{"x": [0, 1]}, {"x": [2, 3], "id": "b"}]}')
    assert f.domain.labels == ("p0", "b")
    np.testing.assert_array_equal(f.values, f.domain.points)


def test_scalar_f_and_table_metric():
    f = parse_cloud(json.dumps({
        "dim": 1, "points": [{"x": 0}, {"x": 1}],
        "metric": {"kind": "table", "rows": [[0, 2], [2, 0]]}}))
    assert f.values is None and f.distances[0, 1] == 2


def test_roundtrip_tree_sup_norm():
    T = gen_tree(TreeSpec(depth=2))
    text = dumps(cloud_to_dict(T.fmap))
    g = parse_cloud(text)
    assert math.isinf(g.metric.p)
    np.testing.assert_array_equal(g.values[:, 0], T.fmap.scalar())


@pytest.mark.parametrize("text,needle", [
    ('{"dim": 1, "points": [{"x": 0}', "line 1"),
    ('[1, 2]', "object"),
    ('{"dim": 0, "points": [{"x": 0}]}', "dim"),
    ('{"dim": 1, "points": []}', "nonempty"),
    ('{"dim": 2, "points": [{"x": [1]}]}', "2 coordinates"),
    ('{"dim": 1, "points": [{"x": 0, "f": 1}, {"x": 1}]}', "every point"),
    ('{"dim": 1, "points": [{"x": 0, "f": 1}, {"x": 1, "f": [1, 2]}]}', "same length"),
    ('{"dim": 1, "points": [{"x": 0}], "metric": {"kind": "weird"}}', "metric"),
])
def test_parse_errors(text, needle):
    with pytest.raises(DomainError, match=needle):
        parse_cloud(text)


def test_dumps_is_deterministic_and_handles_inf():
    a = dumps({"b": math.inf, "a": np.float64(1.5), "c": np.arange(2)})
    assert a == dumps({"c": [0, 1], "a": 1.5, "b": math.inf})
    assert json.loads(a)["b"] == "inf"


def test_csv_cells():
    text = rows_to_csv(("a", "b", "c"), [(1, True, 0.1)])
    assert text == "a,b,c\n1,1,0.1\n"


def test_write_text_error(tmp_path):
    with pytest.raises(OutputError):
        write_text(tmp_path / "nope" / "x.txt", "hi")
