import json

import numpy as np
import pytest

from lopub.schema import (AttributeDomain, Dataset, Schema, SchemaError, dataset_to_csv,
                          equal_width_bin, load_dataset, load_schema)


def config_text(attrs):
    return json.dumps({"attributes": attrs})


def test_load_schema_census(census_schema):
    doc = config_text([
        {"name": a.name, "values": list(a.values)} for a in census_schema.attributes
    ])
    schema = load_schema(doc)
    assert schema.d == 4
    assert schema.cardinalities == (35, 2, 3, 4)
    assert schema.names == ("Age", "Gender", "Education", "Income")


def test_load_schema_minimal():
    schema = load_schema(config_text([{"name": "opt", "values": ["yes", "no"]}]))
    assert schema.d == 1
    assert schema.cardinalities == (2,)


@pytest.mark.parametrize("attrs", [
    [{"name": "G", "values": ["M", "M"]}],                    # duplicate value
    [{"name": "G", "values": []}],                            # empty domain
    [{"name": "G", "values": ["M"]}],                         # single value
    [{"name": "G", "values": ["M", "F"]},
     {"name": "G", "values": ["a", "b"]}],                    # duplicate name
])
def test_load_schema_rejects(attrs):
    with pytest.raises(SchemaError):
        load_schema(config_text(attrs))


def test_load_schema_no_attributes():
    with pytest.raises(SchemaError):
        load_schema("{}")
    with pytest.raises(SchemaError):
        load_schema("not json")


def test_load_dataset_census_rows(census_schema):
    csv_text = (
        "Age,Gender,Education,Income\n"
        "29,M,college,working\n"
        "35,F,master,low-middle\n"
        "45,F,college,working\n"
        "49,M,phd,up-middle\n"
    )
    ds = load_dataset(csv_text, census_schema)
    assert ds.n == 4
    assert ds.rows[1].tolist() == [10, 1, 1, 1]
    assert ds.rows[3].tolist() == [24, 0, 2, 2]


def test_load_dataset_empty_body(census_schema):
    ds = load_dataset("Age,Gender,Education,Income\n", census_schema)
    assert ds.n == 0
    assert ds.rows.shape == (0, 4)


def test_load_dataset_errors(census_schema):
    header = "Age,Gender,Education,Income\n"
    with pytest.raises(SchemaError):
        load_dataset(header + "29,M,bachelor,working\n", census_schema)
    with pytest.raises(SchemaError):
        load_dataset(header + "29,M,college\n", census_schema)
    with pytest.raises(SchemaError):
        load_dataset("Age,Sex,Education,Income\n", census_schema)


def test_dataset_roundtrip(census_schema):
    rng = np.random.default_rng(0)
    cards = np.array(census_schema.cardinalities)
    rows = rng.integers(0, cards[None, :], size=(50, 4))
    ds = Dataset(schema=census_schema, rows=rows)
    again = load_dataset(dataset_to_csv(ds), census_schema)
    assert np.array_equal(again.rows, ds.rows)


def test_value_indexing_matches_declared_order():
    dom = AttributeDomain("E", ("college", "master", "phd"))
    assert [dom.index_of(v) for v in dom.values] == [0, 1, 2]


def test_dataset_rejects_out_of_range(census_schema):
    rows = np.zeros((1, 4), dtype=int)
    rows[0, 2] = 3  # Education has 3 values
    with pytest.raises(SchemaError):
        Dataset(schema=census_schema, rows=rows)


def test_equal_width_bin_basic():
    domain, idx = equal_width_bin(list(range(25, 61)), bins=5)
    assert domain.cardinality == 5
    assert domain.values[0] == "[25,32)"
    assert domain.values[-1] == "[53,60]"
    assert idx.min() == 0 and idx.max() == 4


def test_equal_width_bin_boundaries():
    domain, idx = equal_width_bin([0, 10], bins=2)
    assert domain.values == ("[0,5)", "[5,10]")
    assert idx.tolist() == [0, 1]


def test_equal_width_bin_degenerate():
    with pytest.raises(SchemaError):
        equal_width_bin([3.0, 3.0, 3.0], bins=2)
    with pytest.raises(SchemaError):
        equal_width_bin([1.0, 2.0], bins=1)
    with pytest.raises(SchemaError):
        equal_width_bin([], bins=2)
