import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from churnlab.config import default_schema_path
from churnlab.errors import FormatError, ParseError, SchemaError
from churnlab.tabular import (
    CATEGORICAL,
    IDENTIFIER,
    NUMERIC_CONTINUOUS,
    NUMERIC_DISCRETE,
    TARGET,
    ColumnSchema,
    Frame,
    deduplicate,
    dump_schema,
    load_schema,
    read_csv,
    write_csv,
)
from oracles import pairwise_dedup

SCHEMA = (
    ColumnSchema("id", IDENTIFIER),
    ColumnSchema("Churn", TARGET),
    ColumnSchema("Tenure", NUMERIC_DISCRETE),
    ColumnSchema("Spend", NUMERIC_CONTINUOUS),
    ColumnSchema("Gender", CATEGORICAL, ("Female", "Male"), {"M": "Male"}),
)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_header_only_gives_empty_frame(tmp_path):
    f = read_csv(_write(tmp_path / "a.csv", "id,Churn,Tenure,Spend,Gender\n"), SCHEMA)
    assert f.n_rows == 0
    assert f.names == ["id", "Churn", "Tenure", "Spend", "Gender"]


def test_missing_markers(tmp_path):
    f = read_csv(_write(tmp_path / "a.csv", "id,Churn,Tenure,Spend,Gender\n1,0,,NA,Male\n2,1,3,2.5,Female\n"), SCHEMA)
    assert f.missing["Tenure"].tolist() == [True, False]
    assert f.missing["Spend"].tolist() == [True, False]
    assert f.values["Tenure"][1] == 3.0


def test_header_order_is_free_and_aliases_apply(tmp_path):
    f = read_csv(_write(tmp_path / "a.csv", "Gender,Spend,id,Tenure,Churn\nM,1.5,7,2,1\n"), SCHEMA)
    assert f.cell(0, "Gender") == "Male"
    assert f.names == [c.name for c in SCHEMA]


def test_lowercase_na_is_not_missing(tmp_path):
    with pytest.raises(ParseError):
        read_csv(_write(tmp_path / "a.csv", "id,Churn,Tenure,Spend,Gender\n1,0,na,1,Male\n"), SCHEMA)


def test_unknown_column_named(tmp_path):
    with pytest.raises(SchemaError, match="Bogus"):
        read_csv(_write(tmp_path / "a.csv", "id,Churn,Tenure,Spend,Gender,Bogus\n"), SCHEMA)


def test_absent_column(tmp_path):
    with pytest.raises(SchemaError, match="Gender"):
        read_csv(_write(tmp_path / "a.csv", "id,Churn,Tenure,Spend\n"), SCHEMA)


def test_parse_error_has_row_and_column(tmp_path):
    with pytest.raises(ParseError) as exc:
        read_csv(_write(tmp_path / "a.csv", "id,Churn,Tenure,Spend,Gender\n1,0,2,1,Male\n2,0,abc,1,Male\n"), SCHEMA)
    assert exc.value.row == 2 and exc.value.column == "Tenure"


@pytest.mark.parametrize("cell", ["2", "0.5", "yes"])
def test_target_outside_binary(tmp_path, cell):
    with pytest.raises(ParseError):
        read_csv(_write(tmp_path / "a.csv", f"id,Churn,Tenure,Spend,Gender\n1,{cell},2,1,Male\n"), SCHEMA)


def test_disallowed_category(tmp_path):
    with pytest.raises(ParseError, match="Other"):
        read_csv(_write(tmp_path / "a.csv", "id,Churn,Tenure,Spend,Gender\n1,0,2,1,Other\n"), SCHEMA)


def test_row_length_mismatch(tmp_path):
    with pytest.raises(FormatError):
        read_csv(_write(tmp_path / "a.csv", "id,Churn,Tenure,Spend,Gender\n1,0,2,1\n"), SCHEMA)


def test_quoted_fields(tmp_path):
    schema = (ColumnSchema("Churn", TARGET), ColumnSchema("Cat", CATEGORICAL, ("a,b", 'say "hi"')))
    f = read_csv(_write(tmp_path / "a.csv", 'Churn,Cat\n1,"a,b"\n0,"say ""hi"""\n'), schema)
    assert list(f.values["Cat"]) == ["a,b", 'say "hi"']


def test_schema_invariants():
    with pytest.raises(SchemaError):
        ColumnSchema("c", CATEGORICAL)
    with pytest.raises(SchemaError):
        ColumnSchema("x", NUMERIC_CONTINUOUS, ("a",))
    with pytest.raises(SchemaError):
        Frame.from_columns((ColumnSchema("x", NUMERIC_CONTINUOUS),), {"x": [1.0]})
    with pytest.raises(SchemaError):
        Frame.from_columns((ColumnSchema("a", TARGET), ColumnSchema("b", TARGET)), {"a": [1], "b": [0]})


def test_schema_json_round_trip(tmp_path):
    dump_schema(SCHEMA, tmp_path / "s.json")
    assert load_schema(tmp_path / "s.json") == SCHEMA


def test_bundled_schema_has_twenty_columns():
    schema = load_schema(default_schema_path())
    assert len(schema) == 20
    kinds = [c.kind for c in schema]
    assert kinds.count(TARGET) == 1 and kinds.count(IDENTIFIER) == 1
    assert all(len(c.allowed_categories) <= 5 for c in schema if c.kind == CATEGORICAL)


def test_feature_names_exclude_identifier_and_target():
    f = Frame.from_columns(SCHEMA, {"id": ["a"], "Churn": [1], "Tenure": [1], "Spend": [2.0], "Gender": ["Male"]})
    assert f.feature_names == ["Tenure", "Spend", "Gender"]


def test_frame_is_read_only():
    f = Frame.from_columns(SCHEMA, {"id": ["a"], "Churn": [1], "Tenure": [1], "Spend": [2.0], "Gender": ["Male"]})
    with pytest.raises(ValueError):
        f.values["Tenure"][0] = 5.0


# ------------------------------------------------------------ deduplicate


def _frame(rows):
    cols = list(zip(*rows)) if rows else [[]] * 5
    return Frame.from_columns(SCHEMA, dict(zip([c.name for c in SCHEMA], cols)))


def test_dedup_keeps_first_of_rows_one_and_three():
    f = _frame([("a", 0, 1, 2.0, "Male"), ("b", 1, 1, 2.0, "Male"), ("c", 0, 1, 2.0, "Male")])
    out = deduplicate(f)
    assert list(out.values["id"]) == ["a", "b"]


def test_dedup_no_duplicates_is_identity():
    f = _frame([("a", 0, 1, 2.0, "Male"), ("b", 1, 1, 2.0, "Male")])
    assert deduplicate(f).equals(f)


def test_dedup_missing_flag_distinguishes():
    f = _frame([("a", 0, None, 2.0, "Male"), ("b", 0, 0, 2.0, "Male")])
    assert deduplicate(f).n_rows == 2


row_strategy = st.tuples(
    st.sampled_from([0, 1]),
    st.one_of(st.none(), st.integers(0, 3)),
    st.one_of(st.none(), st.sampled_from([0.5, 1.25, -3.0])),
    st.sampled_from(["Male", "Female"]),
)


@given(st.lists(row_strategy, max_size=25))
def test_dedup_matches_pairwise_oracle(rows):
    full = [(str(i), *r) for i, r in enumerate(rows)]
    f = _frame(full)
    out = deduplicate(f)
    kept = pairwise_dedup([r[1:] for r in full])
    assert list(out.values["id"]) == [str(i) for i in kept]
    assert out.n_rows <= f.n_rows
    assert deduplicate(out).equals(out)


@settings(max_examples=50, deadline=None)
@given(st.lists(row_strategy, max_size=20))
def test_csv_round_trip(tmp_path_factory, rows):
    full = [(f"id{i}", *r) for i, r in enumerate(rows)]
    f = _frame(full)
    path = tmp_path_factory.mktemp("rt") / "f.csv"
    write_csv(f, path)
    assert read_csv(path, SCHEMA).equals(f)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=10))
def test_csv_round_trip_floats_exact(tmp_path_factory, xs):
    schema = (ColumnSchema("Churn", TARGET), ColumnSchema("x", NUMERIC_CONTINUOUS))
    f = Frame.from_columns(schema, {"Churn": [0] * len(xs), "x": xs})
    path = tmp_path_factory.mktemp("rt") / "f.csv"
    write_csv(f, path)
    back = read_csv(path, schema)
    assert np.array_equal(back.values["x"], np.asarray(xs))


def test_synthetic_file_reads(synthetic_csv):
    f = read_csv(synthetic_csv, load_schema(default_schema_path()))
    assert f.n_rows == 1500 and len(f.names) == 20
    assert any(f.missing[n].any() for n in f.names)
    json.dumps(f.names)
