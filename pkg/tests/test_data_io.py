import numpy as np
import pytest
from hypothesis import given, strategies as st

from driftscan import (Dataset, LabeledPoint, MalformedInputError, load_dataset,
                       min_score, residual_score, score_dataset, write_dataset)


def test_csv_strong_row_maps_fields(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x1,x2,y\n1.0,2.0,3.5\n")
    ds = load_dataset(path, format="csv")
    assert ds.points[0] == LabeledPoint(x=(1.0, 2.0), y=3.5)


def test_csv_weak_row_parses_pipe_set(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x1,y_set\n0.0,1|2|3\n")
    ds = load_dataset(path)
    assert ds.points[0].y_set == (1.0, 2.0, 3.0)
    assert ds.points[0].is_weak


def test_empty_file_errors(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("")
    with pytest.raises(MalformedInputError):
        load_dataset(path)
    path.write_text("x1,y\n")
    with pytest.raises(MalformedInputError):
        load_dataset(path)


def test_malformed_row_error_names_row(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x1,y\n1.0,2.0\nbad,3.0\n")
    with pytest.raises(MalformedInputError, match="row 2"):
        load_dataset(path)


def test_mixed_strong_weak_and_score_rows(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x1,y,y_set,score\n1.0,2.0,,\n1.0,,1|2,\n1.0,,,0.25\n")
    ds = load_dataset(path)
    assert ds.points[0].y == 2.0
    assert ds.points[1].y_set == (1.0, 2.0)
    assert ds.points[2].score == 0.25


def test_json_roundtrip_of_all_row_kinds(tmp_path):
    ds = Dataset(points=[
        LabeledPoint(x=(1.0, -2.5), y=0.125),
        LabeledPoint(x=(0.0, 1.0), y_set=(1.0, 2.0, 3.0)),
        LabeledPoint(x=(3.0, 4.0), score=7.5),
    ])
    path = tmp_path / "d.json"
    write_dataset(ds, path)
    assert load_dataset(path).points == ds.points


def test_residual_score_examples():
    predict = lambda x: {(0.0,): 3.0, (1.0,): 2.0}[tuple(x)]
    assert residual_score((0.0,), 3.0, predict) == 0.0
    assert residual_score((1.0,), 5.0, predict) == 3.0
    assert residual_score((1.0,), -1.0, predict) == 3.0


def test_residual_score_rejects_non_finite_prediction():
    with pytest.raises(ValueError):
        residual_score((0.0,), 1.0, lambda x: float("nan"))


def test_min_score_examples():
    score_fn = lambda x, y: abs(y - 2.0)
    assert min_score((0.0,), {1.0, 2.0, 3.0}, score_fn) == 0.0
    assert min_score((0.0,), {5.0}, score_fn) == 3.0
    # enumerate both candidates, keep the smaller
    assert min_score((0.0,), {4.0, 5.0}, score_fn) == min(abs(4.0 - 2.0), abs(5.0 - 2.0)) == 2.0


def test_min_score_empty_set_errors():
    with pytest.raises(ValueError):
        min_score((0.0,), set(), lambda x, y: y)


@given(st.floats(-100, 100), st.floats(-100, 100))
def test_singleton_weak_set_equals_strong_score(y, target):
    score_fn = lambda x, yy: abs(yy - target)
    assert min_score((0.0,), {y}, score_fn) == score_fn((0.0,), y)


@given(
    st.sets(st.floats(-50, 50), min_size=1, max_size=6),
    st.sets(st.floats(-50, 50), max_size=4),
)
def test_min_score_monotone_under_set_inclusion(w, extra):
    score_fn = lambda x, y: (y - 3.0) ** 2
    larger = w | extra
    assert min_score((0.0,), larger, score_fn) <= min_score((0.0,), w, score_fn)


_point = st.builds(
    LabeledPoint,
    x=st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)),
    y=st.floats(-1e6, 1e6),
)


@given(st.lists(_point, min_size=1, max_size=20), st.sampled_from(["csv", "json"]))
def test_load_after_write_is_identity(points, fmt):
    import tempfile
    from pathlib import Path

    ds = Dataset(points=points)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / f"d.{fmt}"
        write_dataset(ds, path)
        assert load_dataset(path).points == ds.points


def test_score_dataset_prefers_explicit_scores_and_scores_weak_rows():
    ds = Dataset(points=[
        LabeledPoint(x=(0.0,), score=9.0),
        LabeledPoint(x=(0.0,), y=4.0),
        LabeledPoint(x=(0.0,), y_set=(1.0, 6.0)),
    ])
    scores = score_dataset(ds, predict=lambda x: 2.0)
    assert scores.tolist() == [9.0, 2.0, 1.0]


def test_score_dataset_without_scorer_errors_on_unscored_rows():
    ds = Dataset(points=[LabeledPoint(x=(0.0,), y=1.0)])
    with pytest.raises(ValueError, match="row 0"):
        score_dataset(ds)


def test_dataset_rejects_mixed_dimensions():
    with pytest.raises(ValueError):
        Dataset(points=[LabeledPoint(x=(0.0,), y=1.0), LabeledPoint(x=(0.0, 1.0), y=1.0)])


def test_score_samples_carry_role_and_order():
    from driftscan import score_samples

    ds = Dataset(points=[LabeledPoint(x=(0.0,), score=2.0),
                         LabeledPoint(x=(1.0,), score=1.0)], role="test")
    samples = score_samples(ds)
    assert [(s.index, s.score, s.origin) for s in samples] == [
        (0, 2.0, "test"), (1, 1.0, "test")]
    with pytest.raises(ValueError):
        from driftscan import ScoreSample

        ScoreSample(index=0, score=float("inf"), origin="test")
