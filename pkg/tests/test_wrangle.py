"""Imputation, encoding, scaling, date features, and the full pipeline."""

import math

import numpy as np
import pytest

from staynet.data import (
    Column,
    ColumnSchema,
    Dataset,
    DatasetSchema,
    UnseenCategoryError,
    WranglePlan,
    apply_plan,
    apply_scale,
    encode_categories,
    engineer_date_features,
    fit_encoders,
    fit_scale,
    generate,
    inverse_scale,
    knn_impute,
    punch_missing,
    scale_minmax,
    wrangle,
)
from helpers import knn_impute_oracle


def small_dataset(rows, schema_cols):
    """rows is a list of dicts; None marks a missing cell."""
    schema = DatasetSchema(tuple(schema_cols))
    columns = {}
    for spec in schema.columns:
        vals, mask = [], []
        for r in rows:
            v = r[spec.name]
            mask.append(v is None)
            if spec.kind == "numerical":
                vals.append(np.nan if v is None else float(v))
            else:
                vals.append("" if v is None else v)
        dtype = np.float64 if spec.kind == "numerical" else object
        columns[spec.name] = Column(np.asarray(vals, dtype=dtype), mask)
    return Dataset(schema, columns)


AGE = ColumnSchema("age", "numerical")
FLAG = ColumnSchema("flag", "logical")
GENDER = ColumnSchema("gender", "categorical", ("F", "M", "U"))
LOS = ColumnSchema("los", "numerical", is_target=True)


class TestKnnImpute:
    def test_mean_of_neighbours(self):
        ds = small_dataset(
            [dict(gender="F", age=2, los=1),
             dict(gender="F", age=4, los=1),
             dict(gender="F", age=6, los=1),
             dict(gender="F", age=None, los=1)],
            [GENDER, AGE, LOS])
        out = knn_impute(ds, k=3, key_columns=("gender",))
        assert out["age"].values[3] == 4.0
        assert not out["age"].mask.any()

    def test_k1_copies_nearest(self):
        ds = small_dataset(
            [dict(gender="F", age=10, los=1),
             dict(gender="F", age=30, los=1),
             dict(gender="F", age=None, los=1)],
            [GENDER, AGE, LOS])
        out = knn_impute(ds, k=1, key_columns=("gender",))
        # all keys tie, so the lowest row index wins
        assert out["age"].values[2] == 10.0

    def test_distance_tie_breaks_to_lower_row(self):
        ds = small_dataset(
            [dict(age=6, flag="Y", los=1),
             dict(age=4, flag="N", los=1),
             dict(age=5, flag=None, los=1)],
            [AGE, FLAG, LOS])
        out = knn_impute(ds, k=1, key_columns=("age",))
        assert out["flag"].values[2] == "Y"

    def test_mode_tie_breaks_lexicographically(self):
        ds = small_dataset(
            [dict(age=4, flag="Y", los=1),
             dict(age=6, flag="N", los=1),
             dict(age=5, flag=None, los=1)],
            [AGE, FLAG, LOS])
        out = knn_impute(ds, k=2, key_columns=("age",))
        assert out["flag"].values[2] == "N"

    def test_no_missing_returns_same_object(self):
        ds = small_dataset([dict(age=1, los=2)], [AGE, LOS])
        assert knn_impute(ds, k=1, key_columns=("age",)) is ds

    def test_query_with_missing_keys_uses_observed_subset(self):
        # age is unknown on the query row, so only gender should count
        ds = small_dataset(
            [dict(age=0, gender="M", flag="Y", los=1),
             dict(age=100, gender="F", flag="N", los=1),
             dict(age=None, gender="F", flag=None, los=1)],
            [AGE, GENDER, FLAG, LOS])
        out = knn_impute(ds, k=1, key_columns=("age", "gender"))
        assert out["flag"].values[2] == "N"

    def test_errors(self):
        ds = small_dataset(
            [dict(age=1, los=1), dict(age=None, los=1)], [AGE, LOS])
        with pytest.raises(ValueError, match="k must be >= 1"):
            knn_impute(ds, k=0, key_columns=("age",))
        with pytest.raises(ValueError, match="not in dataset"):
            knn_impute(ds, k=1, key_columns=("height",))
        with pytest.raises(ValueError, match="candidate rows for k=2"):
            knn_impute(ds, k=2, key_columns=("los",))

    def test_no_complete_candidates(self):
        ds = small_dataset(
            [dict(age=None, flag="Y", los=1), dict(age=1, flag=None, los=1)],
            [AGE, FLAG, LOS])
        with pytest.raises(ValueError, match="no complete candidate rows"):
            knn_impute(ds, k=1, key_columns=("flag",))

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_exhaustive_oracle(self, seed):
        n = 60 + 10 * seed
        ds = punch_missing(generate(n, seed=seed), fraction=0.05 + 0.025 * seed,
                           seed=seed + 100)
        got = knn_impute(ds, k=5)
        want = knn_impute_oracle(ds, 5, ("AgeGroup", "Gender", "Race", "Ethnicity"))
        for name in ds.schema.names():
            assert np.array_equal(got[name].mask, want[name].mask), name
            if got[name].is_numeric:
                assert np.array_equal(got[name].values, want[name].values), name
            else:
                assert got[name].values.tolist() == want[name].values.tolist(), name

    def test_input_left_untouched(self):
        ds = punch_missing(generate(30, seed=3), fraction=0.1, seed=4)
        before = ds.n_missing()
        knn_impute(ds, k=3)
        assert ds.n_missing() == before


class TestEncoding:
    def test_fit_encoders_lexicographic(self):
        enc = fit_encoders(small_dataset([dict(gender="F", flag="Y", los=1)],
                                         [GENDER, FLAG, LOS]).schema)
        assert enc == {"gender": ("F", "M", "U"), "flag": ("N", "Y")}

    def test_codes(self):
        ds = small_dataset(
            [dict(gender="F", flag="N", los=1),
             dict(gender="M", flag="Y", los=1),
             dict(gender="U", flag="Y", los=1)],
            [GENDER, FLAG, LOS])
        out, enc = encode_categories(ds)
        assert out["gender"].values.tolist() == [0.0, 1.0, 2.0]
        assert out["flag"].values.tolist() == [0.0, 1.0, 1.0]
        assert out.schema["gender"].kind == "numerical"
        assert out.schema["gender"].bounds == (0.0, 2.0)
        assert enc["gender"] == ("F", "M", "U")

    def test_missing_cells_stay_missing(self):
        ds = small_dataset([dict(gender=None, flag="Y", los=1)], [GENDER, FLAG, LOS])
        out, _ = encode_categories(ds)
        assert out["gender"].mask[0] and math.isnan(out["gender"].values[0])

    def test_one_hot(self):
        ds = small_dataset(
            [dict(gender="M", los=1), dict(gender="F", los=2)], [GENDER, LOS])
        out, _ = encode_categories(ds, one_hot=True)
        assert out.schema.names() == ["gender=F", "gender=M", "gender=U", "los"]
        assert out["gender=F"].values.tolist() == [0.0, 1.0]
        assert out["gender=M"].values.tolist() == [1.0, 0.0]
        assert out["gender=U"].values.tolist() == [0.0, 0.0]

    def test_unseen_category(self):
        ds = small_dataset([dict(gender="U", los=1)], [GENDER, LOS])
        plan = {"gender": ("F", "M")}
        with pytest.raises(UnseenCategoryError, match="'gender'.*'U'"):
            encode_categories(ds, encoders=plan)

    def test_numeric_and_date_pass_through(self):
        schema_cols = [AGE, ColumnSchema("admitted", "date"), LOS]
        ds = small_dataset([dict(age=30, admitted="2021-03-01", los=2)], schema_cols)
        out, enc = encode_categories(ds)
        assert enc == {}
        assert out["admitted"].values[0] == "2021-03-01"
        assert out["age"].values[0] == 30.0


class TestScaling:
    def test_minmax_worked_example(self):
        ds = small_dataset([dict(age=10, los=0), dict(age=20, los=1),
                            dict(age=30, los=2)], [AGE, LOS])
        out, table, notices = scale_minmax(ds)
        assert out["age"].values.tolist() == [0.0, 0.5, 1.0]
        assert table["age"] == (10.0, 30.0)
        assert notices == []

    def test_constant_column_scales_to_zero_with_notice(self):
        ds = small_dataset([dict(age=7, los=0), dict(age=7, los=1),
                            dict(age=7, los=2)], [AGE, LOS])
        out, table, notices = scale_minmax(ds)
        assert out["age"].values.tolist() == [0.0, 0.0, 0.0]
        assert table["age"] == (7.0, 7.0)
        assert any("constant" in n for n in notices)

    def test_missing_cells_not_scaled(self):
        ds = small_dataset([dict(age=10, los=0), dict(age=None, los=1),
                            dict(age=30, los=2)], [AGE, LOS])
        out, _, _ = scale_minmax(ds)
        assert out["age"].mask[1] and math.isnan(out["age"].values[1])
        assert out["age"].values[[0, 2]].tolist() == [0.0, 1.0]

    def test_inverse_round_trip(self):
        ds = small_dataset([dict(age=4, los=3), dict(age=9, los=11),
                            dict(age=6.5, los=7)], [AGE, LOS])
        out, table, _ = scale_minmax(ds)
        back = inverse_scale(out["age"].values, table["age"])
        assert np.max(np.abs(back - ds["age"].values)) <= 1e-12

    def test_inverse_of_constant(self):
        assert inverse_scale([0.0, 0.3], (7.0, 7.0)).tolist() == [7.0, 7.0]

    def test_apply_requires_fitted_bounds(self):
        ds = small_dataset([dict(age=1, los=2)], [AGE, LOS])
        with pytest.raises(ValueError, match="no fitted scale bounds"):
            apply_scale(ds, {"los": (0.0, 5.0)})

    def test_fit_rejects_fully_missing_column(self):
        ds = small_dataset([dict(age=None, los=2)], [AGE, LOS])
        with pytest.raises(ValueError, match="nothing observed"):
            fit_scale(ds)

    def test_refit_on_scaled_data_is_unit_interval(self):
        ds = small_dataset([dict(age=10, los=0), dict(age=25, los=3),
                            dict(age=30, los=9)], [AGE, LOS])
        out, _, _ = scale_minmax(ds)
        table, _ = fit_scale(out)
        assert table["age"] == (0.0, 1.0)


class TestDateFeatures:
    def test_split_into_weekday_month_year(self):
        schema_cols = [ColumnSchema("Admission Date", "date"), LOS]
        ds = small_dataset([dict(**{"Admission Date": "2021-03-01", "los": 2})],
                           schema_cols)
        out, notice = engineer_date_features(ds)
        assert notice is None
        assert "Admission Date" not in out
        assert out["Admission Date Weekday"].values[0] == 0.0
        assert out["Admission Date Month"].values[0] == 3.0
        assert out["Admission Date Year"].values[0] == 2021.0

    def test_missing_column_is_skipped_with_notice(self):
        ds = small_dataset([dict(age=1, los=2)], [AGE, LOS])
        out, notice = engineer_date_features(ds)
        assert out is ds
        assert "skipped" in notice

    def test_masked_dates_stay_masked(self):
        schema_cols = [ColumnSchema("Admission Date", "date"), LOS]
        ds = small_dataset(
            [dict(**{"Admission Date": None, "los": 2}),
             dict(**{"Admission Date": "2021-12-31", "los": 3})], schema_cols)
        out, _ = engineer_date_features(ds)
        assert out["Admission Date Weekday"].mask.tolist() == [True, False]
        assert out["Admission Date Month"].values[1] == 12.0

    def test_wrong_kind_rejected(self):
        ds = small_dataset([dict(age=1, los=2)], [AGE, LOS])
        with pytest.raises(ValueError, match="not date"):
            engineer_date_features(ds, column="age")


class TestPipeline:
    def test_output_is_numeric_complete_unit_interval(self):
        ds = punch_missing(generate(120, seed=5), fraction=0.1, seed=6)
        out, plan = wrangle(ds)
        assert out.n_missing() == 0
        x, y = out.feature_matrix()
        assert x.shape == (120, 22)
        assert np.all((x >= 0.0) & (x <= 1.0))
        assert np.all((y >= 0.0) & (y <= 1.0))
        assert any("skipped" in n for n in plan.notices)

    def test_plan_json_round_trip(self):
        ds = punch_missing(generate(60, seed=7), fraction=0.08, seed=8)
        _, plan = wrangle(ds, k=3)
        back = WranglePlan.from_json(plan.to_json())
        assert back == plan

    def test_apply_plan_reproduces_pipeline(self):
        ds = punch_missing(generate(80, seed=9), fraction=0.1, seed=10)
        out, plan = wrangle(ds)
        redo = apply_plan(ds, plan)
        for name in out.schema.names():
            assert np.array_equal(redo[name].values, out[name].values), name

    def test_apply_plan_rejects_unseen_category(self):
        # a plan fitted under an older, narrower category table
        ds = small_dataset(
            [dict(gender="F", age=1, los=2), dict(gender="M", age=2, los=3)],
            [GENDER, AGE, LOS])
        _, plan = wrangle(ds, k=1, key_columns=("age",))
        plan.encoders = {"gender": ("F", "M")}
        new = small_dataset([dict(gender="U", age=1, los=2)], [GENDER, AGE, LOS])
        with pytest.raises(UnseenCategoryError):
            apply_plan(new, plan)

    def test_apply_plan_requires_scale(self):
        ds = small_dataset([dict(age=1, los=2)], [AGE, LOS])
        plan = WranglePlan(knn_k=1, key_columns=("age",))
        with pytest.raises(ValueError, match="no fitted scale"):
            apply_plan(ds, plan)

    def test_one_hot_pipeline(self):
        ds = generate(40, seed=11)
        out, plan = wrangle(ds, one_hot=True)
        assert plan.one_hot
        assert any("=" in name for name in out.schema.names())
        x, _ = out.feature_matrix()
        assert np.all((x >= 0.0) & (x <= 1.0))
