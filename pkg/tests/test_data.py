import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from supercompliers.data import (
    ADMISSIBLE_GROUPS,
    DataConfig,
    Group,
    ObservationTable,
    concat_tables,
    group_to_potentials,
    load_config,
    load_observations,
)
from supercompliers.exceptions import ConfigError, DataValidationError

# (D0, D1, Y0, Y1) written out by hand for every group
POTENTIALS = {
    "aa": (1, 1, 1, 1), "an": (1, 1, 0, 0), "ac": (1, 1, 0, 1), "af": (1, 1, 1, 0),
    "na": (0, 0, 1, 1), "nn": (0, 0, 0, 0), "nc": (0, 0, 0, 1), "nf": (0, 0, 1, 0),
    "ca": (0, 1, 1, 1), "cn": (0, 1, 0, 0), "cc": (0, 1, 0, 1), "cf": (0, 1, 1, 0),
    "fa": (1, 0, 1, 1), "fn": (1, 0, 0, 0), "fc": (1, 0, 0, 1), "ff": (1, 0, 1, 0),
}


class TestGroup:
    @pytest.mark.parametrize("name", sorted(POTENTIALS))
    def test_potentials(self, name):
        assert group_to_potentials(Group(name)) == POTENTIALS[name]

    def test_sixteen_groups_nine_admissible(self):
        assert len(Group) == 16
        assert {g.value for g in ADMISSIBLE_GROUPS} == {
            "aa", "an", "ac", "na", "nn", "nc", "ca", "cn", "cc"}

    def test_realized_values(self):
        g = Group.cc
        assert (g.treatment(0), g.treatment(1)) == (0, 1)
        assert (g.outcome(0), g.outcome(1)) == (0, 1)
        assert Group.cf.outcome(1) == 0

    def test_compliers(self):
        assert {g.value for g in Group if g.is_complier} == {"ca", "cn", "cc", "cf"}


class TestObservationTable:
    def test_basic(self):
        t = ObservationTable([0, 1, 1, 0], [0, 1, 0, 0], [1, 1, 0, 0], [[1.0], [2.0], [3.0], [4.0]], ("age",))
        assert t.n == 4
        assert t.tau_hat == 0.5
        np.testing.assert_array_equal(t.covariate("age"), [1, 2, 3, 4])

    def test_arrays_read_only(self):
        t = ObservationTable([0, 1], [0, 1], [0, 1])
        with pytest.raises(ValueError):
            t.z[0] = 1.0

    def test_default_covariate_names(self):
        t = ObservationTable([0, 1], [0, 1], [0, 1], np.zeros((2, 2)))
        assert t.x_names == ("x1", "x2")

    @pytest.mark.parametrize("kwargs,match", [
        (dict(z=[0, 2], d=[0, 1], y=[0, 1]), "non-binary instrument"),
        (dict(z=[0, 1], d=[0, 0.5], y=[0, 1]), "non-binary treatment"),
        (dict(z=[0, 1], d=[0, 1], y=[0, 3]), "non-binary outcome"),
        (dict(z=[1, 1], d=[0, 1], y=[0, 1]), "degenerate assignment arm"),
        (dict(z=[], d=[], y=[]), "empty table"),
        (dict(z=[0, 1], d=[0, 1], y=[0, np.nan], y_binary=False), "non-finite"),
        (dict(z=[0, 1], d=[0, 1], y=[0, 1], x=[[1.0], [np.nan]]), "covariates"),
        (dict(z=[0, 1], d=[0, 1, 1], y=[0, 1]), "same length"),
    ])
    def test_validation(self, kwargs, match):
        with pytest.raises(DataValidationError, match=match):
            ObservationTable(**kwargs)

    def test_non_binary_outcome_allowed_when_flagged(self):
        t = ObservationTable([0, 1], [0, 1], [0.0, 1234.5], y_binary=False)
        assert not t.y_binary

    def test_degenerate_stratum(self):
        with pytest.raises(DataValidationError, match="stratum 'b'"):
            ObservationTable([0, 1, 1, 1], [0, 0, 0, 0], [0, 0, 0, 0], stratum=["a", "a", "b", "b"])

    def test_subset_and_concat(self):
        t = ObservationTable([0, 1, 0, 1], [0, 1, 0, 0], [0, 1, 1, 0], [[1.0], [2.0], [3.0], [4.0]], ("w",))
        both = concat_tables([t.subset([0, 1]), t.subset([2, 3])], stratum_labels=["s1", "s2"])
        np.testing.assert_array_equal(both.x, t.x)
        assert list(both.stratum) == ["s1", "s1", "s2", "s2"]

    def test_unknown_covariate(self):
        t = ObservationTable([0, 1], [0, 1], [0, 1])
        with pytest.raises(KeyError):
            t.covariate("nope")


CSV = "z,d,y,age,site\n0,0,1,30,a\n1,1,1,41.5,b\n1,0,0,22,a\n0,1,0,50,b\n"


class TestLoading:
    def test_load(self):
        t = load_observations(io.StringIO(CSV), {"covariates": ["age"], "stratum": "site"})
        np.testing.assert_array_equal(t.z, [0, 1, 1, 0])
        np.testing.assert_array_equal(t.covariate("age"), [30, 41.5, 22, 50])
        assert list(t.stratum) == ["a", "b", "a", "b"]

    def test_csv_round_trip(self, tmp_path):
        t = load_observations(io.StringIO(CSV), {"covariates": ["age"]})
        path = tmp_path / "t.csv"
        t.to_csv(path)
        back = load_observations(path, {"covariates": ["age"]})
        np.testing.assert_array_equal(back.x, t.x)
        np.testing.assert_array_equal(back.y, t.y)

    def test_missing_column(self):
        with pytest.raises(DataValidationError, match="missing column"):
            load_observations(io.StringIO(CSV), {"covariates": ["income"]})

    def test_missing_value_rows_reported(self):
        text = "z,d,y,age\n0,0,1,30\n1,1,1,NA\n1,0,0,\n"
        with pytest.raises(DataValidationError, match="data rows: 2, 3"):
            load_observations(io.StringIO(text), {"covariates": ["age"]})

    def test_covariate_missing_everywhere(self):
        text = "z,d,y,age\n0,0,1,\n1,1,1,NA\n"
        with pytest.raises(DataValidationError, match="missing in every row"):
            load_observations(io.StringIO(text), {"covariates": ["age"]})

    @pytest.mark.parametrize("token", ["2", "1.0", "yes", "-1"])
    def test_strict_binary_tokens(self, token):
        text = f"z,d,y\n0,0,1\n{token},1,1\n"
        with pytest.raises(DataValidationError, match="non-binary instrument value .* at data row 2"):
            load_observations(io.StringIO(text))

    def test_non_binary_outcome_column(self):
        text = "z,d,earn\n0,0,100.5\n1,1,0\n"
        t = load_observations(io.StringIO(text), {"y": "earn", "y_binary": False})
        np.testing.assert_array_equal(t.y, [100.5, 0.0])

    def test_empty_input(self):
        with pytest.raises(DataValidationError):
            load_observations(io.StringIO(""))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1), st.integers(0, 1),
                              st.floats(-1e6, 1e6, allow_nan=False)), min_size=2, max_size=40))
    def test_round_trip_property(self, rows):
        rows = [(0, 0, 0, 0.0), (1, 0, 0, 0.0)] + rows
        t = ObservationTable([r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows],
                             [[r[3]] for r in rows], ("v",))
        buf = io.StringIO()
        t.to_csv(buf)
        back = load_observations(io.StringIO(buf.getvalue()), {"covariates": ["v"]})
        np.testing.assert_array_equal(back.x, t.x)
        np.testing.assert_array_equal(back.z, t.z)


class TestConfig:
    def test_from_mapping_nested(self):
        cfg = DataConfig.from_mapping({"data": {"z": "elig", "covariates": "age, female"}})
        assert cfg.z == "elig"
        assert cfg.covariates == ("age", "female")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            DataConfig.from_mapping({"zz": "x"})

    def test_bad_tau(self):
        with pytest.raises(ConfigError):
            DataConfig(tau_known=1.5)

    def test_load_yaml(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("z: elig\nd: took\ny: job\ncovariates: [age]\n")
        cfg = load_config(p)
        assert (cfg.z, cfg.d, cfg.y, cfg.covariates) == ("elig", "took", "job", ("age",))

    def test_unparseable(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("z: [unclosed\n")
        with pytest.raises(ConfigError):
            load_config(p)
