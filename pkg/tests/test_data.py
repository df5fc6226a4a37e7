import numpy as np
import pytest

from fairclust import data, metrics
from fairclust.errors import SchemaError
from fairclust.maxcorr import rho_star_ace_oracle


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


SCHEMA = data.SchemaConfig(["a", "b"], "s", "discrete", "y")


def test_load_three_rows(tmp_path):
    p = write(tmp_path / "d.csv", "a,b,s,y\n1,2,0,1\n3,4,1,0\n5,6,1,1\n")
    ds = data.load_csv(p, SCHEMA)
    assert ds.n == 3 and ds.dim == 2
    assert ds.sensitive.tolist() == [0, 1, 1]
    assert ds.labels.tolist() == [1, 0, 1]


def test_group_values_remapped(tmp_path):
    p = write(tmp_path / "d.csv", "a,b,s\n1,2,7\n3,4,3\n5,6,7\n")
    ds = data.load_csv(p, data.SchemaConfig(["a", "b"], "s"))
    assert ds.sensitive.tolist() == [1, 0, 1]
    assert ds.group_values == ["3", "7"]


def test_missing_sensitive_column_named(tmp_path):
    p = write(tmp_path / "d.csv", "a,b,y\n1,2,0\n")
    with pytest.raises(SchemaError, match="'s'"):
        data.load_csv(p, SCHEMA)


def test_continuous_vs_discrete_parsing(tmp_path):
    p = write(tmp_path / "d.csv", "a,b,s\n1,2,0.25\n3,4,0.75\n5,6,0.5\n")
    ds = data.load_csv(p, data.SchemaConfig(["a", "b"], "s", "continuous"))
    assert ds.sensitive.tolist() == [0.25, 0.75, 0.5]
    with pytest.raises(SchemaError, match="row"):
        data.load_csv(p, data.SchemaConfig(["a", "b"], "s", "discrete"))


def test_bad_rows_rejected(tmp_path):
    with pytest.raises(SchemaError):
        data.load_csv(write(tmp_path / "a.csv", "a,b,s\n1,,0\n3,4,1\n"), data.SchemaConfig(["a", "b"], "s"))
    with pytest.raises(SchemaError):
        data.load_csv(write(tmp_path / "b.csv", "a,b,s\n1,x,0\n3,4,1\n"), data.SchemaConfig(["a", "b"], "s"))
    with pytest.raises(SchemaError):
        data.load_csv(write(tmp_path / "c.csv", "a,b,s\n1,2,0\n3,4,0\n"), data.SchemaConfig(["a", "b"], "s"))


def test_sensitive_as_feature_needs_opt_in():
    with pytest.raises(SchemaError):
        data.SchemaConfig(["a", "s"], "s")
    assert data.SchemaConfig(["a", "s"], "s", include_sensitive_in_features=True)


def test_schema_roundtrip(tmp_path):
    data.save_schema(SCHEMA, tmp_path / "s.json")
    assert data.load_schema(tmp_path / "s.json") == SCHEMA
    with pytest.raises(SchemaError):
        data.SchemaConfig.from_dict({**SCHEMA.to_dict(), "bogus": 1})


@pytest.mark.parametrize("mode", ["discrete", "continuous"])
def test_write_then_load_roundtrip(tmp_path, mode):
    ds = data.synth_blobs(10, 3, 4, 0.5, mode, seed=2)
    schema = data.write_csv(ds, tmp_path / "d.csv")
    back = data.load_csv(tmp_path / "d.csv", schema)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.sensitive, ds.sensitive)
    assert np.array_equal(back.labels, ds.labels)


def test_standardize_properties():
    rng = np.random.default_rng(0)
    x = rng.normal(3, 5, size=(50, 3))
    x[:, 2] = 4.0
    ds = data.Dataset(x, rng.integers(0, 2, 50), "discrete")
    std, tf = data.standardize(ds)
    assert np.all(np.abs(std.features.mean(0)) < 1e-9)
    assert np.allclose(std.features[:, :2].std(0), 1, atol=1e-9)
    assert np.all(std.features[:, 2] == 0)
    assert np.array_equal(tf.apply(ds.features), std.features)
    again, _ = data.standardize(std)
    assert np.allclose(again.features, std.features, atol=1e-9)
    assert np.array_equal(data.Standardizer.from_dict(tf.to_dict()).apply(x), std.features)


def test_synth_unbiased_is_independent():
    ds = data.synth_blobs(1250, 4, 4, 0.0, "continuous", seed=0)
    assert rho_star_ace_oracle(ds.features[:, 0], ds.sensitive) < 0.15
    ds = data.synth_blobs(1250, 4, 4, 0.0, "discrete", seed=0)
    assert rho_star_ace_oracle(ds.features[:, 0], ds.sensitive) < 0.15


def test_synth_full_bias_determines_group():
    ds = data.synth_blobs(50, 4, 6, 1.0, "discrete", seed=1)
    assert np.array_equal(ds.sensitive, (ds.labels % 2 == 0).astype(int))
    assert metrics.mnce(ds.labels, ds.sensitive) == 0.0


def test_synth_deterministic_and_extra_column():
    a = data.synth_blobs(20, 3, 5, 0.4, "continuous", seed=4)
    b = data.synth_blobs(20, 3, 5, 0.4, "continuous", seed=4)
    assert a.fingerprint() == b.fingerprint()
    assert a.dim == 6 and np.array_equal(a.features[:, -1], a.sensitive)
    assert data.synth_blobs(20, 3, 5, 0.4, seed=4).dim == 5


def test_synth_bad_args():
    with pytest.raises(ValueError):
        data.synth_blobs(10, 1, 4, 0.5)
    with pytest.raises(ValueError):
        data.synth_blobs(10, 3, 4, 1.5)


def test_split_fewshot():
    ds = data.synth_blobs(250, 4, 3, 0.5, seed=0)
    s = data.split_fewshot(ds, 128, seed=3)
    assert s.train.n == 128 and s.test.n == 872
    assert not set(s.train_idx) & set(s.test_idx)
    assert np.array_equal(s.train_idx, data.split_fewshot(ds, 128, seed=3).train_idx)
    assert s.missing_train_classes == []
    with pytest.raises(ValueError):
        data.split_fewshot(ds.subset(np.arange(100)), 128)
