import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from latentserve.errors import ConfigError, InsufficientDataError
from latentserve.trace_kit import records as rec
from latentserve.trace_kit import stats as st
from latentserve.trace_kit.records import ObjectMeta, Trace
from latentserve.trace_kit.synth import (
    DEFAULT_IMAGE_BYTES,
    DEFAULT_LATENT_BYTES,
    AliasTable,
    SizeModel,
    SynthConfig,
    generate_trace,
    generation_report,
    zipf_weights,
)


def small_cfg(**kw):
    base = dict(n_objects_initial=500, requests_per_day=2000, duration_days=3, arrival_rate=50, seed=11)
    base.update(kw)
    return SynthConfig(**base)


# -- records -------------------------------------------------------------------

def test_csv_roundtrip(tmp_path):
    t, cat = generate_trace(small_cfg())
    rec.write_trace_csv(t, tmp_path / "t.csv", "hello\nseed: 1")
    back = rec.read_trace(tmp_path / "t.csv")
    assert back == t
    first = (tmp_path / "t.csv").read_text().splitlines()[:3]
    assert first[0] == "# hello" and first[2] == "ts_ms,object_id,model_id,model_version"


def test_binary_roundtrip(tmp_path):
    t, _ = generate_trace(small_cfg())
    rec.write_trace(t, tmp_path / "t.bin")
    assert rec.read_trace(tmp_path / "t.bin") == t


def test_catalog_roundtrip(tmp_path):
    _, cat = generate_trace(small_cfg(size_model=SizeModel("lognormal")))
    rec.write_catalog(cat, tmp_path / "c.csv", "x")
    assert rec.read_catalog(tmp_path / "c.csv") == cat


def test_large_ids_survive_csv(tmp_path):
    ids = [2**64 - 1, 2**63 + 5, 1]
    t = Trace.from_ids(ids)
    rec.write_trace_csv(t, tmp_path / "t.csv")
    assert rec.read_trace(tmp_path / "t.csv").object_id.tolist() == ids


def test_object_meta_rejects_bad_sizes():
    with pytest.raises(ValueError):
        ObjectMeta(10, 10)
    with pytest.raises(ValueError):
        ObjectMeta(10, 0)


# -- synth -------------------------------------------------------------------

def test_generation_is_deterministic():
    a, ca = generate_trace(small_cfg())
    b, cb = generate_trace(small_cfg())
    assert a == b and ca == cb
    c, _ = generate_trace(small_cfg(seed=12))
    assert not a == c


def test_generated_trace_is_sorted_and_cataloged():
    t, cat = generate_trace(small_cfg())
    assert len(t) == small_cfg().n_requests
    assert t.is_sorted()
    assert set(t.distinct_objects().tolist()) <= set(cat)
    assert len(cat) == 500 + 50 * 3


def test_default_sizes():
    # 1.5 MB images, 0.29 MB latents
    assert DEFAULT_IMAGE_BYTES == int(1.5 * 2**20)
    assert DEFAULT_LATENT_BYTES == int(0.29 * 2**20)


def test_zipf_fit_recovers_exponent():
    # stationary, no births; 1e6 draws over 1000 objects
    cfg = SynthConfig(n_objects_initial=1000, requests_per_day=100_000, duration_days=10, decay_exponent=0.0, seed=7)
    t, _ = generate_trace(cfg)
    assert st.fit_zipf(t) == pytest.approx(1.11, abs=0.05)


def test_generation_report_intensity():
    r = generation_report(SynthConfig())
    # independent: (30 + 1)^-1.3 and (365 + 1)^-1.3
    assert r["intensity_ratio_30d"] == pytest.approx(31.0 ** -1.3, rel=1e-12)
    assert r["intensity_ratio_365d"] == pytest.approx(366.0 ** -1.3, rel=1e-12)
    # access intensity falls by more than 100x within a year
    assert 1 / r["intensity_ratio_365d"] > 100


def test_age_decay_visible_in_trace():
    cfg = SynthConfig(n_objects_initial=200, arrival_rate=200, duration_days=20, requests_per_day=20_000, seed=2)
    t, _ = generate_trace(cfg)
    rates = st.age_decay(t)
    for q in rates.values():
        if len(q) > 10 and q[0] > 0:
            assert q[10] < q[0]


def test_synth_config_validation():
    with pytest.raises(ConfigError):
        SynthConfig(n_objects_initial=0).validate()
    with pytest.raises(ConfigError):
        SynthConfig(size_model=SizeModel(latent_bytes=10, image_bytes=5)).validate()


def test_cagr_arrivals_grow():
    t, cat = generate_trace(small_cfg(arrival_model="cagr", cagr=1.0, duration_days=365, requests_per_day=10))
    assert len(cat) > 900


@given(hst.lists(hst.floats(0.01, 100.0), min_size=1, max_size=40))
@settings(max_examples=60, deadline=None)
def test_alias_table_probabilities(weights):
    w = np.asarray(weights)
    np.testing.assert_allclose(AliasTable(w).probabilities(), w / w.sum(), atol=1e-12)


def test_alias_table_samples_match_weights():
    w = zipf_weights(8, 1.0)
    rng = np.random.default_rng(0)
    draws = AliasTable(w).sample(rng, 200_000)
    freq = np.bincount(draws, minlength=8) / len(draws)
    np.testing.assert_allclose(freq, w / w.sum(), atol=0.005)


# -- stats -------------------------------------------------------------------

def test_top_shares_on_known_trace():
    # object k requested k times, k = 1..100
    ids = np.repeat(np.arange(1, 101), np.arange(1, 101))
    s = st.trace_stats(Trace.from_ids(ids))
    total = 100 * 101 / 2
    assert s.share_top_1pct == pytest.approx(100 / total)
    assert s.share_top_10pct == pytest.approx(sum(range(91, 101)) / total)
    assert s.popularity_cdf[-1, 1] == pytest.approx(1.0)


def test_reaccess_intervals():
    t = Trace([0, 5, 7, 20], [1, 2, 1, 1])
    assert sorted(st.reaccess_intervals(t).tolist()) == [7, 13]


def test_fit_zipf_needs_data():
    with pytest.raises(InsufficientDataError):
        st.fit_zipf(Trace.from_ids([1, 2, 3]))
    with pytest.raises(InsufficientDataError):
        st.trace_stats(Trace.from_ids([]))


def test_downsample_keeps_whole_objects():
    t, _ = generate_trace(small_cfg())
    d = st.downsample(t, 50, seed=3)
    assert len(d.distinct_objects()) == 50
    ids, counts = t.object_counts()
    full = dict(zip(ids.tolist(), counts.tolist()))
    for o, c in zip(*d.object_counts()):
        assert full[int(o)] == c
    with pytest.raises(ConfigError):
        st.downsample(t, 10**9)


def test_summary_is_json_serializable():
    t, _ = generate_trace(small_cfg())
    json.dumps(st.trace_stats(t).summary())
