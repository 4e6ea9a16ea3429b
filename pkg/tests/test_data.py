import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowlstm.data import (
    FlowRegime,
    GenConfig,
    Signal,
    SignalFormatError,
    build_dataset,
    compute_cpdf,
    compute_pdf,
    generate,
    load_dataset,
    manifest_digest,
    pdf_export,
    read_signal,
    reverse,
    save_dataset,
    segment,
    write_signal,
)
from flowlstm.tensor import make_rng

from oracles import count_modes


@pytest.fixture(scope="module")
def small():
    return build_dataset(GenConfig(seed=3), conditions_per_regime=5, seg_seconds=10.0)


def test_signal_validation():
    with pytest.raises(ValueError):
        Signal([0.5, 1.2], 100.0)
    with pytest.raises(ValueError):
        Signal([], 100.0)
    with pytest.raises(ValueError):
        Signal([0.5], 0.0)
    with pytest.raises(ValueError):
        Signal([0.5, np.nan], 10.0)
    assert Signal(np.zeros(250), 100.0).duration == 2.5


def test_regime_parse():
    assert FlowRegime.parse("churn-turbulent") is FlowRegime.ChurnTurbulent
    assert FlowRegime.parse("Cap_Bubbly") is FlowRegime.CapBubbly
    assert FlowRegime.parse("4") is FlowRegime.Annular
    with pytest.raises(ValueError):
        FlowRegime.parse("mist")


def regime_signal(regime, seed=0):
    return generate(regime, GenConfig(), make_rng(seed))


@pytest.mark.parametrize("seed", range(3))
def test_bubbly_statistics(seed):
    s = regime_signal(FlowRegime.Bubbly, seed)
    assert s.samples.mean() < 0.3
    assert compute_pdf(s, 50)[25:].sum() < 0.05


@pytest.mark.parametrize("seed", range(3))
def test_annular_statistics(seed):
    s = regime_signal(FlowRegime.Annular, seed)
    assert s.samples.mean() > 0.7
    assert compute_pdf(s, 50)[:25].sum() < 0.05


@pytest.mark.parametrize("seed", range(3))
def test_slug_is_bimodal(seed):
    s = regime_signal(FlowRegime.Slug, seed)
    pdf = compute_pdf(s, 20)
    modes = count_modes(pdf)
    assert len(modes) == 2
    centers = (np.array(modes) + 0.5) / 20
    assert centers[1] - centers[0] >= 0.3


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(list(FlowRegime)), st.integers(0, 2**31))
def test_generated_samples_in_unit_interval(regime, seed):
    s = generate(regime, GenConfig(duration=5.0), make_rng(seed))
    assert s.samples.min() >= 0.0 and s.samples.max() <= 1.0
    assert len(s) == 500
    assert s.label is regime


def test_pdf_examples():
    pdf = compute_pdf(np.full(7, 0.5), 10)
    assert pdf[5] == 1.0 and pdf.sum() == 1.0 and np.count_nonzero(pdf) == 1
    assert np.array_equal(compute_pdf(np.array([0.1, 0.1, 0.9, 0.9]), 2), [0.5, 0.5])
    assert np.array_equal(compute_cpdf(np.array([0.1, 0.1, 0.9, 0.9]), 2), [0.5, 1.0])
    with pytest.raises(ValueError):
        compute_pdf(np.zeros(0))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=200), st.integers(2, 60))
def test_cpdf_monotone_ends_at_one(values, bins):
    c = compute_cpdf(np.array(values), bins)
    assert np.all(np.diff(c) >= 0)
    assert abs(c[-1] - 1.0) <= 1e-12


def test_pdf_export_columns():
    text = pdf_export(regime_signal(FlowRegime.Slug), 10)
    lines = text.splitlines()
    assert lines[0] == "bin_center,pdf,cpdf"
    assert len(lines) == 11
    assert float(lines[-1].split(",")[2]) == pytest.approx(1.0, abs=1e-12)


def test_segment_counts():
    s60 = Signal(np.full(6000, 0.3), 100.0)
    assert len(segment(s60, 5)) == 12
    assert len(segment(s60, 20)) == 3
    s61 = Signal(np.full(6100, 0.3), 100.0)
    pieces = segment(s61, 20)
    assert len(pieces) == 3 and all(len(p) == 2000 for p in pieces)
    with pytest.raises(ValueError):
        segment(s60, 61)
    with pytest.raises(ValueError):
        segment(s60, 0.001)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 400), st.floats(0.05, 3.0), st.integers(0, 1000))
def test_segment_lossless_prefix(n, seconds, seed):
    s = Signal(make_rng(seed).random(n), 10.0)
    size = int(np.floor(seconds * 10.0 + 1e-9))
    if size < 1 or size > n:
        with pytest.raises(ValueError):
            segment(s, seconds)
        return
    pieces = segment(s, seconds)
    joined = np.concatenate([p.samples for p in pieces])
    assert np.array_equal(joined, s.samples[:joined.size])
    assert n - joined.size < size


def test_reverse():
    s = Signal([0.1, 0.2, 0.3], 10.0, FlowRegime.Slug, "x")
    assert np.array_equal(reverse(s).samples, [0.3, 0.2, 0.1])
    assert reverse(reverse(s)).samples.tolist() == s.samples.tolist()
    assert np.array_equal(compute_pdf(reverse(s)), compute_pdf(s))
    r = regime_signal(FlowRegime.ChurnTurbulent)
    assert compute_pdf(reverse(r), 50).tobytes() == compute_pdf(r, 50).tobytes()


def test_default_dataset_counts():
    on = build_dataset(GenConfig(), 40, 5.0, augment_reverse=True)
    off = build_dataset(GenConfig(), 40, 5.0, augment_reverse=False)
    assert len(on) == 5 * 40 * 12 * 2 == 4800
    assert len(off) * 2 == len(on)
    assert set(on.counts().values()) == {960}


def test_no_condition_leakage(small):
    train = {it.condition for it in small.subset("train")}
    test = {it.condition for it in small.subset("test")}
    assert train and test and not train & test
    for regime in FlowRegime:
        assert small.counts("test")[regime] == 1 * 6 * 2


def test_full_length_segments():
    ds = build_dataset(GenConfig(duration=10.0), 4, seg_seconds=10.0)
    assert len(ds) == 4 * 5 * 2
    assert ds.window == 1000


def test_dataset_deterministic(small):
    again = build_dataset(GenConfig(seed=3), conditions_per_regime=5, seg_seconds=10.0)
    assert again == small
    x1, _ = small.arrays()
    x2, _ = again.arrays()
    assert x1.tobytes() == x2.tobytes()
    other = build_dataset(GenConfig(seed=4), conditions_per_regime=5, seg_seconds=10.0)
    assert other.arrays()[0].tobytes() != x1.tobytes()


def test_bad_split():
    with pytest.raises(ValueError):
        build_dataset(GenConfig(duration=5.0), 2, 5.0, split_ratio=0.1)


def test_signal_round_trip(tmp_path):
    s = generate(FlowRegime.Slug, GenConfig(duration=3.0), make_rng(1), "abc")
    write_signal(s, tmp_path / "a.sig")
    assert read_signal(tmp_path / "a.sig") == s
    u = Signal([0.0, 1.0, 1 / 3], 7.5)
    write_signal(u, tmp_path / "b.sig")
    assert read_signal(tmp_path / "b.sig") == u


@pytest.mark.parametrize("body, lineno", [
    ("garbage\n0.5\n", 1),
    ("#flowlstm-signal sample_rate=10 label=Slug source_id=x\n0.5\nabc\n", 3),
    ("#flowlstm-signal sample_rate=10 label=Slug source_id=x\n0.5\n0.2\n1.5\n", 4),
    ("#flowlstm-signal sample_rate=10 label=Mist source_id=x\n0.5\n", 1),
    ("#flowlstm-signal sample_rate=10 label=Slug source_id=x\n", 1),
])
def test_signal_format_errors(tmp_path, body, lineno):
    path = tmp_path / "bad.sig"
    path.write_text(body)
    with pytest.raises(SignalFormatError) as err:
        read_signal(path)
    assert err.value.lineno == lineno
    assert f":{lineno}:" in str(err.value)


def test_dataset_round_trip(tmp_path, small):
    save_dataset(small, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    assert back == small
    assert back.fingerprint() == small.fingerprint()
    save_dataset(back, tmp_path / "e")
    assert manifest_digest(tmp_path / "d") == manifest_digest(tmp_path / "e")
