import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowlstm.bench import (
    TABLE_HEADERS,
    BenchReport,
    BenchRow,
    DataConfig,
    architecture_study,
    emit_report,
    format_csv,
    format_table,
    normalise_times,
    read_report,
    sensitivity_study,
    with_seed,
)
from flowlstm.data import GenConfig
from flowlstm.optim import TrainConfig
from flowlstm.zoo import STANDARD_ARCHS, parse_arch

TINY_DATA = DataConfig(GenConfig(duration=6.0), conditions_per_regime=3, seg_seconds=2.0, split_ratio=0.67)
TINY_TRAIN = TrainConfig(max_epochs=1, batch_size=16)


def sample_report():
    rows = [BenchRow("LSTM-128H-2ReLU", 86.7, 1.0, 0.02, 4), BenchRow("3LSTM-128H-2ReLU", 83.3, 1.0, 0.05, 6)]
    normalise_times(rows, "LSTM-128H-2ReLU")
    return BenchReport("architecture", rows, "LSTM-128H-2ReLU", "abcdef0123456789", "Results")


def test_table_header_exact():
    text = format_table(sample_report())
    header = text.splitlines()[1]
    assert [h.strip() for h in header.split("|")] == list(TABLE_HEADERS)
    assert " | ".join(TABLE_HEADERS) == "Network Descriptions | Test Accuracy (%) | Relative prediction time"
    assert "1.00" in text.splitlines()[3] and "2.50" in text.splitlines()[4]


def test_empty_report_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_report(BenchReport("architecture", [], "x", ""), tmp_path / "r")


def test_report_round_trip(tmp_path):
    r = sample_report()
    csv_path, txt_path = emit_report(r, tmp_path / "r")
    back = read_report(csv_path)
    assert back == r
    assert txt_path.read_text() == format_table(r)
    assert format_csv(back) == csv_path.read_text()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1e-6, 10.0), min_size=1, max_size=6), st.floats(0.1, 10.0))
def test_relative_times_scale_free(times, factor):
    rows = [BenchRow(f"r{k}", 50.0, 1.0, t, 1) for k, t in enumerate(times)]
    scaled = [BenchRow(f"r{k}", 50.0, 1.0, t * factor, 1) for k, t in enumerate(times)]
    normalise_times(rows, "r0")
    normalise_times(scaled, "r0")
    assert rows[0].relative_time == 1.0
    for a, b in zip(rows, scaled):
        assert a.relative_time == pytest.approx(b.relative_time, rel=1e-12)


def test_missing_baseline():
    with pytest.raises(ValueError):
        architecture_study(["LSTM-8H-2ReLU"], TINY_DATA, TINY_TRAIN)


def test_sensitivity_rows_in_given_order():
    arch = parse_arch("LSTM-4H-1ReLU", feature_dim=4)
    r = sensitivity_study([3, 2, 1, 0.5], arch, TINY_DATA, TINY_TRAIN, repeats=1)
    assert [row.label for row in r.rows] == ["3 s", "2 s", "1 s", "0.5 s"]
    assert r.rows[0].relative_time == 1.0
    assert all(0.0 <= a <= 100.0 for a in r.accuracies)


def test_architecture_study_is_reproducible():
    runs = [architecture_study(STANDARD_ARCHS, TINY_DATA, TINY_TRAIN, repeats=1, hidden_scale=1 / 32, feature_dim=4)
            for _ in range(2)]
    assert [row.label for row in runs[0].rows] == list(STANDARD_ARCHS)
    assert runs[0].accuracies == runs[1].accuracies
    assert runs[0].fingerprint == runs[1].fingerprint
    assert runs[0].row("LSTM-128H-2ReLU").relative_time == 1.0
    assert "hidden cells scaled" in runs[0].title


def test_with_seed():
    d, t = with_seed(TINY_DATA, TINY_TRAIN, 9)
    assert d.gen.seed == 9 and t.seed == 9 and TINY_DATA.gen.seed == 0
