import sys

import numpy as np
import pytest

from flowlstm.cli import main
from flowlstm.data import FlowRegime, GenConfig, Signal, generate, write_signal
from flowlstm.tensor import make_rng


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    """A generated dataset, a briefly trained checkpoint and a few signal files."""
    root = tmp_path_factory.mktemp("cli")
    data, model = root / "data", root / "model.json"
    assert main(["generate", "--conditions", "10", "--seg", "5", "--reverse", "--out", str(data)]) == 0
    assert main(["train", "--arch", "LSTM-16H-2ReLU", "--feature-dim", "16", "--data", str(data),
                 "--max-epochs", "20", "--out", str(model)]) == 0
    signals = {
        "annular": Signal(np.full(1200, 0.9), 100.0),
        "bubbly": Signal(np.full(1200, 0.05), 100.0),
        "slug": generate(FlowRegime.Slug, GenConfig(), make_rng(0), "slug0"),
        "flat": Signal(np.full(300, 0.42), 100.0),
    }
    paths = {}
    for name, sig in signals.items():
        paths[name] = root / f"{name}.sig"
        write_signal(sig, paths[name])
    return {"root": root, "data": data, "model": model, "signals": paths}


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdicts at the end of the run."""
    module = sys.modules.get("test_acceptance")
    if module is not None and module.RESULTS:
        RESULTS = module.RESULTS
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
