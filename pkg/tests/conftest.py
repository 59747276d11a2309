import numpy as np
import pytest

from pielab import corpus
from pielab.nn import ModelSpec


@pytest.fixture(scope="session")
def tiny_corpus():
    spec = corpus.SyntheticSpec(n_classes=3, n_train=120, n_validation=30, n_test=40, seed=3,
                                mean_length=12, common_words=150)
    return corpus.generate_synthetic_corpus(spec)


@pytest.fixture(scope="session")
def tiny_encoded(tiny_corpus):
    return corpus.encode_corpus(tiny_corpus, coverage=0.85, min_freq=1)


@pytest.fixture
def mlp_spec(tiny_encoded):
    return ModelSpec("mlp", tiny_encoded.vocab.size, 8, 6, 3, "single")


@pytest.fixture
def bilstm_spec(tiny_encoded):
    return ModelSpec("bilstm", tiny_encoded.vocab.size, 6, 5, 3, "single")


def random_batch(rng, vocab, n, width, n_classes, kind="single"):
    """Padded token matrix with lengths in [0, width] (length 0 included)."""
    from pielab.corpus import EncodedSplit

    lengths = rng.integers(0, width + 1, size=n).astype(np.int32)
    lengths[0] = width
    ids = np.zeros((n, width), dtype=np.int32)
    for i, L in enumerate(lengths):
        ids[i, :L] = rng.integers(1, vocab, size=L)
    if kind == "single":
        labels = np.eye(n_classes, dtype=np.float32)[rng.integers(0, n_classes, size=n)]
    else:
        labels = (rng.random((n, n_classes)) < 0.4).astype(np.float32)
    return EncodedSplit(np.arange(n, dtype=np.int64), ids, lengths, labels, kind)


TINY_CONFIG = {
    "name": "tiny",
    "corpus": {"synthetic": {"n_train": 120, "n_validation": 20, "n_test": 60, "seed": 5,
                             "mean_length": 12, "common_words": 150}},
    "model": {"family": "mlp", "embedding_dim": 8, "hidden_dim": 8},
    "pruners": ["RP-AI", "IMP-FT"],
    "thresholds": [0.5, 0.9],
    "n_initializations": 3,
    "epochs": 2,
    "batch_size": 16,
    "lr": 0.1,
    "encoding": {"min_freq": 1},
}


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """A fully trained and analysed tiny run directory (treat as read-only)."""
    from pielab import analysis
    from pielab.harness import config_from_dict, run_experiment

    cfg = config_from_dict(dict(TINY_CONFIG))
    cfg.output_dir = str(tmp_path_factory.mktemp("runs"))
    run_dir = run_experiment(cfg)
    analysis.analyze(run_dir)
    return run_dir


# acceptance results, filled by tests/test_acceptance.py and echoed at the end
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE[criterion] = (bool(ok), detail)
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
