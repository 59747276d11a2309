import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pielab.nn import ModelSpec, TrainHyper, init_params, loss_and_grad
from pielab.nn.params import Layer, ParamSet
from pielab.prune import (CANONICAL, THRESHOLDS, PruneMask, PrunerSpec, PrunerSpecError,
                          mask_stats, per_iteration_fraction, prune_step, rewind_weights,
                          run_pruner, sample_rows, score)

from oracles import brute_prune


def _mask1(n=4):
    return PruneMask({"w": np.ones(n, dtype=bool)})


# ------------------------------------------------------------------ specs


def test_canonical_table():
    assert CANONICAL == {
        "IMP-WR": ("magnitude", "iterative", "rewind"),
        "IMP-FT": ("magnitude", "iterative", "finetune"),
        "MP-AI": ("magnitude", "at_init", "none"),
        "IIBP-WR": ("impact", "iterative", "rewind"),
        "IIBP-FT": ("impact", "iterative", "finetune"),
        "IBP-AI": ("impact", "at_init", "none"),
        "IRP-FT": ("random", "iterative", "finetune"),
        "RP-AI": ("random", "at_init", "none"),
    }
    for pid, parts in CANONICAL.items():
        assert PrunerSpec(*parts, 0.5).canonical_id == pid


@pytest.mark.parametrize("target", THRESHOLDS)
def test_random_rewind_rejected(target):
    with pytest.raises(PrunerSpecError, match="rewind"):
        PrunerSpec("random", "iterative", "rewind", target)


@pytest.mark.parametrize("parts", [
    ("magnitude", "at_init", "finetune"), ("magnitude", "iterative", "none"),
    ("saliency", "at_init", "none"), ("magnitude", "at_init", "none", 0.0),
    ("magnitude", "at_init", "none", 1.0),
])
def test_invalid_specs(parts):
    target = parts[3] if len(parts) == 4 else 0.5
    with pytest.raises(PrunerSpecError):
        PrunerSpec(*parts[:3], target)


def test_unknown_id():
    with pytest.raises(PrunerSpecError, match="unknown pruner id"):
        PrunerSpec.from_id("RP-WR", 0.5)


# ------------------------------------------------------------------ fractions


def test_per_iteration_fraction_values():
    assert per_iteration_fraction(0.488) == pytest.approx(0.2, abs=1e-12)
    assert per_iteration_fraction(0.0) == 0.0
    assert per_iteration_fraction(0.99) == pytest.approx(1 - 0.01 ** (1 / 3), abs=1e-12)
    assert per_iteration_fraction(0.99) == pytest.approx(0.78456, abs=1e-5)
    with pytest.raises(ValueError):
        per_iteration_fraction(1.0)


@given(st.floats(0.001, 0.999))
def test_per_iteration_fraction_compounds(t):
    assert (1 - per_iteration_fraction(t)) ** 3 == pytest.approx(1 - t, rel=1e-9)


# ------------------------------------------------------------------ prune_step


def test_prune_step_examples():
    m = prune_step(_mask1(), {"w": np.array([0.5, 0.1, 0.9, 0.2])}, 0.5)
    assert m.layers["w"].tolist() == [True, False, True, False]
    m = prune_step(_mask1(), {"w": np.full(4, 0.3)}, 0.25)
    assert m.layers["w"].tolist() == [False, True, True, True]
    base = _mask1()
    assert prune_step(base, {"w": np.arange(4.0)}, 0.0).layers["w"].tolist() == [True] * 4
    assert base.layers["w"].all()  # input untouched


def test_prune_step_ignores_pruned_scores():
    m = PruneMask({"w": np.array([False, True, True, True])})
    out = prune_step(m, {"w": np.array([-5.0, 3.0, 1.0, 2.0])}, 0.34)
    assert out.layers["w"].tolist() == [False, True, False, True]


@settings(max_examples=200)
@given(st.lists(st.booleans(), min_size=1, max_size=40),
       st.data(), st.floats(0.0, 1.0))
def test_prune_step_matches_oracle(keep, data, r):
    scores = data.draw(st.lists(st.sampled_from([0.0, 0.25, 0.5, 1.0, 2.0]),
                                min_size=len(keep), max_size=len(keep)))
    m = PruneMask({"w": np.array(keep)})
    out = prune_step(m, {"w": np.array(scores)}, r)
    assert out.layers["w"].tolist() == brute_prune(keep, scores, r)
    assert out.is_subset_of(m)


@settings(max_examples=60)
@given(st.sampled_from(THRESHOLDS), st.integers(10, 400), st.integers(10, 400))
def test_iterative_uniformity_and_exactness(target, n1, n2):
    rng = np.random.default_rng(n1 * 1000 + n2)
    m = PruneMask({"a": np.ones(n1, bool), "b": np.ones(n2, bool)})
    r = per_iteration_fraction(target)
    for _ in range(3):
        prev = m
        m = prune_step(m, {"a": rng.random(n1), "b": rng.random(n2)}, r)
        assert m.is_subset_of(prev)
        fa = 1 - m.layers["a"].mean()
        fb = 1 - m.layers["b"].mean()
        # each layer's fraction is the shared real-valued fraction minus its rounding
        assert abs(fa - fb) <= 3 / min(n1, n2) + 1e-12
    for name, n in (("a", n1), ("b", n2)):
        pruned = n - m.layers[name].sum()
        assert abs(pruned / n - target) <= 3 / n + 1e-12


# ------------------------------------------------------------------ scoring


def test_score_magnitude_and_random():
    spec = ModelSpec("mlp", 10, 3, 2, 2)
    p = init_params(spec, 0)
    p["hidden.weight"][0, 0] = -0.7
    s = score(p, "magnitude")
    assert s["hidden.weight"][0, 0] == pytest.approx(0.7)
    assert list(s) == ["hidden.weight"]
    r1, r2 = score(p, "random", seed=4), score(p, "random", seed=4)
    assert np.array_equal(r1["hidden.weight"], r2["hidden.weight"])
    assert np.all((r1["hidden.weight"] >= 0) & (r1["hidden.weight"] < 1))
    assert not np.array_equal(r1["hidden.weight"], score(p, "random", seed=5)["hidden.weight"])


def test_impact_uses_summed_per_example_gradients(tiny_encoded, mlp_spec):
    p = init_params(mlp_spec, 1)
    s = score(p, "impact", tiny_encoded.train, seed=7)
    rows = sample_rows(len(tiny_encoded.train), 100, 7)
    assert len(set(rows.tolist())) == 100
    G = np.zeros(p["hidden.weight"].shape)
    for i in rows:
        G += loss_and_grad(p, tiny_encoded.train.subset([i]))[1]["hidden.weight"]
    expected = np.abs(p["hidden.weight"].astype(np.float64) * G)
    assert np.allclose(s["hidden.weight"], expected, rtol=1e-4, atol=1e-9)


def test_small_split_warns(tiny_encoded, mlp_spec, caplog):
    small = tiny_encoded.train.subset(np.arange(30))
    with caplog.at_level(logging.WARNING):
        score(init_params(mlp_spec, 0), "impact", small, seed=0)
    assert "fewer than" in caplog.text


# ------------------------------------------------------------------ rewind and stats


def test_rewind_examples():
    spec = ModelSpec("mlp", 10, 3, 2, 2)
    init = init_params(spec, 0)
    trained = init.copy()
    for n in trained:
        trained[n] = trained[n] + 1.0
    empty = PruneMask.full(init)
    assert rewind_weights(trained, init, empty).equal_bytes(init)
    keep = np.ones((3, 2), bool)
    keep[1, 1] = False
    init["hidden.weight"][1, 1] = 0.37
    out = rewind_weights(trained, init, PruneMask({"hidden.weight": keep}))
    assert out["hidden.weight"][1, 1] == 0.0
    assert out["hidden.weight"][keep].tobytes() == init["hidden.weight"][keep].tobytes()


def test_mask_stats_examples():
    spec = ModelSpec("mlp", 2, 1, 1, 1)
    layers = {
        "embedding": Layer(np.zeros((2, 1), np.float32), "embedding", False),
        "hidden.weight": Layer(np.zeros((10, 10), np.float32), "dense", True),
        "hidden.bias": Layer(np.zeros(98, np.float32), "bias", False),
        "classifier.weight": Layer(np.zeros(0, np.float32), "classifier", False),
    }
    p = ParamSet(spec, layers)
    keep = np.ones(100, bool)
    keep[:50] = False
    st_ = mask_stats(PruneMask({"hidden.weight": keep.reshape(10, 10)}), p)
    assert st_["nominal_pruned_fraction"] == 0.5
    assert st_["effective_pruned_fraction"] == 0.25
    empty = mask_stats(PruneMask(), p)
    assert empty["nominal_pruned_fraction"] == 0 and empty["effective_pruned_fraction"] == 0


def test_bilstm_effective_fraction_near_nominal():
    spec = ModelSpec("bilstm", 200, 64, 128, 2)
    p = init_params(spec, 0)
    m = PruneMask.full(p)
    m = prune_step(m, {n: np.random.default_rng(0).random(p[n].shape) for n in m.layers}, 0.2)
    st_ = mask_stats(m, p)
    assert st_["nominal_pruned_fraction"] == pytest.approx(0.2, abs=1e-3)
    assert st_["effective_pruned_fraction"] == pytest.approx(0.2, abs=0.02)


# ------------------------------------------------------------------ schedules


@pytest.mark.parametrize("pid", sorted(CANONICAL))
def test_schedule_shape(pid, tiny_encoded, mlp_spec):
    hyper = TrainHyper(lr=0.05, batch_size=32, epochs=2)
    epochs = []
    res = run_pruner(PrunerSpec.from_id(pid, 0.5), mlp_spec, 0, tiny_encoded.train, hyper,
                     on_epoch=lambda ck: epochs.append(ck.epoch))
    prunes = [e.after_epoch for e in res.events if e.kind == "prune"]
    rewinds = [e.after_epoch for e in res.events if e.kind == "rewind"]
    if CANONICAL[pid][1] == "at_init":
        assert res.epochs == 2 and prunes == [0]
    else:
        assert res.epochs == 8 and prunes == [2, 4, 6]
    assert rewinds == (prunes if CANONICAL[pid][2] == "rewind" else [])
    assert epochs == list(range(res.epochs + 1))
    w = res.params["hidden.weight"]
    keep = res.mask.layers["hidden.weight"]
    assert np.all(w[~keep] == 0)
    assert set(res.mask.layers) == {"hidden.weight"}


def test_run_pruner_is_deterministic(tiny_encoded, mlp_spec):
    hyper = TrainHyper(epochs=1)
    a = run_pruner(PrunerSpec.from_id("IIBP-WR", 0.7), mlp_spec, 3, tiny_encoded.train, hyper)
    b = run_pruner(PrunerSpec.from_id("IIBP-WR", 0.7), mlp_spec, 3, tiny_encoded.train, hyper)
    assert a.params.equal_bytes(b.params)
    assert math.isclose(a.losses[-1], b.losses[-1])
