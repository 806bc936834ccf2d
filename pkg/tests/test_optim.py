import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from muonlab.errors import ConfigError, ShapeError
from muonlab.optim import (
    OptimizerConfig,
    ParamState,
    adamw_step,
    momentum_update,
    muon_plus_step,
    muon_step,
    normuon_scale,
    normuon_step,
    partition_params,
    sgd_momentum_step,
    shape_prefactor,
    step_function,
    step_group,
)
from muonlab.polar import PolarMethod, exact_polar
from muonlab.tensorcore import Rng


def test_config_validation():
    with pytest.raises(ConfigError):
        OptimizerConfig(lr=-0.1)
    with pytest.raises(ConfigError):
        OptimizerConfig(momentum=1.0)
    with pytest.raises(ConfigError):
        OptimizerConfig(weight_decay=-1)
    with pytest.raises(ConfigError):
        OptimizerConfig(eps=0)
    with pytest.raises(ConfigError):
        OptimizerConfig(prefactor="sqrt")
    assert OptimizerConfig(direction="row").direction.value == "row"
    assert OptimizerConfig().with_lr(0.0).lr == 0.0  # schedules reach zero


def test_momentum_is_ema():
    st_ = ParamState()
    g = np.ones((2, 2))
    d = momentum_update(st_, g, 0.9)
    np.testing.assert_allclose(d, 0.1 * g)
    d = momentum_update(st_, g, 0.9)
    np.testing.assert_allclose(d, 0.19 * g)
    nest = momentum_update(ParamState(), g, 0.9, nesterov=True)
    np.testing.assert_allclose(nest, 0.9 * 0.1 + 0.1)


def test_prefactor():
    assert shape_prefactor((64, 256)) == 0.5
    assert shape_prefactor((256, 64)) == 2.0
    assert shape_prefactor((3, 5), "none") == 1.0


def test_muon_single_step_closed_form():
    # first step with the exact oracle: M = (1 - mu) G and Ortho is scale free
    rng = Rng(0)
    w, g = rng.normal((6, 4)), rng.normal((6, 4))
    cfg = OptimizerConfig(lr=0.1, weight_decay=0.5, polar=PolarMethod.exact())
    out = muon_step(w, ParamState(), g, cfg)
    expected = w * (1 - 0.1 * 0.5) - 0.1 * math.sqrt(6 / 4) * exact_polar(g)
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_muon_plus_none_is_muon_bitwise():
    rng = Rng(1)
    w1 = w2 = rng.normal((8, 5))
    s1, s2 = ParamState(), ParamState()
    cfg = OptimizerConfig(direction="none", weight_decay=0.1)
    for _ in range(20):
        g = rng.normal((8, 5))
        w1 = muon_step(w1, s1, g, cfg)
        w2 = muon_plus_step(w2, s2, g, cfg)
    np.testing.assert_array_equal(w1, w2)


@pytest.mark.parametrize("direction", ["col", "row", "col_row", "row_col"])
def test_muon_plus_normalizes(direction):
    rng = Rng(2)
    w, g = rng.normal((7, 5)), rng.normal((7, 5))
    cfg = OptimizerConfig(lr=1.0, direction=direction, prefactor="none")
    delta = w - muon_plus_step(w, ParamState(), g, cfg)
    norms = np.linalg.norm(delta, axis=1 if direction in ("row", "col_row") else 0)
    np.testing.assert_allclose(norms, 1.0, atol=1e-6)


def test_zero_gradient_only_decays():
    w = np.arange(6.0).reshape(2, 3)
    cfg = OptimizerConfig(lr=0.1, weight_decay=0.2)
    for fn in (muon_step, muon_plus_step, normuon_step):
        np.testing.assert_array_equal(fn(w, ParamState(), np.zeros_like(w), cfg), w * (1 - 0.1 * 0.2))


def test_matrix_optimizers_reject_vectors():
    with pytest.raises(ShapeError):
        muon_step(np.ones(3), ParamState(), np.ones(3), OptimizerConfig())
    with pytest.raises(ShapeError):
        muon_step(np.ones((2, 3)), ParamState(), np.ones((3, 2)), OptimizerConfig())


@given(st.integers(0, 2**32), st.integers(1, 20))
def test_normuon_scale_preserves_frobenius(seed, t):
    rng = Rng(seed)
    o = rng.normal((6, 9))
    state = ParamState(step_count=t)
    out = normuon_scale(o, state, 0.95, 1e-8)
    assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(o), rel=1e-12)


def test_normuon_beta2_zero_equalizes_rows():
    rng = Rng(3)
    o = rng.normal((5, 8)) * np.arange(1.0, 6.0)[:, None]
    out = normuon_scale(o, ParamState(step_count=1), 0.0, 1e-12)
    rows = np.linalg.norm(out, axis=1)
    np.testing.assert_allclose(rows, rows[0], rtol=1e-9)


def test_adamw_first_step_is_sign_like():
    w = np.zeros((2, 2))
    g = np.array([[1.0, -2.0], [0.5, -0.25]])
    out = adamw_step(w, ParamState(), g, OptimizerConfig(lr=0.01, adam_eps=1e-12))
    np.testing.assert_allclose(out, -0.01 * np.sign(g), rtol=1e-9)


def test_sgd_momentum():
    w = np.ones((2, 2))
    out = sgd_momentum_step(w, ParamState(), np.ones((2, 2)), OptimizerConfig(lr=0.5, momentum=0.5))
    np.testing.assert_allclose(out, 1.0 - 0.5 * 0.5)


def test_step_function_lookup_and_group():
    assert step_function("muon") is muon_step
    with pytest.raises(ConfigError):
        step_function("lion")
    rng = Rng(4)
    params = {"a": rng.normal((3, 3)), "b": rng.normal((3, 2))}
    grads = {k: rng.normal(v.shape) for k, v in params.items()}
    states = {k: ParamState() for k in params}
    out = step_group("muon", params, states, grads, OptimizerConfig())
    assert set(out) == {"a", "b"} and all(s.step_count == 1 for s in states.values())


def test_partition_convention():
    names = [
        ("embed.tok", (96, 8)), ("embed.pos", (4, 8)), ("blocks.0.ln1.gain", (8,)),
        ("blocks.0.attn.wq", (8, 8)), ("blocks.0.mlp.up", (32, 8)), ("blocks.1.mlp.down", (8, 32)),
        ("unembed", (96, 8)), ("mlp.w1", (4, 3)), ("bias", (7,)),
    ]
    groups = {g.name: g for g in partition_params(names, "muon_plus")}
    assert groups["matrix"].param_ids == ["blocks.0.attn.wq", "blocks.0.mlp.up", "blocks.1.mlp.down", "mlp.w1"]
    assert groups["adamw"].param_ids == ["embed.tok", "embed.pos", "blocks.0.ln1.gain", "unembed", "bias"]
    assert groups["adamw"].optimizer_kind == "adamw"
    with pytest.raises(ConfigError):
        partition_params([("head.w", (3, 3))])
    with pytest.raises(ConfigError):
        partition_params(names, "lion")


# -- documented examples and invariants --------------------------------------

EXACT = PolarMethod.exact()


def test_momentum_examples():
    s = ParamState()
    np.testing.assert_array_equal(momentum_update(s, np.array([[4.0]]), 0.0), [[4.0]])
    s = ParamState()
    np.testing.assert_allclose(momentum_update(s, np.array([[1.0, 1.0]]), 0.95), [[0.05, 0.05]], rtol=1e-15)
    s = ParamState()
    momentum_update(s, np.array([[2.0]]), 0.5)
    np.testing.assert_array_equal(momentum_update(s, np.array([[4.0]]), 0.5), [[2.5]])
    with pytest.raises(ShapeError):
        momentum_update(s, np.ones((2, 2)), 0.5)


def test_muon_examples():
    cfg = OptimizerConfig(lr=0.1, momentum=0.0, polar=EXACT)
    np.testing.assert_allclose(muon_step(np.eye(2), ParamState(), np.eye(2), cfg), 0.9 * np.eye(2), atol=1e-15)
    # 4x2: the orthogonal update is scaled by sqrt(2) exactly
    rng = Rng(5)
    w, g = rng.normal((4, 2)), rng.normal((4, 2))
    delta = w - muon_step(w, ParamState(), g, cfg)
    np.testing.assert_allclose(delta, 0.1 * math.sqrt(2) * exact_polar(g), atol=1e-15)
    ten = w - muon_step(w, ParamState(), 10 * g, cfg.with_lr(0.1))
    np.testing.assert_allclose(ten, delta, atol=1e-15)


def test_muon_plus_examples():
    cfg = OptimizerConfig(lr=1.0, momentum=0.0, direction="col", polar=EXACT)
    out = muon_plus_step(np.zeros((1, 1)), ParamState(), np.array([[7.0]]), cfg)
    assert out[0, 0] == pytest.approx(-1 / math.sqrt(1 + 1e-8), abs=1e-15)
    cfg = OptimizerConfig(lr=0.3, momentum=0.0, direction="col_row", polar=EXACT)
    out = muon_plus_step(np.zeros((2, 2)), ParamState(), np.diag([3.0, 5.0]), cfg)
    np.testing.assert_allclose(out, -0.3 * np.eye(2), atol=1e-8)


@given(st.integers(0, 2**32), st.sampled_from(["none", "col", "row", "col_row", "row_col"]),
       st.sampled_from([0.1, 1.0, 100.0]))
def test_exact_polar_single_step_scale_invariance(seed, direction, c):
    rng = Rng(seed)
    w, g = rng.normal((5, 7)), rng.normal((5, 7))
    cfg = OptimizerConfig(direction=direction, polar=EXACT)
    np.testing.assert_allclose(muon_plus_step(w, ParamState(), c * g, cfg),
                               muon_plus_step(w, ParamState(), g, cfg), atol=1e-9, rtol=0)


def test_normuon_uniform_rows_match_muon():
    q = exact_polar(Rng(6).normal((4, 4)))  # square orthogonal: all row norms 1
    cfg = OptimizerConfig(lr=0.05, momentum=0.9, adam_beta1=0.9, normuon_beta2=0.0, polar=EXACT)
    w = np.zeros((4, 4))
    np.testing.assert_allclose(normuon_step(w, ParamState(), q, cfg), muon_step(w, ParamState(), q, cfg),
                               atol=1e-9)


def test_normuon_bias_correction_first_step_equals_beta2_zero():
    o = Rng(7).normal((5, 6))
    a = normuon_scale(o, ParamState(step_count=1), 0.95, 1e-8)
    b = normuon_scale(o, ParamState(step_count=1), 0.0, 1e-8)
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_adamw_examples():
    cfg = OptimizerConfig(lr=0.001, adam_beta1=0.9, adam_beta2=0.999)
    out = adamw_step(np.zeros((1, 1)), ParamState(), np.array([[1.0]]), cfg)
    assert out[0, 0] == pytest.approx(-0.001 / (1 + 1e-8), rel=1e-12)
    rng = Rng(8)
    w, g = rng.normal((3, 3)), rng.normal((3, 3))
    dp = adamw_step(w, ParamState(), g, cfg) - w
    dn = adamw_step(w, ParamState(), -g, cfg) - w
    np.testing.assert_array_equal(dp, -dn)


def test_sgd_examples():
    g = Rng(9).normal((2, 3))
    w = np.ones((2, 3))
    np.testing.assert_allclose(sgd_momentum_step(w, ParamState(), g, OptimizerConfig(lr=0.1, momentum=0.0)),
                               w - 0.1 * g, rtol=1e-15)
    # 1x1: Muon moves by lr * sign(m), heavy ball by lr * m
    cfg = OptimizerConfig(lr=0.1, momentum=0.0, polar=EXACT)
    assert muon_step(np.zeros((1, 1)), ParamState(), np.array([[3.0]]), cfg)[0, 0] == pytest.approx(-0.1)
    assert sgd_momentum_step(np.zeros((1, 1)), ParamState(), np.array([[3.0]]), cfg)[0, 0] == pytest.approx(-0.3)
    decay = OptimizerConfig(lr=0.1, weight_decay=0.5)
    zero = np.zeros((2, 3))
    np.testing.assert_array_equal(sgd_momentum_step(w, ParamState(), zero, decay),
                                  adamw_step(w, ParamState(), zero, decay))


@pytest.mark.parametrize("kind", ["muon", "muon_plus", "normuon", "adamw", "sgd_momentum"])
def test_zero_gradient_decay_every_kind(kind):
    fn = step_function(kind)
    cfg = OptimizerConfig(lr=0.05, weight_decay=0.3, direction="row")
    w0 = Rng(10).normal((4, 3))
    w, state, ref = w0, ParamState(), w0
    for _ in range(25):
        w = fn(w, state, np.zeros_like(w0), cfg)
        ref = ref * (1 - 0.05 * 0.3)
    np.testing.assert_array_equal(w, ref)
    np.testing.assert_allclose(w, w0 * (1 - 0.05 * 0.3) ** 25, rtol=1e-13)


@pytest.mark.parametrize("kind", ["muon", "muon_plus", "normuon", "adamw", "sgd_momentum"])
def test_state_evolution_deterministic(kind):
    fn = step_function(kind)
    cfg = OptimizerConfig(direction="col_row", weight_decay=0.1)
    finals = []
    for _ in range(2):
        rng = Rng(11)
        w, state = rng.normal((6, 4)), ParamState()
        for _ in range(10):
            w = fn(w, state, rng.normal((6, 4)), cfg)
        finals.append(w)
    np.testing.assert_array_equal(*finals)


def test_momentum_and_second_moment_shapes():
    rng = Rng(12)
    s_nm, s_ad = ParamState(), ParamState()
    normuon_step(rng.normal((5, 3)), s_nm, rng.normal((5, 3)), OptimizerConfig())
    adamw_step(rng.normal((5, 3)), s_ad, rng.normal((5, 3)), OptimizerConfig())
    assert s_nm.momentum.shape == (5, 3) and s_nm.second_moment.shape == (5,)
    assert s_ad.second_moment.shape == (5, 3)


def test_partition_examples_total_and_disjoint():
    from muonlab.models import MiniTransformer

    model = MiniTransformer.init(Rng(0), d_model=8, max_len=4)
    groups = partition_params(model.named_shapes())
    ids = [n for g in groups for n in g.param_ids]
    assert sorted(ids) == sorted(model.params) and len(ids) == len(set(ids))
    matrix = next(g for g in groups if g.name == "matrix")
    assert all(len(model.params[n].shape) == 2 for n in matrix.param_ids)
    assert "blocks.0.attn.wq" in matrix.param_ids
