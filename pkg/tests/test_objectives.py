import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tftargets import gradcheck
from tftargets.objectives import (
    ALL_OBJECTIVES,
    APPROACHES,
    DOMAINS,
    EPS_LOG,
    InvalidObjectiveError,
    LossContext,
    ObjectiveId,
    loss_gradient,
    loss_value,
    output_activation_for,
    weighted_im_value,
)


def ctx_1x1(A, R=1.0, theta=0.0):
    return LossContext(np.array([[A]]), np.array([[R]]), np.array([[theta]]), np.array([[1.0]]))


def unclipped_context(rng, F=3, T=3, Q=2):
    R = rng.uniform(0.5, 2.0, (F, T))
    A = R * rng.uniform(0.05, 5.0, (F, T))
    theta = rng.uniform(-np.pi, np.pi, (F, T))
    return LossContext(A, R, theta, rng.uniform(0, 1, (Q, F)))


def brute_force(obj, ctx, out):
    """Element-wise loops over the defining sums, written independently of the module."""
    F, T = ctx.A.shape
    Q = ctx.B.shape[0]
    log = lambda v: np.log(max(v, EPS_LOG))  # noqa: E731
    est = [[out[k][l] if obj.approach == "DM" else out[k][l] * ctx.R[k][l] for l in range(T)] for k in range(F)]
    total = 0.0
    if obj.approach == "MA":
        for k, l in itertools.product(range(F), range(T)):
            ratio = ctx.A[k][l] / ctx.R[k][l]
            if obj.domain == "PSSA":
                m = min(max(ratio * np.cos(ctx.theta[k][l]), -10), 10)
            else:
                m = min(max(ratio, 0), 10)
            total += (m - out[k][l]) ** 2
        return total / (T * F)
    if obj.domain in ("MSA", "LMSA"):
        for q, l in itertools.product(range(Q), range(T)):
            a_bar = sum(ctx.B[q][k] * ctx.A[k][l] for k in range(F))
            e_bar = sum(ctx.B[q][k] * est[k][l] for k in range(F))
            d = (log(a_bar) - log(e_bar)) if obj.domain == "LMSA" else (a_bar - e_bar)
            total += d * d
        return total / (T * Q)
    for k, l in itertools.product(range(F), range(T)):
        tgt = ctx.A[k][l] * (np.cos(ctx.theta[k][l]) if obj.domain == "PSSA" else 1.0)
        d = (log(tgt) - log(est[k][l])) if obj.domain == "LSA" else (tgt - est[k][l])
        total += d * d
    return total / (T * F)


class TestObjectiveId:
    def test_exactly_twelve_valid(self):
        valid = []
        for d, a in itertools.product(DOMAINS, APPROACHES):
            try:
                valid.append(ObjectiveId(d, a).name)
            except InvalidObjectiveError:
                pass
        assert len(valid) == 12
        assert set(valid) == {o.name for o in ALL_OBJECTIVES}

    @pytest.mark.parametrize("bad", ["lsa-ma", "msa-ma", "lmsa-ma", "foo-dm", "stsa", "stsa-xx"])
    def test_invalid(self, bad):
        with pytest.raises(InvalidObjectiveError):
            ObjectiveId.parse(bad)

    def test_round_trip_names(self):
        for o in ALL_OBJECTIVES:
            assert ObjectiveId.parse(o.name) == o


class TestValues:
    def test_stsa_dm_scalar(self):
        assert loss_value("stsa-dm", ctx_1x1(2.0), np.array([[1.0]])) == 1.0

    def test_stsa_im_at_iam(self):
        rng = np.random.default_rng(0)
        ctx = unclipped_context(rng)
        assert loss_value("stsa-im", ctx, ctx.A / ctx.R) == pytest.approx(0.0, abs=1e-28)

    @pytest.mark.parametrize("obj", ALL_OBJECTIVES, ids=str)
    def test_brute_force(self, obj):
        rng = np.random.default_rng(hash(obj.name) % 2**32)
        ctx = gradcheck.random_context(rng, 4, 3)
        out = rng.uniform(0.2, 2.0, (4, 3))
        assert loss_value(obj, ctx, out) == pytest.approx(brute_force(obj, ctx, out), rel=1e-12)

    def test_pssa_ma_clipping_in_brute_force(self):
        rng = np.random.default_rng(9)
        ctx = LossContext(rng.uniform(0, 30, (4, 3)), rng.uniform(0.1, 1, (4, 3)),
                          rng.uniform(-np.pi, np.pi, (4, 3)), rng.random((2, 4)))
        out = rng.uniform(-2, 2, (4, 3))
        assert loss_value("pssa-ma", ctx, out) == pytest.approx(brute_force(ObjectiveId.parse("pssa-ma"), ctx, out))

    def test_mel_uses_projected_operands(self):
        rng = np.random.default_rng(3)
        ctx = gradcheck.random_context(rng, 6, 4)
        out = rng.uniform(0.2, 2, (6, 4))
        a_bar, est_bar = ctx.B @ ctx.A, ctx.B @ out
        assert loss_value("msa-dm", ctx, out) == pytest.approx(np.sum((a_bar - est_bar) ** 2) / (4 * 3))

    def test_invalid_inputs(self):
        ctx = ctx_1x1(1.0)
        with pytest.raises(ValueError):
            loss_value("stsa-dm", ctx, np.array([[np.nan]]))
        with pytest.raises(ValueError):
            loss_value("stsa-dm", ctx, np.ones((2, 2)))
        with pytest.raises(InvalidObjectiveError):
            loss_value("lsa-ma", ctx, np.ones((1, 1)))

    def test_batched_matches_items(self):
        rng = np.random.default_rng(4)
        ctx = gradcheck.random_context(rng, 5, 3, batch=4)
        out = rng.uniform(0.2, 2, (4, 5, 3))
        for obj in ALL_OBJECTIVES:
            vals = loss_value(obj, ctx, out)
            for i in range(4):
                assert vals[i] == pytest.approx(loss_value(obj, ctx[i], out[i]), rel=1e-12)


class TestGradients:
    def test_stsa_dm_scalar(self):
        assert loss_gradient("stsa-dm", ctx_1x1(2.0), np.array([[1.0]]))[0, 0] == -2.0

    @pytest.mark.parametrize("obj", ALL_OBJECTIVES, ids=str)
    def test_finite_differences(self, obj):
        rng = np.random.default_rng(17)
        for _ in range(3):
            check = gradcheck.check_objective(obj, rng)
            assert check.rel_error < 1e-5

    @pytest.mark.parametrize("obj", ALL_OBJECTIVES, ids=str)
    def test_zero_at_minimizer(self, obj):
        rng = np.random.default_rng(5)
        ctx = unclipped_context(rng, 4, 3)
        if obj.approach == "DM":
            # Mel losses are minimized by the clean magnitude itself
            out = ctx.phase_sensitive_target if obj.domain == "PSSA" else ctx.A
        elif obj.domain == "PSSA":
            out = ctx.A / ctx.R * np.cos(ctx.theta)
        else:
            out = ctx.A / ctx.R
        assert loss_value(obj, ctx, out) == pytest.approx(0.0, abs=1e-20)
        np.testing.assert_allclose(loss_gradient(obj, ctx, out), 0.0, atol=1e-12)

    def test_closed_forms(self):
        rng = np.random.default_rng(6)
        ctx = gradcheck.random_context(rng, 4, 3)
        out = rng.uniform(0.2, 2, (4, 3))
        a = ctx.a
        np.testing.assert_allclose(loss_gradient("stsa-dm", ctx, out), -2 * a * (ctx.A - out))
        np.testing.assert_allclose(loss_gradient("stsa-im", ctx, out), -2 * a * (ctx.A - out * ctx.R) * ctx.R)
        np.testing.assert_allclose(loss_gradient("lsa-dm", ctx, out), -2 * a * (np.log(ctx.A) - np.log(out)) / out)
        np.testing.assert_allclose(loss_gradient("stsa-ma", ctx, out), -2 * a * (np.clip(ctx.A / ctx.R, 0, 10) - out))


class TestWeightedIm:
    def test_zero_at_ratio(self):
        ctx = unclipped_context(np.random.default_rng(0))
        assert weighted_im_value(ctx, ctx.A / ctx.R) == pytest.approx(0.0, abs=1e-28)

    def test_equals_ma(self):
        rng = np.random.default_rng(1)
        ctx = unclipped_context(rng)
        m = rng.uniform(0, 3, (3, 3))
        ma = loss_value("stsa-ma", ctx, m)
        assert abs(weighted_im_value(ctx, m) - ma) / ma < 1e-10
        pma = loss_value("pssa-ma", ctx, m)
        assert abs(weighted_im_value(ctx, m, phase_sensitive=True) - pma) / pma < 1e-10

    def test_phase_sensitive_with_zero_phase(self):
        rng = np.random.default_rng(2)
        c = unclipped_context(rng)
        ctx = LossContext(c.A, c.R, np.zeros_like(c.A), c.B)
        m = rng.uniform(0, 3, (3, 3))
        assert weighted_im_value(ctx, m, True) == weighted_im_value(ctx, m, False)


class TestProperties:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.sampled_from(ALL_OBJECTIVES))
    def test_nonnegative(self, seed, obj):
        rng = np.random.default_rng(seed)
        ctx = gradcheck.random_context(rng)
        assert loss_value(obj, ctx, rng.uniform(-1, 3, (6, 4))) >= 0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.1, 10.0))
    def test_scale_behaviour(self, seed, c):
        rng = np.random.default_rng(seed)
        base = unclipped_context(rng, 5, 4)
        scaled = LossContext(c * base.A, c * base.R, base.theta, base.B)
        out = rng.uniform(0.1, 2, (5, 4))
        for name in ("stsa-dm", "msa-dm", "pssa-dm"):
            assert loss_value(name, scaled, c * out) == pytest.approx(c * c * loss_value(name, base, out), rel=1e-10)
        for name in ("stsa-im", "msa-im", "pssa-im"):
            assert loss_value(name, scaled, out) == pytest.approx(c * c * loss_value(name, base, out), rel=1e-10)
        for name in ("stsa-ma", "pssa-ma"):
            assert loss_value(name, scaled, out) == pytest.approx(loss_value(name, base, out), rel=1e-10)


ACTIVATION_TABLE = {
    "stsa-dm": "exponential", "lsa-dm": "exponential", "msa-dm": "exponential", "lmsa-dm": "exponential",
    "pssa-dm": "linear",
    "stsa-im": "rectifier", "lsa-im": "rectifier", "msa-im": "rectifier", "lmsa-im": "rectifier",
    "pssa-im": "linear",
    "stsa-ma": "rectifier", "pssa-ma": "linear",
}


@pytest.mark.parametrize("name,expected", sorted(ACTIVATION_TABLE.items()))
def test_output_activation(name, expected):
    assert output_activation_for(name) == expected
