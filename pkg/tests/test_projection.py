import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_panel
from oracles import dummies, weighted_projection
from panelfe.projection import mode_for, weighted_residualize


def dense(panel, V, w, include_i, include_t):
    i, t = np.nonzero(panel.mask)
    D = dummies(panel, include_i, include_t)
    return weighted_projection(V[i, t], D, w[i, t])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([(True, True), (True, False), (False, True)]),
       st.floats(0.0, 0.4))
def test_matches_dense_dummy_projection(seed, effects, drop):
    panel = make_panel(6, 5, seed=seed, drop=drop)
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.05, 1.0, size=panel.mask.shape)
    res = weighted_residualize(panel.X, w, panel.mask, mode_for(*effects), tol=1e-13)
    i, t = np.nonzero(panel.mask)
    np.testing.assert_allclose(res.fitted[i, t], dense(panel, panel.X, w, *effects), atol=1e-9)
    np.testing.assert_allclose(res.residual + res.fitted, panel.X * panel.mask[..., None],
                               atol=1e-12)


def test_residual_orthogonal_to_effects():
    panel = make_panel(8, 7, seed=4, drop=0.2)
    w = np.random.default_rng(0).uniform(0.1, 2.0, panel.mask.shape)
    r = weighted_residualize(panel.X[..., 1], w, panel.mask, "both", tol=1e-13).residual
    wr = np.where(panel.mask, w * r, 0.0)
    np.testing.assert_allclose(wr.sum(axis=1), 0.0, atol=1e-10)
    np.testing.assert_allclose(wr.sum(axis=0), 0.0, atol=1e-10)


def test_idempotent():
    panel = make_panel(5, 6, seed=9)
    w = np.ones(panel.mask.shape)
    r1 = weighted_residualize(panel.X, w, panel.mask, "both", tol=1e-13).residual
    r2 = weighted_residualize(r1, w, panel.mask, "both", tol=1e-13).residual
    np.testing.assert_allclose(r1, r2, atol=1e-11)


def test_additive_effects_are_absorbed():
    N, T = 4, 5
    V = np.arange(N)[:, None] * 1.5 + np.arange(T)[None, :] * -0.3
    res = weighted_residualize(V, np.ones((N, T)), np.ones((N, T), bool), "both", tol=1e-14)
    np.testing.assert_allclose(res.residual, 0.0, atol=1e-12)


def test_bad_mode():
    with pytest.raises(ValueError):
        weighted_residualize(np.zeros((2, 2)), np.ones((2, 2)), np.ones((2, 2), bool), "x")
