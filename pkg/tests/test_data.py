import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import gap_panel, make_panel
from panelfe.data import (PanelData, drop_perfect_classification, lag_index_pairs,
                          lag_pairs, load_csv)
from panelfe.errors import (ConstantCovariate, DuplicateIndex, EmptyAfterDrop, EmptyPanel,
                            MissingColumn, NonBinaryOutcome)


def write(tmp_path, text):
    p = tmp_path / "d.csv"
    p.write_text(text)
    return p


def test_load_two_rows(tmp_path):
    p = write(tmp_path, "id,t,y,x\n1,1,1,0.5\n1,2,0,1.0\n")
    panel = load_csv(p, "id", "t", "y", ["x"])
    assert panel.N == 1 and panel.n_obs == 2
    assert list(panel.periods) == [1, 2]


def test_load_gap_listing(tmp_path):
    rows = ["1,1", "1,2", "1,4", "1,5", "1,7", "2,2", "2,3", "2,5", "2,6", "2,7"]
    body = "\n".join(f"{r},{k % 2},{k * 0.1}" for k, r in enumerate(rows))
    panel = load_csv(write(tmp_path, "id,time,y,x\n" + body + "\n"), "id", "time", "y", ["x"])
    assert panel.N == 2 and panel.n_obs == 10
    assert panel.T_span == 7
    assert not panel.is_balanced
    assert set(panel.periods[panel.mask[0]]) == {1, 2, 4, 5, 7}


def test_load_errors(tmp_path):
    with pytest.raises(NonBinaryOutcome):
        load_csv(write(tmp_path, "id,t,y,x\n1,1,2,0.5\n1,2,0,1\n"), "id", "t", "y", ["x"])
    with pytest.raises(MissingColumn):
        load_csv(write(tmp_path, "id,t,y,x\n1,1,1,0.5\n"), "id", "t", "y", ["z"])
    with pytest.raises(DuplicateIndex):
        load_csv(write(tmp_path, "id,t,y,x\n1,1,1,0.5\n1,1,0,1\n"), "id", "t", "y", ["x"])
    with pytest.raises(EmptyPanel):
        load_csv(write(tmp_path, "id,t,y,x\n"), "id", "t", "y", ["x"])
    with pytest.raises(ConstantCovariate):
        load_csv(write(tmp_path, "id,t,y,x\n1,1,1,3\n1,2,0,3\n"), "id", "t", "y", ["x"])


def test_binary_mask_and_immutability():
    panel = make_panel(5, 4, seed=1)
    assert list(panel.binary_mask) == [True, False]
    with pytest.raises(ValueError):
        panel.y[0, 0] = 1.0


def test_first_appearance_unit_order():
    panel = PanelData.from_long(["b", "a", "b", "a"], [1, 1, 2, 2], [0, 1, 1, 0],
                                [0.1, 0.2, 0.3, 0.4], ["x"])
    assert panel.unit_labels == ("b", "a")


def test_drop_single_unit():
    panel = PanelData.from_long([1, 1, 1, 2, 2, 2], [1, 2, 3, 1, 2, 3],
                                [1, 1, 1, 0, 1, 0], [0.1, 0.5, 0.2, 0.3, 0.9, 0.4], ["x"])
    out = drop_perfect_classification(panel, include_i=True, include_t=False)
    assert out.drop_log.n_units_dropped == 1
    assert out.unit_labels == (2,)


def test_drop_cascade():
    # unit 1 all ones; removing it leaves period 3 with only zeros
    y = np.array([[1, 1, 1],
                  [0, 1, 0],
                  [1, 0, 0]])
    i, t = np.nonzero(np.ones_like(y))
    panel = PanelData.from_long(i, t + 1, y[i, t], np.arange(9.0), ["x"])
    out = drop_perfect_classification(panel, True, True)
    assert out.drop_log.n_units_dropped == 1
    assert out.drop_log.n_periods_dropped == 1
    assert out.unit_labels == (1, 2)
    assert list(out.periods) == [1, 2]
    assert panel.N == 3  # original untouched


def test_drop_everything():
    panel = PanelData.from_long([1, 1, 2, 2], [1, 2, 1, 2], [1, 1, 1, 1],
                                [0.1, 0.2, 0.3, 0.4], ["x"])
    with pytest.raises(EmptyAfterDrop):
        drop_perfect_classification(panel, True, True)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 0.5), st.booleans())
def test_drop_idempotent_and_conserving(seed, drop, time_too):
    panel = make_panel(6, 5, seed=seed, drop=drop, scale=2.5)
    try:
        once = drop_perfect_classification(panel, True, time_too)
    except EmptyAfterDrop:
        return
    twice = drop_perfect_classification(once, True, time_too)
    assert twice.n_obs == once.n_obs and twice.unit_labels == once.unit_labels
    assert panel.n_obs == once.n_obs + once.drop_log.n_obs_dropped
    m = once.mask
    n1 = (once.y * m).sum(axis=1)
    assert np.all((n1 > 0) & (n1 < m.sum(axis=1)))


def test_lag_pairs_gap_example():
    panel = gap_panel()
    assert lag_pairs(panel, 1, 1) == [(1, 2), (4, 5)]
    assert lag_pairs(panel, 2, 1) == [(2, 3), (5, 6), (6, 7)]
    assert lag_pairs(panel, 1, 2) == [(2, 4), (5, 7)]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.floats(0.0, 0.4))
def test_lag_pairs_properties(seed, j, drop):
    panel = make_panel(4, 7, seed=seed, drop=drop)
    ui, cl, cc = lag_index_pairs(panel, j)
    for k, u in enumerate(panel.unit_labels):
        pairs = lag_pairs(panel, u, j)
        obs = set(panel.periods[panel.mask[k]].tolist())
        assert all(b - a == j and a in obs and b in obs for a, b in pairs)
        vec = sorted((int(panel.periods[a]), int(panel.periods[b]))
                     for uu, a, b in zip(ui, cl, cc) if uu == k)
        assert vec == pairs
        if drop == 0.0:
            assert len(pairs) == panel.T - j


def test_subset_and_frame_roundtrip():
    panel = make_panel(5, 4, seed=2, drop=0.2)
    df = panel.to_frame()
    back = PanelData.from_long(df["id"], df["time"], df["y"], df[["x1", "x2"]].to_numpy(),
                               ["x1", "x2"])
    assert np.array_equal(back.mask, panel.mask)
    assert np.array_equal(back.X, panel.X)
    sub = panel.subset([0, 2], [1, 3])
    assert sub.N <= 2 and sub.T <= 2
