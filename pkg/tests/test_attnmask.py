import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lightmotion.attnmask import (
    AttentionMap,
    MaskShape,
    binarize_refine,
    extract_token_map,
    load_attention,
    synth_mask,
)
from lightmotion.errors import NumericError, ParameterError
from lightmotion.tensorio import KIND_ATTENTION, write_lmt


def test_constant_single_token():
    a = AttentionMap(np.full((2, 12, 1), 0.4), 3, 4)
    grid = extract_token_map(a, 0)
    assert grid.shape == (2, 3, 4) and np.all(grid == 0.4)


def test_hand_reshape():
    a = AttentionMap(np.array([[[0.1], [0.9], [0.2], [0.3]]]), 2, 2)
    assert np.array_equal(extract_token_map(a, 0), [[[0.1, 0.9], [0.2, 0.3]]])


def test_token_bound():
    a = AttentionMap(np.ones((1, 4, 3)), 2, 2)
    with pytest.raises(IndexError):
        extract_token_map(a, 3)


def test_negative_attention_rejected():
    with pytest.raises(NumericError):
        AttentionMap(-np.ones((1, 4, 1)), 2, 2)


def test_load_from_lmt(tmp_path):
    spatial = np.random.default_rng(0).random((2, 3, 4, 5)).astype(np.float32)
    write_lmt(spatial, tmp_path / "a.lmt", kind=KIND_ATTENTION)
    a = load_attention(tmp_path / "a.lmt")
    assert a.n_tokens == 3
    np.testing.assert_array_equal(extract_token_map(a, 1), spatial[:, 1])


def test_constant_grid_is_background():
    assert not binarize_refine(np.ones((2, 5, 5)), 1.0, 3).any()


def test_single_hot_pixel():
    grid = np.ones((1, 6, 6))
    grid[0, 2, 4] = 10.0
    fg = binarize_refine(grid, 2.0, 1)
    assert fg.sum() == 1 and fg[0, 2, 4]


def test_isolated_pixel_removed():
    grid = np.zeros((1, 7, 7))
    grid[0, 3, 3] = 1.0
    assert binarize_refine(grid, 1.0, 1).sum() == 1
    assert not binarize_refine(grid, 1.0, 3).any()


def test_blob_survives_vote():
    grid = np.zeros((1, 12, 12))
    grid[0, 3:9, 3:9] = 1.0
    fg = binarize_refine(grid, 1.0, 3)
    assert fg[0, 4:8, 4:8].all() and not fg[0, :2].any()


def test_binarize_errors():
    with pytest.raises(NumericError):
        binarize_refine(np.full((1, 2, 2), np.nan))
    with pytest.raises(ParameterError):
        binarize_refine(np.ones((1, 2, 2)), 1.0, 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 16), st.floats(0.2, 3.0))
def test_binarize_idempotent_window_one(seed, factor):
    grid = np.random.default_rng(seed).random((2, 8, 8))
    fg = binarize_refine(grid, factor, 1)
    again = binarize_refine(fg.astype(float), 1.0, 1)
    # a 0/1 frame re-thresholds to itself unless it is all-foreground
    for f in range(2):
        if not fg[f].all():
            assert np.array_equal(again[f], fg[f])


def test_synth_rect_examples():
    assert synth_mask(MaskShape("rect", (3.5, 3.5), (3.5, 3.5)), 2, 8, 8).all()
    m = synth_mask(MaskShape("rect", (2.5, 2.5), (0.5, 0.5)), 1, 8, 8)
    assert m.sum() == 4 and m[0, 2:4, 2:4].all()


def test_synth_degenerate_ellipse():
    m = synth_mask(MaskShape("ellipse", (4, 5), (0, 0)), 3, 9, 9)
    assert m.shape == (3, 9, 9) and m[:, 4, 5].all() and m.sum() == 3


def test_synth_out_of_bounds():
    with pytest.raises(ParameterError):
        synth_mask(MaskShape("ellipse", (1, 1), (3, 1)), 1, 8, 8)
    with pytest.raises(ParameterError):
        synth_mask(MaskShape("star", (1, 1), (0, 0)), 1, 8, 8)
