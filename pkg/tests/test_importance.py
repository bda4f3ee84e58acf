import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import linear_g2, random_params
from warpco.errors import ConfigurationError, FormatError, InputError, ResourceError
from warpco.importance import (
    GopStructure,
    ImportanceMap,
    LambdaRule,
    MapSource,
    SketchSpec,
    assign_maps_iwa,
    average_maps,
    compute_map,
    derive_metric_params,
    exact_jacobian,
    exact_map,
    freeze_map,
    load_map,
    save_map,
)
from warpco.wrapper import TilingLayout, identity_params, pack_tiles, restore_forward


def fd_jacobian(p, point):
    # forward-difference columns of g2; exact for affine g2 up to rounding
    base = restore_forward(p, point)
    cols = []
    eps = 1e-6
    for j in range(point.size):
        d = np.zeros(point.size)
        d[j] = eps
        cols.append(((restore_forward(p, point + d.reshape(point.shape)) - base) / eps).ravel())
    return np.stack(cols, axis=1)


def frame(layout, seed):
    z = np.random.default_rng(seed).normal(size=(layout.channels, layout.tile_height, layout.tile_width))
    return pack_tiles(z, layout), z


def test_identity_map_chi_square_concentration():
    layout = TilingLayout.square(4, 4, 4)
    f, _ = frame(layout, 0)
    h = compute_map(identity_params(4), f, layout, SketchSpec(n_s=256, seed=3)).weights
    live = ~layout.padding_mask().ravel()
    assert np.all((h[live] >= 0.5) & (h[live] <= 1.5))


def test_zero_column_gives_zero_weight():
    a = np.random.default_rng(1).normal(size=(5, 3))
    a[:, 1] = 0.0
    p = linear_g2(a)
    layout = TilingLayout.square(3, 2, 2)
    f, _ = frame(layout, 1)
    for seed in range(5):
        hf = compute_map(p, f, layout, SketchSpec(4, seed)).weights.reshape(layout.frame_shape)
        assert np.all(hf[layout.tile_slices(1)] == 0)


def test_linear_known_matrix_large_sketch():
    a = np.array([[1.0, 2.0, 0.5, 0.0], [0.0, -1.0, 1.0, 3.0], [2.0, 0.0, 0.0, 1.0], [1.0, 1.0, -1.0, 0.5]])
    p = linear_g2(a)
    layout = TilingLayout(1, 4, 4, 1, 1)
    f, _ = frame(layout, 2)
    h = compute_map(p, f, layout, SketchSpec(4096, 11)).weights
    exact = np.sum(a * a, axis=0)
    assert np.all(np.abs(h - exact) <= 0.1 * exact)


def test_exact_map_identity_and_zero():
    layout = TilingLayout.square(3, 4, 4)
    f, _ = frame(layout, 3)
    h = exact_map(identity_params(3), f, layout)
    mask = layout.padding_mask()
    assert np.all(h[~mask] == 1.0) and np.all(h[mask] == 0.0)
    zero = linear_g2(np.zeros((3, 3)))
    assert np.all(exact_map(zero, f, layout) == 0)


@pytest.mark.parametrize("bypass", [True, False])
def test_exact_jacobian_matches_finite_differences(bypass):
    p = random_params(4, bypass=bypass)
    layout = TilingLayout.square(4, 3, 3)
    f, z = frame(layout, 4)
    jac = exact_jacobian(p, f, layout)
    assert np.max(np.abs(jac - fd_jacobian(p, z))) < 1e-5


def test_exact_jacobian_cap():
    layout = TilingLayout.square(4, 8, 8)
    f, _ = frame(layout, 0)
    with pytest.raises(ResourceError):
        exact_jacobian(random_params(0), f, layout, cap=100)


def test_monte_carlo_mean_is_unbiased():
    p = random_params(7)
    layout = TilingLayout.square(4, 4, 4)
    f, _ = frame(layout, 7)
    exact = exact_map(p, f, layout).ravel()
    n_s, seeds = 4, 200
    maps = np.stack([compute_map(p, f, layout, SketchSpec(n_s, s)).weights for s in range(seeds)]).astype(np.float64)
    mean = maps.mean(axis=0)
    live = exact > 0
    # each element within 5 standard errors of the exact value
    stderr = maps.std(axis=0, ddof=1) / np.sqrt(seeds)
    assert np.all(np.abs(mean - exact)[live] <= 5 * stderr[live])


def test_map_non_negative_and_padding_zero():
    layout = TilingLayout.square(3, 4, 4)
    p = random_params(8, reduced=3)
    f, _ = frame(layout, 8)
    h = compute_map(p, f, layout, SketchSpec()).weights.reshape(layout.frame_shape)
    assert np.all(h >= 0)
    assert np.all(h[layout.padding_mask()] == 0)


def test_same_seed_same_map():
    p = random_params(9)
    layout = TilingLayout.square(4, 4, 4)
    f, _ = frame(layout, 9)
    assert compute_map(p, f, layout, SketchSpec(4, 5)) == compute_map(p, f, layout, SketchSpec(4, 5))
    assert compute_map(p, f, layout, SketchSpec(4, 5)) != compute_map(p, f, layout, SketchSpec(4, 6))


# --- metric parameters -------------------------------------------------------------


def test_l2_rule_example():
    m = derive_metric_params(np.ones(4), 0.5, 1.0, LambdaRule.PAPER_L2)
    assert (m.tau_tilde, m.tau, m.lam) == (2.0, 1.0, 1.5)


def test_zero_map_is_degenerate():
    m = derive_metric_params(np.zeros(4), 0.05, 3.0)
    assert m.tau_tilde == 0 and m.tau == 0 and m.lam == 0 and m.is_degenerate


def test_mean_rule_example():
    m = derive_metric_params(np.array([4.0, 0, 0, 0]), 0.0, 2.5, LambdaRule.MEAN_L1)
    assert (m.tau_tilde, m.tau, m.lam) == (1.0, 0.0, 2.5)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=50), st.floats(0, 1), st.floats(0.01, 100))
def test_metric_params_formulas(h, alpha, lam_sse):
    h = np.array(h)
    n = h.size
    l2 = derive_metric_params(h, alpha, lam_sse, LambdaRule.PAPER_L2)
    assert np.isclose(l2.tau, alpha * np.linalg.norm(h))
    assert np.isclose(l2.lam, (np.linalg.norm(h) / n + l2.tau) * lam_sse)
    l1 = derive_metric_params(h, alpha, lam_sse, LambdaRule.MEAN_L1)
    assert np.isclose(l1.tau, alpha * h.sum() / n)
    assert np.isclose(l1.lam, (h.sum() / n + l1.tau) * lam_sse)


def test_metric_params_bad_alpha():
    with pytest.raises(ConfigurationError):
        derive_metric_params(np.ones(3), -0.1, 1.0)


# --- IWA / FWA ---------------------------------------------------------------------


def test_iwa_policy_counts(monkeypatch):
    import warpco.importance as imp

    calls = []
    real = imp.compute_map

    def counting(*a, **k):
        calls.append(1)
        return real(*a, **k)

    monkeypatch.setattr(imp, "compute_map", counting)
    p = random_params(10)
    layout = TilingLayout.square(4, 4, 4)
    frames = [frame(layout, s)[0] for s in range(8)]
    maps = assign_maps_iwa(GopStructure(4), frames, p, layout, SketchSpec())
    assert len(calls) == 2
    assert all(m is maps[0] for m in maps[1:4]) and all(m is maps[4] for m in maps[5:])
    assert maps[0].source is MapSource.IFRAME_REUSE and maps[4].frame_index == 4


def test_iwa_gop1_equals_wa():
    p = random_params(11)
    layout = TilingLayout.square(4, 4, 4)
    frames = [frame(layout, s)[0] for s in range(4)]
    iwa = assign_maps_iwa(GopStructure(1), frames, p, layout, SketchSpec())
    for f, m in zip(frames, iwa):
        assert m.weights.tobytes() == compute_map(p, f, layout, SketchSpec()).weights.tobytes()


def test_iwa_static_sequence_equals_wa():
    p = random_params(12)
    layout = TilingLayout.square(4, 4, 4)
    f, _ = frame(layout, 12)
    iwa = assign_maps_iwa(GopStructure(4), [f] * 6, p, layout, SketchSpec())
    wa = compute_map(p, f, layout, SketchSpec())
    assert all(m.weights.tobytes() == wa.weights.tobytes() for m in iwa)


def test_average_examples():
    h = ImportanceMap(np.array([1.0, 2.0, 0.5]), 4, 0)
    assert average_maps([h]).weights.tobytes() == h.weights.tobytes()
    h3 = ImportanceMap(h.weights * 3, 4, 0)
    assert np.array_equal(average_maps([h, h3]).weights, h.weights * 2)
    assert average_maps([h]).source is MapSource.FROZEN


def test_average_rejects_mixed():
    with pytest.raises(InputError):
        average_maps([ImportanceMap(np.ones(3), 4, 0), ImportanceMap(np.ones(4), 4, 0)])
    with pytest.raises(InputError):
        average_maps([])


def test_frozen_equals_per_input_on_linear_wrapper():
    a = np.random.default_rng(13).normal(size=(6, 4))
    p = linear_g2(a)
    layout = TilingLayout.square(4, 4, 4)
    frames = [frame(layout, s)[0] for s in range(10)]
    frozen = freeze_map(p, frames, layout, SketchSpec(4, 2))
    for f in frames:
        assert compute_map(p, f, layout, SketchSpec(4, 2)).weights.tobytes() == frozen.weights.tobytes()


# --- map file format -----------------------------------------------------------------


@pytest.mark.parametrize("source,index", [(MapSource.PER_FRAME, None), (MapSource.IFRAME_REUSE, 8), (MapSource.FROZEN, None)])
def test_map_round_trip(tmp_path, source, index):
    m = ImportanceMap(np.random.default_rng(0).random(64), 4, 2**63 + 5, source, index)
    save_map(m, tmp_path / "m.imp")
    assert load_map(tmp_path / "m.imp") == m


def test_map_version_mismatch(tmp_path):
    path = tmp_path / "m.imp"
    save_map(ImportanceMap(np.ones(4), 4, 0), path)
    data = bytearray(path.read_bytes())
    data[4] = 9
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="version"):
        load_map(path)


def test_map_negative_weight(tmp_path):
    path = tmp_path / "m.imp"
    save_map(ImportanceMap(np.ones(4), 4, 0), path)
    data = bytearray(path.read_bytes())
    data[-4:] = np.array([-1.0], dtype="<f4").tobytes()
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError):
        load_map(path)


def test_map_truncated(tmp_path):
    path = tmp_path / "m.imp"
    save_map(ImportanceMap(np.ones(16), 4, 0), path)
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(FormatError):
        load_map(path)


def test_map_validation():
    with pytest.raises(InputError):
        ImportanceMap(np.array([1.0, -0.5]), 4, 0)
    with pytest.raises(InputError):
        ImportanceMap(np.array([np.inf]), 4, 0)
    with pytest.raises(ConfigurationError):
        SketchSpec(n_s=0)
