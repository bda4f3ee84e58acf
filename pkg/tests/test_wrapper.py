import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_params
from warpco.errors import FormatError, InputError, ShapeError
from warpco.wrapper import (
    FitConfig,
    PackedFrame,
    TilingLayout,
    WrapperParams,
    fit_wrappers,
    identity_params,
    init_params,
    load_features,
    load_params,
    pack_tiles,
    reconstruction_mse,
    reduce_forward,
    restore_forward,
    restore_vjp,
    save_features,
    save_params,
    unpack_tiles,
)


def naive_restore(p: WrapperParams, z):
    # per-pixel loops, zero padding
    w3 = p.conv3_weight.astype(np.float64)
    cm, cr = w3.shape[:2]
    _, h, w = z.shape
    a = np.zeros((cm, h, w))
    for o in range(cm):
        for i in range(h):
            for j in range(w):
                acc = float(p.conv3_bias[o])
                for c in range(cr):
                    for di in range(3):
                        for dj in range(3):
                            ii, jj = i + di - 1, j + dj - 1
                            if 0 <= ii < h and 0 <= jj < w:
                                acc += w3[o, c, di, dj] * z[c, ii, jj]
                a[o, i, j] = acc
    m = a if p.bypass else np.tanh(a)
    w1 = p.conv1_weight.astype(np.float64)
    return np.einsum("oc,chw->ohw", w1, m) + p.conv1_bias.astype(np.float64)[:, None, None]


# --- forward examples --------------------------------------------------------


def test_reduce_identity():
    p = identity_params(4)
    y = np.random.default_rng(0).normal(size=(4, 5, 5))
    assert np.array_equal(reduce_forward(p, y), y)


def test_reduce_zero_input_gives_bias():
    p = random_params(1)
    out = reduce_forward(p, np.zeros((6, 3, 4)))
    assert np.allclose(out, p.g1_bias.astype(np.float64)[:, None, None])


def test_reduce_hand_arithmetic():
    p = WrapperParams(
        g1_weight=[[1, 1], [1, -1]], g1_bias=[0, 0],
        conv3_weight=np.zeros((1, 2, 3, 3)), conv3_bias=[0],
        conv1_weight=np.zeros((2, 1)), conv1_bias=[0, 0],
    )
    out = reduce_forward(p, np.array([1.0, 2.0]).reshape(2, 1, 1))
    assert out.ravel().tolist() == [3.0, -1.0]


def test_restore_zero_weights():
    p = WrapperParams(
        g1_weight=np.zeros((3, 4)), g1_bias=np.zeros(3),
        conv3_weight=np.zeros((2, 3, 3, 3)), conv3_bias=np.zeros(2),
        conv1_weight=np.zeros((4, 2)), conv1_bias=np.zeros(4), bypass=True,
    )
    z = np.random.default_rng(0).normal(size=(3, 6, 6))
    assert np.all(restore_forward(p, z) == 0)


def test_restore_single_pixel_identity():
    p = identity_params(3)
    z = np.array([0.5, -2.0, 7.0]).reshape(3, 1, 1)
    assert np.array_equal(restore_forward(p, z), z)


@pytest.mark.parametrize("bypass", [False, True])
def test_restore_matches_naive_oracle(bypass):
    p = random_params(3, bypass=bypass)
    z = np.random.default_rng(3).normal(size=(4, 7, 6))
    assert np.max(np.abs(restore_forward(p, z) - naive_restore(p, z))) < 1e-10


def test_channel_mismatch():
    with pytest.raises(ShapeError):
        reduce_forward(random_params(0), np.zeros((5, 4, 4)))
    with pytest.raises(ShapeError):
        restore_forward(random_params(0), np.zeros((6, 4, 4)))


def test_nonfinite_params_rejected():
    p = random_params(0)
    bad = p.g1_weight.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ShapeError):
        WrapperParams(bad, p.g1_bias, p.conv3_weight, p.conv3_bias, p.conv1_weight, p.conv1_bias)


# --- VJP -----------------------------------------------------------------------


def explicit_jacobian(p, z):
    n = z.size
    cols = []
    eps = 1.0
    base = restore_forward(p, np.zeros_like(z))
    for j in range(n):
        e = np.zeros(n)
        e[j] = eps
        cols.append((restore_forward(p, e.reshape(z.shape)) - base).ravel())
    return np.stack(cols, axis=1)


def test_vjp_linear_is_transpose():
    # 4 samples: C'=1 over a 2x2 grid, bypass so g2 is affine
    p = random_params(5, channels=2, reduced=1, mid=3, bypass=True)
    z = np.zeros((1, 2, 2))
    a = explicit_jacobian(p, z)
    rng = np.random.default_rng(5)
    for _ in range(5):
        v = rng.normal(size=(2, 2, 2))
        assert np.allclose(restore_vjp(p, z, v).ravel(), a.T @ v.ravel(), atol=1e-10)


def test_vjp_tanh_at_zero_equals_bypass():
    # with zero pre-activations tanh'(0) = 1
    p = random_params(6)
    p = WrapperParams(p.g1_weight, p.g1_bias, p.conv3_weight, np.zeros(5), p.conv1_weight, p.conv1_bias)
    pb = WrapperParams(p.g1_weight, p.g1_bias, p.conv3_weight, p.conv3_bias, p.conv1_weight, p.conv1_bias, bypass=True)
    z = np.zeros((4, 5, 5))
    v = np.random.default_rng(6).normal(size=(6, 5, 5))
    assert np.array_equal(restore_vjp(p, z, v), restore_vjp(pb, z, v))


def fd_case(seed):
    rng = np.random.default_rng(seed)
    p = random_params(seed, bypass=bool(seed % 5 == 0))
    z = rng.normal(size=(4, 6, 5))
    v = rng.normal(size=(6, 6, 5))
    u = rng.normal(size=(4, 6, 5))
    eps = 1e-4
    fd = np.sum((restore_forward(p, z + eps * u) - restore_forward(p, z - eps * u)) * v) / (2 * eps)
    an = np.sum(restore_vjp(p, z, v) * u)
    return abs(fd - an) / max(abs(an), 1e-12)


def test_vjp_finite_differences_60_cases():
    errs = [fd_case(s) for s in range(60)]
    assert max(errs) < 1e-5


def test_vjp_batched_matches_loop():
    p = random_params(2)
    z = np.random.default_rng(2).normal(size=(4, 5, 5))
    vs = np.random.default_rng(3).normal(size=(3, 6, 5, 5))
    batched = restore_vjp(p, z, vs)
    for k in range(3):
        assert np.allclose(batched[k], restore_vjp(p, z, vs[k]), atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
def test_vjp_linear_in_cotangent(seed, a, b):
    rng = np.random.default_rng(seed)
    p = random_params(seed % 50)
    z = rng.normal(size=(4, 4, 4))
    v1, v2 = rng.normal(size=(2, 6, 4, 4))
    lhs = restore_vjp(p, z, a * v1 + b * v2)
    rhs = a * restore_vjp(p, z, v1) + b * restore_vjp(p, z, v2)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_bypass_is_affine(seed):
    rng = np.random.default_rng(seed)
    p = random_params(seed % 50, bypass=True)
    z1, z2 = rng.normal(size=(2, 4, 5, 5))
    g0 = restore_forward(p, np.zeros_like(z1))
    lhs = restore_forward(p, z1 + z2) - g0
    rhs = (restore_forward(p, z1) - g0) + (restore_forward(p, z2) - g0)
    assert np.max(np.abs(lhs - rhs)) < 1e-9


# --- fitting -----------------------------------------------------------------


def test_fit_zero_data():
    data = [np.zeros((6, 8, 8)) for _ in range(3)]
    res = fit_wrappers(data, FitConfig(iterations=200))
    assert res.loss_trace[-1] < 1e-6


def rank_limited(seed, n=6, c=12, cr=3, size=8):
    rng = np.random.default_rng(seed)
    basis = rng.normal(size=(c, cr))
    return [np.einsum("ck,khw->chw", basis, rng.normal(size=(cr, size, size))) for _ in range(n)]


def test_fit_rank_limited_linear():
    data = rank_limited(0)
    y = np.stack(data)
    # closed-form least squares: the best rank-C' channel projection is exact for this data
    flat = y.transpose(1, 0, 2, 3).reshape(12, -1)
    u, s, _ = np.linalg.svd(flat, full_matrices=False)
    proj = u[:, :3] @ u[:, :3].T
    assert np.mean((proj @ flat - flat) ** 2) / np.var(flat) < 1e-20
    res = fit_wrappers(data, FitConfig(reduced_channels=3, mid_channels=6, iterations=1500, bypass=True))
    assert reconstruction_mse(res.params, data) / np.var(y) < 0.01


def test_fit_trace_non_increasing_and_deterministic():
    data = rank_limited(1)
    cfg = FitConfig(reduced_channels=3, mid_channels=4, iterations=100, checkpoint_every=10, seed=7)
    a, b = fit_wrappers(data, cfg), fit_wrappers(data, cfg)
    assert a.params == b.params
    assert all(x >= y for x, y in zip(a.loss_trace, a.loss_trace[1:]))
    assert len(a.loss_trace) == 11


def test_fit_ignored_channels_stay_zero():
    data = rank_limited(2)
    res = fit_wrappers(data, FitConfig(reduced_channels=4, mid_channels=4, iterations=50, ignore_channels=(2, 3)))
    assert np.all(res.params.conv3_weight[:, 2:] == 0)


def test_fit_input_errors():
    with pytest.raises(InputError):
        fit_wrappers([])
    with pytest.raises(InputError):
        fit_wrappers([np.zeros((4, 4, 4)), np.zeros((4, 5, 4))])


# --- tiling --------------------------------------------------------------------


def test_pack_layout_channel_positions():
    layout = TilingLayout(2, 2, 4, 8, 8)
    z = np.arange(4, dtype=float)[:, None, None] * np.ones((4, 8, 8))
    f = pack_tiles(z, layout)
    assert f.samples.shape == (16, 16)
    assert np.all(f.samples[8:, 8:] == 3)
    assert np.all(f.samples[:8, 8:] == 1)


def test_pack_unused_tile_is_zero():
    layout = TilingLayout.square(3, 4, 4)
    assert (layout.rows, layout.cols) == (2, 2)
    f = pack_tiles(np.ones((3, 4, 4)) * 5, layout)
    assert np.all(f.samples[4:, 4:] == 0)
    assert layout.padding_mask()[4:, 4:].all() and not layout.padding_mask()[:4, :4].any()


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 9), st.integers(1, 6), st.integers(1, 6), st.integers(0, 1000))
def test_pack_unpack_bijection(c, h, w, seed):
    layout = TilingLayout.square(c, h, w)
    z = np.random.default_rng(seed).normal(size=(c, h, w))
    f = pack_tiles(z, layout)
    assert np.array_equal(unpack_tiles(f), z)
    # padding never leaks into unpack
    noisy = f.samples.copy()
    noisy[layout.padding_mask()] = 99.0
    assert np.array_equal(unpack_tiles(PackedFrame(noisy, layout)), z)


def test_pack_shape_error():
    with pytest.raises(ShapeError):
        pack_tiles(np.zeros((4, 8, 8)), TilingLayout(2, 2, 4, 4, 4))


# --- file formats ----------------------------------------------------------------


def test_params_round_trip(tmp_path):
    p = random_params(9, bypass=True)
    save_params(p, tmp_path / "w.wrp")
    q = load_params(tmp_path / "w.wrp")
    assert q == p and q.bypass
    for name in WrapperParams.array_names():
        assert getattr(q, name).tobytes() == getattr(p, name).tobytes()


def test_params_truncated(tmp_path):
    path = tmp_path / "w.wrp"
    save_params(random_params(1), path)
    data = path.read_bytes()
    for cut in (2, 10, len(data) // 2, len(data) - 1):
        path.write_bytes(data[:cut])
        with pytest.raises(FormatError):
            load_params(path)


def test_params_bad_magic(tmp_path):
    path = tmp_path / "w.wrp"
    save_params(random_params(1), path)
    path.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(FormatError, match="WRP1"):
        load_params(path)


def test_params_trailing_bytes(tmp_path):
    path = tmp_path / "w.wrp"
    save_params(random_params(1), path)
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(FormatError):
        load_params(path)


def test_features_round_trip(tmp_path):
    frames = list(np.random.default_rng(0).normal(size=(3, 4, 5, 6)).astype(np.float32))
    save_features(frames, tmp_path / "f.ftn")
    back = load_features(tmp_path / "f.ftn")
    assert len(back) == 3 and all(np.array_equal(a, b) for a, b in zip(frames, back))


def test_features_truncated(tmp_path):
    path = tmp_path / "f.ftn"
    save_features([np.zeros((2, 2, 2))], path)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(FormatError):
        load_features(path)


def test_init_variance():
    p = init_params(64, 32, 48, seed=0)
    assert abs(np.var(p.g1_weight) - 1 / 64) < 0.15 / 64
    assert abs(np.var(p.conv3_weight) - 1 / (32 * 9)) < 0.15 / (32 * 9)
