"""Numba kernels against the pure-numpy reference path."""

import numpy as np
import pytest

from gradecast import kernels, nn


def _rand_mlp(rng):
    d = int(rng.integers(2, 9))
    h = int(rng.integers(2, 12))
    L = int(rng.integers(1, 4))
    params = nn.init_mlp_params(d, h, L, rng)
    x = rng.normal(size=d)
    drop = nn.mlp_masks(0.3, L, h, rng)
    return params, x, drop


def _rand_lstm(rng):
    d = int(rng.integers(2, 9))
    h = int(rng.integers(1, 9))
    S = int(rng.integers(1, 4))
    T = int(rng.integers(1, 10))
    params = nn.init_lstm_params(d, h, S, rng)
    X = rng.normal(size=(T, d))
    drop = nn.lstm_masks(0.25, T, d, S, h, rng)
    return params, X, drop


@pytest.mark.parametrize("trial", range(6))
def test_mlp_paths_agree(trial):
    rng = np.random.default_rng(100 + trial)
    p, x, drop = _rand_mlp(rng)
    args = (p["W0"], p["b0"], p["Wh"], p["bh"], p["wo"], 0.37, x, drop)
    y1, Z1, A1 = kernels.mlp_fwd(*args)
    y2, Z2, A2 = kernels.mlp_fwd_numpy(*args)
    assert abs(y1 - y2) < 1e-12
    np.testing.assert_allclose(Z1, Z2, atol=1e-12)
    np.testing.assert_allclose(A1, A2, atol=1e-12)
    g1 = kernels.mlp_bwd(p["W0"], p["Wh"], p["wo"], x, Z1, A1, drop, 1.7)
    g2 = kernels.mlp_bwd_numpy(p["W0"], p["Wh"], p["wo"], x, Z2, A2, drop, 1.7)
    for a, b in zip(g1, g2):
        np.testing.assert_allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("trial", range(6))
def test_lstm_paths_agree(trial):
    rng = np.random.default_rng(200 + trial)
    p, X, drop = _rand_lstm(rng)
    args = (p["Wx0"], p["Wh0"], p["Wxd"], p["Whd"], p["B"], p["wo"], -0.2, X) + drop
    o1 = kernels.lstm_fwd(*args)
    o2 = kernels.lstm_fwd_numpy(*args)
    assert abs(o1[0] - o2[0]) < 1e-12
    for a, b in zip(o1[1:], o2[1:]):
        np.testing.assert_allclose(a, b, atol=1e-12)
    g1 = kernels.lstm_bwd(p["Wx0"], p["Wh0"], p["Wxd"], p["Whd"], p["wo"],
                          *o1[1:], *drop, 0.9)
    g2 = kernels.lstm_bwd_numpy(p["Wx0"], p["Wh0"], p["Wxd"], p["Whd"], p["wo"],
                                *o2[1:], *drop, 0.9)
    for a, b in zip(g1, g2):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_identity_mlp_composition():
    # single hidden layer W=I b=0, head reads first unit: y = x[0] for x >= 0
    d = 4
    params = {
        "W0": np.eye(d), "b0": np.zeros(d),
        "Wh": np.zeros((0, d, d)), "bh": np.zeros((0, d)),
        "wo": np.array([1.0, 0, 0, 0]), "bo": np.zeros(()),
    }
    drop = np.ones((1, d))
    x = np.array([2.5, 1.0, 0.5, 3.0])
    y, _, _ = kernels.mlp_fwd(params["W0"], params["b0"], params["Wh"],
                              params["bh"], params["wo"], 0.0, x, drop)
    assert y == 2.5


def test_zero_lstm_outputs_bias():
    h, d, S, T = 3, 4, 2, 5
    X = np.random.default_rng(0).normal(size=(T, d))
    masks = nn.lstm_masks(0.0, T, d, S, h)
    out = kernels.lstm_fwd(np.zeros((4 * h, d)), np.zeros((4 * h, h)),
                           np.zeros((S - 1, 4 * h, h)), np.zeros((S - 1, 4 * h, h)),
                           np.zeros((S, 4 * h)), np.zeros(h), 1.25, X, *masks)
    assert out[0] == 1.25


def test_slot_permutation_symmetry():
    # permuting input slots together with matching weight columns is a no-op
    rng = np.random.default_rng(3)
    p, X, _ = _rand_lstm(rng)
    d = p["Wx0"].shape[1]
    h = p["Wh0"].shape[1]
    S = p["B"].shape[0]
    masks = nn.lstm_masks(0.0, X.shape[0], d, S, h)
    y1 = kernels.lstm_fwd(p["Wx0"], p["Wh0"], p["Wxd"], p["Whd"], p["B"],
                          p["wo"], 0.1, X, *masks)[0]
    perm = np.random.default_rng(4).permutation(d)
    y2 = kernels.lstm_fwd(np.ascontiguousarray(p["Wx0"][:, perm]), p["Wh0"],
                          p["Wxd"], p["Whd"], p["B"], p["wo"], 0.1,
                          np.ascontiguousarray(X[:, perm]), *masks)[0]
    assert abs(y1 - y2) < 1e-12


def test_numpy_fallback_flag_importable():
    # the fallback implementations stay importable regardless of the env flag
    assert callable(kernels.mlp_fwd_numpy)
    assert callable(kernels.lstm_bwd_numpy)
    assert isinstance(kernels.NUMBA_ENABLED, bool)


def test_env_flag_selects_numpy_path():
    # a fresh interpreter with GRADECAST_NUMBA=0 must bind the fallback and
    # produce the same numbers the compiled path gives here
    import os
    import subprocess
    import sys

    p = nn.init_mlp_params(5, 4, 2, np.random.default_rng(77))
    x = np.arange(5, dtype=np.float64) / 4.0
    drop = np.ones((2, 4))
    here, _, _ = kernels.mlp_fwd(p["W0"], p["b0"], p["Wh"], p["bh"],
                                 p["wo"], 0.25, x, drop)
    code = (
        "import numpy as np\n"
        "from gradecast import kernels, nn\n"
        "assert not kernels.NUMBA_ENABLED\n"
        "assert kernels.mlp_fwd is kernels.mlp_fwd_numpy\n"
        "p = nn.init_mlp_params(5, 4, 2, np.random.default_rng(77))\n"
        "x = np.arange(5, dtype=np.float64) / 4.0\n"
        "drop = np.ones((2, 4))\n"
        "y, _, _ = kernels.mlp_fwd(p['W0'], p['b0'], p['Wh'], p['bh'],"
        " p['wo'], 0.25, x, drop)\n"
        "print(repr(float(y)))\n"
    )
    env = dict(os.environ, GRADECAST_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    assert abs(float(out.stdout.strip()) - here) < 1e-12
