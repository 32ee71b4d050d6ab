"""Hot numeric kernels: per-example MLP and stacked-LSTM forward/backward.

Parameters use a stacked uniform-width layout so every kernel argument is a
plain contiguous float64 array:

  MLP (L hidden layers, width h, input d):
    W0 (h, d), b0 (h), Wh (L-1, h, h), bh (L-1, h), wo (h), bo scalar
  LSTM (S stacked layers, hidden h, input d, gate row order i|f|g|o):
    Wx0 (4h, d), Wh0 (4h, h), Wxd (S-1, 4h, h), Whd (S-1, 4h, h), B (S, 4h)

Dropout masks are passed in pre-scaled by 1/keep (all-ones disables them),
keeping the kernels deterministic; RNG lives with the callers.

Each kernel exists in two versions with identical signatures:

* a loop-fused body compiled with numba @njit (the default hot path);
* a vectorized pure-numpy body (suffix ``_numpy``), always importable.

Setting the environment variable GRADECAST_NUMBA=0 binds the public names
to the numpy versions instead. `benchmarks/bench_kernels.py` compares the
two; the test suite pins them to agree to float precision.
"""

from __future__ import annotations

import math
import os

import numpy as np

_flag = os.environ.get("GRADECAST_NUMBA", "1").strip().lower()
NUMBA_ENABLED = _flag not in ("0", "false", "off", "no")

if NUMBA_ENABLED:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False


def _sigmoid_vec(z):
    # Stable in both branches.
    return np.where(z >= 0.0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))


# ---------------------------------------------------------------------------
# vectorized numpy reference implementations


def mlp_fwd_numpy(W0, b0, Wh, bh, wo, bo, x, drop):
    """Forward pass. Returns (y, Z pre-activations, A dropped activations)."""
    L = drop.shape[0]
    h = W0.shape[0]
    Z = np.empty((L, h))
    A = np.empty((L, h))
    Z[0] = W0 @ x + b0
    A[0] = np.maximum(Z[0], 0.0) * drop[0]
    for l in range(1, L):
        Z[l] = Wh[l - 1] @ A[l - 1] + bh[l - 1]
        A[l] = np.maximum(Z[l], 0.0) * drop[l]
    y = float(wo @ A[L - 1] + bo)
    return y, Z, A


def mlp_bwd_numpy(W0, Wh, wo, x, Z, A, drop, dy):
    """Backward pass; dy is dLoss/dy. Returns parameter gradients."""
    L = drop.shape[0]
    dWh = np.zeros_like(Wh)
    dbh = np.zeros((Wh.shape[0], W0.shape[0]))
    dwo = dy * A[L - 1]
    dbo = dy
    da = dy * wo
    for l in range(L - 1, 0, -1):
        dz = da * drop[l] * (Z[l] > 0.0)
        dWh[l - 1] = np.outer(dz, A[l - 1])
        dbh[l - 1] = dz
        da = dz @ Wh[l - 1]
    dz = da * drop[0] * (Z[0] > 0.0)
    return np.outer(dz, x), dz.copy(), dWh, dbh, dwo, dbo


def lstm_fwd_numpy(Wx0, Wh0, Wxd, Whd, B, wo, bo, X, drop_x, drop_h, drop_top):
    """Stacked LSTM forward over a (T, d) sequence; head reads h_T only.

    Returns (y, H, C, G, TC, XD, HD) where G holds post-nonlinearity gate
    activations (i|f|g|o) and XD/HD the dropped layer inputs for backprop.
    """
    T, d = X.shape
    S = B.shape[0]
    h = Wh0.shape[1]
    H = np.zeros((T, S, h))
    C = np.zeros((T, S, h))
    G = np.zeros((T, S, 4 * h))
    TC = np.zeros((T, S, h))
    XD = X * drop_x
    HD = np.zeros((T, max(S - 1, 0), h))
    for t in range(T):
        for l in range(S):
            if l == 0:
                inp = XD[t]
                z = Wx0 @ inp
                Wh_l = Wh0
            else:
                HD[t, l - 1] = H[t, l - 1] * drop_h[t, l - 1]
                inp = HD[t, l - 1]
                z = Wxd[l - 1] @ inp
                Wh_l = Whd[l - 1]
            if t > 0:
                z = z + Wh_l @ H[t - 1, l]
                cprev = C[t - 1, l]
            else:
                cprev = np.zeros(h)
            z = z + B[l]
            gi = _sigmoid_vec(z[0:h])
            gf = _sigmoid_vec(z[h:2 * h])
            gg = np.tanh(z[2 * h:3 * h])
            go = _sigmoid_vec(z[3 * h:4 * h])
            c = gf * cprev + gi * gg
            tc = np.tanh(c)
            H[t, l] = go * tc
            C[t, l] = c
            TC[t, l] = tc
            G[t, l, 0:h] = gi
            G[t, l, h:2 * h] = gf
            G[t, l, 2 * h:3 * h] = gg
            G[t, l, 3 * h:4 * h] = go
    y = float(wo @ (H[T - 1, S - 1] * drop_top) + bo)
    return y, H, C, G, TC, XD, HD


def lstm_bwd_numpy(Wx0, Wh0, Wxd, Whd, wo, H, C, G, TC, XD, HD,
                   drop_x, drop_h, drop_top, dy):
    """Backprop through time for the stacked LSTM; dy is dLoss/dy."""
    T, S, h = H.shape
    dWx0 = np.zeros_like(Wx0)
    dWh0 = np.zeros_like(Wh0)
    dWxd = np.zeros_like(Wxd)
    dWhd = np.zeros_like(Whd)
    dB = np.zeros((S, 4 * h))
    dwo = dy * (H[T - 1, S - 1] * drop_top)
    dbo = dy
    dh_carry = np.zeros((S, h))
    dc_carry = np.zeros((S, h))
    for t in range(T - 1, -1, -1):
        dfeed = dy * wo * drop_top if t == T - 1 else np.zeros(h)
        for l in range(S - 1, -1, -1):
            dh = dfeed + dh_carry[l]
            gi = G[t, l, 0:h]
            gf = G[t, l, h:2 * h]
            gg = G[t, l, 2 * h:3 * h]
            go = G[t, l, 3 * h:4 * h]
            tc = TC[t, l]
            do = dh * tc
            dc = dc_carry[l] + dh * go * (1.0 - tc * tc)
            cprev = C[t - 1, l] if t > 0 else np.zeros(h)
            dz = np.empty(4 * h)
            dz[0:h] = (dc * gg) * gi * (1.0 - gi)
            dz[h:2 * h] = (dc * cprev) * gf * (1.0 - gf)
            dz[2 * h:3 * h] = (dc * gi) * (1.0 - gg * gg)
            dz[3 * h:4 * h] = do * go * (1.0 - go)
            dB[l] += dz
            hprev = H[t - 1, l] if t > 0 else None
            if l == 0:
                dWx0 += np.outer(dz, XD[t])
                if hprev is not None:
                    dWh0 += np.outer(dz, hprev)
                dh_carry[l] = dz @ Wh0
            else:
                dWxd[l - 1] += np.outer(dz, HD[t, l - 1])
                if hprev is not None:
                    dWhd[l - 1] += np.outer(dz, hprev)
                dh_carry[l] = dz @ Whd[l - 1]
                dfeed = (dz @ Wxd[l - 1]) * drop_h[t, l - 1]
            dc_carry[l] = dc * gf
    return dWx0, dWh0, dWxd, dWhd, dB, dwo, dbo


# ---------------------------------------------------------------------------
# loop-fused bodies for numba (scalar inner loops, no temporaries)


def _mlp_fwd_fused(W0, b0, Wh, bh, wo, bo, x, drop):
    L = drop.shape[0]
    h = W0.shape[0]
    Z = np.empty((L, h))
    A = np.empty((L, h))
    z = np.dot(W0, x)
    for k in range(h):
        zk = z[k] + b0[k]
        Z[0, k] = zk
        A[0, k] = (zk if zk > 0.0 else 0.0) * drop[0, k]
    for l in range(1, L):
        z = np.dot(Wh[l - 1], A[l - 1])
        for k in range(h):
            zk = z[k] + bh[l - 1, k]
            Z[l, k] = zk
            A[l, k] = (zk if zk > 0.0 else 0.0) * drop[l, k]
    y = bo
    for k in range(h):
        y += wo[k] * A[L - 1, k]
    return y, Z, A


def _mlp_bwd_fused(W0, Wh, wo, x, Z, A, drop, dy):
    L = drop.shape[0]
    h = W0.shape[0]
    d = W0.shape[1]
    dWh = np.zeros_like(Wh)
    dbh = np.zeros((Wh.shape[0], h))
    dwo = np.empty(h)
    for k in range(h):
        dwo[k] = dy * A[L - 1, k]
    dbo = dy
    da = np.empty(h)
    for k in range(h):
        da[k] = dy * wo[k]
    dz = np.empty(h)
    for l in range(L - 1, 0, -1):
        for k in range(h):
            dz[k] = da[k] * drop[l, k] if Z[l, k] > 0.0 else 0.0
            dbh[l - 1, k] = dz[k]
        for r in range(h):
            dzr = dz[r]
            for j in range(h):
                dWh[l - 1, r, j] = dzr * A[l - 1, j]
        da = np.dot(dz, Wh[l - 1])
    dW0 = np.empty((h, d))
    db0 = np.empty(h)
    for k in range(h):
        dz[k] = da[k] * drop[0, k] if Z[0, k] > 0.0 else 0.0
        db0[k] = dz[k]
    for r in range(h):
        dzr = dz[r]
        for j in range(d):
            dW0[r, j] = dzr * x[j]
    return dW0, db0, dWh, dbh, dwo, dbo


def _lstm_fwd_fused(Wx0, Wh0, Wxd, Whd, B, wo, bo, X, drop_x, drop_h, drop_top):
    T = X.shape[0]
    d = X.shape[1]
    S = B.shape[0]
    h = Wh0.shape[1]
    H = np.zeros((T, S, h))
    C = np.zeros((T, S, h))
    G = np.zeros((T, S, 4 * h))
    TC = np.zeros((T, S, h))
    XD = np.empty((T, d))
    HD = np.zeros((T, max(S - 1, 0), h))
    for t in range(T):
        xd_t = XD[t]
        x_t = X[t]
        dx_t = drop_x[t]
        for j in range(d):
            xd_t[j] = x_t[j] * dx_t[j]
        for l in range(S):
            if l == 0:
                z = np.dot(Wx0, xd_t)
            else:
                hd = HD[t, l - 1]
                h_below = H[t, l - 1]
                dh_tl = drop_h[t, l - 1]
                for k in range(h):
                    hd[k] = h_below[k] * dh_tl[k]
                z = np.dot(Wxd[l - 1], hd)
            if t > 0:
                if l == 0:
                    z2 = np.dot(Wh0, H[t - 1, l])
                else:
                    z2 = np.dot(Whd[l - 1], H[t - 1, l])
                for r in range(4 * h):
                    z[r] += z2[r]
            b_l = B[l]
            h_tl = H[t, l]
            c_tl = C[t, l]
            tc_tl = TC[t, l]
            g_tl = G[t, l]
            c_prev = C[t - 1, l] if t > 0 else C[t, l]
            for k in range(h):
                zi = z[k] + b_l[k]
                zf = z[h + k] + b_l[h + k]
                zg = z[2 * h + k] + b_l[2 * h + k]
                zo = z[3 * h + k] + b_l[3 * h + k]
                if zi >= 0.0:
                    gi = 1.0 / (1.0 + math.exp(-zi))
                else:
                    e = math.exp(zi)
                    gi = e / (1.0 + e)
                if zf >= 0.0:
                    gf = 1.0 / (1.0 + math.exp(-zf))
                else:
                    e = math.exp(zf)
                    gf = e / (1.0 + e)
                gg = math.tanh(zg)
                if zo >= 0.0:
                    go = 1.0 / (1.0 + math.exp(-zo))
                else:
                    e = math.exp(zo)
                    go = e / (1.0 + e)
                cprev = c_prev[k] if t > 0 else 0.0
                c = gf * cprev + gi * gg
                tc = math.tanh(c)
                h_tl[k] = go * tc
                c_tl[k] = c
                tc_tl[k] = tc
                g_tl[k] = gi
                g_tl[h + k] = gf
                g_tl[2 * h + k] = gg
                g_tl[3 * h + k] = go
    y = bo
    h_top = H[T - 1, S - 1]
    for k in range(h):
        y += wo[k] * h_top[k] * drop_top[k]
    return y, H, C, G, TC, XD, HD


def _lstm_bwd_fused(Wx0, Wh0, Wxd, Whd, wo, H, C, G, TC, XD, HD,
                    drop_x, drop_h, drop_top, dy):
    T = H.shape[0]
    S = H.shape[1]
    h = H.shape[2]
    d = Wx0.shape[1]
    dWx0 = np.zeros_like(Wx0)
    dWh0 = np.zeros_like(Wh0)
    dWxd = np.zeros_like(Wxd)
    dWhd = np.zeros_like(Whd)
    dB = np.zeros((S, 4 * h))
    dwo = np.empty(h)
    for k in range(h):
        dwo[k] = dy * H[T - 1, S - 1, k] * drop_top[k]
    dbo = dy
    dh_carry = np.zeros((S, h))
    dc_carry = np.zeros((S, h))
    dz = np.empty(4 * h)
    dfeed = np.zeros(h)
    for t in range(T - 1, -1, -1):
        if t == T - 1:
            for k in range(h):
                dfeed[k] = dy * wo[k] * drop_top[k]
        else:
            for k in range(h):
                dfeed[k] = 0.0
        for l in range(S - 1, -1, -1):
            g_tl = G[t, l]
            tc_tl = TC[t, l]
            dccar = dc_carry[l]
            dhcar = dh_carry[l]
            c_prev = C[t - 1, l] if t > 0 else C[t, l]
            for k in range(h):
                dh = dfeed[k] + dhcar[k]
                gi = g_tl[k]
                gf = g_tl[h + k]
                gg = g_tl[2 * h + k]
                go = g_tl[3 * h + k]
                tc = tc_tl[k]
                do = dh * tc
                dc = dccar[k] + dh * go * (1.0 - tc * tc)
                cprev = c_prev[k] if t > 0 else 0.0
                dz[k] = (dc * gg) * gi * (1.0 - gi)
                dz[h + k] = (dc * cprev) * gf * (1.0 - gf)
                dz[2 * h + k] = (dc * gi) * (1.0 - gg * gg)
                dz[3 * h + k] = do * go * (1.0 - go)
                dccar[k] = dc * gf
            db_l = dB[l]
            hprev = H[t - 1, l] if t > 0 else H[t, l]
            if l == 0:
                inp = XD[t]
                for r in range(4 * h):
                    dzr = dz[r]
                    db_l[r] += dzr
                    dwx_r = dWx0[r]
                    for j in range(d):
                        dwx_r[j] += dzr * inp[j]
                if t > 0:
                    for r in range(4 * h):
                        dzr = dz[r]
                        dwh_r = dWh0[r]
                        for j in range(h):
                            dwh_r[j] += dzr * hprev[j]
                dh_new = np.dot(dz, Wh0)
                for k in range(h):
                    dh_carry[l, k] = dh_new[k]
            else:
                inp = HD[t, l - 1]
                dWx_l = dWxd[l - 1]
                dWh_l = dWhd[l - 1]
                for r in range(4 * h):
                    dzr = dz[r]
                    db_l[r] += dzr
                    dwx_r = dWx_l[r]
                    for j in range(h):
                        dwx_r[j] += dzr * inp[j]
                if t > 0:
                    for r in range(4 * h):
                        dzr = dz[r]
                        dwh_r = dWh_l[r]
                        for j in range(h):
                            dwh_r[j] += dzr * hprev[j]
                dh_new = np.dot(dz, Whd[l - 1])
                dinp = np.dot(dz, Wxd[l - 1])
                dh_tl = drop_h[t, l - 1]
                for k in range(h):
                    dh_carry[l, k] = dh_new[k]
                    dfeed[k] = dinp[k] * dh_tl[k]
    return dWx0, dWh0, dWxd, dWhd, dB, dwo, dbo


if NUMBA_ENABLED:
    mlp_fwd = _njit(cache=True, nogil=True)(_mlp_fwd_fused)
    mlp_bwd = _njit(cache=True, nogil=True)(_mlp_bwd_fused)
    lstm_fwd = _njit(cache=True, nogil=True)(_lstm_fwd_fused)
    lstm_bwd = _njit(cache=True, nogil=True)(_lstm_bwd_fused)
else:
    mlp_fwd = mlp_fwd_numpy
    mlp_bwd = mlp_bwd_numpy
    lstm_fwd = lstm_fwd_numpy
    lstm_bwd = lstm_bwd_numpy


def warmup():
    """Trigger JIT compilation of all kernels on tiny inputs."""
    d, h, L, S, T = 3, 2, 2, 2, 2
    x = np.zeros(d)
    drop = np.ones((L, h))
    W0 = np.zeros((h, d)); b0 = np.zeros(h)
    Wh = np.zeros((L - 1, h, h)); bh = np.zeros((L - 1, h))
    wo = np.zeros(h)
    y, Z, A = mlp_fwd(W0, b0, Wh, bh, wo, 0.0, x, drop)
    mlp_bwd(W0, Wh, wo, x, Z, A, drop, 1.0)
    X = np.zeros((T, d))
    Wx0 = np.zeros((4 * h, d)); Wh0 = np.zeros((4 * h, h))
    Wxd = np.zeros((S - 1, 4 * h, h)); Whd = np.zeros((S - 1, 4 * h, h))
    B = np.zeros((S, 4 * h))
    dx = np.ones((T, d)); dh_ = np.ones((T, S - 1, h)); dtop = np.ones(h)
    out = lstm_fwd(Wx0, Wh0, Wxd, Whd, B, wo, 0.0, X, dx, dh_, dtop)
    lstm_bwd(Wx0, Wh0, Wxd, Whd, wo, *out[1:], dx, dh_, dtop, 1.0)
