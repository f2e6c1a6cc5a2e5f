"""Numba-jitted convolution kernels.

Direct gather loops, parallelized over independent output rows; every
output element is accumulated sequentially, so results are bit-identical
across runs and thread counts.  fastmath is left off for the same reason.

Layouts match numpy_backend: weights [C_out, C_in // groups, *kernel],
inputs [B, C, *spatial], float64 C-contiguous.
"""

import numpy as np
import numba
from numba import njit, prange

# Pin the threading layer: skips the TBB version probe (and its warning)
# and keeps thread scheduling identical across runs.
numba.config.THREADING_LAYER = "omp"


@njit(cache=True, parallel=True)
def conv2d_fwd(x, w, stride, pad, groups):
    B, Cin, H, W = x.shape
    Cout, Cg, kh, kw = w.shape
    og = Cout // groups
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    y = np.zeros((B, Cout, Ho, Wo))
    for bo in prange(B * Cout):
        b = bo // Cout
        co = bo % Cout
        c0 = (co // og) * Cg
        for oy in range(Ho):
            iy0 = oy * stride - pad
            for ox in range(Wo):
                ix0 = ox * stride - pad
                acc = 0.0
                for ci in range(Cg):
                    for ky in range(kh):
                        iy = iy0 + ky
                        if iy < 0 or iy >= H:
                            continue
                        for kx in range(kw):
                            ix = ix0 + kx
                            if ix < 0 or ix >= W:
                                continue
                            acc += x[b, c0 + ci, iy, ix] * w[co, ci, ky, kx]
                y[b, co, oy, ox] = acc
    return y


@njit(cache=True, parallel=True)
def conv2d_gx(gy, w, stride, pad, groups, H, W):
    B, Cout, Ho, Wo = gy.shape
    _, Cg, kh, kw = w.shape
    Cin = Cg * groups
    og = Cout // groups
    gx = np.zeros((B, Cin, H, W))
    for bc in prange(B * Cin):
        b = bc // Cin
        c = bc % Cin
        g = c // Cg
        ci = c % Cg
        for iy in range(H):
            for ix in range(W):
                acc = 0.0
                for ky in range(kh):
                    t = iy + pad - ky
                    if t < 0 or t % stride != 0:
                        continue
                    oy = t // stride
                    if oy >= Ho:
                        continue
                    for kx in range(kw):
                        u = ix + pad - kx
                        if u < 0 or u % stride != 0:
                            continue
                        ox = u // stride
                        if ox >= Wo:
                            continue
                        for o in range(og):
                            acc += gy[b, g * og + o, oy, ox] * w[g * og + o, ci, ky, kx]
                gx[b, c, iy, ix] = acc
    return gx


@njit(cache=True, parallel=True)
def conv2d_gw(x, gy, stride, pad, groups, kh, kw):
    B, Cin, H, W = x.shape
    _, Cout, Ho, Wo = gy.shape
    Cg = Cin // groups
    og = Cout // groups
    gw = np.zeros((Cout, Cg, kh, kw))
    for co in prange(Cout):
        c0 = (co // og) * Cg
        for ci in range(Cg):
            for ky in range(kh):
                for kx in range(kw):
                    acc = 0.0
                    for b in range(B):
                        for oy in range(Ho):
                            iy = oy * stride - pad + ky
                            if iy < 0 or iy >= H:
                                continue
                            for ox in range(Wo):
                                ix = ox * stride - pad + kx
                                if ix < 0 or ix >= W:
                                    continue
                                acc += x[b, c0 + ci, iy, ix] * gy[b, co, oy, ox]
                    gw[co, ci, ky, kx] = acc
    return gw


@njit(cache=True, parallel=True)
def conv3d_fwd(x, w, stride, pad, groups):
    B, Cin, D, H, W = x.shape
    Cout, Cg, kd, kh, kw = w.shape
    og = Cout // groups
    Do = (D + 2 * pad - kd) // stride + 1
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    y = np.zeros((B, Cout, Do, Ho, Wo))
    for bo in prange(B * Cout):
        b = bo // Cout
        co = bo % Cout
        c0 = (co // og) * Cg
        for od in range(Do):
            id0 = od * stride - pad
            for oy in range(Ho):
                iy0 = oy * stride - pad
                for ox in range(Wo):
                    ix0 = ox * stride - pad
                    acc = 0.0
                    for ci in range(Cg):
                        for kz in range(kd):
                            iz = id0 + kz
                            if iz < 0 or iz >= D:
                                continue
                            for ky in range(kh):
                                iy = iy0 + ky
                                if iy < 0 or iy >= H:
                                    continue
                                for kx in range(kw):
                                    ix = ix0 + kx
                                    if ix < 0 or ix >= W:
                                        continue
                                    acc += x[b, c0 + ci, iz, iy, ix] * w[co, ci, kz, ky, kx]
                    y[b, co, od, oy, ox] = acc
    return y


@njit(cache=True, parallel=True)
def conv3d_gx(gy, w, stride, pad, groups, D, H, W):
    B, Cout, Do, Ho, Wo = gy.shape
    _, Cg, kd, kh, kw = w.shape
    Cin = Cg * groups
    og = Cout // groups
    gx = np.zeros((B, Cin, D, H, W))
    for bc in prange(B * Cin):
        b = bc // Cin
        c = bc % Cin
        g = c // Cg
        ci = c % Cg
        for iz in range(D):
            for iy in range(H):
                for ix in range(W):
                    acc = 0.0
                    for kz in range(kd):
                        s = iz + pad - kz
                        if s < 0 or s % stride != 0:
                            continue
                        od = s // stride
                        if od >= Do:
                            continue
                        for ky in range(kh):
                            t = iy + pad - ky
                            if t < 0 or t % stride != 0:
                                continue
                            oy = t // stride
                            if oy >= Ho:
                                continue
                            for kx in range(kw):
                                u = ix + pad - kx
                                if u < 0 or u % stride != 0:
                                    continue
                                ox = u // stride
                                if ox >= Wo:
                                    continue
                                for o in range(og):
                                    acc += gy[b, g * og + o, od, oy, ox] * w[g * og + o, ci, kz, ky, kx]
                    gx[b, c, iz, iy, ix] = acc
    return gx


@njit(cache=True, parallel=True)
def conv3d_gw(x, gy, stride, pad, groups, kd, kh, kw):
    B, Cin, D, H, W = x.shape
    _, Cout, Do, Ho, Wo = gy.shape
    Cg = Cin // groups
    og = Cout // groups
    gw = np.zeros((Cout, Cg, kd, kh, kw))
    for co in prange(Cout):
        c0 = (co // og) * Cg
        for ci in range(Cg):
            for kz in range(kd):
                for ky in range(kh):
                    for kx in range(kw):
                        acc = 0.0
                        for b in range(B):
                            for od in range(Do):
                                iz = od * stride - pad + kz
                                if iz < 0 or iz >= D:
                                    continue
                                for oy in range(Ho):
                                    iy = oy * stride - pad + ky
                                    if iy < 0 or iy >= H:
                                        continue
                                    for ox in range(Wo):
                                        ix = ox * stride - pad + kx
                                        if ix < 0 or ix >= W:
                                            continue
                                        acc += x[b, c0 + ci, iz, iy, ix] * gy[b, co, od, oy, ox]
                        gw[co, ci, kz, ky, kx] = acc
    return gw
