"""Pure-numpy convolution kernels.

Each convolution is evaluated as a loop over kernel taps; every tap is a
strided slice contracted with BLAS (tensordot), so no im2col buffer is
materialized.  Used as the fallback when numba is unavailable or disabled
via ALLAXIS_KERNELS=numpy.

Weight layout is [C_out, C_in // groups, *kernel]; inputs are batched
[B, C, *spatial] float64 C-contiguous arrays.
"""

import numpy as np


def _out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def conv2d_fwd(x, w, stride, pad, groups):
    B, Cin, H, W = x.shape
    Cout, Cg, kh, kw = w.shape
    og = Cout // groups
    Ho, Wo = _out_size(H, kh, stride, pad), _out_size(W, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    y = np.zeros((B, Cout, Ho, Wo))
    for ky in range(kh):
        for kx in range(kw):
            xs = xp[:, :, ky:ky + (Ho - 1) * stride + 1:stride,
                    kx:kx + (Wo - 1) * stride + 1:stride]
            wk = w[:, :, ky, kx]
            if groups == 1:
                y += np.tensordot(xs, wk, axes=([1], [1])).transpose(0, 3, 1, 2)
            elif Cg == 1 and og == 1:  # depthwise
                y += wk[:, 0][None, :, None, None] * xs
            else:
                for g in range(groups):
                    y[:, g * og:(g + 1) * og] += np.tensordot(
                        xs[:, g * Cg:(g + 1) * Cg], wk[g * og:(g + 1) * og],
                        axes=([1], [1])).transpose(0, 3, 1, 2)
    return y


def conv2d_gx(gy, w, stride, pad, groups, H, W):
    B, Cout, Ho, Wo = gy.shape
    _, Cg, kh, kw = w.shape
    Cin = Cg * groups
    og = Cout // groups
    gxp = np.zeros((B, Cin, H + 2 * pad, W + 2 * pad))
    for ky in range(kh):
        for kx in range(kw):
            sl = (slice(None), slice(None),
                  slice(ky, ky + (Ho - 1) * stride + 1, stride),
                  slice(kx, kx + (Wo - 1) * stride + 1, stride))
            wk = w[:, :, ky, kx]
            if groups == 1:
                gxp[sl] += np.tensordot(gy, wk, axes=([1], [0])).transpose(0, 3, 1, 2)
            elif Cg == 1 and og == 1:
                gxp[sl] += wk[:, 0][None, :, None, None] * gy
            else:
                for g in range(groups):
                    gxp[sl][:, g * Cg:(g + 1) * Cg] += np.tensordot(
                        gy[:, g * og:(g + 1) * og], wk[g * og:(g + 1) * og],
                        axes=([1], [0])).transpose(0, 3, 1, 2)
    if pad:
        return np.ascontiguousarray(gxp[:, :, pad:pad + H, pad:pad + W])
    return gxp


def conv2d_gw(x, gy, stride, pad, groups, kh, kw):
    B, Cin, H, W = x.shape
    _, Cout, Ho, Wo = gy.shape
    Cg = Cin // groups
    og = Cout // groups
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    gw = np.zeros((Cout, Cg, kh, kw))
    for ky in range(kh):
        for kx in range(kw):
            xs = xp[:, :, ky:ky + (Ho - 1) * stride + 1:stride,
                    kx:kx + (Wo - 1) * stride + 1:stride]
            if groups == 1:
                gw[:, :, ky, kx] = np.tensordot(gy, xs, axes=([0, 2, 3], [0, 2, 3]))
            elif Cg == 1 and og == 1:
                gw[:, 0, ky, kx] = np.sum(gy * xs, axis=(0, 2, 3))
            else:
                for g in range(groups):
                    gw[g * og:(g + 1) * og, :, ky, kx] = np.tensordot(
                        gy[:, g * og:(g + 1) * og], xs[:, g * Cg:(g + 1) * Cg],
                        axes=([0, 2, 3], [0, 2, 3]))
    return gw


def conv3d_fwd(x, w, stride, pad, groups):
    B, Cin, D, H, W = x.shape
    Cout, Cg, kd, kh, kw = w.shape
    og = Cout // groups
    Do = _out_size(D, kd, stride, pad)
    Ho = _out_size(H, kh, stride, pad)
    Wo = _out_size(W, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad), (pad, pad))) if pad else x
    y = np.zeros((B, Cout, Do, Ho, Wo))
    for kz in range(kd):
        for ky in range(kh):
            for kx in range(kw):
                xs = xp[:, :, kz:kz + (Do - 1) * stride + 1:stride,
                        ky:ky + (Ho - 1) * stride + 1:stride,
                        kx:kx + (Wo - 1) * stride + 1:stride]
                wk = w[:, :, kz, ky, kx]
                if groups == 1:
                    y += np.tensordot(xs, wk, axes=([1], [1])).transpose(0, 4, 1, 2, 3)
                elif Cg == 1 and og == 1:
                    y += wk[:, 0][None, :, None, None, None] * xs
                else:
                    for g in range(groups):
                        y[:, g * og:(g + 1) * og] += np.tensordot(
                            xs[:, g * Cg:(g + 1) * Cg], wk[g * og:(g + 1) * og],
                            axes=([1], [1])).transpose(0, 4, 1, 2, 3)
    return y


def conv3d_gx(gy, w, stride, pad, groups, D, H, W):
    B, Cout, Do, Ho, Wo = gy.shape
    _, Cg, kd, kh, kw = w.shape
    Cin = Cg * groups
    og = Cout // groups
    gxp = np.zeros((B, Cin, D + 2 * pad, H + 2 * pad, W + 2 * pad))
    for kz in range(kd):
        for ky in range(kh):
            for kx in range(kw):
                sl = (slice(None), slice(None),
                      slice(kz, kz + (Do - 1) * stride + 1, stride),
                      slice(ky, ky + (Ho - 1) * stride + 1, stride),
                      slice(kx, kx + (Wo - 1) * stride + 1, stride))
                wk = w[:, :, kz, ky, kx]
                if groups == 1:
                    gxp[sl] += np.tensordot(gy, wk, axes=([1], [0])).transpose(0, 4, 1, 2, 3)
                elif Cg == 1 and og == 1:
                    gxp[sl] += wk[:, 0][None, :, None, None, None] * gy
                else:
                    for g in range(groups):
                        gxp[sl][:, g * Cg:(g + 1) * Cg] += np.tensordot(
                            gy[:, g * og:(g + 1) * og], wk[g * og:(g + 1) * og],
                            axes=([1], [0])).transpose(0, 4, 1, 2, 3)
    if pad:
        return np.ascontiguousarray(gxp[:, :, pad:pad + D, pad:pad + H, pad:pad + W])
    return gxp


def conv3d_gw(x, gy, stride, pad, groups, kd, kh, kw):
    B, Cin, D, H, W = x.shape
    _, Cout, Do, Ho, Wo = gy.shape
    Cg = Cin // groups
    og = Cout // groups
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad), (pad, pad))) if pad else x
    gw = np.zeros((Cout, Cg, kd, kh, kw))
    for kz in range(kd):
        for ky in range(kh):
            for kx in range(kw):
                xs = xp[:, :, kz:kz + (Do - 1) * stride + 1:stride,
                        ky:ky + (Ho - 1) * stride + 1:stride,
                        kx:kx + (Wo - 1) * stride + 1:stride]
                if groups == 1:
                    gw[:, :, kz, ky, kx] = np.tensordot(
                        gy, xs, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
                elif Cg == 1 and og == 1:
                    gw[:, 0, kz, ky, kx] = np.sum(gy * xs, axis=(0, 2, 3, 4))
                else:
                    for g in range(groups):
                        gw[g * og:(g + 1) * og, :, kz, ky, kx] = np.tensordot(
                            gy[:, g * og:(g + 1) * og], xs[:, g * Cg:(g + 1) * Cg],
                            axes=([0, 2, 3, 4], [0, 2, 3, 4]))
    return gw
