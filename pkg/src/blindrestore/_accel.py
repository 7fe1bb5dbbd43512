"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``BLINDRESTORE_DISABLE_NUMBA=1`` (or run without numba installed) to use
the numpy implementations.  Both paths compute the same quantities; the numba
versions exist because the numpy ones either allocate heavily (im2col) or have
no fast vectorized form (col2im scatter-add).
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False


def numba_enabled() -> bool:
    flag = os.environ.get("BLINDRESTORE_DISABLE_NUMBA", "").strip().lower()
    return _HAVE_NUMBA and flag not in ("1", "true", "yes", "on")


USE_NUMBA = numba_enabled()


def _njit(fn):
    if not _HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# --------------------------------------------------------------------------
# im2col / col2im for conv2d
#
# x is zero-padded [N, C, Hp, Wp]; cols are [N, Ho, Wo, C, kh, kw] flattened
# row-major to [N*Ho*Wo, C*kh*kw].
# --------------------------------------------------------------------------


@_njit
def _im2col_nb(xp, kh, kw, stride, ho, wo):
    n, c = xp.shape[0], xp.shape[1]
    out = np.empty((n * ho * wo, c * kh * kw), dtype=xp.dtype)
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                row = (b * ho + i) * wo + j
                col = 0
                for ch in range(c):
                    for u in range(kh):
                        for v in range(kw):
                            out[row, col] = xp[b, ch, i * stride + u, j * stride + v]
                            col += 1
    return out


def _im2col_np(xp, kh, kw, stride, ho, wo):
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride][:, :, :ho, :wo]
    n, c = xp.shape[:2]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)


def im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    if USE_NUMBA:
        return _im2col_nb(np.ascontiguousarray(xp), kh, kw, stride, ho, wo)
    return _im2col_np(xp, kh, kw, stride, ho, wo)


@_njit
def _col2im_nb(cols, n, c, hp, wp, kh, kw, stride, ho, wo):
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                row = (b * ho + i) * wo + j
                col = 0
                for ch in range(c):
                    for u in range(kh):
                        for v in range(kw):
                            out[b, ch, i * stride + u, j * stride + v] += cols[row, col]
                            col += 1
    return out


def _col2im_np(cols, n, c, hp, wp, kh, kw, stride, ho, wo):
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    g = cols.reshape(n, ho, wo, c, kh, kw)
    # loop over kernel taps only; each tap is a strided slab write without overlap
    for u in range(kh):
        for v in range(kw):
            out[:, :, u : u + stride * ho : stride, v : v + stride * wo : stride] += g[
                :, :, :, :, u, v
            ].transpose(0, 3, 1, 2)
    return out


def col2im(cols, n, c, hp, wp, kh, kw, stride, ho, wo) -> np.ndarray:
    if USE_NUMBA:
        return _col2im_nb(np.ascontiguousarray(cols), n, c, hp, wp, kh, kw, stride, ho, wo)
    return _col2im_np(cols, n, c, hp, wp, kh, kw, stride, ho, wo)


# --------------------------------------------------------------------------
# valid-mode 2-D correlation of an [Hp, Wp, C] padded image with a k x k kernel
# --------------------------------------------------------------------------


@_njit
def _correlate_nb(padded, kernel, h, w):
    kh, kw = kernel.shape
    ch = padded.shape[2]
    out = np.zeros((h, w, ch), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            for u in range(kh):
                for v in range(kw):
                    wt = kernel[u, v]
                    for c in range(ch):
                        out[i, j, c] += wt * padded[i + u, j + v, c]
    return out


def _correlate_np(padded, kernel, h, w):
    kh, kw = kernel.shape
    out = np.zeros((h, w, padded.shape[2]), dtype=np.float64)
    for u in range(kh):
        for v in range(kw):
            out += kernel[u, v] * padded[u : u + h, v : v + w, :]
    return out


def correlate_valid(padded: np.ndarray, kernel: np.ndarray, h: int, w: int) -> np.ndarray:
    padded = np.ascontiguousarray(padded, dtype=np.float64)
    kernel = np.ascontiguousarray(kernel, dtype=np.float64)
    if USE_NUMBA:
        return _correlate_nb(padded, kernel, h, w)
    return _correlate_np(padded, kernel, h, w)


# --------------------------------------------------------------------------
# separable resampling: out[i] = sum_k wts[i, k] * src[idx[i, k]] along axis 0
# --------------------------------------------------------------------------


@_njit
def _taps_nb(src, idx, wts):
    n_out, taps = idx.shape
    rest = src.shape[1]
    out = np.zeros((n_out, rest), dtype=np.float64)
    for i in range(n_out):
        for k in range(taps):
            wt = wts[i, k]
            if wt == 0.0:
                continue
            s = idx[i, k]
            for r in range(rest):
                out[i, r] += wt * src[s, r]
    return out


def _taps_np(src, idx, wts):
    return np.einsum("ik,ikr->ir", wts, src[idx])


def apply_taps(src: np.ndarray, idx: np.ndarray, wts: np.ndarray) -> np.ndarray:
    """Resample ``src`` along its first axis with per-output tap lists."""
    shape = src.shape
    flat = np.ascontiguousarray(src, dtype=np.float64).reshape(shape[0], -1)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    wts = np.ascontiguousarray(wts, dtype=np.float64)
    if USE_NUMBA:
        out = _taps_nb(flat, idx, wts)
    else:
        out = _taps_np(flat, idx, wts)
    return out.reshape((idx.shape[0],) + shape[1:])
