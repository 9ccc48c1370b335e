"""Independent reference computations used by the tests (plain loops, no FFT, no autograd)."""

import cmath

import numpy as np


def direct_dft2(x):
    """O(N^4) 2-D discrete Fourier transform by explicit summation."""
    M, N = x.shape
    out = np.zeros((M, N), dtype=complex)
    for k in range(M):
        for l in range(N):
            acc = 0j
            for m in range(M):
                for n in range(N):
                    acc += x[m, n] * cmath.exp(-2j * cmath.pi * (k * m / M + l * n / N))
            out[k, l] = acc
    return out


def rot90_ccw_loop(a):
    """Counter-clockwise quarter turn of a square 2-D array: out[i][j] = a[j][n-1-i]."""
    n = len(a)
    return np.array([[a[j][n - 1 - i] for j in range(n)] for i in range(n)])


def bce_loop(p, y, eps=1e-7):
    """Per-pixel binary cross-entropy averaged over channels, then over pixels."""
    C, H, W = p.shape
    tot = 0.0
    for h in range(H):
        for w in range(W):
            s = 0.0
            for c in range(C):
                q = min(max(float(p[c, h, w]), eps), 1 - eps)
                s += -(y[c, h, w] * np.log(q) + (1 - y[c, h, w]) * np.log(1 - q))
            tot += s / C
    return tot / (H * W)


def central_fd_grad(f, x, h=1e-6):
    """Central finite-difference gradient of scalar ``f`` at numpy array ``x`` (float64)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    """Norm-wise relative error ``|a - b| / max(|b|, 1e-12)``."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))
