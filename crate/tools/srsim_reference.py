"""Stand-alone numpy SR-SIM (Zhang & Li, ICIP 2012), following the authors'
MATLAB release step by step. Used once to freeze the golden regression value
in crates/metrics/tests; not part of the build.

    python3 tools/srsim_reference.py
"""
import numpy as np
from scipy.ndimage import uniform_filter


def cubic(x):
    a = np.abs(x)
    return ((1.5 * a**3 - 2.5 * a**2 + 1) * (a <= 1)
            + (-0.5 * a**3 + 2.5 * a**2 - 4 * a + 2) * ((a > 1) & (a <= 2)))


def resize_matrix(n_in, n_out, scale):
    """Dense (n_out, n_in) matrix of MATLAB imresize 'bicubic' with antialiasing."""
    if scale < 1:
        kern = lambda x: scale * cubic(scale * x)
        width = 4.0 / scale
    else:
        kern = cubic
        width = 4.0
    i = np.arange(1, n_out + 1, dtype=float)
    u = i / scale + 0.5 * (1 - 1 / scale)
    left = np.floor(u - width / 2)
    taps = int(np.ceil(width)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    w = kern(u[:, None] - idx)
    w = w / w.sum(axis=1, keepdims=True)
    aux = np.concatenate([np.arange(1, n_in + 1), np.arange(n_in, 0, -1)])
    idx = aux[np.mod(idx - 1, 2 * n_in).astype(int)] - 1
    m = np.zeros((n_out, n_in))
    for r in range(n_out):
        np.add.at(m[r], idx[r], w[r])
    return m


def imresize(img, out_shape, scale):
    rows = resize_matrix(img.shape[0], out_shape[0], scale[0])
    cols = resize_matrix(img.shape[1], out_shape[1], scale[1])
    return rows @ img @ cols.T


def gaussian(size, sigma):
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * sigma**2))
    return g / g.sum()


def filter_zero(img, k):
    """imfilter(img, k) with zero padding, correlation, MATLAB origin."""
    kh, kw = k.shape
    cy, cx = (kh + 1) // 2 - 1, (kw + 1) // 2 - 1
    pad = np.zeros((img.shape[0] + kh - 1, img.shape[1] + kw - 1))
    pad[cy:cy + img.shape[0], cx:cx + img.shape[1]] = img
    out = np.zeros_like(img)
    for u in range(kh):
        for v in range(kw):
            out += k[u, v] * pad[u:u + img.shape[0], v:v + img.shape[1]]
    return out


def saliency(y):
    rows, cols = y.shape
    small_shape = (int(np.ceil(rows * 0.25)), int(np.ceil(cols * 0.25)))
    small = imresize(y, small_shape, (0.25, 0.25))
    f = np.fft.fft2(small)
    log_amp = np.log(np.maximum(np.abs(f), np.finfo(float).eps))
    phase = np.angle(f)
    residual = log_amp - uniform_filter(log_amp, size=3, mode="nearest")
    sal = np.abs(np.fft.ifft2(np.exp(residual + 1j * phase))) ** 2
    sal = filter_zero(sal, gaussian(10, 3.8))
    lo, hi = sal.min(), sal.max()
    sal = np.ones_like(sal) if hi == lo else np.clip((sal - lo) / (hi - lo), 0, 1)
    return imresize(sal, (rows, cols), (rows / small_shape[0], cols / small_shape[1]))


def gradient(y):
    dx = np.array([[3, 0, -3], [10, 0, -10], [3, 0, -3]]) / 16.0
    gx = filter_zero(y, dx)
    gy = filter_zero(y, dx.T)
    return np.sqrt(gx**2 + gy**2)


def srsim(a, b):
    """a, b: (3, H, W) arrays in [0, 1]."""
    y = [255.0 * (0.299 * im[0] + 0.587 * im[1] + 0.114 * im[2]) for im in (a, b)]
    rows, cols = y[0].shape
    f = max(1, int(np.floor(min(rows, cols) / 256 + 0.5)))
    if f > 1:
        k = np.ones((f, f)) / f**2
        # conv2 'same' window for an f-tap box: [i - (ceil(f/2)-1), i + floor(f/2)]
        pad_lo, pad_hi = (f + 1) // 2 - 1, f // 2
        def box(im):
            p = np.pad(im, ((pad_lo, pad_hi), (pad_lo, pad_hi)))
            out = np.zeros_like(im)
            for u in range(f):
                for v in range(f):
                    out += k[u, v] * p[u:u + rows, v:v + cols]
            return out
        y = [box(im)[::f, ::f] for im in y]
    s1, s2 = saliency(y[0]), saliency(y[1])
    g1, g2 = gradient(y[0]), gradient(y[1])
    c1, c2, alpha = 0.40, 225.0, 0.50
    ssim = (2 * s1 * s2 + c1) / (s1**2 + s2**2 + c1)
    gsim = (2 * g1 * g2 + c2) / (g1**2 + g2**2 + c2)
    w = np.maximum(s1, s2)
    return float(np.sum(ssim * gsim**alpha * w) / np.sum(w))


def golden_pair():
    """Fixed analytic pair, reproduced exactly by the Rust test."""
    h, w = 48, 64
    yy, xx = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    a = np.stack([
        0.5 + 0.4 * np.sin(xx / 5.0) * np.cos(yy / 7.0),
        0.5 + 0.3 * np.cos((xx + yy) / 9.0),
        ((xx * 3 + yy * 5) % 17) / 17.0,
    ])
    b = np.stack([
        0.5 + 0.35 * np.sin((xx + 1.5) / 5.0) * np.cos(yy / 6.5),
        0.45 + 0.3 * np.cos((xx + yy) / 8.0),
        ((xx * 3 + yy * 4) % 19) / 19.0,
    ])
    return a, b


if __name__ == "__main__":
    a, b = golden_pair()
    print(f"srsim(a, b) = {srsim(a, b):.12f}")
    print(f"srsim(b, a) = {srsim(b, a):.12f}")
    print(f"srsim(a, a) = {srsim(a, a):.12f}")
    print(f"srsim(a, 1-a) = {srsim(a, 1 - a):.12f}")
    small = np.stack([np.outer(np.linspace(0, 1, 600), np.linspace(0.2, 0.9, 520))] * 3)
    print(f"srsim(ramp, ramp^1.1) 600x520 = {srsim(small, small ** 1.1):.12f}")
