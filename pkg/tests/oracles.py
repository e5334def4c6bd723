"""Independent reference implementations: explicit loops and finite differences."""

import numpy as np

from layerwise_lab.autodiff import Tensor, backward


def loop_matmul(a, b):
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def loop_conv2d(x, w, b, stride=1, padding=0):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding))
    xp[:, :, padding:padding + h, padding:padding + wd] = x
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for ni in range(n):
        for oi in range(o):
            for i in range(ho):
                for j in range(wo):
                    s = b[oi]
                    for ci in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                s += xp[ni, ci, i * stride + u, j * stride + v] * w[oi, ci, u, v]
                    out[ni, oi, i, j] = s
    return out


def loop_maxpool(x, k=2, s=2):
    """Forward values and the gradient mask of the first maximal element per window."""
    n, c, h, wd = x.shape
    ho, wo = (h - k) // s + 1, (wd - k) // s + 1
    out = np.zeros((n, c, ho, wo))
    mask = np.zeros_like(x)
    for ni in range(n):
        for ci in range(c):
            for i in range(ho):
                for j in range(wo):
                    best, at = -np.inf, None
                    for u in range(k):
                        for v in range(k):
                            val = x[ni, ci, i * s + u, j * s + v]
                            if val > best:
                                best, at = val, (i * s + u, j * s + v)
                    out[ni, ci, i, j] = best
                    mask[ni, ci, at[0], at[1]] += 1
    return out, mask


def closed_form_bn(x, gamma, beta, eps=1e-5):
    mu = x.mean(axis=(0, 2, 3), keepdims=True)
    var = ((x - mu) ** 2).mean(axis=(0, 2, 3), keepdims=True)
    return gamma.reshape(1, -1, 1, 1) * (x - mu) / np.sqrt(var + eps) + beta.reshape(1, -1, 1, 1)


def central_diff(f, arrays, h=1e-6):
    """Numerical gradient of scalar ``f(*arrays)`` w.r.t. each array (float64)."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = a[idx]
            a[idx] = orig + h
            up = f(*arrays)
            a[idx] = orig - h
            down = f(*arrays)
            a[idx] = orig
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def rel_error(a, b):
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def check_grads(build, arrays, h=1e-6):
    """Compare engine gradients of ``build(*tensors)`` against central differences.

    ``build`` maps float64 leaf tensors to a scalar Tensor.  Returns the worst
    relative error over all inputs.
    """
    leaves = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
    loss = build(*leaves)
    backward(loss)
    analytic = [t.grad for t in leaves]

    def f(*arrs):
        return float(build(*[Tensor(a, dtype=np.float64) for a in arrs]).data)

    numeric = central_diff(f, [np.array(a, dtype=np.float64) for a in arrays], h)
    return max(rel_error(a, n) for a, n in zip(analytic, numeric))
