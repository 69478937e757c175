"""Pure numpy versions of the fused row kernels.

Same signatures as the compiled module: 2-D inputs, preallocated outputs.
"""
import numpy as np

GELU_C = 0.7978845608028654
GELU_A = 0.044715


def softmax_fwd(x, out):
    m = x.max(axis=1, keepdims=True)
    np.subtract(x, m, out=out)
    np.exp(out, out=out)
    out /= out.sum(axis=1, keepdims=True)


def softmax_bwd(y, gy, gx):
    dot = (gy * y).sum(axis=1, keepdims=True)
    np.multiply(y, gy - dot, out=gx)


def layer_norm_fwd(x, gain, bias, eps, out, xhat, rstd):
    mean = x.mean(axis=1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=1)
    rstd[:] = 1.0 / np.sqrt(var + eps)
    np.multiply(centered, rstd[:, None], out=xhat)
    np.multiply(xhat, gain, out=out)
    out += bias


def layer_norm_bwd(gy, xhat, rstd, gain, gx, ggain, gbias):
    g = gy * gain
    m1 = g.mean(axis=1, keepdims=True)
    m2 = (g * xhat).mean(axis=1, keepdims=True)
    np.multiply(rstd[:, None], g - m1 - xhat * m2, out=gx)
    ggain[:] = (gy * xhat).sum(axis=0)
    gbias[:] = gy.sum(axis=0)


def gelu_fwd(x, out):
    t = np.tanh(GELU_C * (x + GELU_A * x ** 3))
    np.multiply(0.5 * x, 1.0 + t, out=out)


def gelu_bwd(x, gy, gx):
    t = np.tanh(GELU_C * (x + GELU_A * x ** 3))
    d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
    np.multiply(gy, d, out=gx)
