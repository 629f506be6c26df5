"""Tour of the tensor engine: building a graph on a tape, running reverse-mode
differentiation, and checking the analytic gradients against central finite
differences."""

import numpy as np

import robust1d.tensor as T
from robust1d.gradcheck import grad_check
from robust1d.tensor import Tape, Tensor, backward

print("== forward arithmetic ==")
a = Tensor([[1.0, 2.0], [3.0, 4.0]])
b = Tensor([[5.0, 6.0], [7.0, 8.0]])
print("a @ b =", T.matmul(None, a, b).data.tolist())
print("relu([-1, 0, 2]) =", T.relu(None, Tensor([-1.0, 0.0, 2.0])).data.tolist())
print("sign([-3.2, 0, 0.4]) =", T.sign(None, Tensor([-3.2, 0.0, 0.4])).data.tolist())

print("\n== a tape records operations; backward replays it in reverse ==")
x = Tensor([1.0, 2.0, 3.0])
tape = Tape()
y = T.mul(tape, x, x)            # x^2 elementwise
loss = T.sum_all(tape, y)        # sum of squares
backward(tape, loss)
print("d(sum x^2)/dx =", x.grad.tolist(), "(expect 2x)")

print("\n== convolution and pooling, the Char-CNN kernels ==")
signal = Tensor([[1.0, 2.0, 3.0, 4.0, 5.0]])
kernel = Tensor([[[1.0, 0.0, -1.0]]])
conv = T.conv1d(None, signal, kernel)
print("edge filter over ramp:", conv.data.tolist())
pooled = T.maxpool1d(None, Tensor([[1.0, 3.0, 2.0, 5.0]]), 2, 2)
print("maxpool [1,3,2,5] size 2:", pooled.data.tolist())

print("\n== gradients verified against finite differences ==")
rng = np.random.default_rng(0)
xs = Tensor(rng.normal(size=(3, 12)))
ks = Tensor(rng.normal(size=(4, 3, 3)))
bias = Tensor(rng.normal(size=4))


def f(tape):
    h = T.conv1d(tape, xs, ks, bias=bias)
    h = T.relu(tape, h)
    h = T.maxpool1d(tape, h, 2, 2)
    return T.sum_all(tape, T.mul(tape, h, h))


err = grad_check(f, [xs, ks, bias])
print(f"max relative error across all parameters: {err:.2e} (tolerance 1e-4)")
