"""Train the tiny MLP on a 1-d regression task and check its gradients.

Run:  python3 demos/02_network_training.py
"""

import numpy as np

from rraml import tinynn

# Fit y = sin(3x) on [-1, 1] with a 1-16-1 tanh network and plain SGD.
rng = np.random.default_rng(0)
xs = rng.uniform(-1, 1, 256)
ys = np.sin(3 * xs)

net = tinynn.init((1, 16, 1), seed=0)
for epoch in range(400):
    sq_err = 0.0
    for x, y in zip(xs, ys):
        pred = float(tinynn.forward(net, [x])[0])
        err = pred - y
        sq_err += err * err
        grads = tinynn.backward(net, [x], np.array([2.0 * err]))
        net = tinynn.sgd_step(net, grads, lr=0.02)
    if epoch % 100 == 0 or epoch == 399:
        print(f"epoch {epoch:3d}  mse {sq_err / len(xs):.5f}")

# Spot-check backprop against central finite differences on one sample.
x = np.array([0.37])
upstream = np.array([1.0])
analytic = tinynn.backward(net, x, upstream)
h = 1e-5
w = net.weights[0].copy()
w[3, 0] += h
up = tinynn.Mlp(net.layer_sizes, (w, net.weights[1]), net.biases)
w2 = net.weights[0].copy()
w2[3, 0] -= h
down = tinynn.Mlp(net.layer_sizes, (w2, net.weights[1]), net.biases)
numeric = (tinynn.forward(up, x)[0] - tinynn.forward(down, x)[0]) / (2 * h)
print(f"\ngradient check on w[0][3,0]: analytic {analytic.weights[0][3,0]:.8f}, "
      f"finite difference {numeric:.8f}")

# Checkpoints round-trip bit-exactly.
blob = tinynn.save(net)
restored = tinynn.load(blob)
assert tinynn.save(restored) == blob
print(f"checkpoint round-trip ok ({len(blob)} bytes)")
