"""A walking tour of the differentiation substrate.

Build tensors, run primitive ops, call backward, and cross-check a few
gradients against central finite differences — the same check the test
suite applies to every primitive.

Run:  python3 demos/01_autograd_tour.py
"""

import numpy as np

from dartsrenet import autograd as ag
from dartsrenet.autograd import Tensor
from dartsrenet.optim import Adam

rng = np.random.default_rng(0)

# --- tensors and the tape ---------------------------------------------------

x = Tensor(rng.standard_normal((4, 3)), requires_grad=True, dtype=np.float64)
w = Tensor(rng.standard_normal((3, 2)), requires_grad=True, dtype=np.float64)
loss = ag.tanh(ag.matmul(x, w)).sum()
print(f"tape recorded {len(ag.active_tape())} ops for this forward pass")

ag.backward(loss)  # consumes the tape
print(f"after backward the tape holds {len(ag.active_tape())} ops")
print("d(loss)/d(w) =\n", w.grad)

# --- finite-difference sanity check ------------------------------------------


def loss_at(w_values: np.ndarray) -> float:
    with ag.no_grad():
        return float(ag.tanh(ag.matmul(x, Tensor(w_values, dtype=np.float64))).sum().data)


eps = 1e-6
fd = np.zeros_like(w.data)
for i in range(w.size):
    probe = w.data.copy().reshape(-1)
    probe[i] += eps
    up = loss_at(probe.reshape(w.shape))
    probe[i] -= 2 * eps
    down = loss_at(probe.reshape(w.shape))
    fd.reshape(-1)[i] = (up - down) / (2 * eps)
print("max |analytic - finite difference|:", np.abs(w.grad - fd).max())

# --- a ten-step optimization loop --------------------------------------------

target = rng.standard_normal((4, 2))
w = Tensor(np.zeros((3, 2)), requires_grad=True, dtype=np.float64)
opt = Adam([w], lr=0.05)
for step in range(10):
    ag.zero_grads([w])
    err = ag.sub(ag.matmul(x, w), Tensor(target, dtype=np.float64))
    mse = ag.mul(err, err).mean()
    ag.backward(mse)
    opt.step()
    if step % 3 == 0:
        print(f"step {step}: mse = {float(mse.data):.4f}")
print("final mse:", float(mse.data))
