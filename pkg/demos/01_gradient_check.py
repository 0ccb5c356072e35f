# Reverse-mode autodiff on a tape, checked against central differences.

# %%
import numpy as np

from mgmae.autodiff import Tape, backward, check_gradients, log_softmax, matmul, tanh, total
from mgmae.layers import LstmParams, lstm_step

rng = np.random.default_rng(0)

# %% every op run against a tape records a node; backward walks them in reverse
tape = Tape()
W = tape.leaf(rng.standard_normal((3, 4)))
x = tape.leaf(rng.standard_normal(4))
loss = total(tanh(matmul(W, x)))
grads = backward(tape, loss)
print("dL/dW:\n", grads[W.node_id])

# by hand: d/dW sum(tanh(Wx)) = (1 - tanh(Wx)^2) x^T
by_hand = np.outer(1 - np.tanh(W.data @ x.data) ** 2, x.data)
print("matches hand derivative:", np.allclose(grads[W.node_id], by_hand))

# %% the same check, automated, for a single LSTM step (12 = 4 gates x hidden 3)
def step(W, U, b, x, h, c):
    h_new, _ = lstm_step(LstmParams(W, U, b), x, h, c)
    return log_softmax(h_new)

shapes = [(12, 2), (12, 3), (12,), (2,), (3,), (3,)]
for trial in range(3):
    inputs = [rng.uniform(-2, 2, s) for s in shapes]
    print(f"trial {trial}: max relative error {check_gradients(step, inputs, seed=trial):.2e}")
