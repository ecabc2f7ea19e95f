"""Adam over a named parameter dict."""

import numpy as np

from ..errors import ShapeMismatchError


class Adam:
    """Standard Adam (betas 0.9/0.999, eps 1e-8) with bias correction.

    Parameters are a name -> Tensor mapping; update order follows insertion
    order of the dict, so runs are reproducible.
    """

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ShapeMismatchError(
                    f"gradient shape {g.shape} != parameter shape {p.data.shape} ({name})"
                )
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_arrays(self):
        """Optimizer state as flat name -> array entries for checkpointing."""
        out = {"adam_t": np.array([self.t], dtype=np.int64)}
        for name in self.params:
            out[f"adam_m::{name}"] = self.m[name]
            out[f"adam_v::{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays):
        self.t = int(arrays["adam_t"][0])
        for name in self.params:
            self.m[name] = np.array(arrays[f"adam_m::{name}"])
            self.v[name] = np.array(arrays[f"adam_v::{name}"])
