"""Adam with bias correction."""

from __future__ import annotations

import numpy as np

from .tensor import NonFiniteError, Tensor


class Adam:
    def __init__(self, params, lr: float = 1e-4, betas=(0.0, 0.9), eps: float = 1e-8):
        self.params: list[Tensor] = list(params)
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        self.lr = float(lr)
        self.beta1, self.beta2 = (float(b) for b in betas)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        for i, p in enumerate(self.params):
            if p.grad is not None and not np.isfinite(p.grad).all():
                raise NonFiniteError("adam_step", f"gradient of parameter #{i}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad.astype(p.dtype, copy=False)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / c1
            v_hat = v / c2
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype, copy=False)

    def state_tensors(self, names: list[str]) -> dict[str, np.ndarray]:
        if len(names) != len(self.params):
            raise ValueError("one name per parameter required")
        out = {}
        for name, m, v in zip(names, self.m, self.v):
            out[f"m/{name}"] = m
            out[f"v/{name}"] = v
        return out

    def load_state_tensors(self, names: list[str], tensors: dict[str, np.ndarray], t: int) -> None:
        for name, m, v in zip(names, self.m, self.v):
            for key, dst in ((f"m/{name}", m), (f"v/{name}", v)):
                if key not in tensors:
                    raise KeyError(f"missing optimizer tensor {key}")
                if tensors[key].shape != dst.shape:
                    raise ValueError(f"{key}: shape mismatch")
                dst[...] = tensors[key]
        self.t = int(t)
