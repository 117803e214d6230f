"""Adam with decoupled weight decay.

Defaults follow the training recipe: lr 3e-4, betas (0.9, 0.999), eps 1e-8,
weight decay 0.01 applied uniformly to all parameters. Moment buffers live in
the parameter dtype so checkpointed state round-trips bit-exactly.
"""

from __future__ import annotations

import numpy as np

from .tensor import ParamStore


class AdamW:
    def __init__(self, params: ParamStore, lr=3e-4, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=0.01):
        self.params = params
        self.lr = float(lr)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.step_count = 0
        self._m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in params.items()}
        self._scratch = {name: np.empty_like(p.data) for name, p in params.items()}

    def step(self):
        """Apply one update from the gradients currently stored on the params.

        The update m_hat / (sqrt(v_hat) + eps) is evaluated in the equivalent
        form (sqrt(bc2)/bc1) * m / (sqrt(v) + eps*sqrt(bc2)) to save passes
        over the buffers.
        """
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        scale = self.lr * np.sqrt(bc2) / bc1
        eps_scaled = self.eps * np.sqrt(bc2)
        decay = 1.0 - self.lr * self.weight_decay
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self._m[name]
            v = self._v[name]
            buf = self._scratch[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            np.sqrt(v, out=buf)
            buf += eps_scaled
            np.divide(m, buf, out=buf)
            # decoupled decay folded in: p <- p*(1 - lr*wd) - scale*m/denom
            p.data *= decay
            buf *= scale
            p.data -= buf

    def zero_grad(self):
        self.params.zero_grad()

    def state_dict(self):
        """Flat named arrays: the step counter plus first/second moments."""
        state = {"step": np.asarray(float(self.step_count), dtype=np.float32)}
        for name in self.params.names():
            state[f"m.{name}"] = self._m[name]
            state[f"v.{name}"] = self._v[name]
        return state

    def load_state_dict(self, state):
        self.step_count = int(float(state["step"]))
        for name, p in self.params.items():
            for prefix, buf in (("m.", self._m), ("v.", self._v)):
                key = prefix + name
                if key not in state:
                    raise ValueError(f"optimizer state missing {key!r}")
                arr = np.asarray(state[key])
                if arr.shape != p.data.shape:
                    raise ValueError(
                        f"optimizer state shape mismatch for {key!r}: "
                        f"{arr.shape} vs {p.data.shape}"
                    )
                buf[name] = arr.astype(p.data.dtype)
