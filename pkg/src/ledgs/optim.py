"""Adam with per-row state, supporting masked updates and row edits.

Rows outside an update mask keep their parameter bits and their optimizer
state untouched, which is what the freeze guarantees of editing and
refinement are built on. Bias correction uses per-row step counts so a row
that only sometimes receives updates is still corrected properly.
"""

import numpy as np


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._state = {}

    def _slot(self, name, shape):
        if name not in self._state:
            self._state[name] = {
                "m": np.zeros(shape),
                "v": np.zeros(shape),
                "t": np.zeros(shape[0] if len(shape) else (), dtype=np.int64),
            }
        return self._state[name]

    def step(self, name, param, grad, rows=None, lr=None):
        """Update `param` in place. `rows` restricts the update to a bool
        mask or index array over axis 0; all other rows are untouched."""
        lr = self.lr if lr is None else lr
        slot = self._slot(name, param.shape)
        if rows is None:
            rows = slice(None)
        g = grad[rows]
        slot["m"][rows] = self.beta1 * slot["m"][rows] + (1 - self.beta1) * g
        slot["v"][rows] = self.beta2 * slot["v"][rows] + (1 - self.beta2) * g * g
        slot["t"][rows] += 1
        t = slot["t"][rows]
        corr1 = 1.0 - self.beta1 ** t
        corr2 = 1.0 - self.beta2 ** t
        if param.ndim > 1:
            corr1 = corr1.reshape((-1,) + (1,) * (param.ndim - 1))
            corr2 = corr2.reshape((-1,) + (1,) * (param.ndim - 1))
        m_hat = slot["m"][rows] / corr1
        v_hat = slot["v"][rows] / corr2
        param[rows] -= lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def remap_rows(self, name, source):
        """Rebuild state rows after densify/prune: source[i] is the old row
        feeding new row i, or -1 for a fresh row (zero state)."""
        if name not in self._state:
            return
        slot = self._state[name]
        source = np.asarray(source, dtype=int)
        fresh = source < 0
        for key in ("m", "v", "t"):
            old = slot[key]
            new = np.zeros((source.size,) + old.shape[1:], dtype=old.dtype)
            new[~fresh] = old[source[~fresh]]
            slot[key] = new
