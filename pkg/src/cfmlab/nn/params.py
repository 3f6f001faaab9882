"""Named parameter storage, weight initialisation and the Adam optimiser."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


class ParamStore:
    """Ordered mapping ``name -> Tensor`` plus Adam moment buffers.

    Gradients live on the parameter tensors themselves (``store[name].grad``);
    ``None`` means no backward pass has populated them yet.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name, value):
        if name in self.params:
            raise KeyError(f"duplicate parameter name {name!r}")
        arr = np.array(value, dtype=self.dtype)
        self.params[name] = Tensor(arr, requires_grad=True)
        self.m[name] = np.zeros_like(arr)
        self.v[name] = np.zeros_like(arr)
        return self.params[name]

    def __getitem__(self, name) -> Tensor:
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def items(self):
        return self.params.items()

    def names(self):
        return list(self.params)

    def num_values(self):
        return sum(p.size for p in self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.grad = np.zeros_like(p.data)

    def clear_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_dict(self):
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, arrays):
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise KeyError(f"parameter mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for k, arr in arrays.items():
            if arr.shape != self.params[k].shape:
                raise ValueError(f"shape mismatch for {k}: {arr.shape} vs {self.params[k].shape}")
            self.params[k].data = np.array(arr, dtype=self.dtype)

    def astype(self, dtype):
        """Copy of the store with parameters cast to ``dtype`` (moments reset)."""
        out = ParamStore(dtype)
        for k, p in self.params.items():
            out.add(k, p.data)
        return out


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_dense(store, rng, name, n_in, n_out):
    store.add(f"{name}.W", glorot_uniform(rng, (n_in, n_out), n_in, n_out))
    store.add(f"{name}.b", np.zeros(n_out))


def init_conv(store, rng, name, c_in, c_out, k):
    store.add(f"{name}.W", glorot_uniform(rng, (c_out, c_in, k, k), c_in * k * k, c_out * k * k))
    store.add(f"{name}.b", np.zeros(c_out))


def init_conv_transpose(store, rng, name, c_in, c_out, k):
    # kernel layout (c_in, c_out, k, k), the adjoint of a conv from c_out to c_in
    store.add(f"{name}.W", glorot_uniform(rng, (c_in, c_out, k, k), c_in * k * k, c_out * k * k))
    store.add(f"{name}.b", np.zeros(c_out))


def adam_step(store, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update over every parameter; zeroes gradients."""
    for name, p in store.items():
        if p.grad is None:
            raise RuntimeError(f"gradient for parameter {name!r} is uninitialized; run backward first")
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in store.items():
        g = p.grad
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype)
        p.grad = np.zeros_like(p.data)
    return store
