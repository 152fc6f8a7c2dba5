"""Named parameter store, Adam, gradient clipping and checkpoints."""

from __future__ import annotations

import numpy as np

from .tensor import NonFiniteError


class ParamStore:
    """Named float64 arrays with Adam moment state.

    Parameters are views into one flat buffer so the optimizer update is a
    single vectorized pass.
    """

    def __init__(self, params: dict | None = None):
        self.params = {}
        self.flat = np.zeros(0)
        self.m_flat = np.zeros(0)
        self.v_flat = np.zeros(0)
        self.step = 0
        self._slices = {}
        for k, v in (params or {}).items():
            self.add(k, v)

    def add(self, name: str, value) -> np.ndarray:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        value = np.array(value, dtype=np.float64)
        start = self.flat.size
        self._slices[name] = (slice(start, start + value.size), value.shape)
        self.flat = np.concatenate([self.flat, value.ravel()])
        self.m_flat = np.concatenate([self.m_flat, np.zeros(value.size)])
        self.v_flat = np.concatenate([self.v_flat, np.zeros(value.size)])
        self._rebind()
        return self.params[name]

    def _rebind(self):
        self.params = {k: self.flat[sl].reshape(shape) for k, (sl, shape) in self._slices.items()}
        self.m = {k: self.m_flat[sl].reshape(shape) for k, (sl, shape) in self._slices.items()}
        self.v = {k: self.v_flat[sl].reshape(shape) for k, (sl, shape) in self._slices.items()}

    def flatten(self, grads: dict) -> np.ndarray:
        """Pack a name->array dict into the flat layout; missing names are zero."""
        out = np.zeros_like(self.flat)
        for k, g in grads.items():
            sl, shape = self._slices[k]
            if np.shape(g) != shape:
                raise ValueError(f"gradient shape {np.shape(g)} != parameter shape {shape} for {k!r}")
            out[sl] = np.ravel(g)
        return out

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def names(self):
        return list(self.params)

    def num_parameters(self) -> int:
        return int(self.flat.size)


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_global_norm(grads: dict, max_norm: float = 5.0) -> dict:
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    factor = max_norm / norm
    return {k: g * factor for k, g in grads.items()}


def adam_step(store: ParamStore, grads: dict, lr: float = 1e-3,
              betas=(0.9, 0.999), eps: float = 1e-8) -> None:
    """In-place Adam update with bias correction.

    Raises NonFiniteError and leaves the store untouched if any gradient is
    NaN or infinite.
    """
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {k!r}; step skipped")
    g = store.flatten(grads)
    b1, b2 = betas
    store.step += 1
    bc1 = 1.0 - b1 ** store.step
    bc2 = 1.0 - b2 ** store.step
    store.m_flat *= b1
    store.m_flat += (1.0 - b1) * g
    store.v_flat *= b2
    store.v_flat += (1.0 - b2) * (g * g)
    store.flat -= lr * (store.m_flat / bc1) / (np.sqrt(store.v_flat / bc2) + eps)


def save_checkpoint(store: ParamStore, path) -> None:
    """``.npz`` container: one array per parameter plus moments and step."""
    arrays = {f"param/{k}": v for k, v in store.params.items()}
    arrays.update({f"m/{k}": v for k, v in store.m.items()})
    arrays.update({f"v/{k}": v for k, v in store.v.items()})
    arrays["step"] = np.array(store.step)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> ParamStore:
    store = ParamStore()
    with np.load(path) as data:
        for key in data.files:
            if key.startswith("param/"):
                store.add(key[len("param/"):], data[key])
        for k in store.params:
            store.m[k][...] = data[f"m/{k}"]
            store.v[k][...] = data[f"v/{k}"]
        store.step = int(data["step"])
    return store
