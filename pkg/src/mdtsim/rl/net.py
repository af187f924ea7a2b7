"""Small multilayer perceptron with hand-written reverse-mode gradients.

Supports a linear, softmax, or dueling head and an optional projected
skip connection between hidden layers. Everything is plain numpy so the
gradient path can be audited term by term and checked against central
finite differences.
"""

from __future__ import annotations

import base64
import json

import numpy as np

from ..errors import ShapeMismatch

HEADS = ("linear", "softmax", "dueling")


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class Mlp:
    """Affine stack with ReLU hidden activations.

    sizes: layer widths, input first. For "linear"/"softmax" heads the
    last width is the output dimension of the final affine. For
    "dueling", sizes[:-1] form the ReLU trunk and sizes[-1] is the action
    count; a value stream (trunk -> 1) and an advantage stream
    (trunk -> actions) recombine as v + a - mean(a).

    skip: optional (src, dst) pair of 1-based affine indices, src < dst.
    The post-activation output of affine `src` is linearly projected and
    added to the pre-activation of affine `dst`.
    """

    def __init__(self, sizes, head: str = "linear",
                 skip: tuple[int, int] | None = None,
                 rng: np.random.Generator | None = None):
        if head not in HEADS:
            raise ValueError(f"unknown head {head!r}")
        self.sizes = [int(s) for s in sizes]
        self.head = head
        self.skip = tuple(skip) if skip else None
        rng = rng if rng is not None else np.random.default_rng(0)

        trunk = self.sizes[:-1] if head == "dueling" else self.sizes
        if len(trunk) < 2:
            raise ValueError(f"need at least one affine layer, sizes={sizes}")
        self.n_affine = len(trunk) - 1

        def init(fan_in, fan_out):
            limit = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-limit, limit, size=(fan_in, fan_out))

        self.params: dict[str, np.ndarray] = {}
        for i in range(self.n_affine):
            self.params[f"W{i}"] = init(trunk[i], trunk[i + 1])
            self.params[f"b{i}"] = np.zeros(trunk[i + 1])
        if self.skip is not None:
            src, dst = self.skip
            if not (1 <= src < dst <= self.n_affine):
                raise ValueError(f"skip {self.skip} out of range for "
                                 f"{self.n_affine} affine layers")
            self.params["P"] = init(trunk[src], trunk[dst])
        if head == "dueling":
            h = trunk[-1]
            a = self.sizes[-1]
            self.params["VW"] = init(h, 1)
            self.params["Vb"] = np.zeros(1)
            self.params["AW"] = init(h, a)
            self.params["Ab"] = np.zeros(a)

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        """Returns (output, cache); accepts a single vector or a batch."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = x[None, :] if single else x
        if x2.shape[1] != self.in_dim:
            raise ShapeMismatch(
                f"input width {x2.shape[1]} != first layer size {self.in_dim}")

        acts = [x2]       # acts[i] = post-activation output of affine i
        pres = [None]     # pres[i] = pre-activation of affine i (1-based)
        a = x2
        # ReLU follows every affine except the last one of a
        # linear/softmax net; the dueling trunk is ReLU throughout.
        relu_last = self.head == "dueling"
        for i in range(self.n_affine):
            z = a @ self.params[f"W{i}"] + self.params[f"b{i}"]
            if self.skip is not None and self.skip[1] == i + 1:
                z = z + acts[self.skip[0]] @ self.params["P"]
            pres.append(z)
            last = i == self.n_affine - 1
            a = relu(z) if (not last or relu_last) else z
            acts.append(a)

        cache = {"acts": acts, "pres": pres, "single": single}
        if self.head == "linear":
            out = acts[-1]
        elif self.head == "softmax":
            out = softmax(pres[-1])
            cache["probs"] = out
        else:
            h = acts[-1]
            v = h @ self.params["VW"] + self.params["Vb"]
            adv = h @ self.params["AW"] + self.params["Ab"]
            out = v + adv - adv.mean(axis=1, keepdims=True)
            cache["h"] = h
        return (out[0] if single else out), cache

    def backward(self, cache: dict, dout: np.ndarray) -> dict[str, np.ndarray]:
        """Exact gradients of sum(dout * output) w.r.t. every parameter."""
        dout = np.asarray(dout, dtype=float)
        if cache["single"] and dout.ndim == 1:
            dout = dout[None, :]
        acts, pres = cache["acts"], cache["pres"]
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        dacts = [np.zeros_like(a) for a in acts]

        if self.head == "linear":
            dacts[-1] = dout
        elif self.head == "softmax":
            p = cache["probs"]
            inner = (dout * p).sum(axis=1, keepdims=True)
            dz_head = p * (dout - inner)
            dacts[-1] = dz_head  # final affine has no relu; dz == da
        else:
            h = cache["h"]
            dv = dout.sum(axis=1, keepdims=True)
            dadv = dout - dout.mean(axis=1, keepdims=True)
            grads["VW"] = h.T @ dv
            grads["Vb"] = dv.sum(axis=0)
            grads["AW"] = h.T @ dadv
            grads["Ab"] = dadv.sum(axis=0)
            dacts[-1] = dv @ self.params["VW"].T + dadv @ self.params["AW"].T

        relu_last = self.head == "dueling"
        for i in range(self.n_affine - 1, -1, -1):
            da = dacts[i + 1]
            last = i == self.n_affine - 1
            if (not last or relu_last):
                dz = da * (pres[i + 1] > 0)
            elif self.head == "softmax":
                dz = da  # softmax Jacobian already applied
            else:
                dz = da
            grads[f"W{i}"] += acts[i].T @ dz
            grads[f"b{i}"] += dz.sum(axis=0)
            dacts[i] += dz @ self.params[f"W{i}"].T
            if self.skip is not None and self.skip[1] == i + 1:
                src = self.skip[0]
                grads["P"] += acts[src].T @ dz
                dacts[src] += dz @ self.params["P"].T
        return grads

    def copy_from(self, other: "Mlp") -> None:
        for k, v in other.params.items():
            self.params[k] = v.copy()

    def clone(self) -> "Mlp":
        twin = Mlp(self.sizes, head=self.head, skip=self.skip)
        twin.copy_from(self)
        return twin

    def to_dict(self) -> dict:
        return {
            "format": 1,
            "sizes": self.sizes,
            "head": self.head,
            "skip": list(self.skip) if self.skip else None,
            "params": {
                k: {
                    "shape": list(v.shape),
                    "data": base64.b64encode(
                        np.ascontiguousarray(v, dtype="<f8").tobytes()).decode(),
                }
                for k, v in self.params.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        net = cls(d["sizes"], head=d["head"],
                  skip=tuple(d["skip"]) if d.get("skip") else None)
        for k, spec in d["params"].items():
            arr = np.frombuffer(
                base64.b64decode(spec["data"]), dtype="<f8").copy()
            net.params[k] = arr.reshape(spec["shape"])
        return net

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "Mlp":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def global_grad_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place to a global L2 norm cap; returns the
    pre-clip norm."""
    norm = global_grad_norm(grads)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


class Adam:
    """Adam over an Mlp's parameter dict (default moment coefficients)."""

    def __init__(self, net: Mlp, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.net = net
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in net.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in net.params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            m_hat = self.m[k] / (1 - b1 ** self.t)
            v_hat = self.v[k] / (1 - b2 ** self.t)
            self.net.params[k] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
