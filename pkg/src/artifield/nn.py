"""MLPs and a shared-weight point-set encoder on top of the autodiff tape."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidArgumentError

ACTIVATIONS = {
    "relu": ad.relu,
    "none": lambda x: x,
    "sigmoid": ad.sigmoid,
    "softplus": ad.softplus,
}


@dataclass
class Mlp:
    """Fully connected stack; ``widths`` has one entry per layer boundary."""

    widths: list[int]
    activations: list[str]
    weights: list[Tensor] = field(default_factory=list)
    biases: list[Tensor] = field(default_factory=list)

    def __post_init__(self):
        if len(self.activations) != len(self.widths) - 1:
            raise InvalidArgumentError("need one activation per layer")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise InvalidArgumentError(f"unknown activation {a!r}")

    @classmethod
    def create(cls, widths, activations, rng: np.random.Generator) -> "Mlp":
        """Kaiming-uniform init for relu layers, 1/sqrt(fan_in) otherwise."""
        mlp = cls(list(widths), list(activations))
        for fan_in, fan_out, act in zip(widths[:-1], widths[1:], activations):
            if act == "relu":
                bound = np.sqrt(6.0 / fan_in)
            else:
                bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            b = rng.uniform(-bound, bound, size=(fan_out,))
            mlp.weights.append(Tensor(w, requires_grad=True))
            mlp.biases.append(Tensor(b, requires_grad=True))
        return mlp

    @property
    def in_width(self) -> int:
        return self.widths[0]

    @property
    def out_width(self) -> int:
        return self.widths[-1]

    def forward(self, x) -> Tensor:
        x = ad.as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.in_width:
            raise InvalidArgumentError(
                f"input must be (N, {self.in_width}), got {x.shape}"
            )
        for w, b, act in zip(self.weights, self.biases, self.activations):
            x = ad.add(ad.matmul(x, w), b)
            x = ACTIVATIONS[act](x)
        return x

    __call__ = forward

    def zero_last_layer(self):
        """Zero the output layer so the net starts as the identity-residual."""
        self.weights[-1].data[:] = 0.0
        self.biases[-1].data[:] = 0.0

    def parameters(self, prefix: str = "mlp") -> dict[str, Tensor]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.w{i}"] = w
            out[f"{prefix}.b{i}"] = b
        return out

    def spec(self) -> dict:
        return {"widths": list(self.widths), "activations": list(self.activations)}

    @classmethod
    def from_spec(cls, spec: dict) -> "Mlp":
        mlp = cls(list(spec["widths"]), list(spec["activations"]))
        for fan_in, fan_out in zip(mlp.widths[:-1], mlp.widths[1:]):
            mlp.weights.append(Tensor(np.zeros((fan_in, fan_out)), requires_grad=True))
            mlp.biases.append(Tensor(np.zeros(fan_out), requires_grad=True))
        return mlp


@dataclass
class PointSetEncoder:
    """Shared per-point MLP with optional coordinate-wise max pooling."""

    mlp: Mlp
    final_maxpool: bool = True

    def forward(self, points) -> Tensor:
        points = ad.as_tensor(points)
        if points.ndim != 2 or points.shape[0] < 1:
            raise InvalidArgumentError("points must be a nonempty (N, F) array")
        feats = self.mlp.forward(points)
        if self.final_maxpool:
            return ad.tmax(feats, axis=0, keepdims=True)
        return feats

    __call__ = forward

    def forward_batched(self, points) -> Tensor:
        """(B, N, F) -> (B, F_out) with maxpool, else (B, N, F_out)."""
        points = ad.as_tensor(points)
        bsz, n, f = points.shape
        feats = self.mlp.forward(ad.reshape(points, (bsz * n, f)))
        feats = ad.reshape(feats, (bsz, n, self.mlp.out_width))
        if self.final_maxpool:
            return ad.tmax(feats, axis=1)
        return feats

    def parameters(self, prefix: str = "pointset") -> dict[str, Tensor]:
        return self.mlp.parameters(prefix)

    def spec(self) -> dict:
        return {"mlp": self.mlp.spec(), "final_maxpool": self.final_maxpool}

    @classmethod
    def from_spec(cls, spec: dict) -> "PointSetEncoder":
        return cls(Mlp.from_spec(spec["mlp"]), bool(spec["final_maxpool"]))


def finite_difference_check(
    loss_fn, params: dict[str, Tensor], max_entries: int = 40, seed: int = 0,
    step_scale: float = 1e-6,
) -> float:
    """Max relative error between tape gradients and central differences.

    Step size is adaptive, h = step_scale * (1 + |x|) per entry; the default
    keeps truncation error below roundoff for losses of order one.
    ``loss_fn`` must rebuild the graph from the current parameter values.
    """
    for p in params.values():
        p.zero_grad()
    loss = loss_fn()
    loss.backward()
    grads = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}

    rng = np.random.default_rng(seed)
    worst = 0.0
    for k, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        idxs = rng.choice(n, size=min(max_entries, n), replace=False)
        for i in idxs:
            x0 = flat[i]
            h = step_scale * (1.0 + abs(x0))
            flat[i] = x0 + h
            with ad.no_grad():
                up = float(loss_fn().data)
            flat[i] = x0 - h
            with ad.no_grad():
                dn = float(loss_fn().data)
            flat[i] = x0
            fd = (up - dn) / (2.0 * h)
            g = grads[k].reshape(-1)[i]
            err = abs(g - fd) / max(abs(g), abs(fd), 1.0)
            worst = max(worst, err)
    return worst
