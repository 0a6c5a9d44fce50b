"""Adam updates over named parameter groups."""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionError, ParameterError
from .tensor import Tensor

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


class Adam:
    """Standard Adam with bias correction, bound to one named parameter group.

    The group is a fixed dict of name -> Tensor; only these tensors are ever
    touched by ``step``, which is what makes per-group freezing exact.  A
    parameter whose ``.grad`` is None contributes a zero gradient (its moments
    still decay, the step counter still advances).
    """

    def __init__(self, params: dict[str, Tensor], lr: float):
        if not params:
            raise ParameterError("Adam needs a non-empty parameter group")
        if lr <= 0:
            raise ParameterError(f"learning rate must be positive; got {lr}")
        self.params = dict(params)
        self.lr = float(lr)
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        corr1 = 1.0 - BETA1 ** t
        corr2 = 1.0 - BETA2 ** t
        for name, p in self.params.items():
            grad = p.grad
            if grad is None:
                grad = np.zeros_like(p.data)
            elif grad.shape != p.data.shape:
                raise DimensionError(
                    f"gradient shape {grad.shape} does not match parameter "
                    f"{name!r} shape {p.data.shape}"
                )
            grad = grad.astype(p.data.dtype, copy=False)
            m, v = self.m[name], self.v[name]
            m *= BETA1
            m += (1.0 - BETA1) * grad
            v *= BETA2
            v += (1.0 - BETA2) * (grad * grad)
            p.data -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + EPS)
