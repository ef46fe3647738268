"""Learning-rate schedule and the Adam optimizer.

The schedule warms up linearly then decays with inverse square root:

    rate = const * (1/sqrt(d_model)) * min(step/(sqrt(warmup))^3, 1/sqrt(step))

Both branches meet at step == warmup_steps.  Adam is the bias-corrected
form (beta1=0.9, beta2=0.997, eps=1e-9) applied through the fused kernel
backend.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, NumericsError
from .kernels import ops as K


@dataclass(frozen=True)
class ScheduleConfig:
    d_model: int
    const: float = 0.3
    warmup_steps: int = 10000

    def __post_init__(self):
        if self.d_model < 1:
            raise ConfigError(f"d_model must be positive, got {self.d_model}")
        if self.warmup_steps < 1:
            raise ConfigError(f"warmup_steps must be >= 1, got {self.warmup_steps}")
        if self.const <= 0:
            raise ConfigError(f"const must be positive, got {self.const}")


def lr_schedule(step, cfg):
    """Exact schedule evaluation at an integer step >= 1."""
    if step < 1:
        raise ContractError(f"schedule step must be >= 1, got {step}")
    warm = step / math.sqrt(cfg.warmup_steps) ** 3
    decay = 1.0 / math.sqrt(step)
    return cfg.const * (1.0 / math.sqrt(cfg.d_model)) * min(warm, decay)


class Adam:
    """Bias-corrected Adam over a named parameter dict.

    Parameters whose .grad is None are skipped entirely: a step with no
    gradients recorded leaves both parameters and moments untouched.
    """

    def __init__(self, params, beta1=0.9, beta2=0.997, eps=1e-9):
        self.params = dict(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self, lr):
        """Advance the step counter and update every parameter with a grad."""
        self.t += 1
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise NumericsError(
                    f"non-finite gradient for {name} at optimizer step {self.t}")
            K.adam_step(
                p.data.reshape(-1), np.ascontiguousarray(g.reshape(-1)),
                self.m[name].reshape(-1), self.v[name].reshape(-1),
                float(lr), self.beta1, self.beta2, self.eps, self.t)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()
