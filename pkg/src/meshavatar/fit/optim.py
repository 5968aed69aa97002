"""Adam with named parameter groups and freeze support."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from ..errors import ConfigurationError, NumericError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class ParamGroup:
    """A named set of leaf tensors sharing a learning rate and step counter."""

    name: str
    tensors: list[torch.Tensor]
    lr: float
    frozen: bool = False
    step_count: int = 0
    m: list[torch.Tensor] = field(default_factory=list)
    v: list[torch.Tensor] = field(default_factory=list)

    def __post_init__(self):
        if not self.m:
            self.m = [torch.zeros_like(t) for t in self.tensors]
            self.v = [torch.zeros_like(t) for t in self.tensors]
        for t in self.tensors:
            t.requires_grad_(not self.frozen)

    def freeze(self):
        self.frozen = True
        for t in self.tensors:
            t.requires_grad_(False)

    def thaw(self):
        self.frozen = False
        for t in self.tensors:
            t.requires_grad_(True)

    def grads(self) -> list[torch.Tensor]:
        return [t.grad if t.grad is not None else torch.zeros_like(t) for t in self.tensors]

    def zero_grad(self):
        for t in self.tensors:
            t.grad = None


def adam_step(
    group: ParamGroup,
    grads: list[torch.Tensor],
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
) -> ParamGroup:
    """Standard bias-corrected Adam update, in place on the group's tensors."""
    if group.frozen:
        raise ConfigurationError(f"adam_step on frozen group {group.name!r}")
    for g in grads:
        if not bool(torch.isfinite(g).all()):
            raise NumericError(f"non-finite gradient in group {group.name!r}")
    group.step_count += 1
    t = group.step_count
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    with torch.no_grad():
        for p, g, m, v in zip(group.tensors, grads, group.m, group.v):
            m.mul_(beta1).add_(g, alpha=1.0 - beta1)
            v.mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
            p.addcdiv_(m / bc1, (v / bc2).sqrt().add_(eps), value=-group.lr)
    return group


class Adam:
    """Steps every unfrozen group from the tensors' accumulated .grad."""

    def __init__(self, groups: list[ParamGroup]):
        names = [g.name for g in groups]
        if len(set(names)) != len(names):
            raise ConfigurationError("duplicate parameter group names")
        self.groups = groups

    def zero_grad(self):
        for g in self.groups:
            g.zero_grad()

    def step(self):
        for g in self.groups:
            if not g.frozen:
                adam_step(g, g.grads())

    def group(self, name: str) -> ParamGroup:
        for g in self.groups:
            if g.name == name:
                return g
        raise KeyError(name)
