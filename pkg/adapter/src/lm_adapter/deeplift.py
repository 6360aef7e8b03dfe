"""Contribution attribution via the rescale rule.

Inputs and a baseline are run through the network as a doubled batch;
elementwise activation modules get their backward pass rewritten to propagate
(delta output / delta input) instead of the local derivative, and the final
attribution is (input - baseline) times the modified gradient. Linear
operations keep their exact weights as multipliers, so on a purely linear
network the result equals the analytic input-times-weight contribution.
Positions where the activation delta is near zero fall back to the ordinary
gradient. Multiplicative interactions (attention matmuls, normalization) are
linearized by standard autograd, as in common hook-based implementations.
"""

from __future__ import annotations

from typing import Callable

import torch
from torch import nn

EPS = 1e-10

_ELEMENTWISE_ACTIVATIONS = (
    nn.ReLU, nn.LeakyReLU, nn.ELU, nn.GELU, nn.Tanh, nn.Sigmoid, nn.SiLU,
    nn.Softplus, nn.Hardtanh,
)

# Hugging Face defines activation modules of its own (NewGELUActivation and
# friends); match them by class name suffix.
_NAME_SUFFIXES = ("GELUActivation", "GELUTanh", "QuickGELUActivation")


def _is_elementwise_activation(module: nn.Module) -> bool:
    if isinstance(module, _ELEMENTWISE_ACTIVATIONS):
        return True
    return type(module).__name__.endswith(_NAME_SUFFIXES)


class RescaleAttributor:
    """Attribute a scalar output of ``model.forward_from_embeddings`` to the
    input embeddings, against a baseline (zero embeddings by default)."""

    def __init__(self, model: nn.Module):
        self.model = model

    def attribute(
        self,
        embeds: torch.Tensor,  # (T, d)
        scalar_of_logits: Callable[[torch.Tensor], torch.Tensor],
        baseline: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Returns per-input-position, per-embedding-dimension contributions,
        shape (T, d). ``scalar_of_logits`` maps the (T, vocab) logits of the
        actual input to the scalar being explained."""
        if baseline is None:
            baseline = torch.zeros_like(embeds)
        doubled = torch.stack([embeds, baseline], dim=0).detach().requires_grad_(True)

        saved: dict[int, list[tuple[torch.Tensor, torch.Tensor]]] = {}
        handles = []

        def forward_hook(module, inputs, output):
            saved.setdefault(id(module), []).append((inputs[0].detach(), output.detach()))

        def backward_hook(module, grad_input, grad_output):
            stack = saved.get(id(module))
            if not stack:
                return None
            x, y = stack.pop()
            if grad_input[0] is None or x.shape[0] != 2:
                return None
            dx = (x[0] - x[1]).unsqueeze(0)
            dy = (y[0] - y[1]).unsqueeze(0)
            multiplier = dy / torch.where(dx.abs() > EPS, dx, torch.ones_like(dx))
            rescaled = grad_output[0] * multiplier
            keep_local = (dx.abs() <= EPS).expand_as(rescaled)
            return (torch.where(keep_local, grad_input[0], rescaled),)

        for module in self.model.modules():
            if _is_elementwise_activation(module):
                handles.append(module.register_forward_hook(forward_hook))
                handles.append(module.register_full_backward_hook(backward_hook))
        try:
            logits = self.model.forward_from_embeddings(doubled)
            scalar = scalar_of_logits(logits[0])
            grads = torch.autograd.grad(scalar, doubled)[0]
        finally:
            for h in handles:
                h.remove()
        return ((embeds - baseline) * grads[0]).detach()


def attribution_matrix(
    model: nn.Module,
    ids: list[int],
    target_start: int,
    target_len: int,
    baseline: torch.Tensor | None = None,
) -> torch.Tensor:
    """Input-position x target-position attribution matrix, summed over the
    embedding dimension at export.

    Column j explains the logit of the realized target token j, read at the
    position that predicts it; rows at or after that token are exactly zero
    for a causal model.
    """
    if target_start < 1 or target_start + target_len > len(ids):
        raise ValueError("target span out of range")
    id_tensor = torch.tensor(ids, dtype=torch.long)
    with torch.no_grad():
        embeds = model.embed(id_tensor)
    attributor = RescaleAttributor(model)
    columns = []
    for j in range(target_len):
        predicted_at = target_start + j - 1  # logits at p predict token p+1
        token_id = ids[target_start + j]

        def scalar(logits, p=predicted_at, v=token_id):
            return logits[p, v]

        contrib = attributor.attribute(embeds, scalar, baseline=baseline)
        columns.append(contrib.sum(dim=1))
    return torch.stack(columns, dim=1)  # (T, target_len)


def completeness_gap(
    model: nn.Module,
    embeds: torch.Tensor,
    scalar_of_logits: Callable[[torch.Tensor], torch.Tensor],
) -> float:
    """|sum of attributions - (f(x) - f(baseline))|, a diagnostic of how well
    the rescale rule covers the network's nonlinearities."""
    attributor = RescaleAttributor(model)
    contrib = attributor.attribute(embeds, scalar_of_logits)
    with torch.no_grad():
        fx = scalar_of_logits(model.forward_from_embeddings(embeds.unsqueeze(0))[0])
        f0 = scalar_of_logits(
            model.forward_from_embeddings(torch.zeros_like(embeds).unsqueeze(0))[0]
        )
    return float((contrib.sum() - (fx - f0)).abs())
