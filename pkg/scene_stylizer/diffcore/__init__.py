"""Minimal reverse-mode differentiation over float64 arrays."""

from scene_stylizer.diffcore.tape import Node, as_node, backward, is_grad_enabled, no_grad

__all__ = ["Node", "as_node", "backward", "is_grad_enabled", "no_grad"]
