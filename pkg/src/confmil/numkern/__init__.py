"""Dense numeric primitives with hand-written backward passes."""

from .adam import AdamState, adam_step
from .gradcheck import grad_check
from .kernels import BACKEND, edge_messages, edge_messages_grad
from .ops import (
    ParamStore,
    bce_grad,
    bce_loss,
    gru_backward,
    gru_cell,
    gru_forward,
    sigmoid,
    softmax,
    softmax_backward,
)

__all__ = [
    "AdamState",
    "adam_step",
    "grad_check",
    "BACKEND",
    "edge_messages",
    "edge_messages_grad",
    "ParamStore",
    "bce_grad",
    "bce_loss",
    "gru_backward",
    "gru_cell",
    "gru_forward",
    "sigmoid",
    "softmax",
    "softmax_backward",
]
