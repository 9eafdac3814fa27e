from .nn import (
    BiLstmParams,
    ConvParams,
    LinearParams,
    LstmParams,
    attention,
    bilstm_forward,
    conv1d_same,
    dropout,
    init_bilstm,
    init_conv,
    init_linear,
    init_lstm,
    linear,
    lstm_forward,
    xavier_uniform,
)
from .optim import AdamState, adam_step, clip_grad_norm
from .tensor import (
    Tape,
    Tensor,
    active_tape,
    as_tensor,
    concat,
    cross_entropy,
    exp,
    flip,
    log,
    log_softmax,
    matmul,
    mean,
    relu,
    reshape,
    sigmoid,
    softmax,
    split,
    swap_last,
    tanh,
    transpose,
    tsum,
    zeros,
)


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every tensor the scalar ``loss`` depends on."""
    loss.backward()
