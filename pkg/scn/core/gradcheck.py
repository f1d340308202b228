from typing import Callable, Optional

import numpy as np

from scn.core.autograd import backward
from scn.core.random import SplitMix64
from scn.core.tensor import Tensor, graph_scope, no_grad
from scn.errors import GraphError


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5,
               max_components: Optional[int] = None, seed: int = 0) -> float:
    """对比反向传播梯度与中心差分，返回最大相对误差

    相对误差定义为 |g_ad - g_fd| / max(1, |g_ad|, |g_fd|)。f 必须是确定性的，
    随机掩码需要由调用方固定。
    """
    if not 1e-7 <= eps <= 1e-3:
        raise GraphError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    if not x.requires_grad:
        raise GraphError("grad_check needs a tensor with requires_grad=True")

    with graph_scope():
        loss = f(x)
        if loss.shape != (1,):
            raise GraphError(f"grad_check needs f to return shape [1], got {list(loss.shape)}")
        analytic = backward(loss).array(x).reshape(-1).copy()

    x.data = np.ascontiguousarray(x.data)
    flat = x.data.reshape(-1)
    indices = np.arange(flat.size)
    if max_components is not None and flat.size > max_components:
        indices = np.sort(SplitMix64(seed).permutation(flat.size)[:max_components])

    worst = 0.0
    with no_grad():
        for i in indices:
            original = flat[i]
            flat[i] = original + eps
            plus = f(x).item()
            flat[i] = original - eps
            minus = f(x).item()
            flat[i] = original
            numeric = (plus - minus) / (2.0 * eps)
            ad = analytic[i]
            err = abs(ad - numeric) / max(1.0, abs(ad), abs(numeric))
            worst = max(worst, err)
    return worst
