"""Hand-differentiated network layers on numpy arrays.

Every forward pass returns whatever the matching backward pass needs as an
explicit cache; no autodiff. Backward passes accumulate into Parameter.grad
so shared tensors (embeddings used at several timesteps) sum naturally.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.9

ADAM_LR = 5e-4
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class Parameter:
    """A trainable tensor with its gradient and Adam accumulators."""

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)
        self.adam_m = np.zeros_like(value)
        self.adam_v = np.zeros_like(value)
        self.step = 0

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


def orthonormal_init(rows: int, cols: int, rng: np.random.Generator,
                     dtype=np.float32) -> np.ndarray:
    """Matrix whose smaller dimension is orthonormal, via QR with sign fixing."""
    a = rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(a if rows >= cols else a.T)
    q = q * np.sign(np.diag(r))
    return np.ascontiguousarray((q if rows >= cols else q.T).astype(dtype))


def glorot_init(rows: int, cols: int, rng: np.random.Generator,
                dtype=np.float32) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols)).astype(dtype)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def dense_forward(x: np.ndarray, w: Parameter, b: Parameter) -> np.ndarray:
    return x @ w.value + b.value


def dense_backward(dy: np.ndarray, x: np.ndarray, w: Parameter, b: Parameter) -> np.ndarray:
    w.grad += x.T @ dy
    b.grad += dy.sum(axis=0)
    return dy @ w.value.T


def relu_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mask = x > 0
    return x * mask, mask


def relu_backward(dy: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dy * mask


class BatchNorm:
    """Per-feature normalization with learned scale/shift and running stats.

    Training normalizes by batch statistics (population variance) and updates
    running stats as r <- momentum * r + (1 - momentum) * batch; inference
    normalizes by the running stats.
    """

    def __init__(self, name: str, dim: int, dtype=np.float32):
        self.gamma = Parameter(f"{name}.gamma", np.ones(dim, dtype=dtype))
        self.beta = Parameter(f"{name}.beta", np.zeros(dim, dtype=dtype))
        self.running_mean = np.zeros(dim, dtype=dtype)
        self.running_var = np.ones(dim, dtype=dtype)

    def forward(self, x: np.ndarray, train: bool) -> tuple[np.ndarray, tuple | None]:
        if not train:
            xhat = (x - self.running_mean) / np.sqrt(self.running_var + BN_EPS)
            return self.gamma.value * xhat + self.beta.value, None
        if x.shape[0] < 2:
            raise ValueError("batch norm needs at least 2 rows in training mode")
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - mean) * inv_std
        self.running_mean = BN_MOMENTUM * self.running_mean + (1.0 - BN_MOMENTUM) * mean
        self.running_var = BN_MOMENTUM * self.running_var + (1.0 - BN_MOMENTUM) * var
        return self.gamma.value * xhat + self.beta.value, (xhat, inv_std)

    def backward(self, dy: np.ndarray, cache: tuple) -> np.ndarray:
        xhat, inv_std = cache
        n = dy.shape[0]
        self.gamma.grad += (dy * xhat).sum(axis=0)
        self.beta.grad += dy.sum(axis=0)
        dxhat = dy * self.gamma.value
        return (inv_std / n) * (n * dxhat - dxhat.sum(axis=0)
                                - xhat * (dxhat * xhat).sum(axis=0))

    def parameters(self) -> list[Parameter]:
        return [self.gamma, self.beta]


def dropout_forward(x: np.ndarray, p: float, rng: np.random.Generator,
                    train: bool) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout; identity (and mask None) outside training or at p=0."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return x * mask, mask


def dropout_backward(dy: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return dy if mask is None else dy * mask


class GRUStepCache(NamedTuple):
    x: np.ndarray
    h_prev: np.ndarray
    z: np.ndarray
    r: np.ndarray
    h_cand: np.ndarray


class GRUCell:
    """Gated recurrent unit: h_t = (1 - z) * h_cand + z * h_{t-1}.

    z and r are sigmoid gates over (x, h_prev); the candidate state applies
    the reset gate to h_prev before its recurrent product. With all-zero
    weights the update gate is 0.5, so each step halves the carried state.
    """

    def __init__(self, name: str, d_in: int, d_hidden: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.d_in = d_in
        self.d_hidden = d_hidden
        mk_w = lambda gate: Parameter(f"{name}.W{gate}", orthonormal_init(d_in, d_hidden, rng, dtype))
        mk_u = lambda gate: Parameter(f"{name}.U{gate}", orthonormal_init(d_hidden, d_hidden, rng, dtype))
        mk_b = lambda gate: Parameter(f"{name}.b{gate}", np.zeros(d_hidden, dtype=dtype))
        self.wz, self.uz, self.bz = mk_w("z"), mk_u("z"), mk_b("z")
        self.wr, self.ur, self.br = mk_w("r"), mk_u("r"), mk_b("r")
        self.wh, self.uh, self.bh = mk_w("h"), mk_u("h"), mk_b("h")

    def parameters(self) -> list[Parameter]:
        return [self.wz, self.uz, self.bz, self.wr, self.ur, self.br,
                self.wh, self.uh, self.bh]

    def step(self, x: np.ndarray, h_prev: np.ndarray) -> tuple[np.ndarray, GRUStepCache]:
        z = sigmoid(x @ self.wz.value + h_prev @ self.uz.value + self.bz.value)
        r = sigmoid(x @ self.wr.value + h_prev @ self.ur.value + self.br.value)
        h_cand = np.tanh(x @ self.wh.value + (r * h_prev) @ self.uh.value + self.bh.value)
        h = (1.0 - z) * h_cand + z * h_prev
        return h, GRUStepCache(x, h_prev, z, r, h_cand)

    def forward(self, xs: np.ndarray) -> tuple[np.ndarray, list[GRUStepCache]]:
        """Run over xs of shape [T, B, d_in] from zero state; returns the
        final hidden state [B, d_hidden] and per-step caches."""
        steps, batch = xs.shape[0], xs.shape[1]
        h = np.zeros((batch, self.d_hidden), dtype=xs.dtype)
        caches: list[GRUStepCache] = []
        for t in range(steps):
            h, cache = self.step(xs[t], h)
            caches.append(cache)
        return h, caches

    def backward(self, dh: np.ndarray, caches: list[GRUStepCache]) -> np.ndarray:
        """Backpropagate d(loss)/d(final h) through time; returns gradients
        for the inputs, shape [T, B, d_in]."""
        dxs = np.zeros((len(caches),) + caches[0].x.shape, dtype=dh.dtype)
        for t in range(len(caches) - 1, -1, -1):
            x, h_prev, z, r, h_cand = caches[t]
            dz = dh * (h_prev - h_cand) * z * (1.0 - z)
            dcand = dh * (1.0 - z) * (1.0 - h_cand * h_cand)
            dh_prev = dh * z
            drh = dcand @ self.uh.value.T
            dr = drh * h_prev * r * (1.0 - r)
            dh_prev += drh * r

            self.wz.grad += x.T @ dz
            self.uz.grad += h_prev.T @ dz
            self.bz.grad += dz.sum(axis=0)
            self.wr.grad += x.T @ dr
            self.ur.grad += h_prev.T @ dr
            self.br.grad += dr.sum(axis=0)
            self.wh.grad += x.T @ dcand
            self.uh.grad += (r * h_prev).T @ dcand
            self.bh.grad += dcand.sum(axis=0)

            dxs[t] = dz @ self.wz.value.T + dr @ self.wr.value.T + dcand @ self.wh.value.T
            dh_prev += dz @ self.uz.value.T + dr @ self.ur.value.T
            dh = dh_prev
        return dxs


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and the probability matrix."""
    probs = softmax(logits)
    n = logits.shape[0]
    loss = -np.log(np.maximum(probs[np.arange(n), labels], 1e-30)).mean()
    return float(loss), probs


def softmax_cross_entropy_grad(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    n = probs.shape[0]
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return dlogits / n


def adam_step(params: list[Parameter], lr: float = ADAM_LR, beta1: float = ADAM_BETA1,
              beta2: float = ADAM_BETA2, eps: float = ADAM_EPS) -> None:
    """One bias-corrected Adam update on every parameter's current gradient;
    gradients are zeroed afterward."""
    for p in params:
        p.step += 1
        p.adam_m = beta1 * p.adam_m + (1.0 - beta1) * p.grad
        p.adam_v = beta2 * p.adam_v + (1.0 - beta2) * (p.grad * p.grad)
        m_hat = p.adam_m / (1.0 - beta1 ** p.step)
        v_hat = p.adam_v / (1.0 - beta2 ** p.step)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.zero_grad()


class GradCheckFailure(NamedTuple):
    param: str
    coord: tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float


class GradCheckReport(NamedTuple):
    max_rel_error: float
    worst_param: str
    checked: int
    failures: list[GradCheckFailure]

    @property
    def passed(self) -> bool:
        return not self.failures


def check_gradients(loss_fn: Callable[[], float], params: list[Parameter],
                    rng: np.random.Generator, samples: int = 5,
                    step: float = 1e-5, rel_tol: float = 1e-4) -> GradCheckReport:
    """Compare stored analytic gradients against central differences.

    loss_fn must recompute the loss from current parameter values with no
    hidden randomness. Parameter.grad must already hold the analytic
    gradients for those values. Samples `samples` coordinates per tensor
    (all of them for small tensors); relative error is
    |a - n| / max(1, |a|, |n|), and any coordinate above rel_tol is a
    failure. Run in 64-bit mode for meaningful tolerances.
    """
    failures: list[GradCheckFailure] = []
    worst = (0.0, "")
    checked = 0
    for p in params:
        size = p.value.size
        if size <= samples:
            picks = np.arange(size)
        else:
            picks = rng.choice(size, size=samples, replace=False)
        for i in picks:
            # index via coordinates: a flat view of a non-contiguous value
            # would be a copy and the perturbation would be lost
            coord = np.unravel_index(int(i), p.value.shape)
            original = p.value[coord]
            p.value[coord] = original + step
            up = loss_fn()
            p.value[coord] = original - step
            down = loss_fn()
            p.value[coord] = original
            numeric = (up - down) / (2.0 * step)
            analytic = float(p.grad[coord])
            rel = abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))
            checked += 1
            if rel > worst[0]:
                worst = (rel, p.name)
            if rel > rel_tol:
                failures.append(GradCheckFailure(p.name, tuple(int(c) for c in coord),
                                                 analytic, numeric, rel))
    return GradCheckReport(worst[0], worst[1], checked, failures)


TENSOR_MAGIC = b"PASNT1\n"


def write_tensors(path, named: dict[str, np.ndarray]) -> None:
    """Named-tensor container: magic, then per tensor a name line, a rank
    and dims line, and the raw little-endian float32 values in C order."""
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        for name, arr in named.items():
            data = np.ascontiguousarray(arr, dtype="<f4")
            fh.write(name.encode("utf-8") + b"\n")
            dims = " ".join(str(d) for d in data.shape)
            fh.write(f"{data.ndim} {dims}".rstrip().encode("ascii") + b"\n")
            fh.write(data.tobytes())


def read_tensors(path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        magic = fh.read(len(TENSOR_MAGIC))
        if magic != TENSOR_MAGIC:
            raise ValueError(f"{path}: not a tensor container (bad magic {magic!r})")
        while True:
            name_line = fh.readline()
            if not name_line:
                break
            name = name_line.decode("utf-8").rstrip("\n")
            header = fh.readline().decode("ascii").split()
            rank = int(header[0])
            shape = tuple(int(d) for d in header[1:])
            if len(shape) != rank:
                raise ValueError(f"{path}: tensor {name!r} declares rank {rank} "
                                 f"but {len(shape)} dims")
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 4)
            if len(raw) != count * 4:
                raise ValueError(f"{path}: tensor {name!r} is truncated")
            out[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    return out


def assert_all_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {what}")
