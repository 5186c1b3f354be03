"""Contrastive losses over document embeddings and their augmented views.

Two frameworks: a normalized temperature-scaled cross entropy over in-batch
negatives (the positive pair is kept in the denominator, which bounds the
per-sample loss below by zero), and a negative-pairs-free loss that feeds one
side through a small predictor MLP and stops gradients on the other side.
Losses return analytic gradients; there is no autograd here, so every
backward pass is spelled out and checked against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FRAMEWORKS = ("simclr", "simsiam")


@dataclass
class ContrastiveConfig:
    framework: str = "simclr"
    tau: float = 1.0
    lam: float = 1.0
    predictor_hidden: int = 64

    def __post_init__(self):
        if self.framework not in FRAMEWORKS:
            raise ValueError(f"unknown contrastive framework {self.framework!r}")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.predictor_hidden < 1:
            raise ValueError("predictor_hidden must be >= 1")


def cosine_similarity(x: np.ndarray, y: np.ndarray) -> float:
    """Plain cosine; raises on zero-norm input rather than guessing a value."""
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise ValueError("cosine similarity of a zero vector is undefined")
    return float(x @ y / (nx * ny))


def _normalize_rows(m: np.ndarray):
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero-norm embedding row")
    return m / norms[:, None], norms


def nt_xent_loss(H: np.ndarray, H_aug: np.ndarray, tau: float = 1.0):
    """Temperature-scaled cross entropy pairing row i of H with row i of H_aug.

    loss = sum_i -log[ exp(cos(h_i, g_i)/tau) / sum_k exp(cos(h_i, g_k)/tau) ]

    Returns (loss, dH, dH_aug). Needs at least two rows; cosine makes the
    value invariant to positive per-row rescaling.
    """
    if H.shape != H_aug.shape:
        raise ValueError("view matrices must share a shape")
    n = H.shape[0]
    if n < 2:
        raise ValueError("contrastive batch needs at least 2 documents")
    if tau <= 0:
        raise ValueError("tau must be positive")

    Hn, h_norms = _normalize_rows(np.asarray(H, dtype=np.float64))
    Gn, g_norms = _normalize_rows(np.asarray(H_aug, dtype=np.float64))

    S = (Hn @ Gn.T) / tau
    S_max = S.max(axis=1, keepdims=True)
    logZ = np.log(np.exp(S - S_max).sum(axis=1)) + S_max[:, 0]
    loss = float((logZ - np.diag(S)).sum())

    P = np.exp(S - logZ[:, None])
    dS = P - np.eye(n)
    dHn = dS @ Gn / tau
    dGn = dS.T @ Hn / tau

    dH = (dHn - (dHn * Hn).sum(axis=1, keepdims=True) * Hn) / h_norms[:, None]
    dG = (dGn - (dGn * Gn).sum(axis=1, keepdims=True) * Gn) / g_norms[:, None]
    return loss, dH, dG


@dataclass
class PredictorWeights:
    """Two affine layers around a batch-norm + rectifier stage.

    Both affine layers are d<->hidden; batch-norm keeps running statistics so
    evaluation is batch-independent.
    """

    w1: np.ndarray
    b1: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    eps: float = 1e-5
    momentum: float = 0.1

    @classmethod
    def init(cls, dim: int, hidden: int, rng: np.random.Generator, dtype=np.float32):
        def affine(n_out, n_in):
            bound = 1.0 / np.sqrt(n_in)
            w = rng.uniform(-bound, bound, size=(n_out, n_in)).astype(dtype)
            b = rng.uniform(-bound, bound, size=n_out).astype(dtype)
            return w, b

        w1, b1 = affine(hidden, dim)
        w2, b2 = affine(dim, hidden)
        return cls(
            w1=w1, b1=b1,
            gamma=np.ones(hidden, dtype=dtype), beta=np.zeros(hidden, dtype=dtype),
            running_mean=np.zeros(hidden, dtype=dtype), running_var=np.ones(hidden, dtype=dtype),
            w2=w2, b2=b2,
        )

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    def trainable(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "gamma": self.gamma,
                "beta": self.beta, "w2": self.w2, "b2": self.b2}

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = dict(self.trainable())
        out["running_mean"] = self.running_mean
        out["running_var"] = self.running_var
        return out

    def validate(self):
        for name, arr in self.state_tensors().items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite predictor tensor {name}")
        if np.any(self.running_var <= 0):
            raise ValueError("batch-norm variance estimates must stay positive")


def predictor_forward(h: np.ndarray, w: PredictorWeights, mode: str = "train",
                      update_running: bool = False, return_cache: bool = False):
    """Run the predictor MLP on a batch (rows) or a single vector.

    Train mode normalizes with the batch statistics (batch size >= 2
    required) and, when ``update_running`` is set, folds them into the
    running estimates; eval mode always uses the running statistics.
    """
    single = h.ndim == 1
    x = np.atleast_2d(np.asarray(h, dtype=np.float64))
    n = x.shape[0]
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "train" and n < 2:
        raise ValueError("train-mode batch normalization needs at least 2 rows")

    x1 = x @ w.w1.T.astype(np.float64) + w.b1.astype(np.float64)
    if mode == "train":
        mu = x1.mean(axis=0)
        var = x1.var(axis=0)
        if update_running:
            unbiased = var * n / max(n - 1, 1)
            m = w.momentum
            w.running_mean[:] = ((1 - m) * w.running_mean + m * mu).astype(w.running_mean.dtype)
            w.running_var[:] = ((1 - m) * w.running_var + m * unbiased).astype(w.running_var.dtype)
    else:
        mu = w.running_mean.astype(np.float64)
        var = w.running_var.astype(np.float64)

    inv_std = 1.0 / np.sqrt(var + w.eps)
    xhat = (x1 - mu) * inv_std
    y = w.gamma.astype(np.float64) * xhat + w.beta.astype(np.float64)
    a = np.maximum(y, 0.0)
    z = a @ w.w2.T.astype(np.float64) + w.b2.astype(np.float64)

    if single:
        z = z[0]
    if not return_cache:
        return z
    cache = {"x": x, "x1": x1, "xhat": xhat, "inv_std": inv_std, "y": y, "a": a,
             "mode": mode, "n": n}
    return z, cache


def _predictor_backward(dz: np.ndarray, cache: dict, w: PredictorWeights):
    """Gradients of the predictor w.r.t. input and trainable tensors."""
    x, x1, xhat, inv_std = cache["x"], cache["x1"], cache["xhat"], cache["inv_std"]
    y, a, n = cache["y"], cache["a"], cache["n"]

    da = dz @ w.w2.astype(np.float64)
    dw2 = dz.T @ a
    db2 = dz.sum(axis=0)

    dy = da * (y > 0)
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dxhat = dy * w.gamma.astype(np.float64)

    if cache["mode"] == "train":
        dx1 = (inv_std / n) * (
            n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
        )
    else:
        dx1 = dxhat * inv_std

    dw1 = dx1.T @ x
    db1 = dx1.sum(axis=0)
    dx = dx1 @ w.w1.astype(np.float64)
    grads = {"w1": dw1, "b1": db1, "gamma": dgamma, "beta": dbeta, "w2": dw2, "b2": db2}
    return dx, grads


def _neg_cos_rows(x: np.ndarray, y: np.ndarray):
    """Row-wise negative cosine D(x_i, y_i) with gradient w.r.t. x only."""
    xn, x_norms = _normalize_rows(x)
    yn, _ = _normalize_rows(y)
    cos = (xn * yn).sum(axis=1)
    dx = -(yn - cos[:, None] * xn) / x_norms[:, None]
    return -cos, dx


def simsiam_loss(H: np.ndarray, H_aug: np.ndarray, w: PredictorWeights,
                 mode: str = "train", update_running: bool = False,
                 literal_stopgrad: bool = False):
    """Symmetric predictor loss with stop-gradient on the plain embeddings.

    per-sample loss = D(pred(h_i), stop(g_i))/2 + D(pred(g_i), stop(h_i))/2
    with D the negative cosine. Gradients reach H and H_aug only through the
    predictor branch; ``literal_stopgrad=True`` instead stops the predictor
    outputs (the equation as printed), which leaves the predictor untrained
    and routes gradients straight into the embeddings.

    Returns (loss, dH, dH_aug, predictor_grads).
    """
    if H.shape != H_aug.shape:
        raise ValueError("view matrices must share a shape")
    n = H.shape[0]
    if n < 2:
        raise ValueError("contrastive batch needs at least 2 documents")

    Hf = np.asarray(H, dtype=np.float64)
    Gf = np.asarray(H_aug, dtype=np.float64)
    z, cache_h = predictor_forward(Hf, w, mode=mode, update_running=update_running,
                                   return_cache=True)
    z_aug, cache_g = predictor_forward(Gf, w, mode=mode, update_running=update_running,
                                       return_cache=True)

    if literal_stopgrad:
        # D(h, stop(z_aug)) / 2 + D(g, stop(z)) / 2
        d1, dH = _neg_cos_rows(Hf, z_aug)
        d2, dG = _neg_cos_rows(Gf, z)
        loss = float((0.5 * d1 + 0.5 * d2).sum())
        zero = {k: np.zeros_like(v, dtype=np.float64) for k, v in w.trainable().items()}
        return loss, 0.5 * dH, 0.5 * dG, zero

    d1, dz = _neg_cos_rows(z, Gf)
    d2, dz_aug = _neg_cos_rows(z_aug, Hf)
    loss = float((0.5 * d1 + 0.5 * d2).sum())

    dH, grads_h = _predictor_backward(0.5 * dz, cache_h, w)
    dG, grads_g = _predictor_backward(0.5 * dz_aug, cache_g, w)
    grads = {k: grads_h[k] + grads_g[k] for k in grads_h}
    return loss, dH, dG, grads


def combined_loss(backbone_loss: float, contrastive_loss: float, lam: float) -> float:
    """Total objective: backbone plus lambda-weighted contrastive term."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return backbone_loss + lam * contrastive_loss
