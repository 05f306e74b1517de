"""Per-task model: linear embedding, pool augmentation, linear head.

The whole chain is linear so every gradient is analytic and checkable by
finite differences. Prompt selection is a stop-gradient: keys receive
gradient only through the alignment surrogate, values and the projection
through the task loss. Training is full-batch gradient descent for exact
run-to-run determinism.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import requests

from . import kernels
from .errors import (
    BadStatus,
    EmptyWindowSet,
    MalformedResponse,
    NonFiniteLoss,
    ShapeMismatch,
    Timeout,
    WrongHeadKind,
    ZeroVector,
)
from .core_data import WindowSet
from .pool import NORM_FLOOR, PromptPool, Projection

REGRESSION = "regression"
CLASSIFICATION = "classification"


@dataclass(frozen=True)
class Hyper:
    """Training hyperparameters; lr=0 is allowed as an explicit null step."""

    lr: float = 0.05
    epochs: int = 60
    lambda_key: float = 0.1
    beta: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0 or self.epochs < 1 or self.lambda_key < 0 or self.beta < 0:
            raise ValueError("hyperparameters out of range")


@dataclass
class TrainReport:
    """Loss trajectory; train loss includes the key-alignment term, val does not."""

    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)

    @property
    def final_train_loss(self) -> float:
        return self.train_losses[-1]

    @property
    def final_val_loss(self) -> float:
        return self.val_losses[-1] if self.val_losses else float("nan")


class TaskModel:
    """Trainable predictor for one task."""

    def __init__(
        self,
        embed: np.ndarray,
        pool: PromptPool,
        proj: Projection,
        head: np.ndarray,
        bias: np.ndarray,
        hyper: Hyper,
        top_k: int,
        channels: int,
        tau: int,
        nu: int,
        head_kind: str = REGRESSION,
        n_classes: int | None = None,
        use_pool: bool = True,
    ):
        if head_kind not in (REGRESSION, CLASSIFICATION):
            raise ValueError(f"unknown head kind {head_kind!r}")
        if head_kind == CLASSIFICATION and (n_classes is None or n_classes < 2):
            raise ValueError("classification head needs n_classes >= 2")
        out = nu if head_kind == REGRESSION else nu * n_classes
        d = pool.dim
        if embed.shape != (d, channels * tau):
            raise ShapeMismatch(f"embed {embed.shape} != ({d}, {channels * tau})")
        if head.shape != (out, d) or bias.shape != (out,):
            raise ShapeMismatch(f"head {head.shape}/bias {bias.shape} != ({out}, {d})")
        expected_w = (d, (top_k * pool.prompt_len + 1) * d)
        if proj.weight.shape != expected_w:
            raise ShapeMismatch(f"projection {proj.weight.shape} != {expected_w}")
        if not 1 <= top_k <= pool.size:
            raise ValueError(f"top_k={top_k} outside [1, {pool.size}]")
        self.embed = np.array(embed, dtype=np.float64)
        self.pool = pool
        self.proj = proj
        self.head = np.array(head, dtype=np.float64)
        self.bias = np.array(bias, dtype=np.float64)
        self.hyper = hyper
        self.top_k = top_k
        self.channels = channels
        self.tau = tau
        self.nu = nu
        self.head_kind = head_kind
        self.n_classes = n_classes
        self.use_pool = use_pool

    @classmethod
    def create(
        cls,
        tau: int,
        nu: int,
        hyper: Hyper,
        *,
        pool_size: int = 16,
        top_k: int = 4,
        prompt_len: int = 4,
        dim: int = 32,
        channels: int = 1,
        head_kind: str = REGRESSION,
        n_classes: int | None = None,
        use_pool: bool = True,
        pool: PromptPool | None = None,
        proj: Projection | None = None,
    ) -> "TaskModel":
        """Seeded initialization; pass ``pool``/``proj`` to share them."""
        rng = np.random.default_rng(hyper.seed)
        if pool is None:
            pool = PromptPool.random(pool_size, prompt_len, dim, rng)
        if proj is None:
            proj = Projection.random(top_k, pool.prompt_len, pool.dim, rng)
        in_dim = channels * tau
        embed = rng.standard_normal((pool.dim, in_dim)) / np.sqrt(in_dim)
        out = nu if head_kind == REGRESSION else nu * int(n_classes or 0)
        bound = 1.0 / np.sqrt(pool.dim)
        head = rng.uniform(-bound, bound, size=(out, pool.dim))
        bias = np.zeros(out)
        return cls(
            embed=embed, pool=pool, proj=proj, head=head, bias=bias, hyper=hyper,
            top_k=top_k, channels=channels, tau=tau, nu=nu,
            head_kind=head_kind, n_classes=n_classes, use_pool=use_pool,
        )

    # --- forward ---------------------------------------------------------

    def embed_rows(self, x: np.ndarray) -> np.ndarray:
        """Linear projection of flattened input rows into embedding space."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.embed.shape[1]:
            raise ShapeMismatch(
                f"input width {x.shape[1]} != c*tau = {self.embed.shape[1]}"
            )
        return x @ self.embed.T

    def _forward_from_embedding(self, emb: np.ndarray) -> dict:
        if self.use_pool:
            norms = np.linalg.norm(emb, axis=1)
            if (norms <= NORM_FLOOR).any():
                raise ZeroVector("degenerate (near-zero) embedding")
            idx, scores = kernels.retrieve_batch(emb, self.pool.keys, self.top_k)
            b = emb.shape[0]
            gathered = self.pool.values[idx].reshape(b, -1)
            flat = np.concatenate([gathered, emb], axis=1)
            aug = flat @ self.proj.weight.T
        else:
            idx, scores, flat, aug = None, None, None, emb
        y = aug @ self.head.T + self.bias
        return {"emb": emb, "idx": idx, "scores": scores, "flat": flat,
                "aug": aug, "y": y}

    def _forward(self, x: np.ndarray) -> dict:
        state = self._forward_from_embedding(self.embed_rows(x))
        state["x"] = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return state

    def _assemble(self, window: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
        win = np.asarray(window, dtype=np.float64)
        if win.ndim != 2 or win.shape[1] != self.tau:
            raise ShapeMismatch(f"window must be (N, {self.tau}), got {win.shape}")
        if self.channels == 2:
            if mask is None:
                raise ShapeMismatch("mask channel required (channels=2)")
            m = np.asarray(mask, dtype=np.float64)
            if m.shape != win.shape:
                raise ShapeMismatch(f"mask {m.shape} != window {win.shape}")
            return np.concatenate([win, m], axis=1)
        if mask is not None:
            raise ShapeMismatch("mask given but model has no mask channel")
        return win

    def predict(self, window: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        """Predict one window: (N, nu) values, or (nu, C) logits when classifying."""
        x = self._assemble(window, mask)
        if self.head_kind == CLASSIFICATION:
            # mean-pool across series; pooling the input row commutes with
            # the linear embedding and matches the training path bit-for-bit
            y = self._forward(x.mean(axis=0, keepdims=True))["y"]
            return y.reshape(self.nu, self.n_classes)
        return self._forward(x)["y"]


# --- training ----------------------------------------------------------------


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def corrupt_targets(targets: np.ndarray, mask_frac: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Dispreferred copies: per row, round(mask_frac * entries) positions
    replaced by unit-normal noise."""
    flat = np.array(targets, dtype=np.float64)
    n_rows, n_entries = flat.shape
    n_corrupt = int(round(mask_frac * n_entries))
    for w in range(n_rows):
        pos = rng.choice(n_entries, size=n_corrupt, replace=False)
        flat[w, pos] = rng.standard_normal(n_corrupt)
    return flat


def _flatten_batch(windows: WindowSet, input_masks, model: TaskModel) -> np.ndarray:
    b, n = windows.inputs.shape[0], windows.inputs.shape[1]
    x = windows.inputs.reshape(b * n, model.tau)
    if model.channels == 2:
        if input_masks is None:
            raise ShapeMismatch("channels=2 training needs input masks")
        m = np.asarray(input_masks, dtype=np.float64).reshape(b * n, model.tau)
        x = np.concatenate([x, m], axis=1)
    return x


class _RegressionBatch:
    """Flattened (window*series) rows with targets and optional target masks."""

    def __init__(self, windows: WindowSet, model: TaskModel,
                 input_masks=None, target_masks=None):
        self.x = _flatten_batch(windows, input_masks, model)
        b, n = windows.inputs.shape[0], windows.inputs.shape[1]
        self.y = windows.targets.reshape(b * n, windows.nu)
        if target_masks is not None:
            self.t_mask = np.asarray(target_masks, dtype=np.float64).reshape(
                b * n, windows.nu
            )
        else:
            self.t_mask = None


def _task_loss_and_grad(model: TaskModel, state: dict, batch: _RegressionBatch,
                        masked: bool):
    resid = state["y"] - batch.y
    if masked:
        if batch.t_mask is None:
            raise ShapeMismatch("masked_mse needs target masks")
        resid = resid * batch.t_mask
        denom = float(batch.t_mask.sum())
        if denom == 0.0:
            raise ShapeMismatch("masked_mse with no observed target entries")
    else:
        denom = float(resid.size)
    loss = float((resid ** 2).sum() / denom)
    d_y = 2.0 * resid / denom
    return loss, d_y


def _ce_loss_and_grad(logits: np.ndarray, labels: np.ndarray, nu: int, n_classes: int):
    b = logits.shape[0]
    z = logits.reshape(b, nu, n_classes)
    z = z - z.max(axis=2, keepdims=True)
    expz = np.exp(z)
    p = expz / expz.sum(axis=2, keepdims=True)
    rows = np.arange(b)[:, None], np.arange(nu)[None, :]
    picked = p[rows[0], rows[1], labels]
    loss = float(-np.log(np.maximum(picked, 1e-300)).mean())
    d_z = p.copy()
    d_z[rows[0], rows[1], labels] -= 1.0
    d_z /= b * nu
    return loss, d_z.reshape(b, nu * n_classes)


def _one_hot(indices: np.ndarray, size: int) -> np.ndarray:
    flat = indices.ravel()
    out = np.zeros((flat.shape[0], size))
    out[np.arange(flat.shape[0]), flat] = 1.0
    return out


def _backward(model: TaskModel, state: dict, d_y: np.ndarray, x: np.ndarray):
    """Gradients of a loss with d_loss/d_y = d_y through the linear chain."""
    grads = {
        "bias": d_y.sum(axis=0),
        "head": d_y.T @ state["aug"],
    }
    d_aug = d_y @ model.head
    if model.use_pool:
        grads["weight"] = d_aug.T @ state["flat"]
        d_flat = d_aug @ model.proj.weight
        kld = model.top_k * model.pool.prompt_len * model.pool.dim
        contrib = d_flat[:, :kld].reshape(
            -1, model.pool.prompt_len * model.pool.dim
        )
        # scatter-add via one-hot matmul: rows group by selected prompt
        onehot = _one_hot(state["idx"], model.pool.size)
        grads["values"] = (onehot.T @ contrib).reshape(model.pool.values.shape)
        d_emb = d_flat[:, kld:]
    else:
        grads["weight"] = None
        grads["values"] = None
        d_emb = d_aug
    grads["embed"] = d_emb.T @ x
    return grads


def _alignment_loss_and_keygrad(model: TaskModel, state: dict):
    """Mean over samples of sum_k (1 - cos(emb, key)); queries held constant."""
    emb, idx, scores = state["emb"], state["idx"], state["scores"]
    b = emb.shape[0]
    loss = float((1.0 - scores).sum() / b)
    qn = np.linalg.norm(emb, axis=1)[:, None, None]
    keys = model.pool.keys[idx]
    kn = np.linalg.norm(keys, axis=2)[:, :, None]
    d_cos = emb[:, None, :] / (qn * kn) - scores[:, :, None] * keys / (kn * kn)
    onehot = _one_hot(idx, model.pool.size)
    d_keys = onehot.T @ (-d_cos / b).reshape(-1, model.pool.dim)
    return loss, d_keys


def _apply(model: TaskModel, grads: dict, lr: float):
    model.embed -= lr * grads["embed"]
    model.head -= lr * grads["head"]
    model.bias -= lr * grads["bias"]
    if model.use_pool:
        model.proj.weight -= lr * grads["weight"]
        model.pool.values -= lr * grads["values"]
        if grads.get("keys") is not None:
            model.pool.keys -= lr * grads["keys"]


def _eval_regression(model: TaskModel, batch: _RegressionBatch, masked: bool):
    state = model._forward(batch.x)
    loss, d_y = _task_loss_and_grad(model, state, batch, masked)
    key_loss = 0.0
    d_keys = None
    if model.use_pool and model.hyper.lambda_key > 0:
        key_loss, d_keys = _alignment_loss_and_keygrad(model, state)
        d_keys = d_keys * model.hyper.lambda_key
    total = loss + model.hyper.lambda_key * key_loss
    grads = _backward(model, state, d_y, batch.x)
    grads["keys"] = d_keys
    return total, grads


def _eval_classification(model: TaskModel, x_pooled: np.ndarray, labels: np.ndarray):
    state = model._forward(x_pooled)
    loss, d_logits = _ce_loss_and_grad(state["y"], labels, model.nu, model.n_classes)
    key_loss = 0.0
    d_keys = None
    if model.use_pool and model.hyper.lambda_key > 0:
        key_loss, d_keys = _alignment_loss_and_keygrad(model, state)
        d_keys = d_keys * model.hyper.lambda_key
    total = loss + model.hyper.lambda_key * key_loss
    grads = _backward(model, state, d_logits, x_pooled)
    grads["keys"] = d_keys
    return total, grads


def evaluate(
    model: TaskModel,
    windows: WindowSet,
    loss_kind: str,
    *,
    input_masks=None,
    target_masks=None,
    train_labels=None,
) -> tuple[float, dict]:
    """One full-batch loss/gradient evaluation without updating anything.

    Returns (loss, grads) where loss includes the lambda_key-weighted
    alignment term and grads has entries embed/head/bias and, when the pool
    is active, weight/values/keys (keys already scaled by lambda_key).
    """
    if len(windows) == 0:
        raise EmptyWindowSet("no windows to evaluate")
    if loss_kind == "cross_entropy":
        n = windows.inputs.shape[1]
        x_pooled = _flatten_batch(windows, input_masks, model).reshape(
            len(windows), n, -1).mean(axis=1)
        return _eval_classification(
            model, x_pooled, np.asarray(train_labels, dtype=np.int64)
        )
    batch = _RegressionBatch(windows, model, input_masks, target_masks)
    return _eval_regression(model, batch, loss_kind == "masked_mse")


def train(
    model: TaskModel,
    windows: WindowSet,
    val: WindowSet | None,
    loss_kind: str,
    *,
    input_masks=None,
    target_masks=None,
    val_input_masks=None,
    val_target_masks=None,
    train_labels=None,
    val_labels=None,
) -> TrainReport:
    """Full-batch gradient descent on task loss + lambda_key * alignment loss.

    ``loss_kind`` is one of mse, masked_mse, cross_entropy. Losses are
    recorded before each update, so train_losses[0] is the initial loss.
    """
    if loss_kind not in ("mse", "masked_mse", "cross_entropy"):
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    if len(windows) == 0:
        raise EmptyWindowSet("no training windows")
    if loss_kind == "cross_entropy":
        if model.head_kind != CLASSIFICATION:
            raise WrongHeadKind("cross_entropy needs a classification head")
        if train_labels is None:
            raise ShapeMismatch("cross_entropy needs integer window labels")
    elif model.head_kind != REGRESSION:
        raise WrongHeadKind(f"{loss_kind} needs a regression head")

    report = TrainReport()
    lr = model.hyper.lr

    if loss_kind == "cross_entropy":
        # mean-pooling commutes with the linear embedding, so train on the
        # per-window mean input row; E's gradient then comes out directly
        n = windows.inputs.shape[1]
        labels = np.asarray(train_labels, dtype=np.int64)
        val_pooled = None
        vlabels = None
        if val is not None and len(val) and val_labels is not None:
            val_pooled = _flatten_batch(val, val_input_masks, model).reshape(
                len(val), n, -1).mean(axis=1)
            vlabels = np.asarray(val_labels, dtype=np.int64)
        for _ in range(model.hyper.epochs):
            t0 = time.perf_counter()
            total, grads = evaluate(model, windows, loss_kind,
                                    input_masks=input_masks,
                                    train_labels=labels)
            if not np.isfinite(total):
                raise NonFiniteLoss(f"loss diverged to {total}")
            report.train_losses.append(total)
            if val_pooled is not None:
                vstate = model._forward(val_pooled)
                vloss, _ = _ce_loss_and_grad(vstate["y"], vlabels, model.nu,
                                             model.n_classes)
                report.val_losses.append(vloss)
            _apply(model, grads, lr)
            report.epoch_seconds.append(time.perf_counter() - t0)
        return report

    batch = _RegressionBatch(windows, model, input_masks, target_masks)
    val_batch = (
        _RegressionBatch(val, model, val_input_masks, val_target_masks)
        if val is not None and len(val) else None
    )
    masked = loss_kind == "masked_mse"
    for _ in range(model.hyper.epochs):
        t0 = time.perf_counter()
        total, grads = _eval_regression(model, batch, masked)
        if not np.isfinite(total):
            raise NonFiniteLoss(f"loss diverged to {total}")
        report.train_losses.append(total)
        if val_batch is not None:
            vstate = model._forward(val_batch.x)
            vloss, _ = _task_loss_and_grad(model, vstate, val_batch, masked)
            report.val_losses.append(vloss)
        _apply(model, grads, lr)
        report.epoch_seconds.append(time.perf_counter() - t0)
    return report


def dpo_align(
    model: TaskModel,
    windows: WindowSet,
    beta: float,
    mask_frac: float,
    *,
    epochs: int | None = None,
    lr: float | None = None,
    input_masks=None,
) -> TrainReport:
    """Preference alignment: pull predictions toward true targets and away
    from noise-corrupted ones.

    Per window the dispreferred target replaces round(mask_frac * entries)
    entries with unit-normal noise (one fixed seeded draw per call). The
    pairwise logistic loss -log sigmoid(beta * (||y_hat - y_minus||^2 -
    ||y_hat - y_plus||^2)) is minimized by gradient descent on the head and
    the projection only.
    """
    if model.head_kind != REGRESSION:
        raise WrongHeadKind("preference alignment is defined for regression heads")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if not 0.0 < mask_frac < 1.0:
        raise ValueError("mask_frac must be in (0, 1)")
    if len(windows) == 0:
        raise EmptyWindowSet("no alignment windows")
    epochs = model.hyper.epochs if epochs is None else epochs
    lr = model.hyper.lr if lr is None else lr

    n_wins, n, nu = windows.targets.shape
    rng = np.random.default_rng([model.hyper.seed, 0xD7])
    y_plus = windows.targets.reshape(n_wins, n * nu)
    y_minus = corrupt_targets(y_plus, mask_frac, rng)

    x = _flatten_batch(windows, input_masks, model)

    report = TrainReport()
    for _ in range(epochs):
        t0 = time.perf_counter()
        loss, grads = _eval_dpo(model, x, y_plus, y_minus, beta)
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"alignment loss diverged to {loss}")
        report.train_losses.append(loss)
        model.head -= lr * grads["head"]
        model.bias -= lr * grads["bias"]
        if model.use_pool:
            model.proj.weight -= lr * grads["weight"]
        report.epoch_seconds.append(time.perf_counter() - t0)
    return report


def _eval_dpo(model: TaskModel, x: np.ndarray, y_plus: np.ndarray,
              y_minus: np.ndarray, beta: float) -> tuple[float, dict]:
    n_wins = y_plus.shape[0]
    state = model._forward(x)
    y_hat = state["y"].reshape(n_wins, -1)
    margin = ((y_hat - y_minus) ** 2).sum(axis=1) - ((y_hat - y_plus) ** 2).sum(axis=1)
    loss = float(np.logaddexp(0.0, -beta * margin).mean())
    d_margin = -beta * _sigmoid(-beta * margin) / n_wins
    d_yhat = d_margin[:, None] * 2.0 * (y_plus - y_minus)
    grads = _backward(model, state, d_yhat.reshape(x.shape[0], model.nu), x)
    return loss, grads


def evaluate_dpo(
    model: TaskModel,
    windows: WindowSet,
    beta: float,
    mask_frac: float,
    *,
    input_masks=None,
) -> tuple[float, dict]:
    """Preference loss and its head/bias/weight gradients, without updating.

    The corrupted targets derive deterministically from hyper.seed, so
    repeated calls at perturbed parameters see identical preference pairs.
    """
    if model.head_kind != REGRESSION:
        raise WrongHeadKind("preference alignment is defined for regression heads")
    n_wins, n, nu = windows.targets.shape
    rng = np.random.default_rng([model.hyper.seed, 0xD7])
    y_plus = windows.targets.reshape(n_wins, n * nu)
    y_minus = corrupt_targets(y_plus, mask_frac, rng)
    x = _flatten_batch(windows, input_masks, model)
    return _eval_dpo(model, x, y_plus, y_minus, beta)


# --- remote boundary -----------------------------------------------------------


def remote_predict(
    endpoint: str,
    task: str,
    window: np.ndarray,
    mask: np.ndarray | None,
    horizon: int,
    timeout: float,
) -> np.ndarray:
    """POST a window to a remote model server and parse its prediction.

    Wire protocol: ``POST <endpoint>/predict`` with JSON
    ``{"task": ..., "window": [[...]], "mask": [[...]]|null, "horizon": k}``;
    the response must be ``{"prediction": [[...]]}`` with one row per input
    series and ``horizon`` columns.
    """
    win = np.asarray(window, dtype=np.float64)
    body = {
        "task": str(task),
        "window": win.tolist(),
        "mask": None if mask is None else np.asarray(mask).tolist(),
        "horizon": int(horizon),
    }
    url = endpoint.rstrip("/") + "/predict"
    try:
        resp = requests.post(url, json=body, timeout=timeout)
    except requests.exceptions.Timeout as exc:
        raise Timeout(f"no answer from {url} within {timeout}s") from exc
    except requests.exceptions.ConnectionError as exc:
        raise Timeout(f"{url} unreachable") from exc
    if resp.status_code != 200:
        raise BadStatus(f"{url} answered {resp.status_code}")
    try:
        payload = resp.json()
    except ValueError as exc:
        raise MalformedResponse(f"{url} sent unparseable JSON") from exc
    if not isinstance(payload, dict) or "prediction" not in payload:
        raise MalformedResponse(f"{url} response lacks a 'prediction' field")
    try:
        pred = np.asarray(payload["prediction"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise MalformedResponse("prediction is not a numeric matrix") from exc
    if pred.ndim != 2 or pred.shape != (win.shape[0], horizon):
        raise ShapeMismatch(
            f"prediction shape {pred.shape} != ({win.shape[0]}, {horizon})"
        )
    return pred


class RemoteModel:
    """Prediction-only stand-in backed by a remote model server.

    Quacks like a regression TaskModel for the predict path; training and
    alignment do not apply.
    """

    head_kind = REGRESSION
    n_classes = None
    use_pool = False

    def __init__(self, endpoint: str, task: str, tau: int, nu: int,
                 channels: int = 1, timeout: float = 10.0):
        self.endpoint = endpoint
        self.task = task
        self.tau = tau
        self.nu = nu
        self.channels = channels
        self.timeout = timeout

    def predict(self, window: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        return remote_predict(self.endpoint, self.task, window, mask,
                              self.nu, self.timeout)
