"""Master-agent routing and the four task pipelines.

Routing is deterministic keyword matching over four disjoint rule sets;
matching two categories is an explicit AmbiguousRequest rather than a
silent priority order. Each pipeline standardizes on the train split,
trains its model, predicts the test split, evaluates on the original
scale, and assembles a trace of thought/action/observation steps ending
in a synthesize step.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping

import numpy as np

from . import anomaly as anomaly_mod
from . import metrics as metrics_mod
from .clustering import kmeans_fit, silhouette
from .core_data import (
    MaskMatrix,
    SeriesMatrix,
    Split,
    WindowSet,
    context_range,
    make_windows,
    rescale_windows,
    standardize,
    window_array,
)
from .errors import AmbiguousRequest, NoMissingValues, ShapeMismatch, UnknownTask
from .predictor import CLASSIFICATION, TaskModel, dpo_align, train


class TaskKind(Enum):
    FORECAST = "forecast"
    IMPUTE = "impute"
    ANOMALY = "anomaly"
    CLASSIFY = "classify"

    @property
    def label(self) -> str:
        return self.name.capitalize()


ROUTE_KEYWORDS: dict[TaskKind, tuple[str, ...]] = {
    TaskKind.ANOMALY: ("anomal", "fault", "outlier", "attack", "intrusion"),
    TaskKind.IMPUTE: ("imput", "missing", "fill", "gap"),
    TaskKind.CLASSIFY: ("classif", "regime", "cluster", "label"),
    TaskKind.FORECAST: ("forecast", "predict", "horizon", "future"),
}


@dataclass(frozen=True)
class TaskRequest:
    text: str
    data_ref: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError("request text must be nonempty")


@dataclass(frozen=True)
class TraceStep:
    thought: str
    action: str
    observation: str

    def __post_init__(self):
        if not (self.thought and self.action and self.observation):
            raise ValueError("trace fields must be nonempty")


PAYLOAD_COLUMNS: dict[TaskKind, tuple[str, ...]] = {
    TaskKind.FORECAST: ("t", "series_id", "prediction", "truth"),
    TaskKind.IMPUTE: ("t", "series_id", "prediction", "truth"),
    TaskKind.ANOMALY: ("t", "score", "flag"),
    TaskKind.CLASSIFY: ("t", "predicted_label", "true_label"),
}


@dataclass(frozen=True)
class TaskResponse:
    kind: TaskKind
    payload: dict
    metrics: dict
    trace: tuple[TraceStep, ...]

    def __post_init__(self):
        object.__setattr__(self, "trace", tuple(self.trace))
        required = PAYLOAD_COLUMNS[self.kind]
        missing = [c for c in required if c not in self.payload]
        if missing:
            raise ShapeMismatch(f"{self.kind.label} payload lacks columns {missing}")
        lengths = {len(v) for v in self.payload.values()}
        if len(lengths) > 1:
            raise ShapeMismatch(f"payload columns have unequal lengths {lengths}")
        for name, value in self.metrics.items():
            if not np.isfinite(value):
                raise ValueError(f"metric {name} is not finite")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "payload": {k: np.asarray(v).tolist() for k, v in self.payload.items()},
            "metrics": {k: float(v) for k, v in self.metrics.items()},
            "trace": [
                {"thought": s.thought, "action": s.action, "observation": s.observation}
                for s in self.trace
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TaskResponse":
        return cls(
            kind=TaskKind(doc["kind"]),
            payload=doc["payload"],
            metrics=doc["metrics"],
            trace=tuple(TraceStep(**s) for s in doc["trace"]),
        )

    def equals(self, other: "TaskResponse") -> bool:
        return self.to_dict() == other.to_dict()


# --- routing --------------------------------------------------------------


def _matches(text: str) -> list[tuple[TaskKind, str]]:
    lowered = text.lower()
    hits = []
    for kind, keywords in ROUTE_KEYWORDS.items():
        for kw in keywords:
            if kw in lowered:
                hits.append((kind, kw))
                break
    return hits


def route(req: TaskRequest) -> TaskKind:
    """Classify a request into exactly one task category."""
    hits = _matches(req.text)
    if not hits:
        raise UnknownTask(f"no task keyword found in {req.text!r}")
    if len(hits) > 1:
        names = ", ".join(k.label for k, _ in hits)
        raise AmbiguousRequest(f"request matches several categories: {names}")
    return hits[0][0]


# --- pipeline helpers -------------------------------------------------------


def _received_step(kind: TaskKind) -> TraceStep:
    return TraceStep(
        thought="A task request arrived; identify the specialist pipeline.",
        action="route",
        observation=f"kind={kind.label}",
    )


def _train_step(model: TaskModel, windows, val, loss_kind, do_train,
                trace, **kwargs):
    if not do_train:
        trace.append(TraceStep(
            thought="Supervised fitting is disabled for this run.",
            action="train",
            observation="skipped",
        ))
        return None
    report = train(model, windows, val, loss_kind, **kwargs)
    trace.append(TraceStep(
        thought="Fit the predictor on the training windows.",
        action="train",
        observation=(
            f"{len(report.train_losses)} epochs; loss "
            f"{report.train_losses[0]:.6g} -> {report.final_train_loss:.6g}"
        ),
    ))
    return report


def _dpo_step(model: TaskModel, windows, do_train, do_dpo, mask_frac,
              dpo_epochs, dpo_lr, trace, input_masks=None):
    if not (do_train and do_dpo):
        trace.append(TraceStep(
            thought="Preference alignment is disabled for this run.",
            action="align",
            observation="skipped",
        ))
        return None
    report = dpo_align(model, windows, model.hyper.beta, mask_frac,
                       epochs=dpo_epochs, lr=dpo_lr, input_masks=input_masks)
    trace.append(TraceStep(
        thought="Align predictions against noise-corrupted targets.",
        action="align",
        observation=(
            f"{len(report.train_losses)} epochs; loss "
            f"{report.train_losses[0]:.6g} -> {report.final_train_loss:.6g}"
        ),
    ))
    return report


def _synthesize_step(metrics: dict) -> TraceStep:
    if metrics:
        summary = ", ".join(f"{k}={v:.6g}" for k, v in metrics.items())
    else:
        summary = "no reference labels; reporting flags only"
    return TraceStep(
        thought="Assemble the sub-agent answer for the user.",
        action="synthesize",
        observation=summary,
    )


def predict_windows(model, inputs: np.ndarray, input_masks=None) -> np.ndarray:
    """Batch predictions for stacked windows (W, N, tau).

    Returns (W, N, nu) for regression heads, (W, nu, C) logits for
    classification heads. TaskModels run one fused batch; anything else
    exposing ``.predict(window, mask)`` (remote models, injected oracles)
    is called per window.
    """
    n_wins, n, tau = inputs.shape
    if not isinstance(model, TaskModel):
        preds = []
        for w in range(n_wins):
            m = input_masks[w] if (model.channels == 2 and input_masks is not None) else None
            preds.append(model.predict(inputs[w], m))
        return np.stack(preds)
    x = inputs.reshape(n_wins * n, tau)
    if model.channels == 2:
        if input_masks is None:
            raise ShapeMismatch("mask channel required (channels=2)")
        m = np.asarray(input_masks, dtype=np.float64).reshape(n_wins * n, tau)
        x = np.concatenate([x, m], axis=1)
    if model.head_kind == CLASSIFICATION:
        pooled = x.reshape(n_wins, n, -1).mean(axis=1)
        logits = model._forward(pooled)["y"]
        return logits.reshape(n_wins, model.nu, model.n_classes)
    return model._forward(x)["y"].reshape(n_wins, n, model.nu)


def _window_timestamps(anchors: np.ndarray, n: int, nu: int) -> np.ndarray:
    """(W, N, nu) grid of absolute target timestamps."""
    steps = np.arange(1, nu + 1, dtype=np.int64)
    return np.broadcast_to(
        anchors[:, None, None] + steps[None, None, :], (len(anchors), n, nu)
    )


# --- task pipelines -----------------------------------------------------------


def execute_forecast(
    model: TaskModel,
    data: SeriesMatrix,
    split: Split,
    tau: int,
    nu: int,
    *,
    stride: int = 1,
    do_train: bool = True,
    do_dpo: bool = True,
    mask_frac: float = 0.5,
    dpo_epochs: int = 3,
    dpo_lr: float | None = None,
    trace: list[TraceStep] | None = None,
) -> TaskResponse:
    """Train on the train split, score test-window forecasts on the original scale."""
    trace = list(trace) if trace else [_received_step(TaskKind.FORECAST)]
    std = standardize(data, split.train_range)
    train_w = make_windows(std, split.train_range, tau, nu, stride)
    val_w = make_windows(std, context_range(split.val_range, tau), tau, nu, stride)
    test_w = make_windows(std, context_range(split.test_range, tau), tau, nu, stride)

    _train_step(model, train_w, val_w, "mse", do_train, trace)
    _dpo_step(model, train_w, do_train, do_dpo, mask_frac, dpo_epochs, dpo_lr, trace)

    preds = rescale_windows(predict_windows(model, test_w.inputs), std.stats)
    truth = make_windows(data, context_range(split.test_range, tau), tau, nu, stride).targets
    trace.append(TraceStep(
        thought="Forecast every test window.",
        action="predict",
        observation=f"{len(test_w)} windows, horizon {nu}",
    ))

    result = {
        "MAE": metrics_mod.mae(truth, preds),
        "RMSE": metrics_mod.rmse(truth, preds),
        "MAPE": metrics_mod.mape(truth, preds),
    }
    trace.append(TraceStep(
        thought="Score forecasts against held-out truth on the original scale.",
        action="score",
        observation=f"MAE={result['MAE']:.6g}",
    ))
    n = data.n_series
    ts = _window_timestamps(test_w.anchor_times, n, nu)
    ids = np.broadcast_to(
        np.array(data.series_ids, dtype=object)[None, :, None], ts.shape
    )
    payload = {
        "t": ts.ravel(),
        "series_id": ids.ravel(),
        "prediction": preds.ravel(),
        "truth": truth.ravel(),
    }
    trace.append(_synthesize_step(result))
    return TaskResponse(kind=TaskKind.FORECAST, payload=payload,
                        metrics=result, trace=tuple(trace))


def execute_impute(
    model: TaskModel,
    data: SeriesMatrix,
    mask: MaskMatrix,
    split: Split,
    tau: int,
    nu: int,
    *,
    stride: int = 1,
    do_train: bool = True,
    do_dpo: bool = True,
    mask_frac: float = 0.5,
    dpo_epochs: int = 3,
    dpo_lr: float | None = None,
    trace: list[TraceStep] | None = None,
) -> TaskResponse:
    """Out-of-sample imputation: train on observed entries, score missing ones."""
    trace = list(trace) if trace else [_received_step(TaskKind.IMPUTE)]
    mask.check_aligned(data)
    if mask.flags.all():
        raise NoMissingValues("mask marks every entry observed")
    std = standardize(data, split.train_range)
    observed = std.values * mask.flags  # zero-fill after standardization
    flags = mask.flags.astype(np.float64)

    def cut(rng):
        x_in, _, anchors = window_array(observed, rng, tau, nu, stride)
        m_in, m_tgt, _ = window_array(flags, rng, tau, nu, stride)
        _, y_tgt, _ = window_array(std.values, rng, tau, nu, stride)
        return x_in, m_in, y_tgt, m_tgt, anchors

    tr = cut(split.train_range)
    va = cut(context_range(split.val_range, tau))
    te = cut(context_range(split.test_range, tau))
    train_w = WindowSet(inputs=tr[0], targets=tr[2], tau=tau, nu=nu,
                        anchor_times=tr[4])
    val_w = WindowSet(inputs=va[0], targets=va[2], tau=tau, nu=nu,
                      anchor_times=va[4])

    _train_step(
        model, train_w, val_w, "masked_mse", do_train, trace,
        input_masks=tr[1], target_masks=tr[3],
        val_input_masks=va[1], val_target_masks=va[3],
    )
    _dpo_step(model, train_w, do_train, do_dpo, mask_frac, dpo_epochs, dpo_lr,
              trace, input_masks=tr[1])

    preds = rescale_windows(predict_windows(model, te[0], input_masks=te[1]),
                            std.stats)
    truth = rescale_windows(te[2], std.stats)
    miss = te[3] == 0.0
    if not miss.any():
        raise NoMissingValues("no missing entries in test target windows")
    trace.append(TraceStep(
        thought="Estimate future values at the missing positions.",
        action="predict",
        observation=f"{int(miss.sum())} missing entries over {len(te[4])} windows",
    ))

    result = {
        "MAE": metrics_mod.mae(truth[miss], preds[miss]),
        "RMSE": metrics_mod.rmse(truth[miss], preds[miss]),
        "MAPE": metrics_mod.mape(truth[miss], preds[miss]),
    }
    trace.append(TraceStep(
        thought="Score imputations over missing entries only, original scale.",
        action="score",
        observation=f"MAE={result['MAE']:.6g}",
    ))
    n = data.n_series
    ts = _window_timestamps(te[4], n, nu)
    ids = np.broadcast_to(
        np.array(data.series_ids, dtype=object)[None, :, None], ts.shape
    )
    payload = {
        "t": ts[miss],
        "series_id": ids[miss],
        "prediction": preds[miss],
        "truth": truth[miss],
    }
    trace.append(_synthesize_step(result))
    return TaskResponse(kind=TaskKind.IMPUTE, payload=payload,
                        metrics=result, trace=tuple(trace))


def execute_anomaly(
    model: TaskModel,
    data: SeriesMatrix,
    split: Split,
    tau: int,
    w_a: int,
    labels: np.ndarray | None = None,
    *,
    stride: int = 1,
    do_train: bool = True,
    do_dpo: bool = True,
    mask_frac: float = 0.5,
    dpo_epochs: int = 3,
    dpo_lr: float | None = None,
    trace: list[TraceStep] | None = None,
) -> TaskResponse:
    """One-step-ahead residual scoring with a validation-max threshold."""
    trace = list(trace) if trace else [_received_step(TaskKind.ANOMALY)]
    std = standardize(data, split.train_range)
    train_w = make_windows(std, split.train_range, tau, 1, stride)
    val_w = make_windows(std, context_range(split.val_range, tau), tau, 1, stride)
    test_w = make_windows(std, context_range(split.test_range, tau), tau, 1, stride)

    _train_step(model, train_w, val_w, "mse", do_train, trace)
    _dpo_step(model, train_w, do_train, do_dpo, mask_frac, dpo_epochs, dpo_lr, trace)

    def scores_for(windows):
        preds = predict_windows(model, windows.inputs)
        per_var = anomaly_mod.score_series(
            windows.targets[:, :, 0].T, preds[:, :, 0].T
        )
        return anomaly_mod.aggregate(per_var, w_a)

    th = anomaly_mod.compute_threshold(scores_for(val_w))
    test_scores = scores_for(test_w)
    raw_flags = anomaly_mod.flag(test_scores, th)
    ts = test_w.anchor_times + 1
    trace.append(TraceStep(
        thought="Score one-step residuals and compare against the validation maximum.",
        action="predict",
        observation=f"threshold={th.value:.6g}; {int(raw_flags.sum())} raw flags",
    ))

    payload = {"t": ts, "score": test_scores, "flag": raw_flags}
    result: dict = {}
    if labels is not None:
        lbl = np.asarray(labels).ravel()[ts].astype(np.uint8)
        adjusted = anomaly_mod.point_adjust(raw_flags, lbl)
        precision, recall, f1 = metrics_mod.prf1(metrics_mod.confusion(adjusted, lbl))
        result = {"precision": precision, "recall": recall, "f1": f1}
        payload = {"t": ts, "score": test_scores, "flag": adjusted, "label": lbl}
        trace.append(TraceStep(
            thought="Point-adjust flags over labeled segments and score them.",
            action="score",
            observation=f"F1={f1:.6g}",
        ))
    else:
        trace.append(TraceStep(
            thought="No reference labels were provided.",
            action="score",
            observation="unsupervised run; flags reported without metrics",
        ))
    trace.append(_synthesize_step(result))
    return TaskResponse(kind=TaskKind.ANOMALY, payload=payload,
                        metrics=result, trace=tuple(trace))


def execute_classify(
    model_factory,
    data: SeriesMatrix,
    split: Split,
    tau: int,
    nu: int,
    n_clusters: int | None = None,
    *,
    stride: int = 1,
    cluster_raw: bool = False,
    cluster_seed: int = 0,
    k_range=range(2, 7),
    do_train: bool = True,
    trace: list[TraceStep] | None = None,
) -> TaskResponse:
    """Regime labeling by k-means, then next-steps label prediction.

    ``model_factory`` maps the selected cluster count to a TaskModel with a
    matching classification head (a ready TaskModel is also accepted).
    """
    trace = list(trace) if trace else [_received_step(TaskKind.CLASSIFY)]
    std = standardize(data, split.train_range)
    source = data if cluster_raw else std
    a, b = split.train_range
    train_cols = source.values[:, a:b].T

    if n_clusters is None:
        best_k, best_score = None, -np.inf
        for k in k_range:
            cm, lab = kmeans_fit(train_cols, k, cluster_seed)
            s = silhouette(train_cols, lab)
            if s > best_score + 1e-12:
                best_k, best_score = k, s
        n_clusters = best_k
        trace.append(TraceStep(
            thought="Choose the regime count by silhouette analysis.",
            action="select_k",
            observation=f"K={n_clusters} (silhouette {best_score:.4f})",
        ))
    cmodel, train_labels_ts = kmeans_fit(train_cols, n_clusters, cluster_seed)
    all_labels = np.empty(data.n_steps, dtype=np.int64)
    all_labels[a:b] = train_labels_ts
    rest = np.r_[0:a, b:data.n_steps]
    if rest.size:
        all_labels[rest] = cmodel.assign(source.values[:, rest].T)
    trace.append(TraceStep(
        thought="Label every timestep with its nearest regime.",
        action="cluster",
        observation=f"K={n_clusters}, train inertia {cmodel.inertia:.6g}",
    ))

    model = model_factory(n_clusters) if callable(model_factory) else model_factory
    if model.n_classes != n_clusters:
        raise ShapeMismatch(
            f"model expects {model.n_classes} classes, clustering chose {n_clusters}"
        )

    train_w = make_windows(std, split.train_range, tau, nu, stride)
    val_w = make_windows(std, context_range(split.val_range, tau), tau, nu, stride)
    test_w = make_windows(std, context_range(split.test_range, tau), tau, nu, stride)
    steps = np.arange(1, nu + 1)

    def window_labels(windows):
        return all_labels[windows.anchor_times[:, None] + steps[None, :]]

    _train_step(
        model, train_w, val_w, "cross_entropy", do_train, trace,
        train_labels=window_labels(train_w), val_labels=window_labels(val_w),
    )

    logits = predict_windows(model, test_w.inputs)
    predicted = logits.argmax(axis=2)
    truth = window_labels(test_w)
    trace.append(TraceStep(
        thought="Predict the regime of each future step.",
        action="predict",
        observation=f"{len(test_w)} windows, horizon {nu}",
    ))

    acc = metrics_mod.accuracy(predicted, truth)
    precision, recall = metrics_mod.macro_precision_recall(predicted, truth)
    result = {"accuracy": acc, "precision": precision, "recall": recall}
    trace.append(TraceStep(
        thought="Score label predictions on the test windows.",
        action="score",
        observation=f"accuracy={acc:.6g}",
    ))
    ts = test_w.anchor_times[:, None] + steps[None, :]
    payload = {
        "t": ts.ravel(),
        "predicted_label": predicted.ravel(),
        "true_label": truth.ravel(),
    }
    trace.append(_synthesize_step(result))
    return TaskResponse(kind=TaskKind.CLASSIFY, payload=payload,
                        metrics=result, trace=tuple(trace))


# --- master agent ---------------------------------------------------------------


@dataclass(frozen=True)
class AblationFlags:
    """Component toggles mirroring the framework's ablation axes."""

    no_pool: bool = False
    universal_agent: bool = False
    no_train: bool = False
    no_dpo: bool = False


Runner = Callable[[TaskRequest, AblationFlags, list[TraceStep]], TaskResponse]


def handle(
    req: TaskRequest,
    registry: Mapping[TaskKind, Runner],
    ablation: AblationFlags = AblationFlags(),
) -> TaskResponse:
    """Route a request to its sub-agent and return the synthesized response."""
    kind = route(req)
    matched = next(kw for k, kw in _matches(req.text) if k == kind)
    first = TraceStep(
        thought="Decide which specialist sub-agent should handle the request.",
        action="route",
        observation=f"kind={kind.label}; keyword={matched!r}",
    )
    if kind not in registry:
        raise KeyError(f"registry has no sub-agent for {kind.label}")
    return registry[kind](req, ablation, [first])
