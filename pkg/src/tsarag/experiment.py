"""Wires a configuration into data, models, sub-agent registry, and results.

The single master seed fans out to per-subsystem streams ("pool", "model",
"mask", "kmeans") so toggling one feature never shifts another's draws.
"""
from __future__ import annotations

import numpy as np

from .agents import (
    AblationFlags,
    Runner,
    TaskKind,
    TaskRequest,
    TaskResponse,
    execute_anomaly,
    execute_classify,
    execute_forecast,
    execute_impute,
)
from .core_data import MaskMatrix, SeriesMatrix, chronological_split
from .dataio import (
    ExperimentConfig,
    derive_seed,
    read_csv,
    read_labels,
    read_mask_csv,
)
from .errors import InvalidSpec, NoMissingValues
from .missingness import MissingSpec, generate_mask
from .pool import PromptPool, Projection
from .predictor import CLASSIFICATION, REGRESSION, Hyper, RemoteModel, TaskModel


class _ModelBuilder:
    """Builds per-task models; shares pool/projection per the config flags."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self._shared_pool: PromptPool | None = None
        self._shared_proj: Projection | None = None

    def _pool(self) -> PromptPool:
        if self._shared_pool is None:
            self._shared_pool = PromptPool.random(
                self.cfg.pool_size, self.cfg.prompt_len, self.cfg.embed_dim,
                derive_seed(self.cfg.seed, "pool"),
            )
        return self._shared_pool

    def _proj(self) -> Projection:
        if self._shared_proj is None:
            self._shared_proj = Projection.random(
                self.cfg.top_k, self.cfg.prompt_len, self.cfg.embed_dim,
                derive_seed(self.cfg.seed, "proj"),
            )
        return self._shared_proj

    def build(self, kind: TaskKind, ablation: AblationFlags,
              n_classes: int | None = None):
        cfg = self.cfg
        if cfg.model_url:
            if kind is TaskKind.CLASSIFY:
                raise InvalidSpec("remote models do not serve the classify task")
            return RemoteModel(
                endpoint=cfg.model_url,
                task=kind.value,
                tau=cfg.tau,
                nu=1 if kind is TaskKind.ANOMALY else cfg.nu,
                channels=2 if kind is TaskKind.IMPUTE else 1,
            )
        hyper = Hyper(
            lr=cfg.lr, epochs=cfg.epochs, lambda_key=cfg.lambda_key,
            beta=cfg.beta, seed=derive_seed(cfg.seed, "model"),
        )
        share_pool = cfg.shared_pool or ablation.universal_agent
        return TaskModel.create(
            tau=cfg.tau,
            nu=1 if kind is TaskKind.ANOMALY else cfg.nu,
            hyper=hyper,
            pool_size=cfg.pool_size,
            top_k=cfg.top_k,
            prompt_len=cfg.prompt_len,
            dim=cfg.embed_dim,
            channels=2 if kind is TaskKind.IMPUTE else 1,
            head_kind=CLASSIFICATION if kind is TaskKind.CLASSIFY else REGRESSION,
            n_classes=n_classes,
            use_pool=not ablation.no_pool,
            pool=self._pool() if share_pool else None,
            proj=self._proj() if ablation.universal_agent else None,
        )


def resolve_mask(cfg: ExperimentConfig, data: SeriesMatrix,
                 file_mask: MaskMatrix) -> MaskMatrix:
    """Mask precedence: explicit mask file, then synthetic spec, then CSV gaps."""
    if cfg.mask_path:
        mask = read_mask_csv(cfg.mask_path)
        mask.check_aligned(data)
        return mask
    if cfg.missing:
        spec = MissingSpec(
            pattern=cfg.missing["pattern"],
            rate=float(cfg.missing["rate"]),
            mean_block_len=int(cfg.missing.get("mean_block_len", 4)),
            seed=derive_seed(cfg.seed, "mask"),
            spatial_width=int(cfg.missing.get("spatial_width", 1)),
        )
        return generate_mask(spec, data.n_series, data.n_steps)
    if not file_mask.flags.all():
        return file_mask
    raise NoMissingValues(
        "impute needs a mask file, a missing spec, or gaps in the data CSV"
    )


def build_registry(cfg: ExperimentConfig, data: SeriesMatrix,
                   file_mask: MaskMatrix,
                   labels: np.ndarray | None) -> dict[TaskKind, Runner]:
    split = chronological_split(data.n_steps, cfg.split_ratio)
    builder = _ModelBuilder(cfg)
    remote = bool(cfg.model_url)

    def _opts(ablation: AblationFlags) -> dict:
        return {
            "stride": cfg.stride,
            "do_train": not ablation.no_train and not remote,
            "do_dpo": not ablation.no_dpo and not remote,
            "dpo_epochs": cfg.dpo_epochs,
        }

    def run_forecast(req, ablation, trace):
        model = builder.build(TaskKind.FORECAST, ablation)
        return execute_forecast(model, data, split, cfg.tau, cfg.nu,
                                trace=trace, **_opts(ablation))

    def run_impute(req, ablation, trace):
        mask = resolve_mask(cfg, data, file_mask)
        model = builder.build(TaskKind.IMPUTE, ablation)
        return execute_impute(model, data, mask, split, cfg.tau, cfg.nu,
                              trace=trace, **_opts(ablation))

    def run_anomaly(req, ablation, trace):
        model = builder.build(TaskKind.ANOMALY, ablation)
        return execute_anomaly(model, data, split, cfg.tau, cfg.w_a,
                               labels=labels, trace=trace, **_opts(ablation))

    def run_classify(req, ablation, trace):
        opts = _opts(ablation)
        opts.pop("do_dpo")
        opts.pop("dpo_epochs")
        factory = lambda n: builder.build(TaskKind.CLASSIFY, ablation, n_classes=n)
        return execute_classify(
            factory, data, split, cfg.tau, cfg.nu,
            n_clusters=cfg.n_clusters,
            cluster_raw=cfg.cluster_raw,
            cluster_seed=derive_seed(cfg.seed, "kmeans"),
            trace=trace, **opts,
        )

    return {
        TaskKind.FORECAST: run_forecast,
        TaskKind.IMPUTE: run_impute,
        TaskKind.ANOMALY: run_anomaly,
        TaskKind.CLASSIFY: run_classify,
    }


def run_task(cfg: ExperimentConfig) -> TaskResponse:
    """Run the configured task end to end and return its response."""
    cfg.check_files()
    data, file_mask = read_csv(cfg.data_path)
    labels = read_labels(cfg.labels_path) if cfg.labels_path else None
    registry = build_registry(cfg, data, file_mask, labels)
    ablation = AblationFlags(
        no_pool=cfg.no_pool,
        universal_agent=cfg.universal_agent,
        no_train=cfg.no_train,
        no_dpo=cfg.no_dpo,
    )
    kind = TaskKind(cfg.task)
    return registry[kind](TaskRequest(text=f"run {cfg.task}"), ablation, None)
