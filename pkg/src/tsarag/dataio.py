"""Dataset ingestion, synthetic generation, serialization, configuration.

CSV orientation is rows = timestamps with a header of series ids; matrices
are transposed to (N, T) internally. Floats are written with ``repr`` so
files round-trip bit-exactly and reruns are byte-identical.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .agents import PAYLOAD_COLUMNS, TaskKind, TaskResponse
from .core_data import MaskMatrix, SeriesMatrix
from .errors import InvalidSpec, IoError, ParseError, RaggedRows, ShapeMismatch
from .pool import PromptPool, Projection

POOL_FORMAT_VERSION = "tsarag-pool-v1"


def derive_seed(master: int, label: str) -> int:
    """Stable per-subsystem seed so toggling one feature never shifts another."""
    digest = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


# --- CSV -----------------------------------------------------------------------


def read_csv(path) -> tuple[SeriesMatrix, MaskMatrix]:
    """Load a matrix; empty cells count as missing (mask 0, value 0.0)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows) < 2:
        raise ParseError(1, 1, "need a header row and at least one data row")
    header = rows[0]
    width = len(header)
    values, flags = [], []
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise RaggedRows(f"line {line_no} has {len(row)} cells, expected {width}")
        vrow, frow = [], []
        for col_no, cell in enumerate(row, start=1):
            text = cell.strip()
            if text == "":
                vrow.append(0.0)
                frow.append(0)
                continue
            try:
                vrow.append(float(text))
            except ValueError as exc:
                raise ParseError(line_no, col_no, f"bad number {cell!r}") from exc
            frow.append(1)
        values.append(vrow)
        flags.append(frow)
    data = SeriesMatrix(values=np.array(values).T, series_ids=tuple(header))
    mask = MaskMatrix(flags=np.array(flags, dtype=np.uint8).T)
    return data, mask


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(data: SeriesMatrix, path, mask: MaskMatrix | None = None) -> None:
    """Write rows=timestamps CSV; masked-out entries become empty cells."""
    if mask is not None:
        mask.check_aligned(data)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(data.series_ids)
        for t in range(data.n_steps):
            row = []
            for i in range(data.n_series):
                if mask is not None and mask.flags[i, t] == 0:
                    row.append("")
                else:
                    row.append(_fmt(data.values[i, t]))
            writer.writerow(row)


def write_labels(labels: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "label"])
        for t, lab in enumerate(np.asarray(labels).ravel()):
            writer.writerow([t, int(lab)])


def read_labels(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "label"]:
        raise ParseError(1, 1, "expected header 't,label'")
    out = np.empty(len(rows) - 1, dtype=np.int64)
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise RaggedRows(f"line {line_no} has {len(row)} cells, expected 2")
        try:
            t, lab = int(row[0]), int(row[1])
        except ValueError as exc:
            raise ParseError(line_no, 1, "labels must be integers") from exc
        if t != line_no - 2:
            raise ParseError(line_no, 1, "label rows must be consecutive from t=0")
        out[t] = lab
    return out


def write_mask_csv(mask: MaskMatrix, series_ids, path) -> None:
    """0/1 mask dump matching the data CSV orientation."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(series_ids)
        for t in range(mask.flags.shape[1]):
            writer.writerow([int(mask.flags[i, t]) for i in range(mask.flags.shape[0])])


def read_mask_csv(path) -> MaskMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ParseError(1, 1, "mask file needs a header and data rows")
    width = len(rows[0])
    flags = []
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise RaggedRows(f"line {line_no} has {len(row)} cells, expected {width}")
        try:
            flags.append([int(c) for c in row])
        except ValueError as exc:
            raise ParseError(line_no, 1, "mask cells must be 0/1") from exc
    return MaskMatrix(flags=np.array(flags, dtype=np.uint8).T)


# --- results -----------------------------------------------------------------------


def write_results(resp: TaskResponse, out_dir, config: "ExperimentConfig | None" = None):
    """Emit response.json, payload.csv and (optionally) config.json."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "response.json", "w") as fh:
            json.dump(resp.to_dict(), fh, indent=2)
            fh.write("\n")
        columns = [c for c in PAYLOAD_COLUMNS[resp.kind] if c in resp.payload]
        columns += [c for c in resp.payload if c not in columns]
        with open(out / "payload.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            cols = [np.asarray(resp.payload[c]) for c in columns]
            for row_idx in range(len(cols[0])):
                row = []
                for arr in cols:
                    v = arr[row_idx]
                    if isinstance(v, (np.floating, float)):
                        row.append(_fmt(v))
                    elif isinstance(v, (np.integer, int)):
                        row.append(str(int(v)))
                    else:
                        row.append(str(v))
                writer.writerow(row)
        if config is not None:
            with open(out / "config.json", "w") as fh:
                json.dump(config.to_dict(), fh, indent=2)
                fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write results under {out}: {exc}") from exc
    return out


def read_response(path) -> TaskResponse:
    with open(path) as fh:
        return TaskResponse.from_dict(json.load(fh))


# --- prompt pool serialization ---------------------------------------------------------


def save_pool(pool: PromptPool, proj: Projection, path) -> None:
    doc = {
        "version": POOL_FORMAT_VERSION,
        "size": pool.size,
        "prompt_len": pool.prompt_len,
        "dim": pool.dim,
        "keys": pool.keys.tolist(),
        "values": pool.values.tolist(),
        "weight": proj.weight.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_pool(path) -> tuple[PromptPool, Projection]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != POOL_FORMAT_VERSION:
        raise InvalidSpec(f"unsupported pool format {doc.get('version')!r}")
    pool = PromptPool(keys=np.array(doc["keys"]), values=np.array(doc["values"]))
    return pool, Projection(weight=np.array(doc["weight"]))


# --- synthetic data ------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Seeded generator spec; params hold generator-specific knobs."""

    generator: str
    n_series: int = 4
    n_steps: int = 2000
    noise: float = 0.05
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.generator not in ("seasonal_sines", "regime_switch", "ar1_spikes"):
            raise InvalidSpec(f"unknown generator {self.generator!r}")
        if self.n_series < 1 or self.n_steps < 1:
            raise InvalidSpec("n_series and n_steps must be >= 1")
        if self.noise < 0:
            raise InvalidSpec("noise must be >= 0")


def _seasonal_sines(spec: SyntheticSpec, rng: np.random.Generator):
    p = spec.params
    periods = p.get("periods", (24.0, 15.5))
    amplitudes = p.get("amplitudes", (1.0, 0.6))
    spread = p.get("period_spread", 0.35)
    t = np.arange(spec.n_steps)
    values = np.zeros((spec.n_series, spec.n_steps))
    for i in range(spec.n_series):
        for c, (period, amp) in enumerate(zip(periods, amplitudes)):
            per_i = period * (1.0 + spread * i)
            phase = 2.0 * np.pi * (i + c) / (spec.n_series + 1)
            values[i] += amp * np.sin(2.0 * np.pi * t / per_i + phase)
    values += spec.noise * rng.standard_normal(values.shape)
    return values, None


def _regime_switch(spec: SyntheticSpec, rng: np.random.Generator):
    p = spec.params
    segment_len = int(p.get("segment_len", 250))
    means = p.get("means", (0.0, 3.0))
    periods = p.get("periods", (12.0, 6.0))
    amplitude = p.get("amplitude", 1.0)
    if segment_len < 1:
        raise InvalidSpec("segment_len must be >= 1")
    t = np.arange(spec.n_steps)
    labels = (t // segment_len) % 2
    values = np.zeros((spec.n_series, spec.n_steps))
    for i in range(spec.n_series):
        phase = 2.0 * np.pi * i / spec.n_series
        for r in (0, 1):
            sel = labels == r
            values[i, sel] = means[r] + amplitude * np.sin(
                2.0 * np.pi * t[sel] / periods[r] + phase
            )
    values += spec.noise * rng.standard_normal(values.shape)
    return values, labels.astype(np.int64)


def _ar1_spikes(spec: SyntheticSpec, rng: np.random.Generator):
    p = spec.params
    rho = float(p.get("rho", 0.7))
    magnitude = float(p.get("spike_magnitude", 8.0))
    n_spikes = int(p.get("n_spikes", 10))
    spike_len = int(p.get("spike_len", 6))
    clean_frac = float(p.get("clean_frac", 0.8))
    if not 0.0 < clean_frac < 1.0:
        raise InvalidSpec("clean_frac must be in (0, 1)")
    t_start = int(np.ceil(clean_frac * spec.n_steps))
    width = (spec.n_steps - t_start) // max(n_spikes, 1)
    if n_spikes > 0 and width < spike_len + 3:
        raise InvalidSpec(
            f"{n_spikes} spikes of length {spike_len} do not fit after t={t_start}"
        )
    innovations = spec.noise * rng.standard_normal((spec.n_series, spec.n_steps))
    values = np.zeros((spec.n_series, spec.n_steps))
    for t in range(1, spec.n_steps):
        values[:, t] = rho * values[:, t - 1] + innovations[:, t]
    labels = np.zeros(spec.n_steps, dtype=np.int64)
    for k in range(n_spikes):
        base = t_start + k * width
        jitter = int(rng.integers(1, width - spike_len - 1))
        sign = float(rng.choice((-1.0, 1.0)))
        lo = base + jitter
        values[:, lo : lo + spike_len] += sign * magnitude
        labels[lo : lo + spike_len] = 1
    return values, labels


def gen_synthetic(spec: SyntheticSpec) -> tuple[SeriesMatrix, np.ndarray | None]:
    """Generate a seeded synthetic matrix plus ground-truth labels when defined."""
    rng = np.random.default_rng(spec.seed)
    maker = {
        "seasonal_sines": _seasonal_sines,
        "regime_switch": _regime_switch,
        "ar1_spikes": _ar1_spikes,
    }[spec.generator]
    values, labels = maker(spec, rng)
    ids = tuple(f"s{i:02d}" for i in range(spec.n_series))
    return SeriesMatrix(values=values, series_ids=ids), labels


# --- experiment configuration -----------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """One reproducible experiment; (config, seed) fixes every byte of output."""

    task: str
    data_path: str
    out_dir: str
    seed: int
    tau: int = 12
    nu: int = 12
    pool_size: int = 16
    top_k: int = 4
    prompt_len: int = 4
    embed_dim: int = 32
    lr: float = 0.05
    epochs: int = 60
    lambda_key: float = 0.1
    beta: float = 0.2
    dpo_epochs: int = 3
    w_a: int = 3
    split_ratio: tuple[int, int, int] = (6, 2, 2)
    stride: int = 1
    labels_path: str | None = None
    mask_path: str | None = None
    missing: dict | None = None
    n_clusters: int | None = None
    cluster_raw: bool = False
    no_pool: bool = False
    universal_agent: bool = False
    no_train: bool = False
    no_dpo: bool = False
    shared_pool: bool = False
    model_url: str | None = None

    def __post_init__(self):
        if self.task not in ("forecast", "impute", "anomaly", "classify"):
            raise InvalidSpec(f"unknown task {self.task!r}")
        object.__setattr__(self, "split_ratio", tuple(int(r) for r in self.split_ratio))
        if len(self.split_ratio) != 3 or min(self.split_ratio) <= 0:
            raise InvalidSpec(f"bad split ratio {self.split_ratio}")
        if self.tau < 1 or self.nu < 1 or self.stride < 1 or self.w_a < 1:
            raise InvalidSpec("tau, nu, stride, w_a must be >= 1")
        if min(self.pool_size, self.top_k, self.prompt_len, self.embed_dim) < 1:
            raise InvalidSpec("pool dimensions must be >= 1")
        if self.top_k > self.pool_size:
            raise InvalidSpec("top_k cannot exceed pool_size")
        if self.lr < 0 or self.epochs < 1 or self.lambda_key < 0 or self.beta < 0:
            raise InvalidSpec("training hyperparameters out of range")
        if self.dpo_epochs < 0:
            raise InvalidSpec("dpo_epochs must be >= 0")
        if self.missing is not None:
            required = {"pattern", "rate"}
            if not required <= set(self.missing):
                raise InvalidSpec("missing spec needs at least pattern and rate")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise InvalidSpec(f"unknown config fields: {sorted(extra)}")
        if "seed" not in doc:
            raise InvalidSpec("seed is mandatory")
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **kwargs) if kwargs else self

    def check_files(self) -> None:
        for label, p in (("data", self.data_path), ("labels", self.labels_path),
                         ("mask", self.mask_path)):
            if p is not None and not Path(p).is_file():
                raise InvalidSpec(f"{label} file does not exist: {p}")


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        cfg = ExperimentConfig.from_json(fh.read())
    cfg.check_files()
    return cfg
