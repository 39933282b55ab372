"""Adam, the training loop, evaluation and the sweep/ablation drivers."""
from __future__ import annotations

import functools
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics as M
from .config import RunConfig
from .errors import NumericalError, UsageError
from .io import heatmap_to_u8, load_checkpoint, mask_to_u8, save_checkpoint, save_tensor, write_pgm, write_report
from .locseg import minmax, threshold_mask
from .model import Model
from .synthdata import Dataset, build_split
from .tensor import backward

log = logging.getLogger(__name__)

CHECKPOINT_STEM = "checkpoint"


@dataclass
class TrainState:
    params: dict[str, np.ndarray]
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    loss_history: list[float] = field(default_factory=list)

    @classmethod
    def fresh(cls, params: dict[str, np.ndarray]) -> "TrainState":
        return cls(params, {k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(state: TrainState, grads: dict[str, np.ndarray], lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> TrainState:
    """Bias-corrected Adam update, applied in place to ``state.params``."""
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {k} at step {state.step}")
    state.step += 1
    t = state.step
    for k, g in grads.items():
        state.m[k] = beta1 * state.m[k] + (1 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1 - beta2) * g * g
        m_hat = state.m[k] / (1 - beta1 ** t)
        v_hat = state.v[k] / (1 - beta2 ** t)
        state.params[k] -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


@functools.lru_cache(maxsize=8)
def _cached_split(split: str, n: int, n_categories: int, size: int, data_seed: int,
                  normalize: bool) -> Dataset:
    hw = (size, size)
    return build_split(split, n, n_categories, hw, data_seed, normalize)


def load_split(cfg: RunConfig, split: str) -> Dataset:
    n = {"train": cfg.n_train, "val": cfg.n_val, "test": cfg.n_test, "duet": cfg.n_duet}[split]
    return _cached_split(split, n, cfg.n_categories, cfg.image_size, cfg.data_seed,
                         cfg.normalize_spectrogram)


@dataclass
class TrainResult:
    model: Model
    loss_curve: list[float]
    contrastive_curve: list[float]
    first_batch_loss: float
    checkpoint: Path | None
    seconds: float


def _run_epochs(cfg: RunConfig, model: Model, state: TrainState, data: Dataset,
                rng: np.random.Generator, n_batches: int, curve: list[float],
                contrast_curve: list[float]) -> float | None:
    """Appends per-epoch means to both curves; returns the first batch's contrastive loss."""
    first = None
    n = len(data)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses, contrast = [], []
        for b in range(n_batches):
            idx = np.sort(order[b * cfg.batch_size:(b + 1) * cfg.batch_size])
            model.zero_grad()
            keep = None
            if cfg.mmt_enabled and cfg.mmt_audio_dropout > 0:
                keep = (rng.random(len(idx)) >= cfg.mmt_audio_dropout).astype(np.float64)
            fwd = model.forward(data.images[idx], data.specs[idx], keep)
            total, parts = model.loss(fwd, data.labels[idx])
            if not np.isfinite(total.item()):
                raise NumericalError(f"non-finite loss at epoch {epoch} batch {b}")
            backward(total)
            adam_step(state, {k: v.grad for k, v in model.params.items()}, cfg.learning_rate,
                      cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
            losses.append(parts["total"])
            contrast.append(parts["contrastive"])
            if first is None:
                first = parts["contrastive"]
        curve.append(float(np.mean(losses)))
        contrast_curve.append(float(np.mean(contrast)))
        log.info("epoch %d loss %.4f", epoch + 1, curve[-1])
    return first


def train(cfg: RunConfig, write: bool = True) -> TrainResult:
    t0 = time.perf_counter()
    data = load_split(cfg, "train")
    model = Model(cfg, n_bins=data.specs.shape[1])
    state = TrainState.fresh({k: v.data for k, v in model.params.items()})
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7]))
    n_batches = len(data) // cfg.batch_size
    if n_batches == 0:
        raise UsageError(f"train split of {len(data)} smaller than batch size {cfg.batch_size}")
    curve: list[float] = []
    contrast_curve: list[float] = []
    try:
        first = _run_epochs(cfg, model, state, data, rng, n_batches, curve, contrast_curve)
    except NumericalError:
        if write:
            out = Path(cfg.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            save_checkpoint(out / "failed_state", model.arrays())
            log.error("numerical failure; parameters dumped to %s", out / "failed_state.m2ts")
        raise
    # The stored float32 weights are the model; round now so save/load is lossless.
    for p in model.params.values():
        p.data = p.data.astype(np.float32).astype(np.float64)
        p.zero_grad()
    state.loss_history = curve
    ckpt = None
    if write:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt = out / CHECKPOINT_STEM
        save_checkpoint(ckpt, model.arrays())
        cfg.save(out / "config.txt")
        rows = "".join(f"{i + 1} {t:.10g} {c:.10g}\n"
                       for i, (t, c) in enumerate(zip(curve, contrast_curve)))
        (out / "loss_curve.txt").write_text("# epoch total contrastive\n" + rows)
    return TrainResult(model, curve, contrast_curve, float(first), ckpt, time.perf_counter() - t0)


def load_model(checkpoint, cfg: RunConfig | None = None) -> Model:
    stem = Path(checkpoint)
    if stem.suffix in (".m2ts", ".manifest"):
        stem = stem.with_suffix("")
    if cfg is None:
        cfg = RunConfig.load(stem.parent / "config.txt")
    arrays = load_checkpoint(stem)
    expected = set(Model(cfg).params)
    if set(arrays) != expected:
        raise UsageError(f"checkpoint tensors {sorted(set(arrays) ^ expected)} do not match config")
    model = Model.from_arrays(cfg, arrays)
    for k, v in Model(cfg).params.items():
        if model.params[k].shape != v.shape:
            raise UsageError(f"{k}: checkpoint shape {model.params[k].shape} vs config {v.shape}")
    return model


def _batches(n: int, size: int = 8):
    for start in range(0, n, size):
        yield np.arange(start, min(n, start + size))


def predict(model: Model, data: Dataset) -> dict[str, np.ndarray]:
    """Heatmaps (and class-aware maps / logits when available) for every sample."""
    hw = data.images.shape[1:3]
    heat, cat_maps, logits = [], [], []
    for idx in _batches(len(data)):
        fwd = model.forward(data.images[idx], data.specs[idx])
        heat.append(model.heatmaps(fwd, hw))
        if fwd.mmt is not None:
            cat_maps.append(model.category_heatmaps(fwd, hw))
            logits.append(fwd.logits.data)
    out = {"heatmaps": np.concatenate(heat)}
    if cat_maps:
        out["category_maps"] = np.concatenate(cat_maps)
        out["logits"] = np.concatenate(logits)
    return out


def _union_gt(sources) -> np.ndarray:
    return np.any([m > 0 for _, m in sources], axis=0).astype(np.uint8)


def predicted_categories(logits: np.ndarray) -> list[np.ndarray]:
    """Categories with positive logit; the top-scoring one if none is positive."""
    return [np.flatnonzero(row > 0) if np.any(row > 0) else np.array([int(np.argmax(row))])
            for row in logits]


def resolved_mask_source(cfg: RunConfig) -> str:
    if cfg.mask_source != "auto":
        return cfg.mask_source
    return "fused" if cfg.mmt_enabled else "similarity"


def localization_maps(cfg: RunConfig, pred: dict[str, np.ndarray]) -> np.ndarray:
    """Continuous maps ``(N, H, W)`` that get thresholded into masks.

    ``fused`` multiplies the normalised similarity heatmap by the strongest
    class-aware map among the predicted categories: the first is sharp but
    follows one dominant source in a mixture, the second covers every
    detected source but is coarse.
    """
    source = resolved_mask_source(cfg)
    if source == "similarity":
        return pred["heatmaps"]
    if "category_maps" not in pred:
        raise UsageError(f"mask_source={source} needs mmt_enabled")
    cls = np.stack([minmax(cmaps[cats]).max(axis=0) for cmaps, cats
                    in zip(pred["category_maps"], predicted_categories(pred["logits"]))])
    if source == "class_aware":
        return cls
    return minmax(pred["heatmaps"]) * cls


def predicted_masks(cfg: RunConfig, pred: dict[str, np.ndarray]) -> list[np.ndarray]:
    return [threshold_mask(m, cfg.threshold_method) for m in localization_maps(cfg, pred)]


def evaluate_model(model: Model, split: str = "test") -> M.MetricsReport:
    cfg = model.cfg
    data = load_split(cfg, split)
    pred = predict(model, data)
    maps = localization_maps(cfg, pred)
    masks = [threshold_mask(m, cfg.threshold_method) for m in maps]
    gts = [_union_gt(s) for s in data.sources]
    ious = [M.iou(p, g) for p, g in zip(masks, gts)]
    report = M.MetricsReport(config={"split": split, **cfg.to_dict()})
    report.miou = M.miou(masks, gts)
    report.f_score = float(np.mean([M.f_score(p, g, cfg.f_beta2) for p, g in zip(masks, gts)]))
    if split != "duet":
        report.ap = float(np.mean([M.ap_pixelwise(h, g) for h, g in zip(maps, gts)]))
        report.iou = M.success_rate(ious, cfg.iou_tau)
        report.auc = M.auc(ious)
        return report
    if "category_maps" not in pred:
        report.auc = M.auc(ious)
        return report
    records = []
    for i, sources in enumerate(data.sources):
        cmaps = pred["category_maps"][i]
        k = len(sources)
        top = np.argsort(-pred["logits"][i], kind="stable")[:k]
        records.append(M.EvalRecord(sources=sources,
                                    category_maps={c: cmaps[c] for c in range(cmaps.shape[0])},
                                    source_maps=[cmaps[c] for c in top]))
    class_ious = M.class_ious(records, cfg.threshold_method)
    report.cap = M.cap(records)
    report.piap = M.piap(records)
    report.ciou = M.success_rate(class_ious, cfg.ciou_tau)
    report.auc = M.auc(class_ious)
    return report


def evaluate(checkpoint, split: str = "test", cfg: RunConfig | None = None) -> M.MetricsReport:
    return evaluate_model(load_model(checkpoint, cfg), split)


def report_dict(report: M.MetricsReport) -> dict:
    """Flat JSON form: the eight metric keys plus ``config.<key>`` entries."""
    out = dict(report.values())
    for k, v in report.config.items():
        out[f"config.{k}"] = list(v) if isinstance(v, tuple) else v
    return out


def localize(model: Model, split: str, ids, out_dir) -> list[Path]:
    """Write heatmap/mask PGMs and raw M2TS maps for selected samples."""
    data = load_split(model.cfg, split)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ids = list(ids)
    if any(not 0 <= i < len(data) for i in ids):
        raise UsageError(f"sample ids must lie in 0..{len(data) - 1}")
    sub = Dataset(data.images[ids], data.specs[ids], data.labels[ids],
                  [data.sources[i] for i in ids], [data.seeds[i] for i in ids])
    pred = predict(model, sub)
    paths = {"": pred["heatmaps"]}
    if "category_maps" in pred:
        # attention-derived maps next to the similarity path
        paths["_fused"] = localization_maps(model.cfg.replace(mask_source="fused"), pred)
    method = model.cfg.threshold_method
    written = []

    def emit(stem: str, m: np.ndarray, raw: bool = False) -> None:
        write_pgm(f"{stem}_heatmap.pgm", heatmap_to_u8(m))
        write_pgm(f"{stem}_mask.pgm", mask_to_u8(threshold_mask(m, method)))
        written.extend([Path(f"{stem}_heatmap.pgm"), Path(f"{stem}_mask.pgm")])
        if raw:
            save_tensor(f"{stem}_heatmap.m2ts", m)
            written.append(Path(f"{stem}_heatmap.m2ts"))

    for j, i in enumerate(ids):
        stem = out / f"{split}_{i:05d}"
        for suffix, maps in paths.items():
            emit(f"{stem}{suffix}", maps[j], raw=True)
        if "category_maps" in pred:
            for c, cm in enumerate(pred["category_maps"][j]):
                emit(f"{stem}_cat{c}", cm)
    return written


def train_and_evaluate(cfg: RunConfig, splits=("test",)) -> tuple[TrainResult, dict[str, M.MetricsReport]]:
    res = train(cfg)
    reports = {}
    for split in splits:
        reports[split] = evaluate(res.checkpoint, split, cfg)
        write_report(Path(cfg.out_dir) / f"report_{split}.json", report_dict(reports[split]))
    return res, reports


def sweep_batch(cfg: RunConfig, sizes, split: str = "test") -> list[dict]:
    sizes = list(sizes)
    if not sizes:
        raise UsageError("sweep needs at least one batch size")
    rows = []
    root = Path(cfg.out_dir)
    for b in sizes:
        run = cfg.replace(batch_size=int(b), out_dir=str(root / f"batch_{b}"))
        res, reports = train_and_evaluate(run, (split,))
        rows.append({"batch_size": int(b), "final_loss": res.loss_curve[-1],
                     **reports[split].values()})
    root.mkdir(parents=True, exist_ok=True)
    _write_table(root / "sweep_batch.tsv", rows)
    (root / "sweep_batch.json").write_text(json.dumps(rows, indent=2) + "\n")
    return rows


ABLATION_ARMS = (
    ("baseline", False, False),
    ("mmc", True, False),
    ("mmt", False, True),
    ("mmc+mmt", True, True),
)


def ablate(cfg: RunConfig, split: str = "duet") -> list[dict]:
    rows = []
    root = Path(cfg.out_dir)
    for name, mmc, mmt in ABLATION_ARMS:
        run = cfg.replace(mmc_enabled=mmc, mmt_enabled=mmt, out_dir=str(root / name))
        _, reports = train_and_evaluate(run, (split,))
        r = reports[split]
        rows.append({"arm": name, "mmc": mmc, "mmt": mmt, "miou": r.miou, "f_score": r.f_score})
    root.mkdir(parents=True, exist_ok=True)
    _write_table(root / "ablation.tsv", rows)
    (root / "ablation.json").write_text(json.dumps(rows, indent=2) + "\n")
    return rows


def ablate_seeds(cfg: RunConfig, seeds, split: str = "duet") -> list[dict]:
    """Run :func:`ablate` once per seed and average each arm's metrics."""
    seeds = [int(x) for x in seeds]
    if not seeds:
        raise UsageError("need at least one seed")
    root = Path(cfg.out_dir)
    per_seed = [ablate(cfg.replace(seed=s, out_dir=str(root / f"seed_{s}")), split) for s in seeds]
    rows = []
    for j, (name, mmc, mmt) in enumerate(ABLATION_ARMS):
        rows.append({"arm": name, "mmc": mmc, "mmt": mmt,
                     "miou": float(np.mean([t[j]["miou"] for t in per_seed])),
                     "f_score": float(np.mean([t[j]["f_score"] for t in per_seed])),
                     "seeds": ",".join(str(s) for s in seeds)})
    _write_table(root / "ablation_mean.tsv", rows)
    (root / "ablation_mean.json").write_text(json.dumps(rows, indent=2) + "\n")
    return rows


def _write_table(path: Path, rows: list[dict]) -> None:
    keys = list(rows[0])
    lines = ["\t".join(keys)]
    for r in rows:
        lines.append("\t".join("" if r[k] is None else (f"{r[k]:.6f}" if isinstance(r[k], float) else str(r[k]))
                               for k in keys))
    path.write_text("\n".join(lines) + "\n")
