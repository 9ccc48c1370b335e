"""Segmentation metrics, two-model ensemble prediction and run aggregation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .errors import InputError

RESULT_COLUMNS = ["run_seed", "target_domain", "labeled_domain", "class", "dsc", "iou"]


@dataclass
class MetricResult:
    per_class_dsc: np.ndarray
    per_class_iou: np.ndarray
    domain_id: str = ""
    num_samples: int = 1

    def __post_init__(self):
        self.per_class_dsc = np.asarray(self.per_class_dsc, dtype=np.float64)
        self.per_class_iou = np.asarray(self.per_class_iou, dtype=np.float64)

    @property
    def mean_dsc(self) -> float:
        return float(self.per_class_dsc.mean())

    @property
    def mean_iou(self) -> float:
        return float(self.per_class_iou.mean())


@dataclass
class RunAggregate:
    mean: MetricResult
    std: MetricResult
    num_runs: int
    runs: list = field(default_factory=list)


def _as_bool(a) -> np.ndarray:
    if isinstance(a, torch.Tensor):
        a = a.detach().cpu().numpy()
    a = np.asarray(a)
    return (a if a.ndim == 3 else a[None]) > 0.5


def _counts(pred, gt):
    p, g = _as_bool(pred), _as_bool(gt)
    if p.shape != g.shape:
        raise InputError(f"prediction {p.shape} and ground truth {g.shape} differ in shape")
    inter = (p & g).sum(axis=(-2, -1)).astype(np.float64)
    return inter, p.sum(axis=(-2, -1)).astype(np.float64), g.sum(axis=(-2, -1)).astype(np.float64)


def dsc(pred, gt) -> np.ndarray:
    """Per-class dice in percent; 100 when both masks are empty."""
    inter, sp, sg = _counts(pred, gt)
    denom = sp + sg
    return np.where(denom > 0, 200.0 * inter / np.maximum(denom, 1), 100.0)


def iou(pred, gt) -> np.ndarray:
    """Per-class intersection over union in percent; 100 when both masks are empty."""
    inter, sp, sg = _counts(pred, gt)
    union = sp + sg - inter
    return np.where(union > 0, 100.0 * inter / np.maximum(union, 1), 100.0)


def _to_batch(x):
    x = torch.as_tensor(np.asarray(x) if not isinstance(x, torch.Tensor) else x)
    return x if x.dim() == 4 else x.unsqueeze(0)


@torch.no_grad()
def ensemble_predict(m1, m2, x, sigma: float = 0.5):
    """Threshold at ``sigma`` the mean of the two sub-models' probability maps."""
    xb = _to_batch(x).to(next(m1.parameters()).dtype)
    was = m1.training, m2.training
    m1.eval()
    m2.eval()
    try:
        p1 = m1.forward_segmentation(xb)
        p2 = m2.forward_segmentation(xb)
    finally:
        m1.train(was[0])
        m2.train(was[1])
    if p1.shape != p2.shape:
        raise InputError(f"sub-model outputs differ in shape: {tuple(p1.shape)} vs {tuple(p2.shape)}")
    pred = (0.5 * (p1 + p2) > sigma).to(torch.uint8)
    return pred if _is_batched(x) else pred[0]


def _is_batched(x):
    return (x.dim() if isinstance(x, torch.Tensor) else np.ndim(x)) == 4


def evaluate_domain(m1, m2, samples: Sequence, domain_id: str = "", sigma: float = 0.5,
                    batch_size: int = 16) -> MetricResult:
    """Average per-image DSC/IoU over ``samples`` (pairs of image, mask)."""
    samples = list(samples)
    if not samples:
        raise InputError(f"no samples to evaluate for domain {domain_id!r}")
    d, j = [], []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        x = torch.as_tensor(np.stack([np.asarray(s[0]) for s in chunk]))
        preds = ensemble_predict(m1, m2, x, sigma).numpy()
        for pred, (_, gt) in zip(preds, chunk):
            d.append(dsc(pred, gt))
            j.append(iou(pred, gt))
    return MetricResult(np.mean(d, axis=0), np.mean(j, axis=0), domain_id, len(samples))


def aggregate_runs(results: Sequence[MetricResult]) -> RunAggregate:
    """Elementwise mean and sample standard deviation (n - 1); std is 0 for one run."""
    results = list(results)
    if not results:
        raise InputError("aggregate_runs needs at least one result")
    shapes = {(r.per_class_dsc.shape, r.per_class_iou.shape) for r in results}
    if len(shapes) != 1:
        raise InputError(f"results have mismatched shapes: {shapes}")
    D = np.stack([r.per_class_dsc for r in results])
    J = np.stack([r.per_class_iou for r in results])
    n = len(results)
    sd = (lambda a: a.std(axis=0, ddof=1)) if n > 1 else (lambda a: np.zeros(a.shape[1:]))
    dom = results[0].domain_id
    samples = results[0].num_samples
    return RunAggregate(MetricResult(D.mean(axis=0), J.mean(axis=0), dom, samples),
                        MetricResult(sd(D), sd(J), dom, samples), n, results)


# -- emitters -----------------------------------------------------------------

def write_results_csv(path, rows: Sequence[dict], header_lines: Sequence[str] = ()) -> None:
    """Write per-class metric rows with ``RESULT_COLUMNS``; header lines are written as ``# ...``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        for h in header_lines:
            fh.write(f"# {h}\n")
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in RESULT_COLUMNS})


def result_rows(result: MetricResult, run_seed, target_domain, labeled_domain, class_names=None):
    names = class_names or [f"class{k + 1}" for k in range(len(result.per_class_dsc))]
    return [dict(run_seed=run_seed, target_domain=target_domain, labeled_domain=labeled_domain,
                 **{"class": n}, dsc=f"{d:.4f}", iou=f"{j:.4f}")
            for n, d, j in zip(names, result.per_class_dsc, result.per_class_iou)]


def read_results_csv(path) -> list[dict]:
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def summarize(rows: Sequence[dict]) -> list[dict]:
    """Group result rows by (target, labeled, class) and aggregate across run seeds."""
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault((r["target_domain"], r["labeled_domain"], r["class"]), []).append(r)
    out = []
    for (td, ld, cls), rs in sorted(groups.items()):
        agg = aggregate_runs([MetricResult([float(r["dsc"])], [float(r["iou"])], td) for r in rs])
        out.append(dict(target_domain=td, labeled_domain=ld, **{"class": cls}, runs=agg.num_runs,
                        dsc_mean=agg.mean.per_class_dsc[0], dsc_std=agg.std.per_class_dsc[0],
                        iou_mean=agg.mean.per_class_iou[0], iou_std=agg.std.per_class_iou[0]))
    return out


def format_summary_table(summary: Sequence[dict]) -> str:
    """Plain-text table: one row per class, one column per (target, labeled) pair, "mean±std"."""
    cols = sorted({(s["target_domain"], s["labeled_domain"]) for s in summary})
    classes = sorted({s["class"] for s in summary})
    cell = {(s["class"], s["target_domain"], s["labeled_domain"]): s for s in summary}
    head = ["class"] + [f"TD:{t}/LSD:{l}" for t, l in cols] + ["average"]
    lines = ["\t".join(head)]
    for c in classes:
        vals = [cell.get((c, t, l)) for t, l in cols]
        cells = [f"{v['dsc_mean']:.2f}±{v['dsc_std']:.2f}" if v else "-" for v in vals]
        present = [v["dsc_mean"] for v in vals if v]
        lines.append("\t".join([c] + cells + [f"{np.mean(present):.2f}"]))
    return "\n".join(lines) + "\n"


def plot_domain_bars(summary: Sequence[dict], out_dir, provenance: str | None = None) -> list[Path]:
    """One bar chart of per-class DSC (mean ± std) per target domain.

    ``provenance`` is stored in the PNG ``Description`` text chunk.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for td in sorted({s["target_domain"] for s in summary}):
        rows = [s for s in summary if s["target_domain"] == td]
        labels = [f"{s['class']}\nLSD:{s['labeled_domain']}" for s in rows]
        fig, ax = plt.subplots(figsize=(max(3, 1.2 * len(rows)), 3))
        ax.bar(range(len(rows)), [s["dsc_mean"] for s in rows], yerr=[s["dsc_std"] for s in rows],
               capsize=3, color="tab:blue")
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(labels, fontsize=8)
        ax.set_ylim(0, 100)
        ax.set_ylabel("DSC (%)")
        ax.set_title(f"target domain {td}")
        fig.tight_layout()
        p = out_dir / f"dsc_{td}.png"
        fig.savefig(p, metadata={"Description": provenance} if provenance else None)
        plt.close(fig)
        paths.append(p)
    return paths
