"""Segmentation metrics, published reference numbers, FPS benchmarking."""

from __future__ import annotations

import platform
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import IGNORE_LABEL


@dataclass
class ConfusionMatrix:
    """2x2 counts, rows = ground truth, cols = prediction."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros((2, 2), dtype=np.int64))
    ignored: int = 0

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts, self.ignored + other.ignored)

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.ignored


def confusion(pred: np.ndarray, gt: np.ndarray, n_classes: int = 2) -> ConfusionMatrix:
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    valid = gt != IGNORE_LABEL
    idx = gt[valid].astype(np.int64) * n_classes + pred[valid].astype(np.int64)
    counts = np.bincount(idx, minlength=n_classes * n_classes).reshape(n_classes, n_classes)
    return ConfusionMatrix(counts=counts, ignored=int((~valid).sum()))


def mean_iou(cm: ConfusionMatrix) -> tuple[float, list[float]]:
    """Average per-class IoU; a class absent from both prediction and
    ground truth counts as IoU 1 (empty intersection equals empty union)."""
    if cm.counts.sum() == 0:
        raise ValueError("confusion matrix has no evaluated cells")
    ious = []
    n = cm.counts.shape[0]
    for c in range(n):
        tp = cm.counts[c, c]
        union = cm.counts[c, :].sum() + cm.counts[:, c].sum() - tp
        ious.append(1.0 if union == 0 else float(tp) / float(union))
    return float(np.mean(ious)), ious


ARCHS = ("fcn_tiny", "fcn", "deeplabv3p")
MATRIX_ROWS = (
    ("rad", "polar"),
    ("rad", "cartesian"),
    ("ra", "polar"),
    ("ra", "cartesian"),
    ("doa", "cartesian"),
)

# published mean-IoU (in %) per (input modality, label domain) row and
# architecture column, for comparison only; not reproducible on synthetic data
_REFERENCE = {
    ("rad", "polar"): (83.61, 83.76, 82.88),
    ("rad", "cartesian"): (73.24, 78.05, 73.92),
    ("ra", "polar"): (81.99, 82.59, 81.14),
    ("ra", "cartesian"): (77.96, 78.24, 77.22),
    ("doa", "cartesian"): (79.00, 80.75, 78.05),
}


def reference_table() -> dict[tuple[str, str], dict[str, float]]:
    """Published mean-IoU registry: (modality, label_domain) -> arch -> %."""
    return {
        row: {arch: value for arch, value in zip(ARCHS, values)}
        for row, values in _REFERENCE.items()
    }


@dataclass
class BenchResult:
    fps: float
    fps_std: float
    median_latency_s: float
    hardware: str
    warmup: int
    iters: int


def benchmark_fps(model, input_shape: tuple[int, ...], warmup: int = 20,
                  iters: int = 200) -> BenchResult:
    """Median single-frame inference throughput on a deterministic input."""
    x = np.random.default_rng(0).standard_normal((1, *input_shape)).astype(np.float32)
    for _ in range(warmup):
        model.forward(x, train=False)
    times = np.empty(iters)
    for i in range(iters):
        t0 = time.perf_counter()
        model.forward(x, train=False)
        times[i] = time.perf_counter() - t0
    med = float(np.median(times))
    fps = np.where(times > 0, 1.0 / np.maximum(times, 1e-12), 0.0)
    hardware = f"{platform.machine()} {platform.processor() or 'cpu'} python-{platform.python_version()}"
    return BenchResult(
        fps=1.0 / med,
        fps_std=float(np.std(fps)),
        median_latency_s=med,
        hardware=hardware,
        warmup=warmup,
        iters=iters,
    )


def metrics_report(miou: float, ious: list[float], cm: ConfusionMatrix) -> str:
    lines = [
        f"mean_iou={miou:.6f}",
        f"iou.not_open={ious[0]:.6f}",
        f"iou.open={ious[1]:.6f}",
        f"confusion.tn={cm.counts[0, 0]}",
        f"confusion.fp={cm.counts[0, 1]}",
        f"confusion.fn={cm.counts[1, 0]}",
        f"confusion.tp={cm.counts[1, 1]}",
        f"ignored={cm.ignored}",
    ]
    return "\n".join(lines) + "\n"


def matrix_report_csv(results: dict[tuple[str, str], dict[str, float]]) -> str:
    """CSV: one row per modality/label pairing, measured vs reference."""
    ref = reference_table()
    header = ["input", "label"]
    for arch in ARCHS:
        header += [f"{arch}_miou", f"{arch}_ref"]
    lines = [",".join(header)]
    for row in MATRIX_ROWS:
        cells = [row[0], row[1]]
        for arch in ARCHS:
            got = results.get(row, {}).get(arch)
            cells.append("" if got is None else f"{100 * got:.2f}")
            cells.append(f"{ref[row][arch]:.2f}")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
