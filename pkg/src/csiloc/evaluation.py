"""Position-error metrics, whole-dataset evaluation, and report-data emission.

Three aggregate metrics over truth/estimate pairs:

  mde    mean Euclidean distance error, meters
  nmde   mean of distance error divided by the truth's norm (also as percent)
  rmse   root of the mean squared distance error, meters

As defined, rmse >= mde for any sample set (Jensen). Summaries additionally
carry rmse_per_coord_m = rmse / sqrt(3), the per-coordinate convention under
which values below the MDE are possible; summary.json documents this so the
two conventions cannot be confused.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, NormStats, apply_normalizer
from .models import count_weights

_EVAL_CHUNK = 256


def mde(errors):
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise ValueError("mde of an empty error list")
    return float(errors.mean())


def rmse(errors):
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise ValueError("rmse of an empty error list")
    return float(np.sqrt((errors * errors).mean()))


def nmde(truth, estimate):
    """Mean of ||p - p_hat|| / ||p||; positions too close to the origin are an error."""
    truth = np.asarray(truth, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if truth.shape != estimate.shape or truth.ndim != 2:
        raise ValueError(f"nmde needs matching (N, D) arrays, got {truth.shape} vs {estimate.shape}")
    norms = np.linalg.norm(truth, axis=1)
    bad = np.flatnonzero(norms < 1e-6)
    if bad.size:
        raise ValueError(f"nmde undefined for near-zero-norm truth positions at indices {bad.tolist()}")
    dist = np.linalg.norm(truth - estimate, axis=1)
    return float((dist / norms).mean())


@dataclass
class EvalReport:
    truth: np.ndarray
    estimate: np.ndarray
    distance_error: np.ndarray
    norm_truth: np.ndarray
    mde_m: float
    rmse_m: float
    rmse_per_coord_m: float
    nmde: float
    nmde_percent: float
    metadata: dict = field(default_factory=dict)

    @property
    def n_samples(self):
        return len(self.distance_error)


def _threads():
    cap = os.environ.get("CSILOC_THREADS", "")
    if cap.strip():
        return max(1, int(cap))
    return os.cpu_count() or 1


def evaluate(model, eval_set: Dataset, norm: NormStats, metadata=None) -> EvalReport:
    """Batched forward over the (normalizer-applied) evaluation set.

    Chunks are a fixed size and reduced in submission order, so results do
    not depend on how many workers CSILOC_THREADS allows.
    """
    if eval_set.n_subcarriers != model.input_shape[2] or eval_set.n_antennas != model.input_shape[1]:
        raise ValueError(
            f"model expects input {model.input_shape}, dataset provides "
            f"(2, {eval_set.n_antennas}, {eval_set.n_subcarriers})")
    ds = apply_normalizer(eval_set, norm)
    chunks = [ds.csi[s:s + _EVAL_CHUNK] for s in range(0, len(ds), _EVAL_CHUNK)]
    workers = min(_threads(), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(model.forward, chunks))
    else:
        outs = [model.forward(c) for c in chunks]
    estimate = np.vstack(outs)
    truth = ds.pos
    dist = np.linalg.norm(truth - estimate, axis=1)
    norm_truth = np.linalg.norm(truth, axis=1)
    mde_v = mde(dist)
    rmse_v = rmse(dist)
    nmde_v = nmde(truth, estimate)
    meta = dict(metadata or {})
    meta.setdefault("model", model.kind)
    meta.setdefault("split", "unspecified")
    meta.setdefault("dataset", "unspecified")
    meta["weights"] = count_weights(model)
    return EvalReport(truth=truth, estimate=estimate, distance_error=dist,
                      norm_truth=norm_truth, mde_m=mde_v, rmse_m=rmse_v,
                      rmse_per_coord_m=rmse_v / np.sqrt(3.0),
                      nmde=nmde_v, nmde_percent=100.0 * nmde_v, metadata=meta)


RMSE_NOTE = ("rmse_m is the root of the mean squared 3-D distance error and can never fall "
             "below mde_m; rmse_per_coord_m = rmse_m / sqrt(3) is the per-coordinate "
             "convention, which can. Compare published RMSE figures against whichever "
             "convention they actually used.")


def emit_reports(report: EvalReport, out_dir):
    """Write cdf.csv, err_hist.csv, quiver.csv and summary.json; returns their paths."""
    if report.n_samples == 0:
        raise ValueError("cannot emit reports for an empty evaluation")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = report.n_samples

    cdf_path = out / "cdf.csv"
    with open(cdf_path, "w", newline="\n") as f:
        f.write("distance_error_m,probability\n")
        for i, e in enumerate(np.sort(report.distance_error, kind="stable")):
            f.write(f"{float(e)!r},{(i + 1) / n!r}\n")

    hist_path = out / "err_hist.csv"
    with open(hist_path, "w", newline="\n") as f:
        f.write("axis,bin_low_m,bin_high_m,count\n")
        for axis, name in ((0, "x"), (1, "y")):
            signed = report.estimate[:, axis] - report.truth[:, axis]
            counts, edges = np.histogram(signed, bins=50)
            for b in range(50):
                f.write(f"{name},{float(edges[b])!r},{float(edges[b + 1])!r},{int(counts[b])}\n")

    quiver_path = out / "quiver.csv"
    with open(quiver_path, "w", newline="\n") as f:
        f.write("truth_x_m,truth_y_m,dx_m,dy_m\n")
        for i in range(n):
            dx = float(report.estimate[i, 0] - report.truth[i, 0])
            dy = float(report.estimate[i, 1] - report.truth[i, 1])
            f.write(f"{float(report.truth[i, 0])!r},{float(report.truth[i, 1])!r},{dx!r},{dy!r}\n")

    summary_path = out / "summary.json"
    summary = {
        "mde_m": report.mde_m,
        "rmse_m": report.rmse_m,
        "rmse_per_coord_m": report.rmse_per_coord_m,
        "nmde": report.nmde,
        "nmde_percent": report.nmde_percent,
        "n_samples": n,
        "weights": report.metadata.get("weights"),
        "split": report.metadata.get("split"),
        "model": report.metadata.get("model"),
        "rmse_definition_note": RMSE_NOTE,
    }
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return {"cdf": cdf_path, "err_hist": hist_path, "quiver": quiver_path, "summary": summary_path}
