"""Dataset container, canonical on-disk format, NPY import, synthetic CSI
generation, normalization and the four train/evaluation split geometries.

A dataset is a batch of labeled fingerprints: CSI as (N, 2, A, W) float64
(Re/Im channels first, A antennas, W subcarriers), per-antenna SNR in dB,
and 3-D transmitter positions in meters in the dataset's native frame.
"""

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DataFormatError, DegenerateGeometryError
from .npyio import read_npy, write_npy

SPEED_OF_LIGHT = 299_792_458.0

# guard band proportion of the source measurement: 50 of 1024 bins per side
GUARD_FRACTION = 50.0 / 1024.0


class CsiSample(NamedTuple):
    csi: np.ndarray   # (2, A, W)
    snr: np.ndarray   # (A,) dB
    position: np.ndarray  # (x, y, z) meters


@dataclass
class Dataset:
    csi: np.ndarray
    snr: np.ndarray
    pos: np.ndarray
    fc_hz: float = 1.25e9
    bandwidth_hz: float = 20e6
    frame: str = "native"

    def __post_init__(self):
        self.csi = np.asarray(self.csi, dtype=np.float64)
        self.snr = np.asarray(self.snr, dtype=np.float64)
        self.pos = np.asarray(self.pos, dtype=np.float64)
        if self.csi.ndim != 4 or self.csi.shape[1] != 2:
            raise DataFormatError(f"csi must be (N, 2, antennas, subcarriers), got {self.csi.shape}")
        n = self.csi.shape[0]
        if n < 1:
            raise DataFormatError("dataset must be nonempty")
        if self.snr.shape != (n, self.csi.shape[2]):
            raise DataFormatError(f"snr shape {self.snr.shape} inconsistent with csi {self.csi.shape}")
        if self.pos.shape != (n, 3):
            raise DataFormatError(f"pos shape {self.pos.shape} inconsistent with {n} samples")
        for name, arr in (("csi", self.csi), ("snr", self.snr), ("pos", self.pos)):
            if not np.isfinite(arr).all():
                raise DataFormatError(f"non-finite values in {name}")

    def __len__(self):
        return self.csi.shape[0]

    @property
    def n_antennas(self):
        return self.csi.shape[2]

    @property
    def n_subcarriers(self):
        return self.csi.shape[3]

    def sample(self, i) -> CsiSample:
        return CsiSample(self.csi[i], self.snr[i], self.pos[i])

    def subset(self, indices):
        idx = np.asarray(indices, dtype=np.intp)
        return replace(self, csi=self.csi[idx].copy(), snr=self.snr[idx].copy(),
                       pos=self.pos[idx].copy())


# --- canonical container -----------------------------------------------------
#
# meta.json plus three raw little-endian float32 blobs:
#   csi.f32  n * antennas * subcarriers * 2, index order (sample, antenna,
#            subcarrier, re/im)
#   snr.f32  n * antennas
#   pos.f32  n * 3

def write_canonical(directory, ds: Dataset):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": 1,
        "n": len(ds),
        "antennas": ds.n_antennas,
        "subcarriers": ds.n_subcarriers,
        "fc_hz": ds.fc_hz,
        "bandwidth_hz": ds.bandwidth_hz,
        "frame": ds.frame,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    disk = np.ascontiguousarray(ds.csi.transpose(0, 2, 3, 1), dtype="<f4")
    (directory / "csi.f32").write_bytes(disk.tobytes())
    (directory / "snr.f32").write_bytes(ds.snr.astype("<f4").tobytes())
    (directory / "pos.f32").write_bytes(ds.pos.astype("<f4").tobytes())


def load_canonical(directory) -> Dataset:
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.is_file():
        raise DataFormatError(f"{directory}: missing meta.json")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{meta_path}: malformed JSON: {e}") from e
    for key in ("format_version", "n", "antennas", "subcarriers", "fc_hz", "bandwidth_hz", "frame"):
        if key not in meta:
            raise DataFormatError(f"{meta_path}: missing field {key!r}")
    if meta["format_version"] != 1:
        raise DataFormatError(f"{meta_path}: unsupported format_version {meta['format_version']}")
    n, a, w = int(meta["n"]), int(meta["antennas"]), int(meta["subcarriers"])

    def read_exact(name, count):
        path = directory / name
        if not path.is_file():
            raise DataFormatError(f"{directory}: missing {name}")
        blob = path.read_bytes()
        if len(blob) != count * 4:
            raise DataFormatError(
                f"{path}: size mismatch: meta.json implies {count * 4} bytes, file holds {len(blob)}")
        return np.frombuffer(blob, dtype="<f4")

    csi = read_exact("csi.f32", n * a * w * 2).reshape(n, a, w, 2).transpose(0, 3, 1, 2)
    snr = read_exact("snr.f32", n * a).reshape(n, a)
    pos = read_exact("pos.f32", n * 3).reshape(n, 3)
    return Dataset(csi.astype(np.float64), snr, pos,
                   fc_hz=float(meta["fc_hz"]), bandwidth_hz=float(meta["bandwidth_hz"]),
                   frame=str(meta["frame"]))


# --- NPY import --------------------------------------------------------------

def import_npy(csi_path, snr_path, pos_path, fc_hz=1.25e9, bandwidth_hz=20e6) -> Dataset:
    """Ingest challenge-style NPY dumps: csi complex64 (N,A,S) or float (N,A,S,2),
    snr (N,A), pos (N,3)."""
    csi = read_npy(csi_path)
    snr = read_npy(snr_path)
    pos = read_npy(pos_path)
    if np.iscomplexobj(csi):
        if csi.ndim != 3:
            raise DataFormatError(f"{csi_path}: complex csi must be (N, antennas, subcarriers), got {csi.shape}")
        planes = np.stack([csi.real, csi.imag], axis=1).astype(np.float64)
    else:
        if csi.ndim != 4 or csi.shape[3] != 2:
            raise DataFormatError(f"{csi_path}: real csi must be (N, antennas, subcarriers, 2), got {csi.shape}")
        planes = csi.transpose(0, 3, 1, 2).astype(np.float64)
    if snr.ndim != 2 or pos.ndim != 2 or pos.shape[1] != 3:
        raise DataFormatError(f"snr must be (N, antennas) and pos (N, 3), got {snr.shape} and {pos.shape}")
    if not (planes.shape[0] == snr.shape[0] == pos.shape[0]):
        raise DataFormatError(
            f"inconsistent sample counts: csi {planes.shape[0]}, snr {snr.shape[0]}, pos {pos.shape[0]}")
    if planes.shape[2] != snr.shape[1]:
        raise DataFormatError(
            f"antenna count mismatch: csi has {planes.shape[2]}, snr has {snr.shape[1]}")
    return Dataset(planes, snr.astype(np.float64), pos.astype(np.float64),
                   fc_hz=fc_hz, bandwidth_hz=bandwidth_hz)


def export_npy(directory, ds: Dataset):
    """Write the complex64/float32 NPY triple the importer accepts."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    h = (ds.csi[:, 0] + 1j * ds.csi[:, 1]).astype(np.complex64)
    write_npy(directory / "csi.npy", h)
    write_npy(directory / "snr.npy", ds.snr.astype(np.float32))
    write_npy(directory / "pos.npy", ds.pos.astype(np.float32))


# --- synthetic generation ----------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Desk-scale stand-in for the measured setup: a moving transmitter over a
    table in front of a 2x8 antenna grid, line of sight plus a few fixed
    wall reflectors, per-sample additive noise."""

    num_samples: int = 2000
    num_subcarriers: int = 64
    fc_hz: float = 1.25e9
    bandwidth_hz: float = 20e6
    array_rows: int = 2            # stacked along z
    array_cols: int = 8            # spread along y
    element_spacing_m: float | None = None   # half wavelength at fc when None
    x_range: tuple = (1.0, 5.0)
    y_range: tuple = (-1.0, 1.0)
    z_range: tuple = (0.8, 1.2)
    num_reflectors: int = 3
    reflector_gain_range: tuple = (0.2, 0.8)
    snr_db_range: tuple = (10.0, 30.0)
    seed: int = 0

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.num_subcarriers < 8:
            raise ValueError("num_subcarriers must be >= 8")
        if self.num_reflectors < 0:
            raise ValueError("num_reflectors must be >= 0")
        for name in ("x_range", "y_range", "z_range", "snr_db_range", "reflector_gain_range"):
            lo, hi = getattr(self, name)
            if not hi >= lo:
                raise ValueError(f"{name} must be (low, high) with high >= low")
        if self.x_range[1] <= self.x_range[0] or self.y_range[1] <= self.y_range[0]:
            raise ValueError("table extents must be positive")

    @property
    def spacing(self):
        if self.element_spacing_m is not None:
            return self.element_spacing_m
        return SPEED_OF_LIGHT / self.fc_hz / 2.0


def antenna_positions(cfg: SynthConfig):
    """(A, 3) element positions: grid in the x=0 plane, centered on the y axis,
    rows stacked around the middle of the z range."""
    z_mid = 0.5 * (cfg.z_range[0] + cfg.z_range[1])
    d = cfg.spacing
    rows = np.arange(cfg.array_rows) - (cfg.array_rows - 1) / 2.0
    cols = np.arange(cfg.array_cols) - (cfg.array_cols - 1) / 2.0
    grid = [(0.0, c * d, z_mid + r * d) for r in rows for c in cols]
    return np.asarray(grid, dtype=np.float64)


def subcarrier_frequencies(cfg: SynthConfig):
    """Useful-bin center frequencies: guard bands cut proportionally off both
    band edges, remaining width divided evenly across the bins."""
    guard = cfg.bandwidth_hz * GUARD_FRACTION
    useful = cfg.bandwidth_hz - 2.0 * guard
    delta = useful / cfg.num_subcarriers
    k = np.arange(cfg.num_subcarriers)
    return cfg.fc_hz - cfg.bandwidth_hz / 2.0 + guard + k * delta


def scene_reflectors(cfg: SynthConfig, rng):
    """Fixed room geometry for one dataset: reflector points in a box one meter
    larger than the table on every side, with a complex gain each."""
    lo = np.array([cfg.x_range[0] - 1.0, cfg.y_range[0] - 1.0, max(cfg.z_range[0] - 0.5, 0.0)])
    hi = np.array([cfg.x_range[1] + 1.0, cfg.y_range[1] + 1.0, cfg.z_range[1] + 0.5])
    points = rng.uniform(lo, hi, size=(cfg.num_reflectors, 3))
    amps = rng.uniform(*cfg.reflector_gain_range, size=cfg.num_reflectors)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=cfg.num_reflectors)
    return points, amps * np.exp(1j * phases)


def channel_response(cfg: SynthConfig, positions, reflector_points=None, reflector_gains=None):
    """Noiseless frequency response H (N, A, W) for transmitters at `positions`.

    Path 0 is line of sight with gain 1/d and delay d/c. Each reflector
    contributes an image-source path: delay (|tx-r| + |r-ant|)/c, complex
    gain scaled by the reciprocal of the total path length.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    ants = antenna_positions(cfg)
    freqs = subcarrier_frequencies(cfg)
    if reflector_points is None:
        reflector_points = np.zeros((0, 3))
        reflector_gains = np.zeros(0, dtype=np.complex128)
    d_los = np.linalg.norm(positions[:, None, :] - ants[None, :, :], axis=2)  # (N, A)
    h = (1.0 / d_los)[:, :, None] * np.exp(
        -2j * np.pi * freqs[None, None, :] * (d_los / SPEED_OF_LIGHT)[:, :, None])
    for point, gain in zip(reflector_points, reflector_gains):
        d_tx = np.linalg.norm(positions - point[None, :], axis=1)             # (N,)
        d_rx = np.linalg.norm(ants - point[None, :], axis=1)                  # (A,)
        total = d_tx[:, None] + d_rx[None, :]
        h += (gain / total)[:, :, None] * np.exp(
            -2j * np.pi * freqs[None, None, :] * (total / SPEED_OF_LIGHT)[:, :, None])
    return h


_GEN_CHUNK = 256


def generate_synthetic(cfg: SynthConfig, return_scene=False):
    """Seeded synthetic dataset; identical seed gives a bit-identical result.

    Transmitter positions are uniform over the configured extents (redrawn in
    the vanishingly rare case one lands within 1 cm of an antenna element).
    Per sample one target SNR is drawn; complex white noise is added per
    antenna to realize it, and the actually realized per-antenna SNR is what
    lands in the snr field. With return_scene the fixed reflector geometry
    comes back too, so the clean response can be reconstructed.
    """
    rng = np.random.default_rng(cfg.seed)
    ants = antenna_positions(cfg)
    refl_points, refl_gains = scene_reflectors(cfg, rng)

    lows = np.array([cfg.x_range[0], cfg.y_range[0], cfg.z_range[0]])
    highs = np.array([cfg.x_range[1], cfg.y_range[1], cfg.z_range[1]])
    pos = rng.uniform(lows, highs, size=(cfg.num_samples, 3))
    while True:
        d = np.linalg.norm(pos[:, None, :] - ants[None, :, :], axis=2).min(axis=1)
        bad = d < 0.01
        if not bad.any():
            break
        pos[bad] = rng.uniform(lows, highs, size=(int(bad.sum()), 3))

    target_snr = rng.uniform(*cfg.snr_db_range, size=cfg.num_samples)
    n, a, w = cfg.num_samples, len(ants), cfg.num_subcarriers
    csi = np.empty((n, 2, a, w))
    snr = np.empty((n, a))
    for start in range(0, n, _GEN_CHUNK):
        stop = min(start + _GEN_CHUNK, n)
        h = channel_response(cfg, pos[start:stop], refl_points, refl_gains)
        p_sig = np.mean(np.abs(h) ** 2, axis=2)                               # (n, A)
        sigma2 = p_sig * 10.0 ** (-target_snr[start:stop, None] / 10.0)
        noise = (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape))
        noise *= np.sqrt(sigma2 / 2.0)[:, :, None]
        p_noise = np.mean(np.abs(noise) ** 2, axis=2)
        h = h + noise
        csi[start:stop, 0] = h.real
        csi[start:stop, 1] = h.imag
        snr[start:stop] = 10.0 * np.log10(p_sig / p_noise)
    ds = Dataset(csi, snr, pos, fc_hz=cfg.fc_hz, bandwidth_hz=cfg.bandwidth_hz)
    if return_scene:
        return ds, (refl_points, refl_gains)
    return ds


# --- normalization -----------------------------------------------------------

@dataclass(frozen=True)
class NormStats:
    """Single global scale: the population standard deviation of the
    training set's CSI values."""
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")


def fit_normalizer(train: Dataset) -> NormStats:
    scale = float(train.csi.std())
    if scale == 0.0:
        raise ValueError("training CSI has zero variance; cannot normalize")
    return NormStats(scale)


def apply_normalizer(ds: Dataset, stats: NormStats) -> Dataset:
    return replace(ds, csi=ds.csi / stats.scale, snr=ds.snr.copy(), pos=ds.pos.copy())


# --- splits ------------------------------------------------------------------

SPLIT_KINDS = ("random", "narrow", "wide", "within")


@dataclass(frozen=True)
class SplitStrategy:
    kind: str
    eval_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SPLIT_KINDS:
            raise ValueError(f"unknown split kind {self.kind!r}; expected one of {SPLIT_KINDS}")
        if not 0.0 < self.eval_fraction < 1.0:
            raise ValueError("eval_fraction must be in (0, 1)")


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def _axes(positions):
    """(long_axis, short_axis) of the 2-D point cloud by coordinate range."""
    ranges = np.ptp(positions[:, :2], axis=0)
    long_axis = 0 if ranges[0] >= ranges[1] else 1
    return long_axis, 1 - long_axis


def split_indices(positions, strat: SplitStrategy):
    """Partition sample indices into (train, eval), both sorted ascending.

    random  seeded shuffle, tail of the shuffle becomes eval
    narrow  strip along the long edge: top short-axis coordinates
    wide    strip along the short edge: top long-axis coordinates
    within  square around the 2-D centroid grown until it holds the quota

    Geometric kinds take the top-k (or nearest-k) samples by the defining
    coordinate; samples tied exactly on the boundary value go to eval, so the
    eval count can exceed the quota only by ties.
    """
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.shape[0]
    if n < 2:
        raise ValueError("cannot split fewer than 2 samples")
    k = max(1, _round_half_up(n * strat.eval_fraction))

    if strat.kind == "random":
        perm = np.random.default_rng(strat.seed).permutation(n)
        eval_ids = np.sort(perm[n - k:])
    elif strat.kind in ("narrow", "wide"):
        long_axis, short_axis = _axes(positions)
        axis = short_axis if strat.kind == "narrow" else long_axis
        coord = positions[:, axis]
        if np.ptp(coord) == 0.0:
            raise DegenerateGeometryError(
                f"{strat.kind} split needs spread along axis {axis}, positions are degenerate")
        order = np.argsort(coord, kind="stable")
        threshold = coord[order[n - k]]
        eval_ids = np.flatnonzero(coord >= threshold)
    else:  # within
        if np.ptp(positions[:, 0]) == 0.0 and np.ptp(positions[:, 1]) == 0.0:
            raise DegenerateGeometryError("within split needs a non-degenerate position cloud")
        center = positions[:, :2].mean(axis=0)
        cheb = np.abs(positions[:, :2] - center[None, :]).max(axis=1)
        half = np.sort(cheb, kind="stable")[k - 1]
        eval_ids = np.flatnonzero(cheb <= half)

    train_ids = np.setdiff1d(np.arange(n), eval_ids, assume_unique=True)
    if len(train_ids) == 0:
        raise DegenerateGeometryError("split left no training samples")
    return train_ids, eval_ids


def split(ds: Dataset, strat: SplitStrategy):
    """(train, eval) datasets; disjoint and exhaustive over ds."""
    train_ids, eval_ids = split_indices(ds.pos, strat)
    return ds.subset(train_ids), ds.subset(eval_ids)
