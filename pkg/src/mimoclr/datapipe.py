"""Dataset persistence, splitting, capping, and batch loading.

Record file: back-to-back variable-length binary records, little-endian.

    scenario_id   u32
    ue_position   3 x f64  (meters)
    los_label     u8
    beam_label    u16
    n_paths       u16
    paths         n_paths x { gain re f32, gain im f32, delay_tap u16,
                              aod_az f32, aod_el f32, aoa_az f32, aoa_el f32,
                              is_los u8 }
    cir           n_rx*n_tx*n_taps complex64 (interleaved re/im f32),
                  rx-major, then tx, then tap

Only the delay-domain response is stored; the frequency response is always
derived at load time with sigproc.cir_to_csi, so the two views of a sample
can never drift apart.  The manifest is a JSON sidecar carrying geometry,
per-record byte offsets, the train/val split, normalization statistics, and
a sha256 checksum of the record file.  All writes go through a temp file
plus rename.
"""

import dataclasses
import hashlib
import json
import math
import os
import struct

import numpy as np

from .chanmodel import (ArrayGeometry, ChannelSample, PathParams, ScenarioConfig,
                        synthesize_cir)
from .errors import ConfigError, ContractError, DataError
from .rngstream import stream
from .sigproc import NormStats, cir_to_csi, fit_norm_stats, normalize, shape_input

MANIFEST_VERSION = 1

_REC_HEAD = struct.Struct("<I3dBHH")
_REC_PATH = struct.Struct("<ffH4fB")


def record_nbytes(n_paths: int, n_rx: int, n_tx: int, n_taps: int) -> int:
    return _REC_HEAD.size + n_paths * _REC_PATH.size + 8 * n_rx * n_tx * n_taps


def encode_record(sample: ChannelSample, cir: np.ndarray) -> bytes:
    """Serialize one sample with its complex64 delay-domain response."""
    parts = [_REC_HEAD.pack(sample.scenario_id, *sample.ue_position,
                            sample.los_label, sample.beam_label, len(sample.paths))]
    for p in sample.paths:
        parts.append(_REC_PATH.pack(p.gain.real, p.gain.imag, p.delay_tap,
                                    p.aod_az, p.aod_el, p.aoa_az, p.aoa_el,
                                    1 if p.is_los else 0))
    parts.append(np.ascontiguousarray(cir, dtype="<c8").tobytes())
    return b"".join(parts)


def decode_record(buf, offset: int, n_rx: int, n_tx: int, n_taps: int):
    """Returns (sample, cir complex64, next offset)."""
    scenario_id, ux, uy, uz, los, beam, n_paths = _REC_HEAD.unpack_from(buf, offset)
    offset += _REC_HEAD.size
    paths = []
    for _ in range(n_paths):
        re, im, tap, aod_az, aod_el, aoa_az, aoa_el, is_los = _REC_PATH.unpack_from(buf, offset)
        offset += _REC_PATH.size
        paths.append(PathParams(gain=complex(re, im), delay_tap=tap,
                                aod_az=aod_az, aod_el=aod_el,
                                aoa_az=aoa_az, aoa_el=aoa_el,
                                is_los=bool(is_los)))
    n = n_rx * n_tx * n_taps
    cir = np.frombuffer(buf, dtype="<c8", count=n, offset=offset).reshape(n_rx, n_tx, n_taps)
    offset += 8 * n
    sample = ChannelSample(scenario_id=scenario_id, ue_position=(ux, uy, uz),
                           paths=tuple(paths), los_label=bool(los), beam_label=beam)
    return sample, cir, offset


def _geom_dict(g: ArrayGeometry) -> dict:
    return {"rows": g.rows, "cols": g.cols, "spacing": g.spacing}


def _geom_from(d: dict) -> ArrayGeometry:
    return ArrayGeometry(rows=d["rows"], cols=d["cols"], spacing=d["spacing"])


def _atomic_write(path: str, data: bytes) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_dataset(scenarios, manifest_path: str, records_path: str, seed: int) -> dict:
    """Persist generated scenarios; returns the manifest dict.

    `scenarios` is a list of (ScenarioConfig, samples) pairs as produced by
    generate_scenario.  All scenarios must agree on array geometry, tap
    count, subcarrier count, and codebook size; a mismatch refuses the write
    since records would not share a layout.
    """
    if not scenarios:
        raise DataError("refusing to write an empty dataset")
    ref = scenarios[0][0]
    for cfg, _ in scenarios[1:]:
        same = (cfg.tx_geometry == ref.tx_geometry and cfg.rx_geometry == ref.rx_geometry
                and cfg.n_taps == ref.n_taps and cfg.n_subcarriers == ref.n_subcarriers
                and cfg.codebook_size == ref.codebook_size)
        if not same:
            raise DataError(
                f"scenario {cfg.scenario_id} geometry differs from scenario {ref.scenario_id}; "
                "records would not share a layout")
    n_rx = ref.rx_geometry.n_elements
    n_tx = ref.tx_geometry.n_elements

    offsets = []
    scenario_ids = []
    blob = bytearray()
    for cfg, samples in scenarios:
        for s in samples:
            cir = synthesize_cir(s, cfg.tx_geometry, cfg.rx_geometry, cfg.n_taps)
            offsets.append(len(blob))
            scenario_ids.append(s.scenario_id)
            blob.extend(encode_record(s, cir.astype(np.complex64)))
    _atomic_write(records_path, bytes(blob))

    manifest = {
        "format_version": MANIFEST_VERSION,
        "seed": int(seed),
        "records_file": os.path.basename(records_path),
        "records_sha256": sha256_file(records_path),
        "n_records": len(offsets),
        "offsets": offsets,
        "scenario_ids": scenario_ids,
        "tx_geometry": _geom_dict(ref.tx_geometry),
        "rx_geometry": _geom_dict(ref.rx_geometry),
        "n_taps": ref.n_taps,
        "n_subcarriers": ref.n_subcarriers,
        "codebook": {"rows": ref.tx_geometry.rows, "cols": ref.tx_geometry.cols,
                     "n_beams": ref.codebook_size},
        "bandwidth_hz": ref.bandwidth_hz,
        "scenarios": [dataclasses.asdict(cfg) for cfg, _ in scenarios],
        "split": None,
        "split_fraction": None,
        "split_seed": None,
        "norm_stats": None,
    }
    save_manifest(manifest, manifest_path)
    return manifest


def save_manifest(manifest: dict, path: str) -> None:
    _atomic_write(path, json.dumps(manifest, indent=1).encode("utf-8"))


def load_manifest(path: str) -> dict:
    try:
        with open(path, "rb") as f:
            manifest = json.loads(f.read().decode("utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read manifest {path}: {e}") from e
    if manifest.get("format_version") != MANIFEST_VERSION:
        raise DataError(f"{path}: unsupported manifest version {manifest.get('format_version')}")
    return manifest


class Dataset:
    """Read-only handle over a manifest + verified record file."""

    def __init__(self, manifest: dict, records_blob: bytes):
        self.manifest = manifest
        self._buf = records_blob
        self.n_rx = _geom_from(manifest["rx_geometry"]).n_elements
        self.n_tx = _geom_from(manifest["tx_geometry"]).n_elements
        self.n_taps = int(manifest["n_taps"])
        self.n_subcarriers = int(manifest["n_subcarriers"])

    @property
    def n_records(self) -> int:
        return int(self.manifest["n_records"])

    def record(self, index: int):
        """Returns (ChannelSample, cir complex64 [n_rx, n_tx, n_taps])."""
        if not 0 <= index < self.n_records:
            raise ContractError(f"record index {index} outside [0, {self.n_records})")
        sample, cir, _ = decode_record(self._buf, self.manifest["offsets"][index],
                                       self.n_rx, self.n_tx, self.n_taps)
        return sample, cir

    def split_flags(self) -> np.ndarray:
        if self.manifest.get("split") is None:
            raise ContractError("dataset has no split assignment; run split_dataset first")
        return np.asarray(self.manifest["split"], dtype=np.int64)

    def train_indices(self) -> np.ndarray:
        return np.nonzero(self.split_flags() == 1)[0]

    def val_indices(self) -> np.ndarray:
        return np.nonzero(self.split_flags() == 0)[0]

    def norm_stats(self, modality: str) -> NormStats:
        stats = self.manifest.get("norm_stats")
        if not stats or modality not in stats:
            raise ContractError(f"manifest has no normalization stats for '{modality}'")
        d = stats[modality]
        return NormStats(vmin=d["vmin"], vmax=d["vmax"], mean=d["mean"], std=d["std"])


def open_dataset(manifest_path: str, records_path=None, verify: bool = True) -> Dataset:
    """Load a dataset; with verify=True the record file must match the
    manifest's sha256 (any corruption fails the open)."""
    manifest = load_manifest(manifest_path)
    if records_path is None:
        records_path = os.path.join(os.path.dirname(manifest_path), manifest["records_file"])
    try:
        with open(records_path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise DataError(f"cannot read records {records_path}: {e}") from e
    if verify:
        digest = hashlib.sha256(blob).hexdigest()
        if digest != manifest["records_sha256"]:
            raise DataError(
                f"{records_path}: checksum mismatch (manifest {manifest['records_sha256'][:12]}..., "
                f"file {digest[:12]}...)")
    return Dataset(manifest, blob)


def split_dataset(manifest: dict, fraction: float, seed: int) -> dict:
    """Assign train/val flags by seeded uniform shuffle.

    floor(N * fraction) records become training (flag 1), the rest
    validation (flag 0).  Returns the updated manifest (also mutated in
    place); callers persist it with save_manifest.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"split fraction must be in (0, 1), got {fraction}")
    n = int(manifest["n_records"])
    n_train = math.floor(n * fraction)
    perm = stream(seed, "dataset-split").permutation(n)
    flags = np.zeros(n, dtype=np.int64)
    flags[perm[:n_train]] = 1
    manifest["split"] = [int(f) for f in flags]
    manifest["split_fraction"] = float(fraction)
    manifest["split_seed"] = int(seed)
    return manifest


def stratified_cap(scenario_sizes, cap: int, seed: int):
    """Per-scenario subset selection: scenarios at or below `cap` are kept
    whole; larger ones contribute `cap` records drawn uniformly without
    replacement.  Returns a list of sorted index arrays, one per scenario.
    """
    if cap <= 0:
        raise ConfigError(f"cap must be positive, got {cap}")
    selected = []
    for k, size in enumerate(scenario_sizes):
        if size <= cap:
            selected.append(np.arange(size))
        else:
            rng = stream(seed, "stratified-cap", k)
            selected.append(np.sort(rng.choice(size, size=cap, replace=False)))
    return selected


_TASK_LABELS = ("positioning", "beam", "los")


def load_batch(dataset: Dataset, indices, modality: str, noise_std: float = 0.0,
               rng=None, task=None):
    """Load records as a normalized model-input batch.

    Returns (x, labels): x is float32 [N, 2, n_rx*n_tx, n_subcarriers];
    labels is None without a task, float64 positions [N, 3] for
    'positioning', int64 class ids for 'beam' / 'los'.  modality 'cir'
    zero-pads taps up to the subcarrier count; 'csi' is derived on the fly
    from the stored delay response.  noise_std > 0 adds circular complex
    Gaussian noise to the raw (unshaped) modality tensor and needs an rng.
    """
    if modality not in ("cir", "csi"):
        raise ContractError(f"unknown modality '{modality}'")
    if task is not None and task not in _TASK_LABELS:
        raise ContractError(f"unknown task '{task}' (expected one of {_TASK_LABELS})")
    if noise_std < 0:
        raise ContractError(f"noise_std must be nonnegative, got {noise_std}")
    if noise_std > 0 and rng is None:
        raise ContractError("noisy loading needs an rng")
    indices = np.asarray(indices, dtype=np.int64)
    stats = dataset.norm_stats(modality)

    xs = np.empty((len(indices), 2, dataset.n_rx * dataset.n_tx, dataset.n_subcarriers),
                  dtype=np.float64)
    positions = np.empty((len(indices), 3), dtype=np.float64)
    beams = np.empty(len(indices), dtype=np.int64)
    los = np.empty(len(indices), dtype=np.int64)
    for row, idx in enumerate(indices):
        sample, cir = dataset.record(int(idx))
        tensor = cir.astype(np.complex128)
        if modality == "csi":
            tensor = cir_to_csi(tensor, dataset.n_subcarriers)
        if noise_std > 0:
            scale = noise_std / np.sqrt(2.0)
            tensor = tensor + scale * (rng.standard_normal(tensor.shape)
                                       + 1j * rng.standard_normal(tensor.shape))
        xs[row] = shape_input(tensor, n_bins=dataset.n_subcarriers)
        positions[row] = sample.ue_position
        beams[row] = sample.beam_label
        los[row] = sample.los_label

    x = normalize(xs, stats).astype(np.float32)
    if task == "positioning":
        labels = positions
    elif task == "beam":
        labels = beams
    elif task == "los":
        labels = los
    else:
        labels = None
    return x, labels


def fit_split_stats(dataset: Dataset, indices, modality: str) -> NormStats:
    """Fit normalization statistics over training-split records only;
    passing a validation record is a contract violation (statistics must
    never see held-out data)."""
    indices = np.asarray(indices, dtype=np.int64)
    flags = dataset.split_flags()
    bad = indices[flags[indices] != 1]
    if bad.size:
        raise ContractError(
            f"normalization stats must be fit on the training split; "
            f"got validation record(s) {bad[:5].tolist()}")
    shaped = np.empty((len(indices), 2, dataset.n_rx * dataset.n_tx, dataset.n_subcarriers),
                      dtype=np.float64)
    for row, idx in enumerate(indices):
        _, cir = dataset.record(int(idx))
        tensor = cir.astype(np.complex128)
        if modality == "csi":
            tensor = cir_to_csi(tensor, dataset.n_subcarriers)
        shaped[row] = shape_input(tensor, n_bins=dataset.n_subcarriers)
    return fit_norm_stats(shaped)


def attach_norm_stats(manifest: dict, dataset: Dataset) -> dict:
    """Fit train-split stats for both modalities and store them in the
    manifest (returned and mutated in place)."""
    train = dataset.train_indices()
    stats = {}
    for modality in ("cir", "csi"):
        s = fit_split_stats(dataset, train, modality)
        stats[modality] = {"vmin": s.vmin, "vmax": s.vmax, "mean": s.mean, "std": s.std}
    manifest["norm_stats"] = stats
    dataset.manifest["norm_stats"] = stats
    return manifest


def import_ray_dump(path: str):
    """Adapter for external ray-tracer exports (DeepMIMO- or Sionna-style).

    The mapping is: per-user path lists {complex gain, delay seconds, AoD/AoA
    azimuth+elevation} quantize onto the tap grid via round(delay * bandwidth)
    and feed the same record layout as write_dataset; positions come from the
    exporter's user grid.  Not implemented — generate_scenario is the only
    supported source today.
    """
    raise NotImplementedError("external ray-dump import is documented but not implemented")
