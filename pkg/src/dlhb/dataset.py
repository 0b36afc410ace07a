"""Training-data generation: corrupted channels, feature/label tensors, file I/O.

Each sample pairs the (M N_R) x N_T x 3 abs/real/imag tensor of a corrupted
channel with the label vector of the MO-solved hybrid beamformers,

    z = [vec(angle F_RF); vec(angle W_RF);
         per m: vec(Re F_BB[m]); vec(Im F_BB[m]); vec(Re W_BB[m]); vec(Im W_BB[m])],

all vectorizations column-major.  Samples are stored in float32, matching the
on-disk format, so save/load round trips are bit-exact; solver math stays in
float64 up to the cast.
"""

import logging
import math
import struct
from dataclasses import dataclass

import numpy as np

from .beamforming import HybridBeamformer, LinkParams, normalize_power
from .channel import ChannelConfig, FrequencyChannel, realize_channel
from .manopt import MoSettings, solve_hybrid
from .numerics import NotHpdError, RankDeficientError

log = logging.getLogger(__name__)

MAGIC = b"DLHB"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sH6I")  # magic, version, N_T, N_R, N_RF, N_S, M, T


class FormatError(RuntimeError):
    """A binary artifact file violates its declared layout."""


@dataclass(frozen=True)
class BeamformerDims:
    """Shared shape vocabulary for labels, files and the network head."""

    n_tx: int
    n_rx: int
    n_rf: int
    n_streams: int
    n_subcarriers: int

    @property
    def label_len(self) -> int:
        per_bb = 4 * self.n_subcarriers * self.n_streams * self.n_rf
        return self.n_rf * (self.n_tx + self.n_rx) + per_bb

    @property
    def feature_shape(self) -> tuple:
        return (self.n_subcarriers * self.n_rx, self.n_tx, 3)


@dataclass(frozen=True)
class DatasetConfig:
    n_realizations: int                       # N distinct channel draws
    g_copies: int                             # G corrupted copies per draw
    channel: ChannelConfig
    link: LinkParams
    n_rf: int
    snr_train_db: tuple = (15.0, 20.0, 25.0)  # corruption levels, cycled over g
    mo: MoSettings = MoSettings()
    seed: int = 0
    labels_from_clean: bool = False           # solve labels on the clean channel

    def __post_init__(self):
        if self.n_realizations < 1 or self.g_copies < 1:
            raise ValueError("n_realizations and g_copies must be >= 1")
        if not self.snr_train_db:
            raise ValueError("snr_train_db must be nonempty")
        if self.n_rf < self.link.n_streams:
            raise ValueError("n_rf must be >= n_streams")

    @property
    def dims(self) -> BeamformerDims:
        return BeamformerDims(
            n_tx=self.channel.n_tx,
            n_rx=self.channel.n_rx,
            n_rf=self.n_rf,
            n_streams=self.link.n_streams,
            n_subcarriers=self.channel.n_subcarriers,
        )


@dataclass
class FeatureTensor:
    data: np.ndarray  # (M*N_R, N_T, 3) float32, channels (abs, real, imag)


@dataclass
class LabelVector:
    data: np.ndarray  # (label_len,) float32


@dataclass
class Dataset:
    dims: BeamformerDims
    samples: list  # [(FeatureTensor, LabelVector), ...]
    config: DatasetConfig | None = None

    def __len__(self) -> int:
        return len(self.samples)


def corrupt_channel(fc: FrequencyChannel, snr_db: float, rng: np.random.Generator) -> FrequencyChannel:
    """Add i.i.d. complex Gaussian noise at variance P_bar * 10^(-snr_db/20).

    P_bar is the mean squared entry magnitude over the whole tensor;
    snr_db = +inf is the zero-noise sentinel.
    """
    h = fc.per_subcarrier
    if math.isinf(snr_db) and snr_db > 0:
        return FrequencyChannel(per_subcarrier=h.copy())
    p_bar = float(np.mean(np.abs(h) ** 2))
    sigma2 = p_bar * 10.0 ** (-snr_db / 20.0)
    noise = rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
    return FrequencyChannel(per_subcarrier=h + np.sqrt(sigma2 / 2.0) * noise)


def build_features(fc: FrequencyChannel) -> FeatureTensor:
    """Stack per-subcarrier abs/real/imag blocks into the network input tensor."""
    h = fc.per_subcarrier
    m, n_rx, n_tx = h.shape
    flat = h.reshape(m * n_rx, n_tx)
    data = np.stack([np.abs(flat), flat.real, flat.imag], axis=-1)
    return FeatureTensor(data=data.astype(np.float32))


def _angles(mat: np.ndarray) -> np.ndarray:
    """Column-major principal-value phases in [-pi, pi)."""
    ph = np.angle(mat).flatten(order="F")
    ph[ph >= np.pi] -= 2.0 * np.pi
    return ph


def build_labels(bf: HybridBeamformer) -> LabelVector:
    """Vectorize a hybrid beamformer into the regression target layout."""
    parts = [_angles(bf.f_rf), _angles(bf.w_rf)]
    for m in range(bf.n_subcarriers):
        for mat in (bf.f_bb[m], bf.w_bb[m]):
            parts.append(mat.real.flatten(order="F"))
            parts.append(mat.imag.flatten(order="F"))
    return LabelVector(data=np.concatenate(parts).astype(np.float32))


def reconstruct_beamformers(z, dims: BeamformerDims) -> HybridBeamformer:
    """Invert build_labels: phases -> analog beamformers, Re/Im -> basebands.

    The precoder side is re-normalized to the total power constraint, so the
    output always satisfies the HybridBeamformer invariants.
    """
    z = np.asarray(getattr(z, "data", z), dtype=np.float64)
    if z.shape != (dims.label_len,):
        raise ValueError(f"label length {z.shape} does not match expected ({dims.label_len},)")
    n_tx, n_rx, n_rf = dims.n_tx, dims.n_rx, dims.n_rf
    n_s, m_count = dims.n_streams, dims.n_subcarriers
    pos = 0

    def take(count):
        nonlocal pos
        out = z[pos : pos + count]
        pos += count
        return out

    f_rf = np.exp(1j * take(n_tx * n_rf)).reshape(n_tx, n_rf, order="F")
    w_rf = np.exp(1j * take(n_rx * n_rf)).reshape(n_rx, n_rf, order="F")
    bb_count = n_rf * n_s
    blocks = take(4 * m_count * bb_count).reshape(m_count, 4, n_s, n_rf)
    f_bb = (blocks[:, 0] + 1j * blocks[:, 1]).transpose(0, 2, 1)  # column-major blocks
    w_bb = (blocks[:, 2] + 1j * blocks[:, 3]).transpose(0, 2, 1)
    f_bb = normalize_power(f_rf, f_bb)
    return HybridBeamformer(f_rf=f_rf, w_rf=w_rf, f_bb=f_bb, w_bb=w_bb)


def generate(config: DatasetConfig) -> Dataset:
    """Run the full training-data generation loop (deterministic in config.seed).

    Channel n uses the RNG stream (seed, n); its g-th corrupted copy uses
    (seed, n, g), so parallel and serial schedules would produce identical
    data.  Solver failures skip the sample; more than 1% skips aborts.
    """
    levels = tuple(config.snr_train_db)
    total = config.n_realizations * config.g_copies
    samples = []
    skips = 0
    for n in range(1, config.n_realizations + 1):
        fc = realize_channel(config.channel, np.random.default_rng([config.seed, n]))
        for g in range(1, config.g_copies + 1):
            snr = levels[(g - 1) % len(levels)]
            rng = np.random.default_rng([config.seed, n, g])
            fc_seen = corrupt_channel(fc, snr, rng)
            fc_label = fc if config.labels_from_clean else fc_seen
            try:
                bf, _ = solve_hybrid(fc_label, config.link, config.n_rf, config.mo)
            except (RankDeficientError, NotHpdError, RuntimeError) as err:
                skips += 1
                log.warning("skipping sample (n=%d, g=%d): %s", n, g, err)
                if skips > 0.01 * total:
                    raise RuntimeError(
                        f"aborting generation: {skips} solver failures out of {total} samples"
                    ) from err
                continue
            samples.append((build_features(fc_seen), build_labels(bf)))
    return Dataset(dims=config.dims, samples=samples, config=config)


def save(ds: Dataset, path) -> None:
    """Write the little-endian binary dataset file (see module docstring)."""
    d = ds.dims
    feat_count = int(np.prod(d.feature_shape))
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                MAGIC, FORMAT_VERSION, d.n_tx, d.n_rx, d.n_rf, d.n_streams,
                d.n_subcarriers, len(ds.samples),
            )
        )
        for feat, lab in ds.samples:
            if feat.data.shape != d.feature_shape or lab.data.shape != (d.label_len,):
                raise ValueError("sample shape inconsistent with dataset dims")
            fh.write(np.ascontiguousarray(feat.data, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(lab.data, dtype="<f4").tobytes())
    log.info("wrote %d samples (%d feature + %d label floats each) to %s",
             len(ds.samples), feat_count, d.label_len, path)


def load(path) -> Dataset:
    """Read a dataset file, verifying magic, version and exact length."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError(f"file too short: {len(raw)} bytes < header {_HEADER.size}")
    magic, version, n_tx, n_rx, n_rf, n_s, m_count, t_count = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0 (expected {MAGIC!r})")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version} at offset 4")
    dims = BeamformerDims(n_tx=n_tx, n_rx=n_rx, n_rf=n_rf, n_streams=n_s, n_subcarriers=m_count)
    feat_count = int(np.prod(dims.feature_shape))
    record = 4 * (feat_count + dims.label_len)
    expected = _HEADER.size + t_count * record
    if len(raw) != expected:
        raise FormatError(
            f"file length {len(raw)} != expected {expected} "
            f"(truncated near offset {min(len(raw), expected)})"
        )
    samples = []
    pos = _HEADER.size
    for _ in range(t_count):
        feat = np.frombuffer(raw, dtype="<f4", count=feat_count, offset=pos)
        pos += 4 * feat_count
        lab = np.frombuffer(raw, dtype="<f4", count=dims.label_len, offset=pos)
        pos += 4 * dims.label_len
        samples.append(
            (
                FeatureTensor(data=feat.reshape(dims.feature_shape).copy()),
                LabelVector(data=lab.copy()),
            )
        )
    return Dataset(dims=dims, samples=samples, config=None)
