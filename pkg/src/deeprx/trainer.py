"""Dataset synthesis, the training loop, and BER evaluation.

Frames are synthesized deterministically from (master seed, split, record
index); train and test splits use disjoint seed domains so leakage is
structurally impossible. Dataset files use a little-endian binary format
(magic ``DRXD``); see ``write_dataset``/``Dataset.load``.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .channel_sim import propagate
from .classical_rx import (
    EQUALIZER_PRESETS,
    SoftSymbols,
    _known_prefix_symbols,
    _matched_symbols_batch,
    _nearest_point_idx,
    _bit_patterns,
    _soft_ml_batch,
    equalize,
    hard_decode,
)
from .deepreceiver import DeepReceiver, save_checkpoint
from .nn_core import OptimizerState, sgd_momentum_step
from .phy_tx import BitStream, McsSpec, build_frame, mcs_spec
from .scenarios import ScenarioTemplate, scenario_template

__all__ = [
    "DatasetSpec",
    "TrainConfig",
    "BerRecord",
    "Dataset",
    "TrainingDivergedError",
    "wilson_interval",
    "synthesize_frames",
    "generate_dataset",
    "write_dataset",
    "train",
    "evaluate_ber",
    "run_dynamic_sequence",
]

_SPLIT_DOMAIN = {"train": 0, "test": 1}
_ISR_SENTINEL = -(2**31)
_DSET_MAGIC = b"DRXD"
_DSET_VERSION = 1


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    """What to synthesize: scenarios x MCSs x Eb/N0 grid, so many per point."""

    scenarios: tuple  # ((ScenarioTemplate | name, weight), ...)
    mcs_list: tuple  # (McsSpec | name, ...)
    ebn0_grid_db: tuple
    samples_per_point: int
    master_seed: int
    split: str = "train"
    isr_grid_db: tuple | None = None  # evaluation cells for interference sweeps

    def __post_init__(self):
        if self.split not in _SPLIT_DOMAIN:
            raise ValueError("split must be 'train' or 'test'")
        if not self.scenarios or not self.mcs_list or not self.ebn0_grid_db:
            raise ValueError("scenarios, mcs_list and ebn0_grid_db must be nonempty")
        if self.samples_per_point < 1:
            raise ValueError("samples_per_point must be positive")

    def resolved_scenarios(self) -> list[tuple[ScenarioTemplate, float]]:
        out = []
        for item, weight in self.scenarios:
            tpl = item if isinstance(item, ScenarioTemplate) else scenario_template(item)
            out.append((tpl, float(weight)))
        return out

    def resolved_mcs(self) -> list[McsSpec]:
        return [m if isinstance(m, McsSpec) else mcs_spec(m) for m in self.mcs_list]

    @property
    def total_records(self) -> int:
        return len(self.ebn0_grid_db) * self.samples_per_point


@dataclass(frozen=True)
class TrainConfig:
    minibatch: int = 256
    epochs: int = 8
    initial_lr: float = 1e-3
    lr_decay: float = 0.1
    decay_interval_epochs: int = 2
    momentum: float = 0.9
    deterministic: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.minibatch < 1 or self.epochs < 1:
            raise ValueError("minibatch and epochs must be positive")
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")

    def lr_at_epoch(self, epoch: int) -> float:
        # epoch is 1-indexed; the rate drops after every decay interval
        return self.initial_lr * self.lr_decay ** ((epoch - 1) // self.decay_interval_epochs)


@dataclass
class BerRecord:
    scenario: str
    mcs: str
    receiver: str
    ebn0_db: float
    isr_db: float | None
    frames: int
    bit_errors: int
    bits_per_frame: int = 1

    @property
    def bits(self) -> int:
        return self.frames * self.bits_per_frame

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else math.nan

    @property
    def ci(self) -> tuple[float, float]:
        return wilson_interval(self.bit_errors, self.bits)


def wilson_interval(errors: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson 95% score interval for a binomial proportion."""

    if trials == 0:
        return (0.0, 1.0)
    p = errors / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


# -- frame synthesis --------------------------------------------------------


def _record_seedseq(master_seed: int, split: str, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence((master_seed, _SPLIT_DOMAIN[split], index))


def synthesize_frames(
    mcs_pool: list[McsSpec],
    template: ScenarioTemplate,
    ebn0_db: float,
    count: int,
    master_seed: int,
    split: str,
    start_index: int = 0,
    isr_db: float | None = None,
):
    """Generate ``count`` impaired frames with per-record seed derivation.

    Returns (list of mcs indices, iq samples list, labels (B, M), timing
    offsets (B,)). Single-MCS pools yield a stacked (B, N) iq array.
    """

    m_bits = mcs_pool[0].info_bits
    if any(m.info_bits != m_bits for m in mcs_pool):
        raise ValueError("all MCSs in a dataset must share the info bit count")
    mcs_idx = np.empty(count, dtype=np.int16)
    labels = np.empty((count, m_bits), dtype=np.uint8)
    timing = np.empty(count)
    iq = []
    for j in range(count):
        ss = _record_seedseq(master_seed, split, start_index + j)
        draw_ss, channel_ss = ss.spawn(2)
        rng = np.random.default_rng(draw_ss)
        mi = int(rng.integers(len(mcs_pool))) if len(mcs_pool) > 1 else 0
        mcs = mcs_pool[mi]
        scenario = template.draw(rng, ebn0_db=ebn0_db, isr_db=isr_db)
        info = BitStream(rng.integers(0, 2, mcs.info_bits, dtype=np.uint8))
        frame, label = build_frame(mcs, info, rng)
        rxf = propagate(frame, scenario, channel_ss, info_bits=mcs.info_bits)
        mcs_idx[j] = mi
        labels[j] = label.bits
        timing[j] = frame.timing_offset
        iq.append(rxf.samples.astype(np.complex64))
    if len(mcs_pool) == 1:
        iq = np.stack(iq)
    return mcs_idx, iq, labels, timing


# -- dataset files -----------------------------------------------------------


@dataclass
class Dataset:
    """In-memory dataset: per-record metadata plus waveforms and labels."""

    mcs_names: tuple
    scenario_names: tuple
    mcs_ids: np.ndarray
    scenario_ids: np.ndarray
    ebn0_cdb: np.ndarray
    isr_cdb: np.ndarray
    frames: list  # complex64 arrays, possibly different lengths
    labels: np.ndarray  # (records, M) uint8

    def __len__(self):
        return len(self.frames)

    @property
    def num_bits(self) -> int:
        return self.labels.shape[1]

    @staticmethod
    def load(path) -> "Dataset":
        with open(path, "rb") as fh:
            raw = fh.read()
        if raw[:4] != _DSET_MAGIC:
            raise ValueError("bad dataset magic")
        (version,) = struct.unpack_from("<H", raw, 4)
        if version != _DSET_VERSION:
            raise ValueError(f"unsupported dataset version {version}")
        (count,) = struct.unpack_from("<Q", raw, 6)
        off = 14
        (n_names,) = struct.unpack_from("<H", raw, off)
        off += 2
        names = []
        for _ in range(n_names):
            (ln,) = struct.unpack_from("<H", raw, off)
            off += 2
            names.append(raw[off : off + ln].decode("utf-8"))
            off += ln
        (n_scen,) = struct.unpack_from("<H", raw, off)
        off += 2
        scen_names = []
        for _ in range(n_scen):
            (ln,) = struct.unpack_from("<H", raw, off)
            off += 2
            scen_names.append(raw[off : off + ln].decode("utf-8"))
            off += ln
        mcs_ids = np.empty(count, dtype=np.int16)
        scen_ids = np.empty(count, dtype=np.int16)
        ebn0 = np.empty(count, dtype=np.int32)
        isr = np.empty(count, dtype=np.int32)
        frames = []
        labels = None
        for r in range(count):
            mid, sid, e_cdb, i_cdb, n, m = struct.unpack_from("<HHiiII", raw, off)
            off += 20
            samples = np.frombuffer(raw, dtype="<f4", count=2 * n, offset=off)
            off += 8 * n
            packed = np.frombuffer(raw, dtype=np.uint8, count=(m + 7) // 8, offset=off)
            off += (m + 7) // 8
            if labels is None:
                labels = np.empty((count, m), dtype=np.uint8)
            mcs_ids[r], scen_ids[r] = mid, sid
            ebn0[r], isr[r] = e_cdb, i_cdb
            frames.append((samples[0::2] + 1j * samples[1::2]).astype(np.complex64))
            labels[r] = np.unpackbits(packed, bitorder="little")[:m]
        if off != len(raw):
            raise ValueError("trailing bytes in dataset file")
        return Dataset(
            tuple(names), tuple(scen_names), mcs_ids, scen_ids, ebn0, isr, frames, labels
        )


def write_dataset(path, dataset: Dataset) -> str:
    """Write the binary dataset file; returns its SHA-256 digest."""

    hasher = hashlib.sha256()
    with open(path, "wb") as fh:

        def emit(chunk: bytes):
            hasher.update(chunk)
            fh.write(chunk)

        emit(_DSET_MAGIC)
        emit(struct.pack("<H", _DSET_VERSION))
        emit(struct.pack("<Q", len(dataset)))
        emit(struct.pack("<H", len(dataset.mcs_names)))
        for name in dataset.mcs_names:
            raw = name.encode("utf-8")
            emit(struct.pack("<H", len(raw)))
            emit(raw)
        emit(struct.pack("<H", len(dataset.scenario_names)))
        for name in dataset.scenario_names:
            raw = name.encode("utf-8")
            emit(struct.pack("<H", len(raw)))
            emit(raw)
        for r in range(len(dataset)):
            samples = dataset.frames[r]
            m = dataset.labels.shape[1]
            emit(
                struct.pack(
                    "<HHiiII",
                    int(dataset.mcs_ids[r]),
                    int(dataset.scenario_ids[r]),
                    int(dataset.ebn0_cdb[r]),
                    int(dataset.isr_cdb[r]),
                    samples.size,
                    m,
                )
            )
            inter = np.empty(2 * samples.size, dtype="<f4")
            inter[0::2] = samples.real
            inter[1::2] = samples.imag
            emit(inter.tobytes())
            emit(np.packbits(dataset.labels[r], bitorder="little").tobytes())
    return hasher.hexdigest()


def generate_dataset(spec: DatasetSpec, path=None) -> tuple[Dataset, str | None]:
    """Synthesize every record of ``spec``; optionally write it to ``path``.

    Records are ordered by Eb/N0 grid point; the scenario for each record is
    drawn from the weighted scenario list, the MCS uniformly from the pool.
    """

    scen_list = spec.resolved_scenarios()
    weights = np.array([w for _, w in scen_list])
    weights = weights / weights.sum()
    mcs_pool = spec.resolved_mcs()
    m_bits = mcs_pool[0].info_bits
    if any(m.info_bits != m_bits for m in mcs_pool):
        raise ValueError("all MCSs in a dataset must share the info bit count")
    count = spec.total_records
    mcs_ids = np.empty(count, dtype=np.int16)
    scen_ids = np.empty(count, dtype=np.int16)
    ebn0 = np.empty(count, dtype=np.int32)
    isr = np.empty(count, dtype=np.int32)
    frames = []
    labels = np.empty((count, m_bits), dtype=np.uint8)
    for idx in range(count):
        point = spec.ebn0_grid_db[idx // spec.samples_per_point]
        ss = _record_seedseq(spec.master_seed, spec.split, idx)
        draw_ss, channel_ss = ss.spawn(2)
        rng = np.random.default_rng(draw_ss)
        si = int(rng.choice(len(scen_list), p=weights)) if len(scen_list) > 1 else 0
        template = scen_list[si][0]
        mi = int(rng.integers(len(mcs_pool))) if len(mcs_pool) > 1 else 0
        mcs = mcs_pool[mi]
        scenario = template.draw(rng, ebn0_db=point)
        info = BitStream(rng.integers(0, 2, mcs.info_bits, dtype=np.uint8))
        frame, label = build_frame(mcs, info, rng)
        rxf = propagate(frame, scenario, channel_ss, info_bits=mcs.info_bits)
        mcs_ids[idx], scen_ids[idx] = mi, si
        ebn0[idx] = round(float(scenario.ebn0_db) * 100) if math.isfinite(scenario.ebn0_db) else _ISR_SENTINEL
        isr[idx] = (
            round(scenario.interference.isr_db * 100)
            if scenario.interference.kind != "none"
            else _ISR_SENTINEL
        )
        frames.append(rxf.samples.astype(np.complex64))
        labels[idx] = label.bits
    dataset = Dataset(
        tuple(m.name for m in mcs_pool),
        tuple(t.name for t, _ in scen_list),
        mcs_ids,
        scen_ids,
        ebn0,
        isr,
        frames,
        labels,
    )
    digest = write_dataset(path, dataset) if path is not None else None
    return dataset, digest


# -- training -----------------------------------------------------------------


def _frames_to_input(frames, idx, dtype=np.float32) -> np.ndarray:
    chunk = np.stack([frames[i] for i in idx])
    return np.stack([chunk.real, chunk.imag], axis=-1).astype(dtype)


def _length_batches(lengths: np.ndarray, order: np.ndarray, batch_size: int):
    """Group a shuffled record order into equal-length minibatches."""

    queues: dict[int, list] = {}
    for idx in order:
        q = queues.setdefault(int(lengths[idx]), [])
        q.append(idx)
        if len(q) == batch_size:
            yield np.array(q)
            q.clear()
    for q in queues.values():
        if q:
            yield np.array(q)


@dataclass
class TrainResult:
    model: DeepReceiver
    loss_trace: list  # (iteration, epoch, lr, loss)
    meta: dict


def train(
    dataset: Dataset,
    config: TrainConfig,
    model: DeepReceiver,
    dataset_digest: str | None = None,
    progress=None,
) -> TrainResult:
    """Minibatch SGD-with-momentum over shuffled epochs with step decay."""

    if dataset.num_bits != model.config.num_bits:
        raise ValueError(
            f"dataset labels have {dataset.num_bits} bits, model recovers "
            f"{model.config.num_bits}"
        )
    lengths = np.array([f.size for f in dataset.frames])
    rng = np.random.default_rng(config.seed)
    params = model.named_params()
    state = OptimizerState(config.initial_lr, config.momentum)
    trace = []
    iteration = 0
    for epoch in range(1, config.epochs + 1):
        lr = config.lr_at_epoch(epoch)
        state.learning_rate = lr
        order = rng.permutation(len(dataset))
        for batch_idx in _length_batches(lengths, order, config.minibatch):
            x = _frames_to_input(dataset.frames, batch_idx, model.dtype)
            y = dataset.labels[batch_idx]
            logits = model.forward(x, train=True)
            loss, _, g_logits = model.loss(logits, y)
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at iteration {iteration}")
            model.zero_grads()
            model.backward(g_logits)
            sgd_momentum_step(params, model.named_grads(), state)
            iteration += 1
            trace.append((iteration, epoch, lr, loss))
        if progress is not None:
            progress(epoch, trace[-1][3] if trace else math.nan)
    meta = {
        "epochs": config.epochs,
        "final_lr": config.lr_at_epoch(config.epochs),
        "iterations": iteration,
        "dataset_digest": dataset_digest or "",
    }
    return TrainResult(model, trace, meta)


# -- evaluation ---------------------------------------------------------------


def _classical_bits_batch(iq, timing, mcs: McsSpec, chain: str) -> np.ndarray:
    """Vectorized classical chains over a (B, N) block of frames."""

    soft = _matched_symbols_batch(
        np.asarray(iq, dtype=np.complex128), mcs.oversampling, mcs.rolloff, timing
    )
    if chain.startswith("eq"):
        spec = EQUALIZER_PRESETS[chain]
        known = _known_prefix_symbols(mcs)
        rows = []
        for row in soft:
            eq_out = equalize(SoftSymbols(row, mcs), spec, known)
            rows.append(eq_out.values)
        soft = np.stack(rows)
        chain = "hard"
    payload = soft[:, mcs.prefix_symbols :]
    if chain == "ml":
        return _soft_ml_batch(payload, mcs)
    idx = _nearest_point_idx(payload, mcs.modulation.constellation)
    bits = _bit_patterns(mcs.modulation.bits_per_symbol)[idx].reshape(payload.shape[0], -1)
    coded = bits[:, : mcs.coded_bits]
    if mcs.code is None:
        return coded
    out = hard_decode(mcs.code, coded.reshape(-1)).bits
    return out.reshape(payload.shape[0], mcs.info_bits)


def _deep_bits_batch(model: DeepReceiver, iq) -> np.ndarray:
    x = np.stack([np.asarray(iq).real, np.asarray(iq).imag], axis=-1).astype(model.dtype)
    return model.predict_bits(x)


def evaluate_ber(
    receiver,
    spec: DatasetSpec,
    chunk_size: int = 512,
) -> list[BerRecord]:
    """Count bit errors of a receiver over fresh frames for every grid cell.

    ``receiver`` is a chain name ("hard", "ml", "eqA", "eqB", "eqC") or a
    trained :class:`DeepReceiver`. Cells are (scenario, mcs, ebn0[, isr]).
    """

    scen_list = spec.resolved_scenarios()
    mcs_pool = spec.resolved_mcs()
    deep = isinstance(receiver, DeepReceiver)
    if deep and mcs_pool[0].info_bits != receiver.config.num_bits:
        raise ValueError("model head count does not match the MCS info bits")
    records = []
    cell = 0
    isr_points = spec.isr_grid_db if spec.isr_grid_db is not None else (None,)
    for template, _ in scen_list:
        for mcs in mcs_pool:
            for ebn0 in spec.ebn0_grid_db:
                for isr in isr_points:
                    errors = 0
                    done = 0
                    base = cell * spec.samples_per_point
                    while done < spec.samples_per_point:
                        take = min(chunk_size, spec.samples_per_point - done)
                        _, iq, labels, timing = synthesize_frames(
                            [mcs],
                            template,
                            ebn0,
                            take,
                            spec.master_seed,
                            spec.split,
                            start_index=base + done,
                            isr_db=isr,
                        )
                        if deep:
                            bits = _deep_bits_batch(receiver, iq)
                        else:
                            bits = _classical_bits_batch(iq, timing, mcs, receiver)
                        errors += int(np.sum(bits != labels))
                        done += take
                    records.append(
                        BerRecord(
                            scenario=template.name,
                            mcs=mcs.name,
                            receiver="deep" if deep else receiver,
                            ebn0_db=float(ebn0),
                            isr_db=None if isr is None else float(isr),
                            frames=done,
                            bit_errors=errors,
                            bits_per_frame=mcs.info_bits,
                        )
                    )
                    cell += 1
    return records


def run_dynamic_sequence(
    model: DeepReceiver,
    setting_names: list[str],
    frames_per_setting: int,
    mcs: McsSpec,
    master_seed: int,
) -> list[BerRecord]:
    """Evaluate one model across an ordered sequence of channel settings
    without telling it which setting is active."""

    out = []
    for name in setting_names:
        template = scenario_template(name)
        spec = DatasetSpec(
            scenarios=((template, 1.0),),
            mcs_list=(mcs,),
            ebn0_grid_db=(template.fixed_ebn0_db if template.fixed_ebn0_db is not None else math.inf,),
            samples_per_point=frames_per_setting,
            master_seed=master_seed,
            split="test",
        )
        out.extend(evaluate_ber(model, spec))
    return out
