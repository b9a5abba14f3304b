"""The 1D-Conv-DenseNet bit-recovery receiver.

Topology (reference width): Conv5(64) -> Transition(128) -> Dense(128x2)
-> Transition(64) -> Dense(64x3) -> Transition(64) -> Dense(64x4)
-> Transition(64) -> Dense(64x3) -> Conv5(150) -> global max+mean pooling
-> one affine 2-way head per recovered bit. BasicBlock = BN-ReLU-Conv5;
TransitionBlock = BN-ReLU-MaxPool3s2-Conv5; dense blocks concatenate every
prior feature map channel-wise.

Checkpoints use a little-endian binary format (magic ``DRXM``) holding the
config as JSON plus every named tensor as binary32, bit-exact on round trip.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .nn_core import (
    BatchNorm,
    BitHeads,
    Conv1D,
    GlobalPool,
    MaxPool3s2,
    ReLU,
    dense_concat,
    dense_split,
    softmax_xent,
)
from .phy_tx import BitStream, IqFrame

__all__ = [
    "REFERENCE_LAYOUT",
    "DeepReceiverConfig",
    "DeepReceiver",
    "build_model",
    "forward",
    "infer_bits",
    "count_params",
    "max_feature_map",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointFormatError",
]

REFERENCE_LAYOUT = (
    ("conv", 64),
    ("transition", 128),
    ("dense", (128, 128)),
    ("transition", 64),
    ("dense", (64, 64, 64)),
    ("transition", 64),
    ("dense", (64, 64, 64, 64)),
    ("transition", 64),
    ("dense", (64, 64, 64)),
    ("conv", 150),
)

MIN_INPUT_LENGTH = 16  # four length halvings must stay nonempty


@dataclass(frozen=True)
class DeepReceiverConfig:
    num_bits: int
    width_scale: Fraction = Fraction(1)
    input_channels: int = 2

    def __post_init__(self):
        if self.num_bits < 1:
            raise ValueError("num_bits must be >= 1")
        if not 0 < self.width_scale <= 1:
            raise ValueError("width_scale must lie in (0, 1]")

    def scaled(self, channels: int) -> int:
        """Scale a reference channel count; fractional widths round up to a
        multiple of 4."""

        if self.width_scale == 1:
            return channels
        exact = channels * self.width_scale
        return int(-(-exact // 4) * 4)

    def layout(self):
        out = []
        for kind, width in REFERENCE_LAYOUT:
            if kind == "dense":
                out.append((kind, tuple(self.scaled(w) for w in width)))
            else:
                out.append((kind, self.scaled(width)))
        return tuple(out)

    @property
    def feature_dim(self) -> int:
        return 2 * self.scaled(REFERENCE_LAYOUT[-1][1])

    def to_json(self, meta: dict | None = None) -> str:
        doc = {
            "num_bits": self.num_bits,
            "width_scale": str(self.width_scale),
            "input_channels": self.input_channels,
        }
        if meta:
            doc["meta"] = meta
        return json.dumps(doc, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> tuple["DeepReceiverConfig", dict]:
        doc = json.loads(text)
        cfg = DeepReceiverConfig(
            num_bits=int(doc["num_bits"]),
            width_scale=Fraction(doc["width_scale"]),
            input_channels=int(doc.get("input_channels", 2)),
        )
        return cfg, doc.get("meta", {})


class _BasicBlock:
    def __init__(self, c_in, k, rng, dtype):
        self.bn = BatchNorm(c_in, dtype=dtype)
        self.act = ReLU()
        self.conv = Conv1D(c_in, k, 5, rng=rng, dtype=dtype)
        self.parts = [("bn", self.bn), ("act", self.act), ("conv", self.conv)]

    def forward(self, x, train):
        return self.conv.forward(self.act.forward(self.bn.forward(x, train)), train)

    def backward(self, gy):
        return self.bn.backward(self.act.backward(self.conv.backward(gy)))


class _TransitionBlock:
    def __init__(self, c_in, k, rng, dtype):
        self.bn = BatchNorm(c_in, dtype=dtype)
        self.act = ReLU()
        self.pool = MaxPool3s2()
        self.conv = Conv1D(c_in, k, 5, rng=rng, dtype=dtype)
        self.parts = [("bn", self.bn), ("act", self.act), ("pool", self.pool), ("conv", self.conv)]

    def forward(self, x, train):
        x = self.pool.forward(self.act.forward(self.bn.forward(x, train)))
        return self.conv.forward(x, train)

    def backward(self, gy):
        gy = self.pool.backward(self.conv.backward(gy))
        return self.bn.backward(self.act.backward(gy))


class _DenseBlock:
    def __init__(self, c_in, widths, rng, dtype):
        self.widths = widths
        self.blocks = []
        self.parts = []
        c = c_in
        for i, k in enumerate(widths):
            blk = _BasicBlock(c, k, rng, dtype)
            self.blocks.append(blk)
            for pname, layer in blk.parts:
                self.parts.append((f"b{i}.{pname}", layer))
            c += k
        self.c_out = c
        self._in_widths = None

    def forward(self, x, train):
        feats = [x]
        for blk in self.blocks:
            feats.append(blk.forward(dense_concat(feats), train))
        self._in_widths = [f.shape[2] for f in feats]
        return dense_concat(feats)

    def backward(self, gy):
        grads = dense_split(gy, self._in_widths)
        grads = [np.ascontiguousarray(g) for g in grads]
        for i in range(len(self.blocks) - 1, -1, -1):
            g_in = self.blocks[i].backward(grads[i + 1])
            for j, part in enumerate(dense_split(g_in, self._in_widths[: i + 1])):
                grads[j] = grads[j] + part
        return grads[0]


class DeepReceiver:
    """Assembled model with a flat named-tensor view of parameters."""

    def __init__(self, config: DeepReceiverConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        layout = config.layout()
        self._stages = []
        c = config.input_channels
        conv_idx = transition_idx = dense_idx = 0
        for kind, width in layout:
            if kind == "conv":
                name = "stem" if conv_idx == 0 else "final"
                conv_idx += 1
                stage = Conv1D(c, width, 5, rng=rng, dtype=dtype)
                self._stages.append((name, stage, [("", stage)]))
                c = width
            elif kind == "transition":
                transition_idx += 1
                stage = _TransitionBlock(c, width, rng, dtype)
                self._stages.append((f"t{transition_idx}", stage, stage.parts))
                c = width
            else:
                dense_idx += 1
                stage = _DenseBlock(c, width, rng, dtype)
                self._stages.append((f"d{dense_idx}", stage, stage.parts))
                c = stage.c_out
        self.pool = GlobalPool()
        self.heads = BitHeads(config.feature_dim, config.num_bits, rng=rng, dtype=dtype)
        self._stages.append(("heads", self.heads, [("", self.heads)]))

    # -- named tensor protocol -------------------------------------------

    def _layers(self):
        for stage_name, _, parts in self._stages:
            for part_name, layer in parts:
                full = stage_name if not part_name else f"{stage_name}.{part_name}"
                yield full, layer

    def named_params(self) -> dict:
        out = {}
        for name, layer in self._layers():
            for k, v in layer.params.items():
                out[f"{name}.{k}"] = v
        return out

    def named_grads(self) -> dict:
        out = {}
        for name, layer in self._layers():
            for k, v in layer.grads.items():
                out[f"{name}.{k}"] = v
        return out

    def named_buffers(self) -> dict:
        out = {}
        for name, layer in self._layers():
            for k, v in layer.buffers.items():
                out[f"{name}.{k}"] = v
        return out

    def named_tensors(self) -> dict:
        return {**self.named_params(), **self.named_buffers()}

    def zero_grads(self):
        for _, layer in self._layers():
            layer.zero_grads()

    # -- compute -----------------------------------------------------------

    def features(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 3 or x.shape[2] != self.config.input_channels:
            raise ValueError("input must be (batch, length, channels)")
        if x.shape[1] < MIN_INPUT_LENGTH:
            raise ValueError(f"input length must be >= {MIN_INPUT_LENGTH}")
        for name, stage, _ in self._stages[:-1]:
            x = stage.forward(x, train)
        return self.pool.forward(x)

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """Input (B, N, 2) -> logits (B, M, 2)."""

        return self.heads.forward(self.features(x, train), train)

    def backward(self, g_logits: np.ndarray) -> np.ndarray:
        g = self.heads.backward(g_logits)
        g = self.pool.backward(g)
        for name, stage, _ in reversed(self._stages[:-1]):
            g = stage.backward(g)
        return g

    def predict_probs(self, x: np.ndarray) -> np.ndarray:
        logits = self.forward(x, train=False)
        z = logits - logits.max(axis=2, keepdims=True)
        ez = np.exp(z)
        return ez / ez.sum(axis=2, keepdims=True)

    def predict_bits(self, x: np.ndarray) -> np.ndarray:
        probs = self.predict_probs(x)
        # strict comparison: ties resolve to bit 1
        return (~(probs[:, :, 0] > probs[:, :, 1])).astype(np.uint8)

    def loss(self, logits: np.ndarray, labels: np.ndarray):
        return softmax_xent(logits, labels)

    # -- accounting ----------------------------------------------------------

    def parameter_table(self) -> list[tuple[str, int]]:
        return [(name, int(v.size)) for name, v in self.named_params().items()]


def build_model(config: DeepReceiverConfig, seed: int = 0, dtype=np.float32) -> DeepReceiver:
    return DeepReceiver(config, seed=seed, dtype=dtype)


def _frame_to_input(frame, dtype=np.float32) -> np.ndarray:
    samples = frame.samples if isinstance(frame, IqFrame) else np.asarray(frame)
    x = np.stack([samples.real, samples.imag], axis=-1).astype(dtype)
    return x[None, :, :]


def forward(model: DeepReceiver, frame, mode: str = "infer") -> np.ndarray:
    """Per-bit probability pairs, shape (M, 2), for one received frame."""

    x = _frame_to_input(frame, model.dtype)
    if mode == "train":
        raise ValueError("training forward passes go through the trainer")
    return model.predict_probs(x)[0]


def infer_bits(model: DeepReceiver, frame) -> BitStream:
    """Decision rule: bit m is 0 iff p_m0 > p_m1 (ties give 1)."""

    x = _frame_to_input(frame, model.dtype)
    return BitStream(model.predict_bits(x)[0], role="info")


def count_params(model: DeepReceiver) -> tuple[int, int, int]:
    """Exact (total, backbone, heads) learnable parameter counts."""

    heads = backbone = 0
    for name, size in model.parameter_table():
        if name.startswith("heads."):
            heads += size
        else:
            backbone += size
    return backbone + heads, backbone, heads


def max_feature_map(model: DeepReceiver | DeepReceiverConfig, input_length: int) -> int:
    """Largest per-item feature map (length x channels) over all layers."""

    config = model.config if isinstance(model, DeepReceiver) else model
    if input_length % 2:
        raise ValueError("input_length must be even")
    sizes = []
    h = input_length
    c = config.input_channels
    sizes.append(h * c)
    for kind, width in config.layout():
        if kind == "conv":
            c = width
            sizes.append(h * c)
        elif kind == "transition":
            sizes.append(h * c)  # BN/ReLU outputs
            h = -(-h // 2)
            sizes.append(h * c)  # pooled
            c = width
            sizes.append(h * c)
        else:
            concat = c
            for k in width:
                sizes.append(h * concat)  # concatenated block input
                concat += k
                sizes.append(h * k)
            c = concat
            sizes.append(h * c)  # dense block output concat
    sizes.append(2 * c)
    return int(max(sizes))


# -- checkpoint io -----------------------------------------------------------

_MAGIC = b"DRXM"
_VERSION = 1


class CheckpointFormatError(Exception):
    pass


def save_checkpoint(model: DeepReceiver, path, meta: dict | None = None) -> None:
    tensors = model.named_tensors()
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<H", _VERSION))
    cfg = model.config.to_json(meta).encode("utf-8")
    buf.write(struct.pack("<I", len(cfg)))
    buf.write(cfg)
    buf.write(struct.pack("<I", len(tensors)))
    for name, value in tensors.items():
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        arr = np.ascontiguousarray(value, dtype="<f4")
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def _read_exact(fh, count: int) -> bytes:
    raw = fh.read(count)
    if len(raw) != count:
        raise CheckpointFormatError("truncated checkpoint file")
    return raw


def load_checkpoint(path, expected_bits: int | None = None) -> tuple[DeepReceiver, dict]:
    """Rebuild a model from a checkpoint; returns (model, metadata)."""

    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != _MAGIC:
            raise CheckpointFormatError("bad magic")
        (version,) = struct.unpack("<H", _read_exact(fh, 2))
        if version != _VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {version}")
        (cfg_len,) = struct.unpack("<I", _read_exact(fh, 4))
        config, meta = DeepReceiverConfig.from_json(_read_exact(fh, cfg_len).decode("utf-8"))
        if expected_bits is not None and config.num_bits != expected_bits:
            raise CheckpointFormatError(
                f"checkpoint recovers {config.num_bits} bits, expected {expected_bits}"
            )
        model = DeepReceiver(config, seed=0, dtype=np.float32)
        tensors = model.named_tensors()
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        if count != len(tensors):
            raise CheckpointFormatError("tensor count mismatch")
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4))
            name = _read_exact(fh, name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank))
            if name not in tensors:
                raise CheckpointFormatError(f"unknown tensor {name!r}")
            target = tensors[name]
            if tuple(dims) != target.shape:
                raise CheckpointFormatError(f"shape mismatch for {name!r}")
            raw = _read_exact(fh, 4 * int(np.prod(dims)) if rank else 4)
            target[...] = np.frombuffer(raw, dtype="<f4").reshape(dims)
        if fh.read(1):
            raise CheckpointFormatError("trailing bytes after tensor records")
    return model, meta
