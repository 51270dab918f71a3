"""Network assembly: declarative spec, builders for the five
architectures, parameter bookkeeping, and checkpoint serialization.

A ``ModelSpec`` fully determines a network; ``build`` turns it into a
``Model`` with deterministic, seed-derived initialization.  Checkpoints
use a custom flat binary layout (magic, JSON header, raw float64
payload) chosen over zip-based containers because it is byte-identical
for identical model state.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from .attention import TemporalAttention
from .autodiff import Tensor, as_tensor, relu, reshape
from .errors import CheckpointError, ConfigError, ShapeError
from .layers import BatchNorm1D, Conv1D, Dense, Dropout, MaxPool1D, flatten
from .recurrent import BiLSTM, LSTMCell, lstm_forward

ARCHITECTURES = ("cnn-bilstm-am", "cnn-bilstm", "cnn", "lstm", "mlp")

_CHECKPOINT_MAGIC = b"QCKPT\x00\x01\n"


@dataclass(frozen=True)
class ModelSpec:
    """Declarative description of a network.

    The defaults describe the full hybrid model: four Conv-BN-ReLU-Pool
    stages (16/32/64/128 channels, kernels 5/3/3/3, stride 1, pool size
    2 stride 1), two bidirectional LSTM layers (per-direction hidden
    sizes 128 and 64, summation combine) with dropout after each,
    temporal attention, and a 32-10-1 dense head.
    """

    architecture: str = "cnn-bilstm-am"
    window: int = 12
    dropout: float = 0.2
    pool_size: int = 2
    pool_stride: int = 1
    combine: str = "sum"
    conv_channels: tuple[int, ...] = (16, 32, 64, 128)
    conv_kernels: tuple[int, ...] = (5, 3, 3, 3)
    conv_strides: tuple[int, ...] = (1, 1, 1, 1)
    lstm_sizes: tuple[int, ...] = (128, 64)
    fc_sizes: tuple[int, ...] = (32, 10)
    mlp_hidden: tuple[int, ...] = (15, 15)


def spec_to_dict(spec: ModelSpec) -> dict:
    """JSON-ready dict (tuples become lists)."""
    raw = dataclasses.asdict(spec)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in raw.items()}


def spec_from_dict(data: dict) -> ModelSpec:
    fields = {f.name for f in dataclasses.fields(ModelSpec)}
    unknown = set(data) - fields
    if unknown:
        raise ConfigError(f"unknown model spec fields: {sorted(unknown)}")
    coerced = {
        k: tuple(v) if isinstance(v, list) else v for k, v in data.items()
    }
    return ModelSpec(**coerced)


def minimum_window(spec: ModelSpec) -> int:
    """Smallest window the architecture can consume.

    Ceil-mode 'same' pooling never shrinks a length below one, so the
    hard floor is one month for every architecture.
    """
    return 1


def validate_spec(spec: ModelSpec) -> None:
    if spec.architecture not in ARCHITECTURES:
        raise ConfigError(
            f"unknown architecture {spec.architecture!r}; choose from {ARCHITECTURES}"
        )
    floor = minimum_window(spec)
    if spec.window < floor:
        raise ConfigError(
            f"window {spec.window} is too short for {spec.architecture}; "
            f"minimum window is {floor}"
        )
    if not 0.0 <= spec.dropout < 1.0:
        raise ConfigError(f"dropout must be in [0, 1), got {spec.dropout}")
    if spec.combine not in ("sum", "concat"):
        raise ConfigError(f"combine must be 'sum' or 'concat', got {spec.combine!r}")
    if spec.pool_size < 1 or spec.pool_stride < 1:
        raise ConfigError("pool_size and pool_stride must be >= 1")
    if not (len(spec.conv_channels) == len(spec.conv_kernels) == len(spec.conv_strides)):
        raise ConfigError("conv_channels, conv_kernels, conv_strides lengths differ")
    if spec.architecture in ("cnn-bilstm-am", "cnn-bilstm", "lstm") and not spec.lstm_sizes:
        raise ConfigError(f"{spec.architecture} needs at least one recurrent layer size")
    if spec.architecture in ("cnn-bilstm-am", "cnn-bilstm", "cnn") and not spec.conv_channels:
        raise ConfigError(f"{spec.architecture} needs at least one convolutional stage")


def feature_length(spec: ModelSpec) -> int:
    """Sequence length coming out of the convolutional feature block."""
    length = spec.window
    for stride in spec.conv_strides:
        length = -(-length // stride)
        length = -(-length // spec.pool_stride)
    return length


class Model:
    """Built network: ordered layer parts plus an architecture forward.

    ``last_attention`` holds the attention weights of the most recent
    forward pass (None for architectures without attention).
    """

    def __init__(self, spec: ModelSpec, parts: dict[str, object], forward_fn):
        self.spec = spec
        self._parts = parts
        self._forward = forward_fn
        self.train_mode = True
        self.last_attention: np.ndarray | None = None

    def part(self, name: str):
        return self._parts[name]

    def train(self) -> "Model":
        return self._set_mode(True)

    def eval(self) -> "Model":
        return self._set_mode(False)

    def _set_mode(self, train: bool) -> "Model":
        self.train_mode = train
        for layer in self._parts.values():
            if hasattr(layer, "train_mode"):
                layer.train_mode = train
        return self

    def forward(self, x) -> Tensor:
        x = as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.spec.window:
            raise ShapeError(
                f"model expects input (batch, {self.spec.window}), got {x.shape}"
            )
        return self._forward(self, x)

    __call__ = forward

    def parameters(self) -> dict[str, Tensor]:
        """Trainable tensors, keyed 'part.param', in construction order."""
        named: dict[str, Tensor] = {}
        for part_name, layer in self._parts.items():
            getter = getattr(layer, "parameters", None)
            if getter is None:
                continue
            for key, tensor in getter().items():
                named[f"{part_name}.{key}"] = tensor
        return named

    def buffers(self) -> dict[str, np.ndarray]:
        """Non-trainable state (batch-norm running statistics)."""
        named: dict[str, np.ndarray] = {}
        for part_name, layer in self._parts.items():
            getter = getattr(layer, "buffers", None)
            if getter is None:
                continue
            for key, array in getter().items():
                named[f"{part_name}.{key}"] = array
        return named

    def zero_grad(self) -> None:
        for tensor in self.parameters().values():
            tensor.zero_grad()


def count_parameters(model: Model) -> int:
    return sum(t.data.size for t in model.parameters().values())


def _conv_stages(spec: ModelSpec, rng, parts: dict[str, object]) -> None:
    in_channels = 1
    for i, (channels, kernel, stride) in enumerate(
        zip(spec.conv_channels, spec.conv_kernels, spec.conv_strides), start=1
    ):
        parts[f"conv{i}"] = Conv1D(in_channels, channels, kernel, stride, rng=rng)
        parts[f"bn{i}"] = BatchNorm1D(channels)
        in_channels = channels
    parts["pool"] = MaxPool1D(spec.pool_size, spec.pool_stride)


def _head_stages(spec: ModelSpec, rng, parts: dict[str, object], in_width: int) -> None:
    fc1, fc2 = spec.fc_sizes
    parts["fc1"] = Dense(in_width, fc1, "relu", rng=rng)
    parts["fc2"] = Dense(fc1, fc2, "relu", rng=rng)
    parts["fc3"] = Dense(fc2, 1, "linear", rng=rng)


def _feature_block(model: Model, x: Tensor) -> Tensor:
    spec = model.spec
    h = reshape(x, (x.shape[0], 1, spec.window))
    for i in range(1, len(spec.conv_channels) + 1):
        h = model.part(f"conv{i}").forward(h)
        h = model.part(f"bn{i}").forward(h)
        h = relu(h)
        h = model.part("pool").forward(h)
    return h


def _recurrent_block(model: Model, x: Tensor) -> Tensor:
    h = _feature_block(model, x)
    seq = flatten(h, "sequence")
    seq = model.part("bilstm1").forward(seq)
    seq = model.part("drop1").forward(seq)
    seq = model.part("bilstm2").forward(seq)
    return model.part("drop2").forward(seq)


def _head(model: Model, x: Tensor) -> Tensor:
    h = model.part("fc1").forward(x)
    h = model.part("fc2").forward(h)
    return model.part("fc3").forward(h)


def _forward_cnn_bilstm_am(model: Model, x: Tensor) -> Tensor:
    seq = _recurrent_block(model, x)
    context, weights = model.part("attention").forward(seq)
    model.last_attention = weights.data
    return _head(model, context)


def _forward_cnn_bilstm(model: Model, x: Tensor) -> Tensor:
    seq = _recurrent_block(model, x)
    model.last_attention = None
    return _head(model, seq.mean(axis=1))


def _forward_cnn(model: Model, x: Tensor) -> Tensor:
    h = _feature_block(model, x)
    model.last_attention = None
    return _head(model, flatten(h, "features"))


def _forward_lstm(model: Model, x: Tensor) -> Tensor:
    seq = reshape(x, (x.shape[0], model.spec.window, 1))
    seq = lstm_forward(seq, model.part("lstm1"))
    seq = lstm_forward(seq, model.part("lstm2"))
    model.last_attention = None
    return _head(model, seq[:, -1])


def _forward_mlp(model: Model, x: Tensor) -> Tensor:
    model.last_attention = None
    h = model.part("fc1").forward(x)
    h = model.part("fc2").forward(h)
    return model.part("fc3").forward(h)


def build(spec: ModelSpec, rng_seed: int) -> Model:
    """Construct and deterministically initialize a model from its spec.

    Initialization draws from one seed-derived stream in a fixed layer
    order, so equal (spec, seed) pairs give bit-identical parameters.
    Dropout draws from a second independent stream.
    """
    validate_spec(spec)
    rng = np.random.default_rng([int(rng_seed), 0])
    dropout_rng = np.random.default_rng([int(rng_seed), 1])
    parts: dict[str, object] = {}
    arch = spec.architecture

    if arch in ("cnn-bilstm-am", "cnn-bilstm"):
        _conv_stages(spec, rng, parts)
        size1, size2 = spec.lstm_sizes
        parts["bilstm1"] = BiLSTM(spec.conv_channels[-1], size1, spec.combine, rng=rng)
        parts["drop1"] = Dropout(spec.dropout, rng=dropout_rng)
        width1 = parts["bilstm1"].out_width
        parts["bilstm2"] = BiLSTM(width1, size2, spec.combine, rng=rng)
        parts["drop2"] = Dropout(spec.dropout, rng=dropout_rng)
        width2 = parts["bilstm2"].out_width
        if arch == "cnn-bilstm-am":
            parts["attention"] = TemporalAttention(width2, rng=rng)
            forward_fn = _forward_cnn_bilstm_am
        else:
            forward_fn = _forward_cnn_bilstm
        _head_stages(spec, rng, parts, width2)
    elif arch == "cnn":
        _conv_stages(spec, rng, parts)
        _head_stages(spec, rng, parts, spec.conv_channels[-1] * feature_length(spec))
        forward_fn = _forward_cnn
    elif arch == "lstm":
        size1, size2 = spec.lstm_sizes
        parts["lstm1"] = LSTMCell(1, size1, rng=rng)
        parts["lstm2"] = LSTMCell(size1, size2, rng=rng)
        _head_stages(spec, rng, parts, size2)
        forward_fn = _forward_lstm
    else:
        hidden1, hidden2 = spec.mlp_hidden
        parts["fc1"] = Dense(spec.window, hidden1, "sigmoid", rng=rng)
        parts["fc2"] = Dense(hidden1, hidden2, "sigmoid", rng=rng)
        parts["fc3"] = Dense(hidden2, 1, "linear", rng=rng)
        forward_fn = _forward_mlp

    return Model(spec, parts, forward_fn)


def save_checkpoint(model: Model, path) -> None:
    """Write parameters, buffers, and the spec as one deterministic blob."""
    entries: list[tuple[str, str, np.ndarray]] = []
    for name, tensor in model.parameters().items():
        entries.append((name, "param", tensor.data))
    for name, array in model.buffers().items():
        entries.append((name, "buffer", array))
    header = {
        "format": 1,
        "spec": spec_to_dict(model.spec),
        "tensors": [
            {"name": name, "kind": kind, "shape": list(arr.shape)}
            for name, kind, arr in entries
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, _, arr in entries:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path, spec: ModelSpec | None = None) -> Model:
    """Rebuild a model from a checkpoint; returns it in eval mode.

    If ``spec`` is given it must match the stored one exactly.
    """
    with open(path, "rb") as fh:
        magic = fh.read(len(_CHECKPOINT_MAGIC))
        if magic != _CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a recognized checkpoint (bad magic)")
        (header_len,) = struct.unpack("<I", fh.read(4))
        try:
            header = json.loads(fh.read(header_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt checkpoint header: {exc}") from None
        if header.get("format") != 1:
            raise CheckpointError(
                f"{path}: unsupported checkpoint format {header.get('format')!r}"
            )
        stored_spec = spec_from_dict(header["spec"])
        if spec is not None and spec != stored_spec:
            raise CheckpointError(
                f"{path}: checkpoint spec {stored_spec} does not match "
                f"requested spec {spec}"
            )
        model = build(stored_spec, 0)
        targets = dict(model.parameters())
        buffers = model.buffers()
        for entry in header["tensors"]:
            name, kind, shape = entry["name"], entry["kind"], tuple(entry["shape"])
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise CheckpointError(f"{path}: truncated payload at tensor {name!r}")
            values = np.frombuffer(raw, dtype="<f8").reshape(shape)
            pool = targets if kind == "param" else buffers
            if name not in pool:
                raise CheckpointError(
                    f"{path}: checkpoint tensor {name!r} not present in model"
                )
            dest = pool[name].data if kind == "param" else pool[name]
            if dest.shape != shape:
                raise CheckpointError(
                    f"{path}: shape mismatch for {name!r}: "
                    f"checkpoint {shape}, model {dest.shape}"
                )
            np.copyto(dest, values)
    return model.eval()
