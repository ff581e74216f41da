"""Split model: shared sensor front-end, MAC fusion, server back-end.

Checkpoint layout (all integers little-endian)::

    bytes 0..7    magic b"OTAPCMv1"
    bytes 8..15   uint64 header length H
    next H bytes  UTF-8 JSON header
    rest          concatenated float64 little-endian tensors, row-major

The JSON header carries ``front_end`` / ``back_end`` (lists of
``{"kind", "hyperparams"}``), ``tensors`` (list of ``{"name", "shape",
"offset"}`` with byte offsets into the payload), ``fusion_mode``,
``meta`` (free-form, includes the training-config digest). ``log_p`` is
stored as a 0-d tensor so ``p`` survives the round trip bit-exactly.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .errors import DimensionError, FormatError, StateError
from .ota import Fusion

MAGIC = b"OTAPCMv1"


@dataclass
class ModelSplit:
    front_end: list[nn.Layer]
    back_end: list[nn.Layer]
    log_p: np.ndarray = field(default_factory=lambda: np.array(0.0))
    fusion_mode: str = "lp"
    input_shape: tuple[int, ...] = (1, 28, 28)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.log_p = np.array(float(np.asarray(self.log_p)), dtype=np.float64)
        d = nn.infer_shape(self.front_end, self.input_shape)
        try:
            nn.infer_shape(self.back_end, d)
        except DimensionError as exc:
            raise DimensionError(f"front-end output {d} does not feed back-end: {exc}") from None
        self.feature_shape = d
        self._fusion: Fusion | None = None
        self._batch = None

    @property
    def p(self) -> float:
        return float(np.exp(self.log_p))

    @p.setter
    def p(self, value: float) -> None:
        if not value > 0:
            raise ValueError("p must be positive")
        self.log_p[...] = np.log(value)

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, layers in (("front", self.front_end), ("back", self.back_end)):
            for i, layer in enumerate(layers):
                for k, v in layer.params.items():
                    out[f"{prefix}.{i}.{k}"] = v
        out["log_p"] = self.log_p
        return out

    def front_forward(self, views: np.ndarray, layers: list[nn.Layer] | None = None) -> np.ndarray:
        """Features for views shaped ``(M, N, H, W)`` -> ``(M, N, d)``."""
        m, n = views.shape[:2]
        x = views.reshape((m * n,) + self.input_shape)
        f = nn.forward(self.front_end if layers is None else layers, x)
        return f.reshape(m, n, -1)

    def forward(self, views: np.ndarray, snr_db=None, rng=None, reference: str = "example",
                front_layers: list[list[nn.Layer]] | None = None) -> np.ndarray:
        """Logits for ``(M, N, H, W)`` views.

        ``front_layers`` optionally gives a distinct (e.g. noisy) front-end per
        sensor; otherwise the shared front-end processes all sensors at once.
        """
        if front_layers is None:
            feats = self.front_forward(views)
        else:
            if len(front_layers) != views.shape[0]:
                raise DimensionError(f"{len(front_layers)} front-ends for {views.shape[0]} sensors")
            feats = np.stack([self.front_forward(views[m:m + 1], fl)[0]
                              for m, fl in enumerate(front_layers)])
        fusion = Fusion(self.fusion_mode)
        fused = fusion.forward(feats, self.p, snr_db, rng, reference)
        self._fusion = fusion
        self._batch = views.shape[:2]
        return nn.forward(self.back_end, fused)

    @property
    def last_realization(self):
        return None if self._fusion is None else self._fusion.realization

    def backward(self, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of every parameter for the last shared-front-end ``forward``.

        Channel noise is treated as an additive constant.
        """
        if self._fusion is None:
            raise StateError("backward called before forward")
        g_fused = nn.backward(self.back_end, grad_logits)
        g_feat, g_p = self._fusion.backward(g_fused)
        m, n = self._batch
        nn.backward(self.front_end, g_feat.reshape((m * n,) + g_feat.shape[2:]))
        grads = {}
        for prefix, layers in (("front", self.front_end), ("back", self.back_end)):
            for i, layer in enumerate(layers):
                for k, v in layer.grads.items():
                    grads[f"{prefix}.{i}.{k}"] = v
        grads["log_p"] = np.array(g_p * self.p)
        return grads

    def loss_and_grads(self, views, labels, snr_db=None, rng=None, reference: str = "batch"):
        logits = self.forward(views, snr_db, rng, reference)
        loss, g = nn.softmax_xent_batch(logits, labels)
        return loss, self.backward(g), logits

    def predict(self, views, snr_db=None, rng=None, front_layers=None, chunk: int = 500):
        """Class predictions and the mean realised noise variance."""
        preds, sig = [], []
        for s in range(0, views.shape[1], chunk):
            logits = self.forward(views[:, s:s + chunk], snr_db, rng, "example", front_layers)
            preds.append(logits.argmax(axis=1))
            sig.append(self.last_realization.sigma2.ravel())
        self._fusion = None
        return np.concatenate(preds), float(np.mean(np.concatenate(sig)))

    def copy(self) -> "ModelSplit":
        return ModelSplit(
            [l.with_params(l.params) for l in self.front_end],
            [l.with_params(l.params) for l in self.back_end],
            self.log_p.copy(), self.fusion_mode, self.input_shape, dict(self.meta))

    def architecture(self) -> dict:
        return {
            "front_end": [{"kind": l.kind, "hyperparams": l.hyperparams()} for l in self.front_end],
            "back_end": [{"kind": l.kind, "hyperparams": l.hyperparams()} for l in self.back_end],
            "input_shape": list(self.input_shape),
        }

    def load_state(self, other: "ModelSplit") -> None:
        """Copy weights (and p) from a model with identical architecture."""
        if self.architecture() != other.architecture():
            raise ValueError("architecture mismatch")
        mine = self.parameters()
        for k, v in other.parameters().items():
            mine[k][...] = v


def mnist_model(rng: np.random.Generator, channels: int = 10, kernel: int = 5, hidden: int = 50,
                classes: int = 10, side: int = 28) -> ModelSplit:
    """Conv front-end (one 5x5 layer, 10 channels, ReLU); two dense layers at the server."""
    conv = nn.Conv2D(1, channels, kernel, stride=1, padding=0, rng=rng)
    d = channels * (side - kernel + 1) ** 2
    return ModelSplit(
        [conv, nn.ReLU(), nn.Flatten()],
        [nn.Dense(d, hidden, rng=rng), nn.ReLU(), nn.Dense(hidden, classes, rng=rng)],
        input_shape=(1, side, side))


def mlp_model(rng: np.random.Generator, side: int, hidden: int, classes: int) -> ModelSplit:
    return ModelSplit(
        [nn.Flatten(), nn.Dense(side * side, hidden, rng=rng), nn.ReLU()],
        [nn.Dense(hidden, classes, rng=rng)],
        input_shape=(1, side, side))


def save_checkpoint(model: ModelSplit, path) -> None:
    tensors, chunks, offset = [], [], 0
    for name, arr in model.parameters().items():
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(data)
        offset += len(data)
    header = dict(model.architecture(), tensors=tensors, fusion_mode=model.fusion_mode,
                  p=model.p, meta=model.meta)
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    Path(path).write_bytes(MAGIC + struct.pack("<Q", len(hbytes)) + hbytes + b"".join(chunks))


def load_checkpoint(path) -> ModelSplit:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise FormatError(f"{path}: not an otapcm checkpoint")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    payload = memoryview(raw)[16 + hlen:]
    layers = {side: [nn.build_layer(s["kind"], s["hyperparams"]) for s in header[side]]
              for side in ("front_end", "back_end")}
    model = ModelSplit(layers["front_end"], layers["back_end"], 0.0, header["fusion_mode"],
                       tuple(header["input_shape"]), header.get("meta", {}))
    params = model.parameters()
    for t in header["tensors"]:
        n = int(np.prod(t["shape"])) * 8
        if t["offset"] + n > len(payload):
            raise FormatError(f"{path}: payload truncated in tensor {t['name']}")
        arr = np.frombuffer(payload[t["offset"]:t["offset"] + n], dtype="<f8").reshape(t["shape"])
        if t["name"] not in params or params[t["name"]].shape != arr.shape:
            raise FormatError(f"{path}: unexpected tensor {t['name']} {arr.shape}")
        params[t["name"]][...] = arr
    return model
