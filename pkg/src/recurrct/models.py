"""Recurrence-plot autoencoder and latent-embedding classifier."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .nn import losses
from .nn.layers import (Conv2d, ConvTranspose2d, Dense, Flatten, MaxPool2, ReLU, Sequential, Sigmoid,
                        layer_from_spec)
from .nn.optim import Adam
from .nn.weights import load_weights, save_weights
from .rng import SplitMix64

log = logging.getLogger(__name__)

IMAGE_SIZE = 224
LATENT_SIZE = 14
ENCODER_WIDTHS = (32, 16, 8, 1)
CONV_WIDTHS = (8, 16, 32)
DENSE_WIDTHS = (128, 64, 32, 16, 8, 2)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    epochs: int = 50
    lr: float = 1e-3
    seed: int = 0
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValidationError("test_fraction must lie in (0, 1)")


class _Model:
    """Shared parameter plumbing over an ordered list of Sequential parts."""

    parts: tuple[Sequential, ...] = ()
    name = ""

    def params(self):
        return [p for s in self.parts for p in s.params()]

    def grads(self):
        return [g for s in self.parts for g in s.grads()]

    def set_params(self, arrays):
        arrays = list(arrays)
        for s in self.parts:
            n = len(s.params())
            s.set_params(arrays[:n])
            arrays = arrays[n:]

    def named_params(self):
        return [(f"{k}.{name}", a) for k, s in enumerate(self.parts) for name, a in s.named_params()]

    def _meta(self) -> dict:
        return {}

    def save(self, path) -> None:
        layers = [{"part": k, **spec} for k, s in enumerate(self.parts) for spec in s.specs()]
        save_weights(path, layers, self.named_params(), {"model": self.name, **self._meta()})


# ------------------------------------------------------------ autoencoder

class Autoencoder(_Model):
    """Four stride-2 convolutions down to a 1x14x14 sigmoid bottleneck, mirrored back up."""

    name = "autoencoder"

    def __init__(self, encoder: Sequential, decoder: Sequential):
        self.encoder, self.decoder = encoder, decoder
        self.parts = (encoder, decoder)
        self.in_channels = encoder.input_shape[0]
        if encoder.output_shape != (1, LATENT_SIZE, LATENT_SIZE):
            raise ValidationError(f"bottleneck must be 1x14x14, got {encoder.output_shape}")
        if decoder.output_shape != encoder.input_shape:
            raise ValidationError(f"decoder output {decoder.output_shape} != input {encoder.input_shape}")

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = self.encoder(x)
        return z, self.decoder(z)

    def backward(self, grad_rec: np.ndarray, input_grad: bool = False) -> np.ndarray | None:
        return self.encoder.backward(self.decoder.backward(grad_rec), input_grad=input_grad)

    def _meta(self):
        return {"in_channels": self.in_channels}


def _encoder_layers(R: int) -> list:
    layers, c = [], R
    for k, width in enumerate(ENCODER_WIDTHS):
        layers.append(Conv2d(c, width, kernel=3, stride=2, padding=1))
        layers.append(ReLU() if k < len(ENCODER_WIDTHS) - 1 else Sigmoid())
        c = width
    return layers


def _decoder_layers(R: int) -> list:
    widths = tuple(reversed(ENCODER_WIDTHS[:-1])) + (R,)
    layers, c = [], 1
    for k, width in enumerate(widths):
        layers.append(ConvTranspose2d(c, width, kernel=2, stride=2, padding=0))
        layers.append(ReLU() if k < len(widths) - 1 else Sigmoid())
        c = width
    return layers


def build_autoencoder(R: int, seed: int = 0, image_size: int = IMAGE_SIZE) -> Autoencoder:
    if not 1 <= R <= 160:
        raise ValidationError(f"R must lie in [1, 160], got {R}")
    enc = Sequential(_encoder_layers(R), (R, image_size, image_size))
    dec = Sequential(_decoder_layers(R), (1, LATENT_SIZE, LATENT_SIZE))
    model = Autoencoder(enc, dec)
    rng = SplitMix64(seed)
    enc.init(rng.spawn(0))
    dec.init(rng.spawn(1))
    return model


def _stack(images: Sequence[np.ndarray]) -> np.ndarray:
    if not len(images):
        raise ValidationError("need at least one image")
    shapes = {np.shape(im) for im in images}
    if len(shapes) != 1:
        raise ValidationError(f"inconsistent image shapes: {sorted(shapes)}")
    return np.stack([np.asarray(im, dtype=np.float64) for im in images])


def _batches(n: int, batch_size: int, seed: int, epoch: int):
    order = SplitMix64(seed).spawn(epoch).permutation(n)
    for start in range(0, n, batch_size):
        yield order[start: start + batch_size]


def train_autoencoder(model: Autoencoder, images: Sequence[np.ndarray],
                      cfg: TrainConfig) -> list[float]:
    """Adam on the reconstruction loss over seeded shuffled minibatches.

    Returns the per-epoch mean training loss (weighted by batch size).
    """
    data = _stack(images)
    if data.shape[1] != model.in_channels:
        raise ValidationError(f"model expects {model.in_channels} channels, images have {data.shape[1]}")
    opt = Adam(model, lr=cfg.lr)
    history = []
    for epoch in range(cfg.epochs):
        total = 0.0
        for idx in _batches(len(data), cfg.batch_size, cfg.seed, epoch):
            xb = data[idx]
            _, rec = model.forward(xb)
            loss, grad = losses.ae_loss_grad(xb, rec)
            model.backward(grad)
            opt.step()
            total += loss * len(idx)
        history.append(total / len(data))
        log.info("autoencoder epoch %d/%d loss %.6f", epoch + 1, cfg.epochs, history[-1])
    return history


def encode(model: Autoencoder, image: np.ndarray) -> np.ndarray:
    """14x14 bottleneck activation of one ``(R, 224, 224)`` image."""
    x = np.asarray(image, dtype=np.float64)
    if x.shape != model.encoder.input_shape:
        raise ValidationError(f"expected image of shape {model.encoder.input_shape}, got {x.shape}")
    return model.encoder(x[None])[0, 0]


def encode_many(model: Autoencoder, images: Sequence[np.ndarray], batch_size: int = 16) -> np.ndarray:
    data = _stack(images)
    return np.concatenate([model.encoder(data[s: s + batch_size])[:, 0]
                           for s in range(0, len(data), batch_size)])


# ------------------------------------------------------------- classifier

class Classifier(_Model):
    """Three convolutions and six dense layers from a 1x14x14 embedding to two logits."""

    name = "classifier"

    def __init__(self, net: Sequential):
        self.net = net
        self.parts = (net,)
        if net.input_shape != (1, LATENT_SIZE, LATENT_SIZE) or net.output_shape != (2,):
            raise ValidationError(f"classifier must map (1,14,14) to (2,), got {net.input_shape}->{net.output_shape}")

    def forward(self, x):
        return self.net(x)

    def backward(self, grad, input_grad: bool = False):
        return self.net.backward(grad, input_grad=input_grad)


def _classifier_layers() -> list:
    c1, c2, c3 = CONV_WIDTHS
    layers = [
        Conv2d(1, c1, 3, 1, 0), ReLU(), MaxPool2(),   # 14 -> 12 -> 6
        Conv2d(c1, c2, 3, 1, 1), ReLU(), MaxPool2(),  # 6 -> 3
        Conv2d(c2, c3, 3, 1, 1), ReLU(), Flatten(),
    ]
    width = c3 * 3 * 3
    for k, out in enumerate(DENSE_WIDTHS):
        layers.append(Dense(width, out))
        if k < len(DENSE_WIDTHS) - 1:
            layers.append(ReLU())
        width = out
    return layers


def build_classifier(seed: int = 0) -> Classifier:
    model = Classifier(Sequential(_classifier_layers(), (1, LATENT_SIZE, LATENT_SIZE)))
    model.net.init(SplitMix64(seed))
    return model


def _embedding_batch(embeddings) -> np.ndarray:
    arr = np.stack([np.asarray(e, dtype=np.float64).reshape(-1) for e in embeddings])
    if arr.shape[1] != LATENT_SIZE * LATENT_SIZE:
        raise ValidationError(f"embeddings must have {LATENT_SIZE}x{LATENT_SIZE} values")
    return arr.reshape(-1, 1, LATENT_SIZE, LATENT_SIZE)


def train_classifier(model: Classifier, samples: Sequence[tuple[np.ndarray, int]],
                     cfg: TrainConfig) -> list[float]:
    """Adam on cross-entropy; ``samples`` holds ``(embedding, label)`` pairs."""
    if not samples:
        raise ValidationError("need at least one training sample")
    x = _embedding_batch([e for e, _ in samples])
    y = np.array([int(lbl) for _, lbl in samples], dtype=np.int64)
    if len(set(y.tolist())) < 2:
        raise ValidationError("classifier training needs both labels present")
    opt = Adam(model, lr=cfg.lr)
    history = []
    for epoch in range(cfg.epochs):
        total = 0.0
        for idx in _batches(len(x), cfg.batch_size, cfg.seed, epoch):
            loss, grad = losses.cross_entropy_grad(model.forward(x[idx]), y[idx])
            model.backward(grad)
            opt.step()
            total += loss * len(idx)
        history.append(total / len(x))
    return history


def predict(model: Classifier, embedding: np.ndarray) -> tuple[int, np.ndarray]:
    """Label (argmax, ties to 0) and class probabilities for one embedding."""
    probs = predict_proba(model, [embedding])[0]
    return int(np.argmax(probs)), probs


def predict_proba(model: Classifier, embeddings) -> np.ndarray:
    return losses.softmax(model.forward(_embedding_batch(embeddings)))


# ------------------------------------------------------------------ files

def load_model(path) -> Autoencoder | Classifier:
    layers, tensors, meta = load_weights(path)
    n_parts = max(spec["part"] for spec in layers) + 1
    groups = [[{k: v for k, v in s.items() if k != "part"} for s in layers if s["part"] == p]
              for p in range(n_parts)]
    if meta.get("model") == "autoencoder":
        R = int(meta["in_channels"])
        size = LATENT_SIZE * 2 ** len(ENCODER_WIDTHS)
        model = Autoencoder(Sequential([layer_from_spec(s) for s in groups[0]], (R, size, size)),
                            Sequential([layer_from_spec(s) for s in groups[1]], (1, LATENT_SIZE, LATENT_SIZE)))
    elif meta.get("model") == "classifier":
        model = Classifier(Sequential([layer_from_spec(s) for s in groups[0]], (1, LATENT_SIZE, LATENT_SIZE)))
    else:
        raise ValidationError(f"{path}: unknown model type {meta.get('model')!r}")
    expected = model.named_params()
    if [n for n, _ in tensors] != [n for n, _ in expected]:
        raise ValidationError(f"{path}: tensor names do not match the layer specs")
    for (name, arr), (_, ref) in zip(tensors, expected):
        if arr.shape != ref.shape:
            raise ValidationError(f"{path}: tensor {name} has shape {arr.shape}, expected {ref.shape}")
    model.set_params([a for _, a in tensors])
    return model
