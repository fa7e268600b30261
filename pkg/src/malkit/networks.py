"""Parameter containers and forward passes: encoder, cosine classifier,
labeledness discriminator, and the task model trained on acquired labels."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import tensorcore as tc
from .errors import ConfigError, ShapeError
from .tensorcore import DiffNode

DEFAULT_TEMPERATURE = 0.05
DEFAULT_ENCODER_HIDDEN = (64,)
DEFAULT_LATENT_DIM = 32
DEFAULT_DISC_HIDDEN = (32, 16)


def init_params(seed: int, dims) -> list[tuple[DiffNode, DiffNode]]:
    """Xavier-uniform weights and zero biases for an MLP with the given layer sizes.

    dims = [in, h1, ..., out].  Deterministic in seed.
    """
    dims = [int(d) for d in dims]
    if len(dims) < 2:
        raise ConfigError("init_params: need at least an input and an output size")
    if any(d < 1 for d in dims):
        raise ConfigError(f"init_params: all layer sizes must be >= 1, got {dims}")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = DiffNode(rng.uniform(-bound, bound, size=(fan_in, fan_out)),
                     requires_grad=True, op="param")
        b = DiffNode(np.zeros((1, fan_out)), requires_grad=True, op="param")
        layers.append((w, b))
    return layers


def _mlp_forward(layers, x: DiffNode, hidden_activation=tc.relu,
                 final_activation=None) -> DiffNode:
    h = x
    for i, (w, b) in enumerate(layers):
        h = tc.add(tc.matmul(h, w), b)
        if i < len(layers) - 1:
            h = hidden_activation(h)
        elif final_activation is not None:
            h = final_activation(h)
    return h


@dataclass
class EncoderParams:
    """MLP input_dim -> hidden -> d with relu between layers, linear output."""

    layers: list[tuple[DiffNode, DiffNode]]
    dims: tuple[int, ...]

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def latent_dim(self) -> int:
        return self.dims[-1]

    def parameters(self) -> list[DiffNode]:
        return [p for pair in self.layers for p in pair]


def init_encoder(seed: int, input_dim: int, hidden=DEFAULT_ENCODER_HIDDEN,
                 latent_dim: int = DEFAULT_LATENT_DIM) -> EncoderParams:
    dims = (int(input_dim), *(int(h) for h in hidden), int(latent_dim))
    return EncoderParams(layers=init_params(seed, dims), dims=dims)


def encode(enc: EncoderParams, x) -> DiffNode:
    """Raw (pre-normalization) latent features, n x d."""
    if not isinstance(x, DiffNode):
        x = tc.constant(x)
    if x.value.shape[1] != enc.input_dim:
        raise ShapeError(f"encode: expected {enc.input_dim} input columns, "
                         f"got {x.value.shape[1]}")
    return _mlp_forward(enc.layers, x)


@dataclass
class PrototypeClassifier:
    """Per-class prototype columns W (d x K) scored by cosine similarity / T."""

    weights: DiffNode
    temperature: float
    normalize_prototypes: bool = True

    @property
    def latent_dim(self) -> int:
        return self.weights.value.shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights.value.shape[1]

    def parameters(self) -> list[DiffNode]:
        return [self.weights]

    def renormalize(self) -> None:
        """Project prototype columns back to unit norm (normalized mode only).

        Columns already unit to within 1e-12 are left untouched, which makes
        the projection idempotent: a frozen classifier stays bitwise frozen.
        """
        if not self.normalize_prototypes:
            return
        w = self.weights.value
        norms = np.maximum(np.linalg.norm(w, axis=0, keepdims=True), 1e-12)
        np.divide(w, norms, out=w, where=np.abs(norms - 1.0) > 1e-12)


def init_classifier(seed: int, latent_dim: int, n_classes: int,
                    temperature: float = DEFAULT_TEMPERATURE,
                    normalize_prototypes: bool = True) -> PrototypeClassifier:
    if n_classes < 2:
        raise ConfigError(f"init_classifier: need K >= 2, got {n_classes}")
    if temperature <= 0:
        raise ConfigError("init_classifier: temperature must be positive")
    (w, _b), = init_params(seed, [latent_dim, n_classes])
    clf = PrototypeClassifier(weights=w, temperature=float(temperature),
                              normalize_prototypes=normalize_prototypes)
    clf.renormalize()
    return clf


def cosine_logits(clf: PrototypeClassifier, normalized_feats: DiffNode) -> DiffNode:
    """Logits for features that are already row-normalized."""
    if normalized_feats.value.shape[1] != clf.latent_dim:
        raise ShapeError(f"classify: feature dim {normalized_feats.value.shape[1]} "
                         f"!= prototype dim {clf.latent_dim}")
    return tc.scale(tc.matmul(normalized_feats, clf.weights), 1.0 / clf.temperature)


def classify(clf: PrototypeClassifier, feats: DiffNode) -> DiffNode:
    """Cosine logits n x K; the input rows are l2-normalized first."""
    if not isinstance(feats, DiffNode):
        feats = tc.constant(feats)
    return cosine_logits(clf, tc.l2_normalize_rows(feats))


@dataclass
class DiscriminatorParams:
    """3-layer MLP d -> h1 -> h2 -> 1 with relu between and sigmoid output."""

    layers: list[tuple[DiffNode, DiffNode]]
    dims: tuple[int, ...]

    def parameters(self) -> list[DiffNode]:
        return [p for pair in self.layers for p in pair]


def init_discriminator(seed: int, latent_dim: int,
                       hidden=DEFAULT_DISC_HIDDEN) -> DiscriminatorParams:
    dims = (int(latent_dim), *(int(h) for h in hidden), 1)
    return DiscriminatorParams(layers=init_params(seed, dims), dims=dims)


def discriminate(disc: DiscriminatorParams, feats: DiffNode) -> DiffNode:
    """Labeledness probabilities n x 1, strictly in (0, 1).

    Expects l2-normalized feature rows (the same normalization the
    classifier sees); 1 means predicted labeled.
    """
    if not isinstance(feats, DiffNode):
        feats = tc.constant(feats)
    if feats.value.shape[1] != disc.dims[0]:
        raise ShapeError(f"discriminate: feature dim {feats.value.shape[1]} "
                         f"!= discriminator input dim {disc.dims[0]}")
    return _mlp_forward(disc.layers, feats, final_activation=tc.sigmoid)


@dataclass
class TaskModelParams:
    """Encoder-shaped backbone plus an unconstrained linear head d -> K."""

    backbone: EncoderParams
    head_w: DiffNode
    head_b: DiffNode

    @property
    def n_classes(self) -> int:
        return self.head_w.value.shape[1]

    def parameters(self) -> list[DiffNode]:
        return self.backbone.parameters() + [self.head_w, self.head_b]


def init_task_model(seed: int, input_dim: int, n_classes: int,
                    hidden=DEFAULT_ENCODER_HIDDEN,
                    latent_dim: int = DEFAULT_LATENT_DIM) -> TaskModelParams:
    backbone = init_encoder(seed, input_dim, hidden, latent_dim)
    (hw, hb), = init_params(seed + 1, [latent_dim, n_classes])
    return TaskModelParams(backbone=backbone, head_w=hw, head_b=hb)


def copy_backbone(task: TaskModelParams, enc: EncoderParams) -> None:
    """Copy encoder weights into the task backbone; shapes must match."""
    if task.backbone.dims != enc.dims:
        raise ShapeError(f"copy_backbone: backbone dims {task.backbone.dims} "
                         f"!= encoder dims {enc.dims}")
    for (tw, tb), (ew, eb) in zip(task.backbone.layers, enc.layers):
        tw.value[...] = ew.value
        tb.value[...] = eb.value


def task_forward(task: TaskModelParams, x) -> DiffNode:
    """Class probabilities n x K from the linear head (no cosine, no T)."""
    feats = encode(task.backbone, x)
    logits = tc.add(tc.matmul(feats, task.head_w), task.head_b)
    return tc.softmax_rows(logits)


@dataclass
class ModelBundle:
    """The trainable pieces of one active-learning session."""

    encoder: EncoderParams
    classifier: PrototypeClassifier
    discriminator: DiscriminatorParams
    task: TaskModelParams | None = None
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Portable save/load: JSON with a shape header and row-major float64 values.
# Python's repr round-trips IEEE doubles exactly, so text is loss-free.


def _arr_to_json(a: np.ndarray) -> dict:
    return {"shape": list(a.shape),
            "data": [repr(float(v)) for v in a.ravel()]}


def _arr_from_json(d: dict) -> np.ndarray:
    return np.array([float(v) for v in d["data"]],
                    dtype=np.float64).reshape(d["shape"])


def _layers_to_json(layers) -> list:
    return [[_arr_to_json(w.value), _arr_to_json(b.value)] for w, b in layers]


def _layers_from_json(entries) -> list[tuple[DiffNode, DiffNode]]:
    return [(DiffNode(_arr_from_json(w), requires_grad=True, op="param"),
             DiffNode(_arr_from_json(b), requires_grad=True, op="param"))
            for w, b in entries]


def save_bundle(bundle: ModelBundle, path) -> None:
    doc = {
        "format": "malkit-params-v1",
        "encoder": {"dims": list(bundle.encoder.dims),
                    "layers": _layers_to_json(bundle.encoder.layers)},
        "classifier": {"temperature": bundle.classifier.temperature,
                       "normalize_prototypes": bundle.classifier.normalize_prototypes,
                       "weights": _arr_to_json(bundle.classifier.weights.value)},
        "discriminator": {"dims": list(bundle.discriminator.dims),
                          "layers": _layers_to_json(bundle.discriminator.layers)},
        "meta": bundle.meta,
    }
    if bundle.task is not None:
        doc["task"] = {"backbone_dims": list(bundle.task.backbone.dims),
                       "backbone": _layers_to_json(bundle.task.backbone.layers),
                       "head_w": _arr_to_json(bundle.task.head_w.value),
                       "head_b": _arr_to_json(bundle.task.head_b.value)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_bundle(path) -> ModelBundle:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "malkit-params-v1":
        raise ConfigError(f"unrecognized parameter file format in {path}")
    enc = EncoderParams(layers=_layers_from_json(doc["encoder"]["layers"]),
                        dims=tuple(doc["encoder"]["dims"]))
    clf = PrototypeClassifier(
        weights=DiffNode(_arr_from_json(doc["classifier"]["weights"]),
                         requires_grad=True, op="param"),
        temperature=float(doc["classifier"]["temperature"]),
        normalize_prototypes=bool(doc["classifier"]["normalize_prototypes"]))
    disc = DiscriminatorParams(layers=_layers_from_json(doc["discriminator"]["layers"]),
                               dims=tuple(doc["discriminator"]["dims"]))
    task = None
    if "task" in doc:
        backbone = EncoderParams(layers=_layers_from_json(doc["task"]["backbone"]),
                                 dims=tuple(doc["task"]["backbone_dims"]))
        task = TaskModelParams(
            backbone=backbone,
            head_w=DiffNode(_arr_from_json(doc["task"]["head_w"]),
                            requires_grad=True, op="param"),
            head_b=DiffNode(_arr_from_json(doc["task"]["head_b"]),
                            requires_grad=True, op="param"))
    return ModelBundle(encoder=enc, classifier=clf, discriminator=disc,
                       task=task, meta=doc.get("meta", {}))
