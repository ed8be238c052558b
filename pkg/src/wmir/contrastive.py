"""Multi-positive symmetric contrastive objective and a desk-scale trainer.

The loss treats every batch element sharing a caption key as a positive,
distributing equal mask weight across the group, and sums both retrieval
directions (image-to-text and text-to-image) under a single 1/B average.
Gradients are analytic so training a linear projection head needs no
autodiff dependency.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    FormatError,
    NonFiniteError,
    ShapeError,
    ZeroVectorError,
)
from .reports import CaptionKey, caption_key

__all__ = [
    "Batch",
    "ProjectionHead",
    "LogitScale",
    "HeadGrads",
    "TrainConfig",
    "build_positive_mask",
    "mp_loss",
    "single_positive_loss",
    "mp_loss_grad",
    "train_head",
    "encode",
    "init_head",
    "featurize_caption",
    "featurize_captions",
    "save_head",
    "load_head",
]

# exp(log_scale) is clamped into (0, 100]; init gives 1/tau = 1/0.07
MAX_SCALE = 100.0
INIT_LOG_SCALE = math.log(1.0 / 0.07)

_HEAD_MAGIC = b"WMHD"
_HEAD_VERSION = 1


def _as_matrix(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be a 2-D matrix, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True, slots=True)
class Batch:
    """Pre-encoded features plus the caption identity that defines positives."""

    image_features: np.ndarray
    caption_keys: tuple[CaptionKey, ...]
    text_features: np.ndarray

    def __post_init__(self) -> None:
        img = _as_matrix(self.image_features, "image_features")
        txt = _as_matrix(self.text_features, "text_features")
        object.__setattr__(self, "image_features", img)
        object.__setattr__(self, "text_features", txt)
        object.__setattr__(self, "caption_keys", tuple(self.caption_keys))
        b = img.shape[0]
        if b < 1:
            raise ShapeError("batch must contain at least one element")
        if txt.shape[0] != b or len(self.caption_keys) != b:
            raise ShapeError(
                f"row counts disagree: {b} image rows, {txt.shape[0]} text rows, "
                f"{len(self.caption_keys)} caption keys"
            )

    @property
    def size(self) -> int:
        return self.image_features.shape[0]


@dataclass(slots=True)
class ProjectionHead:
    """Linear maps taking raw features into the shared embedding space.

    Projected rows are L2-normalized before any similarity is computed.
    """

    image_map: np.ndarray
    text_map: np.ndarray

    def __post_init__(self) -> None:
        self.image_map = _as_matrix(self.image_map, "image_map")
        self.text_map = _as_matrix(self.text_map, "text_map")
        if self.image_map.shape[1] != self.text_map.shape[1]:
            raise ShapeError(
                "image_map and text_map must share an output dimension"
            )

    @property
    def d_out(self) -> int:
        return self.image_map.shape[1]

    def copy(self) -> "ProjectionHead":
        return ProjectionHead(self.image_map.copy(), self.text_map.copy())


@dataclass(slots=True)
class LogitScale:
    """Learnable inverse temperature, parameterized in log space."""

    log_scale: float = INIT_LOG_SCALE

    @property
    def scale(self) -> float:
        return min(math.exp(self.log_scale), MAX_SCALE)

    @property
    def clamped(self) -> bool:
        return math.exp(self.log_scale) >= MAX_SCALE


@dataclass(frozen=True, slots=True)
class HeadGrads:
    """Analytic gradients for one batch, with the loss at the same point."""

    image_map: np.ndarray
    text_map: np.ndarray
    log_scale: float
    loss: float


def build_positive_mask(caption_keys) -> np.ndarray:
    """Row-stochastic mask: 1/m over each caption-equality group.

    Every diagonal entry is positive (each element matches itself) and
    rows sum to one, so the mask is a proper distribution per anchor.
    """
    keys = list(caption_keys)
    b = len(keys)
    if b < 1:
        raise ShapeError("need at least one caption key")
    mask = np.zeros((b, b), dtype=np.float64)
    for i, ki in enumerate(keys):
        group = [j for j, kj in enumerate(keys) if kj == ki]
        w = 1.0 / len(group)
        for j in group:
            mask[i, j] = w
    return mask


def _check_pair(v: np.ndarray, t: np.ndarray, p: np.ndarray | None):
    v = _as_matrix(v, "v")
    t = _as_matrix(t, "t")
    if v.shape != t.shape:
        raise ShapeError(f"v and t shapes disagree: {v.shape} vs {t.shape}")
    if p is not None:
        p = _as_matrix(p, "P")
        if p.shape != (v.shape[0], v.shape[0]):
            raise ShapeError(
                f"mask shape {p.shape} does not match batch size {v.shape[0]}"
            )
    return v, t, p


def _log_softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def mp_loss(v, t, p, scale: LogitScale | float) -> float:
    """Symmetric multi-positive contrastive loss.

    Both directional cross-entropy sums are added and averaged by 1/B
    only; there is deliberately no extra division by two.
    """
    v, t, p = _check_pair(v, t, p)
    s = scale.scale if isinstance(scale, LogitScale) else float(scale)
    b = v.shape[0]
    logits = s * (v @ t.T)
    term_vt = float(np.sum(p * _log_softmax_rows(logits)))
    term_tv = float(np.sum(p.T * _log_softmax_rows(logits.T)))
    value = -(term_vt + term_tv) / b
    return value if value > 0.0 else 0.0


def single_positive_loss(v, t, scale: LogitScale | float) -> float:
    """Single-positive ablation: the diagonal is the only positive."""
    v, t, _ = _check_pair(v, t, None)
    return mp_loss(v, t, np.eye(v.shape[0]), scale)


def _project_normalize(features: np.ndarray, weight: np.ndarray):
    """Return (pre-norm projection, row norms, unit rows)."""
    pre = features @ weight
    norms = np.linalg.norm(pre, axis=1)
    if np.any(norms == 0.0):
        raise ZeroVectorError("projection produced a zero row; cannot normalize")
    return pre, norms, pre / norms[:, None]


def _normalize_backprop(grad_unit, unit, norms):
    # d/du of u/|u| applied to upstream grad g: (g - (g.v)v) / |u|
    inner = np.sum(grad_unit * unit, axis=1, keepdims=True)
    return (grad_unit - inner * unit) / norms[:, None]


def mp_loss_grad(
    batch: Batch, head: ProjectionHead, scale: LogitScale, mask=None
) -> HeadGrads:
    """Gradient of mp_loss composed with (project, L2-normalize).

    `mask` defaults to the multi-positive mask of the batch's caption
    keys; pass an identity matrix for the single-positive ablation. The
    log_scale gradient is zero while the exp clamp is active.
    """
    x, c = batch.image_features, batch.text_features
    if x.shape[1] != head.image_map.shape[0]:
        raise ShapeError(
            f"image feature dim {x.shape[1]} != head input dim "
            f"{head.image_map.shape[0]}"
        )
    if c.shape[1] != head.text_map.shape[0]:
        raise ShapeError(
            f"text feature dim {c.shape[1]} != head input dim "
            f"{head.text_map.shape[0]}"
        )
    p = build_positive_mask(batch.caption_keys) if mask is None else mask
    p = _as_matrix(p, "P")
    b = batch.size
    if p.shape != (b, b):
        raise ShapeError(f"mask shape {p.shape} does not match batch size {b}")

    s = scale.scale
    u_img, n_img, v = _project_normalize(x, head.image_map)
    u_txt, n_txt, t = _project_normalize(c, head.text_map)

    sims = v @ t.T
    logits = s * sims
    log_a = _log_softmax_rows(logits)
    log_ap = _log_softmax_rows(logits.T)
    loss = -(float(np.sum(p * log_a)) + float(np.sum(p.T * log_ap))) / b
    if loss <= 0.0:
        loss = 0.0

    # dLoss/dlogits: rows of P sum to 1, so each softmax contributes A - P
    a = np.exp(log_a)
    ap = np.exp(log_ap)
    g_logits = ((a - p) + (ap - p.T).T) / b

    grad_v = s * (g_logits @ t)
    grad_t = s * (g_logits.T @ v)
    grad_u_img = _normalize_backprop(grad_v, v, n_img)
    grad_u_txt = _normalize_backprop(grad_t, t, n_txt)

    d_log_scale = 0.0
    if not scale.clamped:
        d_log_scale = s * float(np.sum(g_logits * sims))

    return HeadGrads(
        image_map=x.T @ grad_u_img,
        text_map=c.T @ grad_u_txt,
        log_scale=d_log_scale,
        loss=loss,
    )


# --- caption featurization ----------------------------------------------------

def _hash_bucket(token: str, dim: int) -> tuple[int, float]:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    value = int.from_bytes(digest, "little")
    return (value >> 1) % dim, 1.0 if value & 1 else -1.0


def featurize_caption(caption: str, dim: int = 64) -> np.ndarray:
    """Deterministic signed bag-of-words hashing of a caption.

    Captions equal under caption_key normalization map to identical
    feature vectors, which keeps the positive structure of training data
    intact without a learned text encoder.
    """
    if dim < 1:
        raise ConfigError("feature dim must be >= 1")
    text = caption_key(caption).normalized_text
    tokens = text.split()
    vec = np.zeros(dim, dtype=np.float64)
    for tok in tokens:
        idx, sign = _hash_bucket(tok, dim)
        vec[idx] += sign
    for first, second in zip(tokens, tokens[1:]):
        idx, sign = _hash_bucket(first + "\x1f" + second, dim)
        vec[idx] += sign
    return vec


def featurize_captions(captions, dim: int = 64) -> np.ndarray:
    return np.stack([featurize_caption(c, dim) for c in captions])


# --- trainer ------------------------------------------------------------------

def init_head(d_in: int, d_out: int = 512, seed: int = 0) -> ProjectionHead:
    """Scaled uniform random initialization with a fixed seed."""
    if d_in < 1 or d_out < 1:
        raise ConfigError("head dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    bound = 1.0 / math.sqrt(d_in)
    return ProjectionHead(
        image_map=rng.uniform(-bound, bound, size=(d_in, d_out)),
        text_map=rng.uniform(-bound, bound, size=(d_in, d_out)),
    )


@dataclass(frozen=True, slots=True)
class TrainConfig:
    lr: float = 1e-5
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    loss: str = "mp"
    d_out: int = 512

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.loss not in ("mp", "single_positive"):
            raise ConfigError(f"unknown loss '{self.loss}'")
        if self.d_out < 1:
            raise ConfigError("d_out must be >= 1")


def train_head(
    features,
    captions,
    config: TrainConfig = TrainConfig(),
) -> tuple[ProjectionHead, LogitScale, list[float]]:
    """Mini-batch gradient descent on the contrastive objective.

    `features` are frozen image features (n x d_in); `captions` the
    paired caption strings. Text features come from the deterministic
    caption featurizer at the same input dimension, so both maps share
    d_in. Returns per-epoch mean loss; deterministic given the seed.
    """
    x = _as_matrix(features, "features")
    caps = list(captions)
    n = x.shape[0]
    if n == 0:
        raise ConfigError("training dataset is empty")
    if len(caps) != n:
        raise ShapeError(f"{n} feature rows but {len(caps)} captions")
    keys = tuple(caption_key(c) for c in caps)
    text_feats = featurize_captions(caps, x.shape[1])

    head = init_head(x.shape[1], config.d_out, seed=config.seed)
    scale = LogitScale()
    identity_mask = config.loss == "single_positive"

    rng = np.random.default_rng(config.seed + 1)
    curve: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = Batch(
                image_features=x[idx],
                caption_keys=tuple(keys[i] for i in idx),
                text_features=text_feats[idx],
            )
            mask = np.eye(len(idx)) if identity_mask else None
            grads = mp_loss_grad(batch, head, scale, mask=mask)
            head.image_map -= config.lr * grads.image_map
            head.text_map -= config.lr * grads.text_map
            scale.log_scale -= config.lr * grads.log_scale
            total += grads.loss * len(idx)
        curve.append(total / n)
    return head, scale, curve


def encode(head: ProjectionHead, features, side: str = "image", scale=None):
    """Project features through one head map and L2-normalize.

    `scale` is accepted for interface symmetry but does not change the
    embedding: similarity scaling only matters inside the loss.
    """
    del scale
    if side == "image":
        weight = head.image_map
    elif side == "text":
        weight = head.text_map
    else:
        raise ConfigError(f"unknown side '{side}'")
    arr = np.asarray(features, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != weight.shape[0]:
        raise ShapeError(
            f"feature dim {arr.shape[-1]} does not match head input "
            f"dim {weight.shape[0]}"
        )
    pre = arr @ weight
    norms = np.linalg.norm(pre, axis=1)
    if np.any(norms == 0.0):
        raise ZeroVectorError("projection produced a zero vector")
    out = (pre / norms[:, None]).astype(np.float32)
    return out[0] if single else out


# --- persistence --------------------------------------------------------------

def save_head(path, head: ProjectionHead, scale: LogitScale) -> None:
    """Binary head file: WMHD magic, dims, log_scale, float32 LE blocks."""
    d_in_img = head.image_map.shape[0]
    d_in_txt = head.text_map.shape[0]
    with open(path, "wb") as fh:
        fh.write(_HEAD_MAGIC)
        fh.write(
            struct.pack(
                "<IIIId",
                _HEAD_VERSION,
                d_in_img,
                d_in_txt,
                head.d_out,
                scale.log_scale,
            )
        )
        fh.write(np.ascontiguousarray(head.image_map, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(head.text_map, dtype="<f4").tobytes())


def load_head(path) -> tuple[ProjectionHead, LogitScale]:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != _HEAD_MAGIC:
        raise FormatError("not a projection head file (bad magic)")
    header_size = 4 + struct.calcsize("<IIIId")
    if len(data) < header_size:
        raise FormatError("truncated head header")
    version, d_img, d_txt, d_out, log_scale = struct.unpack(
        "<IIIId", data[4:header_size]
    )
    if version != _HEAD_VERSION:
        raise FormatError(f"unsupported head format version {version}")
    expected = header_size + 4 * d_out * (d_img + d_txt)
    if len(data) != expected:
        raise FormatError(
            f"head payload size mismatch: expected {expected} bytes, "
            f"got {len(data)}"
        )
    if not math.isfinite(log_scale):
        raise FormatError("non-finite log_scale in head file")
    offset = header_size
    img = np.frombuffer(
        data, dtype="<f4", count=d_img * d_out, offset=offset
    ).reshape(d_img, d_out)
    offset += 4 * d_img * d_out
    txt = np.frombuffer(
        data, dtype="<f4", count=d_txt * d_out, offset=offset
    ).reshape(d_txt, d_out)
    head = ProjectionHead(
        image_map=img.astype(np.float64), text_map=txt.astype(np.float64)
    )
    return head, LogitScale(log_scale)
