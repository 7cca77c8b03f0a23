"""
Toy federated learning for the marketplace.

Linear regression with squared-error loss, trained by full-batch gradient
descent on each cloud owner's chunk, aggregated by weighted federated
averaging. Model transport uses a key-derived mask standing in for the
homomorphic encryption a production marketplace would use.

SECURITY: the mask is NOT cryptography. It is an exact, linear
transformation (coordinate permutation, sign flips and power-of-two scaling)
chosen so that every numeric identity of the protocol stays bit-exact. It
only keeps the plaintext weights from appearing verbatim in transport.
"""
import logging
import math
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator

from .encoding import canonical_bytes, seed_int, sha256, sha256_hex
from .exceptions import BadWeight, DimensionMismatch, EmptyChunk, EmptyModelSet, WrongKey

# Configure logging
logger = logging.getLogger(__name__)

# Exponent range of the per-coordinate power-of-two scale
MASK_MAX_SHIFT = 8


class TrainingSpec(BaseModel):
    """How each cloud owner trains: the Mod asset's training method record."""
    learning_rate: float = Field(gt=0)
    local_epochs: int = Field(ge=0)
    loss: str = "squared-error"
    mask_key_ref: str = ""

    @field_validator("loss")
    @classmethod
    def validate_loss(cls, v):
        if v != "squared-error":
            raise ValueError("only squared-error loss is supported")
        return v


class ModelParams(BaseModel):
    """Weights of the linear model, bias last."""
    weights: List[float]

    @field_validator("weights")
    @classmethod
    def validate_finite(cls, v):
        if not all(math.isfinite(w) for w in v):
            raise ValueError("weights must be finite")
        return v

    @property
    def dim(self) -> int:
        return len(self.weights)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ModelParams":
        return cls(weights=[float(x) for x in arr])

    @classmethod
    def zeros(cls, features: int) -> "ModelParams":
        return cls(weights=[0.0] * (features + 1))


class MaskedModel(BaseModel):
    """Model file as stored in the object store and hashed on-chain."""
    masked_weights: List[float]
    mask_id: str
    sample_count: int = Field(default=0, ge=0)

    def to_bytes(self) -> bytes:
        return canonical_bytes(self.model_dump(mode="json"))

    @classmethod
    def from_bytes(cls, data: bytes) -> "MaskedModel":
        return cls.model_validate_json(data)


def _design(rows: Sequence[Tuple[Sequence[float], float]], dim: int) -> Tuple[np.ndarray, np.ndarray]:
    """Stack rows into an augmented design matrix (bias column last) and targets."""
    if not rows:
        raise EmptyChunk("cannot train or evaluate on an empty chunk")
    features = dim - 1
    for x, _ in rows:
        if len(x) != features:
            raise DimensionMismatch(f"row has {len(x)} features, model expects {features}")
    X = np.ones((len(rows), dim), dtype=np.float64)
    X[:, :features] = np.asarray([x for x, _ in rows], dtype=np.float64).reshape(len(rows), features)
    y = np.asarray([float(label) for _, label in rows], dtype=np.float64)
    return X, y


def gradient(p: ModelParams, rows: Sequence[Tuple[Sequence[float], float]]) -> np.ndarray:
    """Gradient of the mean squared error: (2/N) * X^T (Xw - y)."""
    X, y = _design(rows, p.dim)
    residual = X @ p.as_array() - y
    return (2.0 / len(rows)) * (X.T @ residual)


def local_train(p: ModelParams, rows: Sequence[Tuple[Sequence[float], float]], spec: TrainingSpec) -> ModelParams:
    """Run spec.local_epochs full-batch gradient steps on one chunk.

    Rows are consumed in the order given (chunks keep original row order), so
    replicas holding identical chunks produce identical weights.
    """
    X, y = _design(rows, p.dim)
    w = p.as_array()
    scale = 2.0 / len(rows)
    for _ in range(spec.local_epochs):
        residual = X @ w - y
        w = w - spec.learning_rate * (scale * (X.T @ residual))
    return ModelParams.from_array(w)


def fed_average(models: Sequence[Tuple[ModelParams, float]]) -> ModelParams:
    """Coordinate-wise weighted mean of the given models."""
    if not models:
        raise EmptyModelSet("nothing to average")
    dim = models[0][0].dim
    total = 0.0
    acc = np.zeros(dim, dtype=np.float64)
    for params, weight in models:
        if params.dim != dim:
            raise DimensionMismatch(f"model has {params.dim} weights, expected {dim}")
        if weight <= 0:
            raise BadWeight(f"aggregation weights must be positive, got {weight}")
        acc = acc + weight * params.as_array()
        total += weight
    return ModelParams.from_array(acc / total)


def evaluate(p: ModelParams, rows: Sequence[Tuple[Sequence[float], float]]) -> float:
    """Mean squared error of p on rows."""
    X, y = _design(rows, p.dim)
    residual = X @ p.as_array() - y
    return float(np.mean(residual * residual))


def _mask_plan(key: bytes, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed_int(b"mask|" + key))
    perm = rng.permutation(dim)
    signs = rng.choice(np.array([-1.0, 1.0]), size=dim)
    shifts = rng.integers(-MASK_MAX_SHIFT, MASK_MAX_SHIFT + 1, size=dim)
    return perm, signs * np.ldexp(1.0, shifts)


def mask_id_for(key: bytes) -> str:
    """Public reference to a key; lets the holder notice a key mix-up."""
    return sha256_hex(b"mask-id|", key)[:16]


def mask(p: ModelParams, key: bytes, sample_count: int = 0) -> MaskedModel:
    """Seal p for transport."""
    perm, factors = _mask_plan(key, p.dim)
    masked = (p.as_array() * factors)[perm]
    return MaskedModel(
        masked_weights=[float(x) for x in masked],
        mask_id=mask_id_for(key),
        sample_count=sample_count,
    )


def unmask(mm: MaskedModel, key: bytes) -> ModelParams:
    """Open a masked model. Raises WrongKey when the key reference differs."""
    if mm.mask_id != mask_id_for(key):
        raise WrongKey(f"model sealed with {mm.mask_id}, key is {mask_id_for(key)}")
    return unmask_unchecked(mm, key)


def unmask_unchecked(mm: MaskedModel, key: bytes) -> ModelParams:
    """Apply the inverse transformation without checking the key reference."""
    dim = len(mm.masked_weights)
    perm, factors = _mask_plan(key, dim)
    plain = np.empty(dim, dtype=np.float64)
    plain[perm] = np.asarray(mm.masked_weights, dtype=np.float64)
    return ModelParams.from_array(plain / factors)


def model_hash(mm: MaskedModel, nonce: bytes) -> str:
    """SHA-256 over the model file bytes followed by the nonce."""
    return sha256(mm.to_bytes(), nonce).hex()
