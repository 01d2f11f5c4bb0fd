"""Label embeddings and open-vocabulary querying.

The default provider derives a deterministic unit vector from a hash of the
(lowercased) label, which gives well-separated pseudo-features without any
pretrained encoder.  An external HTTP provider can be plugged in for real
text embeddings; set the BELIEF_EMBED_URL environment variable or pass a
url explicitly.  Wire protocol: POST <url>/embed with body
{"label": str, "dim": int}, response {"vector": [float, ...]}.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import urllib.error
import urllib.request

import numpy as np

from .belief import SceneBelief
from .errors import EmptyLabel, ServiceUnavailable, ShapeMismatch
from .vocab import CLASS_NAMES

DEFAULT_DIM = 16

# Salt of the shipped hash embedding; frozen after checking that all class
# pairs of the simulator vocabulary stay below |cos| = 0.5 at d = 16.
HASH_SALT = "belief3d.v0"

DEFAULT_MIN_SCORE = 0.6

ENV_URL = "BELIEF_EMBED_URL"


class EmbeddingProvider:
    """Maps labels to unit embeddings; caches every lookup.

    mode "synthetic" hashes the label; mode "external" POSTs it to a service
    and falls back to raising ServiceUnavailable on timeout or bad payload.
    Lookups are case-folded, so "Sofa" and "sofa" share one embedding.
    """

    def __init__(self, dim: int = DEFAULT_DIM, mode: str = "synthetic",
                 url: str | None = None, timeout_ms: int = 1000,
                 salt: str = HASH_SALT):
        if mode not in ("synthetic", "external"):
            raise ValueError(f"unknown provider mode {mode!r}")
        if mode == "external" and not url:
            raise ValueError("external mode requires a url")
        self.dim = int(dim)
        self.mode = mode
        self.url = url
        self.timeout_ms = int(timeout_ms)
        self.salt = salt
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def embed(self, label: str) -> np.ndarray:
        if not isinstance(label, str) or not label.strip():
            raise EmptyLabel("label must be a non-empty string")
        key = label.strip().lower()
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        if self.mode == "synthetic":
            vec = self._synthetic(key)
        else:
            vec = self._external(key)
        with self._lock:
            self._cache[key] = vec
        return vec

    def _synthetic(self, key: str) -> np.ndarray:
        digest = hashlib.blake2b((self.salt + ":" + key).encode(),
                                 digest_size=8).digest()
        seed = int.from_bytes(digest, "little")
        vec = np.random.default_rng(seed).standard_normal(self.dim)
        return vec / np.linalg.norm(vec)

    def _external(self, key: str) -> np.ndarray:
        body = json.dumps({"label": key, "dim": self.dim}).encode()
        req = urllib.request.Request(
            self.url.rstrip("/") + "/embed", data=body,
            headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_ms / 1000.0) as resp:
                if resp.status != 200:
                    raise ServiceUnavailable(f"embed service returned {resp.status}")
                payload = json.loads(resp.read().decode())
        except (urllib.error.URLError, TimeoutError, OSError, ValueError) as exc:
            raise ServiceUnavailable(f"embed service failed: {exc}") from exc
        vec = np.asarray(payload.get("vector", ()), dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ServiceUnavailable(
                f"embed service returned shape {vec.shape}, wanted ({self.dim},)")
        norm = np.linalg.norm(vec)
        if norm < 1e-12:
            raise ServiceUnavailable("embed service returned a zero vector")
        return vec / norm


_default_provider: EmbeddingProvider | None = None
_default_lock = threading.Lock()


def default_provider(dim: int = DEFAULT_DIM) -> EmbeddingProvider:
    """Process-wide shared provider; external when BELIEF_EMBED_URL is set."""
    global _default_provider
    with _default_lock:
        if _default_provider is None or _default_provider.dim != dim:
            url = os.environ.get(ENV_URL)
            if url:
                _default_provider = EmbeddingProvider(dim, "external", url)
            else:
                _default_provider = EmbeddingProvider(dim)
        return _default_provider


def embed_label(provider: EmbeddingProvider, label: str) -> np.ndarray:
    return provider.embed(label)


def class_prototypes(provider: EmbeddingProvider,
                     names=CLASS_NAMES) -> np.ndarray:
    """(C, d) prototype matrix; row 0 ("none") is the zero vector."""
    protos = np.zeros((len(names), provider.dim))
    for i, name in enumerate(names):
        if name != "none":
            protos[i] = provider.embed(name)
    return protos


def nearest_class(embeddings: np.ndarray, prototypes: np.ndarray) -> np.ndarray:
    """Classify vectors by cosine against prototypes; class 0 never wins."""
    emb = np.atleast_2d(embeddings)
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    emb = emb / np.maximum(norms, 1e-12)
    sims = emb @ prototypes.T
    sims[:, 0] = -np.inf
    return np.argmax(sims, axis=1)


def query_heatmap(semantic_image: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Per-pixel cosine similarity in [-1, 1]; zero-feature pixels score -1."""
    sem = np.asarray(semantic_image, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64).ravel()
    if sem.ndim != 3 or sem.shape[2] != q.size:
        raise ShapeMismatch(
            f"semantic image {sem.shape} incompatible with query dim {q.size}")
    q = q / np.linalg.norm(q)
    norms = np.linalg.norm(sem, axis=2)
    scores = np.where(norms > 1e-12, np.einsum("hwd,d->hw", sem, q)
                      / np.maximum(norms, 1e-12), -1.0)
    return np.clip(scores, -1.0, 1.0)


def localize(belief: SceneBelief, query: np.ndarray,
             min_score: float = DEFAULT_MIN_SCORE):
    """Best opacity-weighted cosine match among the belief's primitives.

    Returns (position, weighted_score) or None when nothing clears
    ``min_score``.  The argmax is invariant to uniform positive opacity
    scaling and to joint rotation of all embeddings and the query.
    """
    if belief.n == 0:
        return None
    q = np.asarray(query, dtype=np.float64).ravel()
    q = q / np.linalg.norm(q)
    norms = np.linalg.norm(belief.embeddings, axis=1)
    cos = (belief.embeddings @ q) / np.maximum(norms, 1e-12)
    weighted = belief.opacities * cos
    best = int(np.argmax(weighted))
    if weighted[best] < min_score:
        return None
    return belief.means[best].copy(), float(weighted[best])
