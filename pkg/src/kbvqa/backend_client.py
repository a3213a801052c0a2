"""HTTP client for an external model-backend sidecar.

The sidecar exposes text encoding, per-clip visual features, and
detector vocabularies over JSON/HTTP.  This client validates every
response shape before handing arrays to the core; a malformed response
is an error, never a warning.
"""

from __future__ import annotations

import numpy as np
import requests

from .encoding import EncoderProfile
from .errors import BackendError, ContractViolationError, FeatureKindError
from .reasoning import VisualFeatures

DEFAULT_TIMEOUT = 30.0


class HttpEncoderClient:
    """Thin JSON/HTTP wrapper around the model-backend endpoints."""

    def __init__(self, base_url: str, timeout: float = DEFAULT_TIMEOUT, session=None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        url = self.base_url + path
        try:
            response = self.session.request(
                method, url, json=payload, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise BackendError(
                f"backend at {self.base_url} unreachable ({exc}); "
                f"is the sidecar running?"
            ) from exc
        if response.status_code == 400:
            raise ContractViolationError(
                f"{path}: backend rejected the request ({response.text.strip()})"
            )
        if response.status_code == 501:
            raise FeatureKindError(
                f"{path}: capability not deployed on this backend"
            )
        if response.status_code >= 400:
            raise BackendError(
                f"{path}: backend returned HTTP {response.status_code} "
                f"({response.text.strip()[:200]})"
            )
        try:
            return response.json()
        except ValueError as exc:
            raise BackendError(f"{path}: non-JSON response") from exc

    def encode(self, texts: list[str], mode: str = "cls", budget: int = 512) -> np.ndarray:
        """Batch-encode texts; returns a (len(texts), dim) float array."""
        data = self._request(
            "POST",
            "/encode",
            {"texts": list(texts), "mode": mode, "budget": int(budget)},
        )
        try:
            dim = int(data["dim"])
            vectors = np.asarray(data["vectors"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractViolationError(f"/encode: malformed response ({exc})") from exc
        if vectors.shape != (len(texts), dim):
            raise ContractViolationError(
                f"/encode: expected shape ({len(texts)}, {dim}), got {vectors.shape}"
            )
        return vectors

    def features(self, clip_ref: str, kind: str, n_f: int = 5) -> VisualFeatures:
        """Fetch one clip's visual features of the requested kind."""
        data = self._request(
            "POST",
            "/features",
            {"clip_ref": clip_ref, "kind": kind, "n_f": int(n_f)},
        )
        try:
            features = VisualFeatures(
                kind=data["kind"], raw=data["data"], n_f=int(data["n_f"])
            )
        except (KeyError, TypeError, ValueError, FeatureKindError) as exc:
            raise ContractViolationError(
                f"/features: malformed response for {clip_ref!r} ({exc})"
            ) from exc
        if features.kind != kind:
            raise ContractViolationError(
                f"/features: asked for kind {kind!r}, got {features.kind!r}"
            )
        return features

    def vocab(self, kind: str) -> list[str]:
        """Ordered detector vocabulary ("concepts" or "faces")."""
        data = self._request("GET", f"/vocab?kind={kind}")
        entries = data.get("entries")
        if not isinstance(entries, list) or not all(
            isinstance(e, str) for e in entries
        ):
            raise ContractViolationError("/vocab: entries must be a list of strings")
        return entries

    def healthz(self) -> dict:
        """Service health: status, backend id, and capability metadata."""
        return self._request("GET", "/healthz")

    def profile(self) -> EncoderProfile:
        """Encoder profile advertised by the backend's health endpoint."""
        info = self.healthz()
        try:
            return EncoderProfile(
                backend_id=str(info["backend_id"]),
                dim=int(info["capabilities"]["dim"]),
                kind="external-service",
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractViolationError(
                f"/healthz: missing backend_id or dim ({exc})"
            ) from exc
