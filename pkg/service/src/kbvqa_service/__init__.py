"""HTTP sidecar serving text encodings and per-clip visual features.

The service speaks the JSON wire protocol the ``kbvqa`` core consumes:
``POST /encode`` for sentence vectors, ``POST /features`` for clip-level
visual features, ``GET /vocab`` for detector vocabularies, and
``GET /healthz`` for capability discovery.  Stub mode reimplements the
core's deterministic reference encoder bit for bit, so integration
tests run without any model weights; full mode is the deployment shell
for real models and feature stores.
"""

from .app import ServiceConfig, create_app

__version__ = "0.1.0"

__all__ = ["ServiceConfig", "create_app"]
