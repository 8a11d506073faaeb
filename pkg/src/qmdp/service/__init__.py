"""HTTP service wrapping the solver library.

The FastAPI app in :mod:`qmdp.service.app` exposes one endpoint per
operation; :mod:`qmdp.service.handlers` holds the transport-free request
handlers that the CLI reuses in process.
"""

from .app import create_app

__all__ = ["create_app"]
