"""Small JSON-over-HTTP client with bounded retries and exponential backoff."""

from __future__ import annotations

import logging
import time
from typing import Any, Callable

import httpx

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


class BackendError(RuntimeError):
    """A remote backend failed; ``retryable`` tells whether retrying could help."""

    def __init__(self, message: str, retryable: bool = False, attempts: int = 0):
        super().__init__(message)
        self.retryable = retryable
        self.attempts = attempts


def post_json(
    url: str,
    payload: dict,
    *,
    headers: dict[str, str] | None = None,
    attempts: int = 3,
    backoff: float = 1.0,
    timeout: float = 30.0,
    client: httpx.Client | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> Any:
    """POST ``payload`` and return the decoded JSON body.

    Transport errors, timeouts and 408/429/5xx responses are retried up to
    ``attempts`` times, sleeping ``backoff * 2**k`` between tries.
    """
    if attempts < 1:
        raise ValueError("attempts must be >= 1")
    owns_client = client is None
    client = client or httpx.Client(timeout=timeout)
    last: str = ""
    try:
        for attempt in range(attempts):
            if attempt:
                delay = backoff * 2 ** (attempt - 1)
                logger.warning("retrying %s in %.1fs (%s)", url, delay, last)
                sleep(delay)
            try:
                resp = client.post(url, json=payload, headers=headers or {}, timeout=timeout)
            except httpx.HTTPError as exc:
                last = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code in RETRYABLE_STATUS:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise BackendError(f"{url} returned HTTP {resp.status_code}: {resp.text[:200]}", attempts=attempt + 1)
            try:
                return resp.json()
            except ValueError as exc:
                raise BackendError(f"{url} returned invalid JSON", attempts=attempt + 1) from exc
    finally:
        if owns_client:
            client.close()
    raise BackendError(f"{url} failed after {attempts} attempts ({last})", retryable=True, attempts=attempts)
