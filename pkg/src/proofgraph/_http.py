"""Shared HTTP POST helper with bounded exponential-backoff retries."""

from __future__ import annotations

import logging
import time
from typing import Callable, Mapping, Sequence

import httpx

from .errors import TransportError

logger = logging.getLogger(__name__)

DEFAULT_BACKOFF: tuple[float, ...] = (1.0, 2.0, 4.0)

# Transient server-side statuses worth retrying; other 4xx are permanent.
_RETRY_STATUSES = {429, 500, 502, 503, 504}


class _Retryable(Exception):
    pass


def post_json(
    client: httpx.Client,
    url: str,
    payload: dict,
    headers: Mapping[str, str] | None = None,
    backoff: Sequence[float] = DEFAULT_BACKOFF,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[dict, int]:
    """POST a JSON payload, returning (parsed body, retry count).

    Transport failures and transient statuses are retried once per backoff
    step; anything else fails immediately.
    """
    attempts = len(backoff) + 1
    last: Exception | None = None
    for i in range(attempts):
        try:
            resp = client.post(url, json=payload, headers=dict(headers or {}))
            if resp.status_code in _RETRY_STATUSES:
                raise _Retryable(f"HTTP {resp.status_code}")
            if resp.status_code >= 400:
                raise TransportError(f"POST {url} returned HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json(), i
            except ValueError as exc:
                raise TransportError(f"POST {url} returned non-JSON body") from exc
        except (httpx.TransportError, _Retryable) as exc:
            last = exc
            if i < attempts - 1:
                logger.warning("retrying POST %s after %s (attempt %d/%d)", url, exc, i + 1, attempts)
                sleep(backoff[i])
    raise TransportError(f"POST {url} failed after {attempts} attempts: {last}")
