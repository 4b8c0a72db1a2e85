"""Client for an external cue service, with an on-disk cue-file cache.

Request (JSON body, POST)::

    {"video": "v0000", "frame": 3, "vocabulary": {"objects": [...], "attention": [...], ...}}

The response body is one cue record in the same schema as a cue-file line.
"""
from __future__ import annotations

import json
from pathlib import Path

import httpx

from .formats import ParseError, cues_to_record, load_cues, record_to_cues, save_cues
from .records import FrameCues
from .vocab import Vocabulary, VocabularyError


class CueServiceError(RuntimeError):
    retryable = False


class CueServiceTimeout(CueServiceError):
    retryable = True


class CueServiceConnectionError(CueServiceError):
    retryable = True


class CueServiceStatusError(CueServiceError):
    def __init__(self, message: str, status: int):
        super().__init__(message)
        self.status = status
        self.retryable = status >= 500 or status == 429


class CueSchemaError(CueServiceError):
    retryable = False


def _cached(cache_path: Path, video: str, frame: int) -> FrameCues | None:
    if not cache_path.exists():
        return None
    for fc in load_cues(cache_path):
        if fc.video == video and fc.frame == frame:
            return fc
    return None


def _append_cache(cache_path: Path, fc: FrameCues) -> None:
    existing = load_cues(cache_path) if cache_path.exists() else []
    save_cues(cache_path, existing + [fc])


def _request(client: httpx.Client, endpoint: str, payload: dict, timeout: float) -> dict:
    try:
        resp = client.post(endpoint, json=payload, timeout=timeout)
    except httpx.TimeoutException as exc:
        raise CueServiceTimeout(f"{endpoint}: timed out ({exc})") from None
    except httpx.TransportError as exc:
        raise CueServiceConnectionError(f"{endpoint}: connection failed ({exc})") from None
    if resp.status_code != 200:
        raise CueServiceStatusError(f"{endpoint}: HTTP {resp.status_code}", resp.status_code)
    try:
        body = resp.json()
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise CueSchemaError(f"{endpoint}: response is not valid JSON") from None
    if not isinstance(body, dict):
        raise CueSchemaError(f"{endpoint}: response must be a JSON object")
    return body


def fetch_cues_remote(endpoint: str, video: str, frame: int, vocab: Vocabulary, cache_path: str | Path | None = None,
                      client: httpx.Client | None = None, retries: int = 2, timeout: float = 10.0) -> FrameCues:
    """Fetch one frame's cues, serving from ``cache_path`` when already present.

    Timeouts, connection failures and 5xx replies are retried up to ``retries``
    extra times; the last error is raised with its ``retryable`` flag. Nothing
    is written to the cache unless the response parses completely.
    """
    cache = Path(cache_path) if cache_path is not None else None
    if cache is not None:
        hit = _cached(cache, video, frame)
        if hit is not None:
            return hit
    own = client is None
    client = client or httpx.Client()
    payload = {"video": video, "frame": frame, "vocabulary": vocab.to_dict()}
    try:
        last: CueServiceError | None = None
        for _ in range(retries + 1):
            try:
                body = _request(client, endpoint, payload, timeout)
                break
            except CueServiceError as exc:
                last = exc
                if not exc.retryable:
                    raise
        else:
            assert last is not None
            raise last
    finally:
        if own:
            client.close()
    try:
        fc = record_to_cues(body, f"{endpoint} response", vocab)
    except (ParseError, VocabularyError) as exc:
        raise CueSchemaError(str(exc)) from None
    if (fc.video, fc.frame) != (video, frame):
        raise CueSchemaError(f"{endpoint}: response is for {fc.video}/{fc.frame}, asked for {video}/{frame}")
    if cache is not None:
        _append_cache(cache, fc)
    return fc


def serve_record(fc: FrameCues) -> dict:
    """The response body a conforming service would send for ``fc``."""
    return cues_to_record(fc)
