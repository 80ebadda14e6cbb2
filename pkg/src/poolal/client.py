"""Thin engine client used by the CLI.

By default requests are dispatched to the in-process ASGI application, so no
server needs to run; pass a base URL to talk to a remote `poolal serve`
instance instead (remote mode assumes the server can see the same dataset
paths).
"""

from __future__ import annotations

import asyncio
from typing import Any

import httpx

from .errors import EngineError


class ClientError(EngineError):
    """HTTP-level failure; carries the status code for exit-code mapping."""

    def __init__(self, status_code: int, detail: str):
        super().__init__(f"engine request failed ({status_code}): {detail}")
        self.status_code = status_code


def _detail(resp: httpx.Response) -> str:
    try:
        body = resp.json()
    except ValueError:
        return resp.text
    if isinstance(body, dict) and "detail" in body:
        return str(body["detail"])
    return resp.text


class EngineClient:
    def __init__(self, base_url: str | None = None):
        self.base_url = base_url

    def _post(self, path: str, payload: dict) -> Any:
        if self.base_url is None:
            return self._post_inprocess(path, payload)
        with httpx.Client(base_url=self.base_url, timeout=None) as client:
            resp = client.post(path, json=payload)
        if resp.status_code != 200:
            raise ClientError(resp.status_code, _detail(resp))
        return resp.json()

    def _post_inprocess(self, path: str, payload: dict) -> Any:
        from .service import app  # deferred: keep import cost off non-CLI paths

        async def go() -> httpx.Response:
            transport = httpx.ASGITransport(app=app)
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://engine.internal",
                                         timeout=None) as client:
                return await client.post(path, json=payload)

        resp = asyncio.run(go())
        if resp.status_code != 200:
            raise ClientError(resp.status_code, _detail(resp))
        return resp.json()

    def health(self) -> dict:
        if self.base_url is None:
            from .service import app

            async def go() -> httpx.Response:
                transport = httpx.ASGITransport(app=app)
                async with httpx.AsyncClient(transport=transport,
                                             base_url="http://engine.internal") as client:
                    return await client.get("/health")

            resp = asyncio.run(go())
        else:
            with httpx.Client(base_url=self.base_url, timeout=30.0) as client:
                resp = client.get("/health")
        if resp.status_code != 200:
            raise ClientError(resp.status_code, _detail(resp))
        return resp.json()

    def run(self, job: dict) -> dict:
        return self._post("/run", job)

    def propagate(self, job: dict) -> dict:
        return self._post("/propagate", job)

    def acquire(self, job: dict) -> dict:
        return self._post("/acquire", job)

    def agree(self, job: dict) -> dict:
        return self._post("/agree", job)

    def gen_data(self, job: dict) -> dict:
        return self._post("/gen-data", job)
