"""Minimal multipart/form-data parsing for the asset-upload endpoint.

Standards-compliant enough for browser FormData and httpx bodies: splits on
the boundary, reads Content-Disposition names, and returns field bytes.
Kept dependency-free because the service otherwise only needs JSON.
"""

from __future__ import annotations

import re


class MultipartError(ValueError):
    pass


_DISPOSITION = re.compile(rb"content-disposition\s*:\s*form-data\s*;(.*)", re.IGNORECASE)
_PARAM = re.compile(rb'(\w+)="([^"]*)"')


def parse_multipart(body: bytes, content_type: str) -> dict[str, bytes]:
    """Parse a multipart/form-data body into {field name: raw bytes}."""
    m = re.search(r'boundary="?([^";]+)"?', content_type)
    if not m:
        raise MultipartError("content-type lacks a multipart boundary")
    boundary = b"--" + m.group(1).encode("utf-8")
    fields: dict[str, bytes] = {}
    # Parts are delimited by CRLF--boundary; the closing delimiter ends "--".
    chunks = body.split(boundary)
    if len(chunks) < 2:
        raise MultipartError("no multipart parts found")
    for chunk in chunks[1:]:
        if chunk.startswith(b"--"):
            break  # closing delimiter
        chunk = chunk.lstrip(b"\r\n")
        sep = chunk.find(b"\r\n\r\n")
        if sep < 0:
            raise MultipartError("malformed multipart part (missing header block)")
        headers, payload = chunk[:sep], chunk[sep + 4 :]
        if payload.endswith(b"\r\n"):
            payload = payload[:-2]
        name = None
        for line in headers.split(b"\r\n"):
            dm = _DISPOSITION.match(line)
            if dm:
                params = dict(_PARAM.findall(dm.group(1)))
                if b"name" in params:
                    name = params[b"name"].decode("utf-8")
        if name is None:
            raise MultipartError("multipart part lacks a form-data name")
        fields[name] = payload
    return fields
