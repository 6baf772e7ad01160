"""Binary AndroidManifest.xml parsing.

Android compiles the manifest into a chunked binary XML format: an outer XML
chunk containing a string pool, an optional resource map, and a stream of
namespace/element chunks whose attributes index into the pool. This module
decodes just enough of that format to recover the manifest declarations the
feature extractor needs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .errors import MalformedManifest

RES_STRING_POOL_TYPE = 0x0001
RES_XML_TYPE = 0x0003
RES_XML_START_NAMESPACE = 0x0100
RES_XML_END_NAMESPACE = 0x0101
RES_XML_START_ELEMENT = 0x0102
RES_XML_END_ELEMENT = 0x0103
RES_XML_CDATA = 0x0104
RES_XML_RESOURCE_MAP = 0x0180

UTF8_FLAG = 1 << 8
TYPE_STRING = 0x03

_COMPONENT_TAGS = ("activity", "activity-alias", "service", "receiver", "provider")
_PERMISSION_TAGS = ("uses-permission", "uses-permission-sdk-23")


@dataclass
class ManifestModel:
    """Declarations recovered from one manifest."""

    package: str | None = None
    permissions: list[str] = field(default_factory=list)
    features: list[str] = field(default_factory=list)
    components: list[str] = field(default_factory=list)
    intent_filters: list[str] = field(default_factory=list)


class _Buf:
    def __init__(self, data: bytes) -> None:
        self.data = data

    def _need(self, offset: int, n: int) -> None:
        if offset < 0 or offset + n > len(self.data):
            raise MalformedManifest(offset, f"read of {n} bytes past end")

    def u8(self, offset: int) -> int:
        self._need(offset, 1)
        return self.data[offset]

    def u16(self, offset: int) -> int:
        self._need(offset, 2)
        return struct.unpack_from("<H", self.data, offset)[0]

    def u32(self, offset: int) -> int:
        self._need(offset, 4)
        return struct.unpack_from("<I", self.data, offset)[0]

    def raw(self, offset: int, n: int) -> bytes:
        self._need(offset, n)
        return self.data[offset : offset + n]


def _parse_string_pool(b: _Buf, chunk_off: int, chunk_size: int) -> list[str]:
    header_size = b.u16(chunk_off + 2)
    string_count = b.u32(chunk_off + 8)
    flags = b.u32(chunk_off + 16)
    strings_start = b.u32(chunk_off + 20)
    utf8 = bool(flags & UTF8_FLAG)
    base = chunk_off + strings_start
    if base > chunk_off + chunk_size:
        raise MalformedManifest(chunk_off + 20, "string data starts past chunk end")

    strings: list[str] = []
    for i in range(string_count):
        off_entry = chunk_off + header_size + 4 * i
        off = base + b.u32(off_entry)
        if utf8:
            # two lengths (utf16 units, then bytes), each 1 or 2 bytes
            n = b.u8(off)
            off += 2 if n & 0x80 else 1
            n = b.u8(off)
            if n & 0x80:
                n = ((n & 0x7F) << 8) | b.u8(off + 1)
                off += 2
            else:
                off += 1
            try:
                strings.append(b.raw(off, n).decode("utf-8"))
            except UnicodeDecodeError:
                raise MalformedManifest(off, "bad utf-8 string") from None
        else:
            n = b.u16(off)
            off += 2
            if n & 0x8000:
                n = ((n & 0x7FFF) << 16) | b.u16(off)
                off += 2
            try:
                strings.append(b.raw(off, 2 * n).decode("utf-16-le"))
            except UnicodeDecodeError:
                raise MalformedManifest(off, "bad utf-16 string") from None
    return strings


def parse_manifest(data: bytes) -> ManifestModel:
    """Decode a binary AndroidManifest.xml buffer into a :class:`ManifestModel`."""
    b = _Buf(data)
    if len(data) < 8:
        raise MalformedManifest(0, "buffer shorter than chunk header")
    if b.u16(0) != RES_XML_TYPE:
        raise MalformedManifest(0, f"not a binary XML chunk (type 0x{b.u16(0):04x})")
    doc_size = b.u32(4)
    if doc_size > len(data) or doc_size < 8:
        raise MalformedManifest(4, f"declared size {doc_size} out of range")

    strings: list[str] | None = None
    model = ManifestModel()
    element_stack: list[str] = []
    intent_depth = 0

    def pool(idx: int, ctx: int) -> str:
        if strings is None:
            raise MalformedManifest(ctx, "element before string pool")
        if idx >= len(strings):
            raise MalformedManifest(ctx, f"string index {idx} out of range")
        return strings[idx]

    def attr_value(chunk_off: int, attrs_off: int, count: int, wanted: str) -> str | None:
        for i in range(count):
            a = attrs_off + 20 * i
            name_idx = b.u32(a + 4)
            if pool(name_idx, a + 4) != wanted:
                continue
            raw_value = b.u32(a + 8)
            data_type = b.u32(a + 12) >> 24
            value_data = b.u32(a + 16)
            if raw_value != 0xFFFFFFFF:
                return pool(raw_value, a + 8)
            if data_type == TYPE_STRING:
                return pool(value_data, a + 16)
            return str(value_data)  # int/bool-typed name attributes are not expected
        return None

    offset = 8
    while offset < doc_size:
        ctype = b.u16(offset)
        csize = b.u32(offset + 4)
        if csize < 8 or offset + csize > doc_size:
            raise MalformedManifest(offset + 4, f"chunk size {csize} out of range")
        if ctype == RES_STRING_POOL_TYPE:
            strings = _parse_string_pool(b, offset, csize)
        elif ctype == RES_XML_START_ELEMENT:
            # node header: lineNumber, comment, then ns/name + attribute block
            name_idx = b.u32(offset + 20)
            attr_start = b.u16(offset + 24)
            attr_count = b.u16(offset + 28)
            tag = pool(name_idx, offset + 20)
            attrs_off = offset + 16 + attr_start
            if attrs_off + 20 * attr_count > offset + csize:
                raise MalformedManifest(offset + 24, "attributes overrun chunk")
            element_stack.append(tag)
            if tag == "intent-filter":
                intent_depth += 1
            elif tag == "manifest":
                model.package = attr_value(offset, attrs_off, attr_count, "package")
            elif tag in _PERMISSION_TAGS:
                v = attr_value(offset, attrs_off, attr_count, "name")
                if v:
                    model.permissions.append(v)
            elif tag == "uses-feature":
                v = attr_value(offset, attrs_off, attr_count, "name")
                if v:
                    model.features.append(v)
            elif tag in _COMPONENT_TAGS:
                v = attr_value(offset, attrs_off, attr_count, "name")
                if v:
                    model.components.append(v)
            elif intent_depth and tag in ("action", "category"):
                v = attr_value(offset, attrs_off, attr_count, "name")
                if v:
                    model.intent_filters.append(v)
        elif ctype == RES_XML_END_ELEMENT:
            if element_stack:
                closed = element_stack.pop()
                if closed == "intent-filter" and intent_depth:
                    intent_depth -= 1
        elif ctype in (RES_XML_START_NAMESPACE, RES_XML_END_NAMESPACE, RES_XML_CDATA, RES_XML_RESOURCE_MAP):
            pass
        # unknown chunk types are skipped by size
        offset += csize

    if strings is None:
        raise MalformedManifest(8, "no string pool chunk")
    return model
