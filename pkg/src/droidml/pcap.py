"""Classic pcap decoding, TCP flow features, and HTTP request extraction.

Reads classic (libpcap) capture files in either byte order with Ethernet or
Linux-SLL link layers, groups TCP packets into bidirectional flows, and
computes the seven per-capture flow statistics. HTTP requests are recovered
by in-order reassembly of client-to-server payloads on ports 80/8080.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptyCapture, MalformedPcap
from .records import FeatureKind, FeatureRecord

MAGIC_LE = b"\xd4\xc3\xb2\xa1"
MAGIC_BE = b"\xa1\xb2\xc3\xd4"
LINKTYPE_ETHERNET = 1
LINKTYPE_LINUX_SLL = 113
HTTP_PORTS = (80, 8080)

SYN = 0x02
ACK = 0x10

_METHOD_RE = re.compile(r"[A-Z]+")


@dataclass(frozen=True)
class TcpPacket:
    ts: float
    src: str
    sport: int
    dst: str
    dport: int
    flags: int
    seq: int
    payload: bytes
    incl_len: int
    # declared IP datagram length; size statistics use this, not the frame
    # length, so they are invariant under link framing and snap truncation
    ip_len: int


@dataclass(frozen=True)
class TcpFlowFeatures:
    avg_packet_size: float
    avg_packets_per_flow_out: float
    avg_packets_per_flow_in: float
    avg_bytes_sent_per_flow: float
    avg_bytes_received_per_flow: float
    in_out_byte_ratio: float
    avg_packets_received_per_second: float

    def as_tuple(self) -> tuple[float, ...]:
        return (
            self.avg_packet_size,
            self.avg_packets_per_flow_out,
            self.avg_packets_per_flow_in,
            self.avg_bytes_sent_per_flow,
            self.avg_bytes_received_per_flow,
            self.in_out_byte_ratio,
            self.avg_packets_received_per_second,
        )


TCP_FEATURE_NAMES = (
    "avg_packet_size",
    "avg_packets_per_flow_out",
    "avg_packets_per_flow_in",
    "avg_bytes_sent_per_flow",
    "avg_bytes_received_per_flow",
    "in_out_byte_ratio",
    "avg_packets_received_per_second",
)


@dataclass(frozen=True)
class HttpRequestFeatures:
    host: str
    request_uri: str
    method: str
    user_agent: str


def _ip4(raw: bytes) -> str:
    return ".".join(str(b) for b in raw)


def read_tcp_packets(data: bytes) -> list[TcpPacket]:
    """Decode every TCP packet in a classic pcap buffer."""
    if len(data) < 24:
        raise MalformedPcap(0, "truncated global header")
    magic = data[:4]
    if magic == MAGIC_LE:
        endian = "<"
    elif magic == MAGIC_BE:
        endian = ">"
    else:
        raise MalformedPcap(0, f"unknown magic {magic.hex()}")
    network = struct.unpack_from(endian + "I", data, 20)[0]
    if network not in (LINKTYPE_ETHERNET, LINKTYPE_LINUX_SLL):
        raise MalformedPcap(20, f"unsupported link type {network}")

    packets: list[TcpPacket] = []
    offset = 24
    while offset < len(data):
        if offset + 16 > len(data):
            raise MalformedPcap(offset, "truncated record header")
        ts_sec, ts_usec, incl_len, _orig_len = struct.unpack_from(endian + "IIII", data, offset)
        offset += 16
        if offset + incl_len > len(data):
            raise MalformedPcap(offset, "truncated record body")
        frame = data[offset : offset + incl_len]
        offset += incl_len

        pkt = _decode_frame(frame, network, ts_sec + ts_usec / 1e6, incl_len)
        if pkt is not None:
            packets.append(pkt)
    return packets


def _decode_frame(frame: bytes, network: int, ts: float, incl_len: int) -> TcpPacket | None:
    # non-IP/non-TCP or snap-truncated frames are skipped, not errors
    if network == LINKTYPE_ETHERNET:
        if len(frame) < 14:
            return None
        ethertype = struct.unpack_from(">H", frame, 12)[0]
        ip_off = 14
        if ethertype == 0x8100:  # 802.1Q tag
            if len(frame) < 18:
                return None
            ethertype = struct.unpack_from(">H", frame, 16)[0]
            ip_off = 18
        if ethertype != 0x0800:
            return None
    else:  # Linux SLL: 16-byte header, protocol in the last field
        if len(frame) < 16:
            return None
        if struct.unpack_from(">H", frame, 14)[0] != 0x0800:
            return None
        ip_off = 16

    if len(frame) < ip_off + 20:
        return None
    vi = frame[ip_off]
    if vi >> 4 != 4:
        return None
    ihl = (vi & 0x0F) * 4
    if ihl < 20 or len(frame) < ip_off + ihl:
        return None
    total_len = struct.unpack_from(">H", frame, ip_off + 2)[0]
    if frame[ip_off + 9] != 6:
        return None
    src = _ip4(frame[ip_off + 12 : ip_off + 16])
    dst = _ip4(frame[ip_off + 16 : ip_off + 20])

    tcp_off = ip_off + ihl
    if len(frame) < tcp_off + 20:
        return None
    sport, dport = struct.unpack_from(">HH", frame, tcp_off)
    seq = struct.unpack_from(">I", frame, tcp_off + 4)[0]
    data_off = (frame[tcp_off + 12] >> 4) * 4
    if data_off < 20:
        return None
    flags = frame[tcp_off + 13]
    payload_start = tcp_off + data_off
    payload_end = min(len(frame), ip_off + total_len)
    payload = frame[payload_start:payload_end] if payload_end > payload_start else b""
    return TcpPacket(ts, src, sport, dst, dport, flags, seq, payload, incl_len, total_len)


def _device_side(packets: list[TcpPacket]) -> tuple[str | None, tuple[str, int] | None]:
    """The traced device: ip of the first SYN sender, else the lowest endpoint."""
    for p in packets:
        if p.flags & SYN and not p.flags & ACK:
            return p.src, None
    endpoints = set()
    for p in packets:
        endpoints.add((p.src, p.sport))
        endpoints.add((p.dst, p.dport))
    return None, min(endpoints) if endpoints else None


def _is_outgoing(p: TcpPacket, device_ip: str | None, device_ep: tuple[str, int] | None) -> bool:
    if device_ip is not None:
        return p.src == device_ip
    return (p.src, p.sport) == device_ep


def _flow_key(p: TcpPacket) -> tuple[tuple[str, int], tuple[str, int]]:
    a, b = (p.src, p.sport), (p.dst, p.dport)
    return (a, b) if a <= b else (b, a)


def extract_tcp_features(
    path: str | Path | None = None, data: bytes | None = None
) -> TcpFlowFeatures:
    """The seven flow statistics over every TCP packet in the capture."""
    if data is None:
        if path is None:
            raise ValueError("need a path or data bytes")
        data = Path(path).read_bytes()
    packets = read_tcp_packets(data)
    if not packets:
        raise EmptyCapture("no TCP packets in capture")

    device_ip, device_ep = _device_side(packets)
    flows: dict[tuple, list[TcpPacket]] = {}
    for p in packets:
        flows.setdefault(_flow_key(p), []).append(p)

    out_counts, in_counts, out_bytes, in_bytes = [], [], [], []
    for flow_packets in flows.values():
        outs = [p for p in flow_packets if _is_outgoing(p, device_ip, device_ep)]
        ins = [p for p in flow_packets if not _is_outgoing(p, device_ip, device_ep)]
        out_counts.append(len(outs))
        in_counts.append(len(ins))
        out_bytes.append(sum(p.ip_len for p in outs))
        in_bytes.append(sum(p.ip_len for p in ins))

    n_flows = len(flows)
    total_out = sum(out_bytes)
    total_in = sum(in_bytes)
    span = max(p.ts for p in packets) - min(p.ts for p in packets)
    received = sum(in_counts)
    if span > 0:
        rate = received / span
    else:
        rate = float(received)

    return TcpFlowFeatures(
        avg_packet_size=sum(p.ip_len for p in packets) / len(packets),
        avg_packets_per_flow_out=sum(out_counts) / n_flows,
        avg_packets_per_flow_in=sum(in_counts) / n_flows,
        avg_bytes_sent_per_flow=total_out / n_flows,
        avg_bytes_received_per_flow=total_in / n_flows,
        in_out_byte_ratio=(total_in / total_out) if total_out else 0.0,
        avg_packets_received_per_second=rate,
    )


def _parse_requests(stream: bytes) -> list[HttpRequestFeatures]:
    requests: list[HttpRequestFeatures] = []
    pos = 0
    while True:
        head_end = stream.find(b"\r\n\r\n", pos)
        if head_end < 0:
            break
        head = stream[pos:head_end]
        pos = head_end + 4
        try:
            lines = head.decode("iso-8859-1").split("\r\n")
        except UnicodeDecodeError:  # pragma: no cover - latin-1 cannot fail
            break
        parts = lines[0].split(" ")
        if len(parts) != 3 or not _METHOD_RE.fullmatch(parts[0]) or not parts[2].startswith("HTTP/"):
            continue  # not a request head; scan forward for the next one
        host = user_agent = ""
        content_length = 0
        for line in lines[1:]:
            name, sep, value = line.partition(":")
            if not sep:
                continue
            lowered = name.strip().lower()
            if lowered == "host":
                host = value.strip()
            elif lowered == "user-agent":
                user_agent = value.strip()
            elif lowered == "content-length":
                v = value.strip()
                if v.isdigit():
                    content_length = int(v)
        requests.append(
            HttpRequestFeatures(host=host, request_uri=parts[1], method=parts[0], user_agent=user_agent)
        )
        pos += content_length
    return requests


def extract_http_features(
    path: str | Path | None = None, data: bytes | None = None
) -> list[HttpRequestFeatures]:
    """HTTP requests reassembled from client-to-server payloads on ports 80/8080."""
    if data is None:
        if path is None:
            raise ValueError("need a path or data bytes")
        data = Path(path).read_bytes()
    packets = read_tcp_packets(data)

    flows: dict[tuple, dict[int, bytes]] = {}
    order: list[tuple] = []
    for p in packets:
        if p.dport not in HTTP_PORTS or not p.payload:
            continue
        key = (p.src, p.sport, p.dst, p.dport)
        if key not in flows:
            flows[key] = {}
            order.append(key)
        flows[key].setdefault(p.seq, p.payload)  # duplicate-sequence drop

    requests: list[HttpRequestFeatures] = []
    for key in order:
        stream = b"".join(flows[key][seq] for seq in sorted(flows[key]))
        requests.extend(_parse_requests(stream))
    return requests


def http_records(requests: list[HttpRequestFeatures]) -> set[FeatureRecord]:
    """Distinct header-field records; empty fields yield no record."""
    records: set[FeatureRecord] = set()
    for req in requests:
        for kind, value in (
            (FeatureKind.HTTP_HOST, req.host),
            (FeatureKind.HTTP_REQUEST_URI, req.request_uri),
            (FeatureKind.HTTP_REQUEST_METHOD, req.method),
            (FeatureKind.HTTP_USER_AGENT, req.user_agent),
        ):
            if value:
                records.add(FeatureRecord(kind, value))
    return records
