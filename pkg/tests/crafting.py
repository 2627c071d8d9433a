"""Byte-level packet and capture-file builders used by the tests.

Everything here is assembled directly with struct/int packing so the expected
bytes are independent of the code under test.
"""
from __future__ import annotations

import struct


def ipv4_header(src: bytes = b"\x0a\x00\x00\x01", dst: bytes = b"\x08\x08\x08\x08",
                proto: int = 6, total_length: int | None = None, ihl: int = 5,
                ttl: int = 64, checksum: int = 0xBEEF, payload_len: int = 0,
                options: bytes = b"") -> bytes:
    header_len = ihl * 4
    assert len(options) == header_len - 20
    if total_length is None:
        total_length = header_len + payload_len
    head = struct.pack(">BBHHHBBH", (4 << 4) | ihl, 0, total_length,
                       0x1234, 0, ttl, proto, checksum)
    return head + src + dst + options


def tcp_header(sport: int = 443, dport: int = 50000, flags: int = 0x18,
               data_offset: int = 5, seq: int = 1, ack: int = 1,
               window: int = 65535, options: bytes = b"") -> bytes:
    header_len = data_offset * 4
    assert len(options) == header_len - 20
    head = struct.pack(">HHIIBBHHH", sport, dport, seq, ack,
                       (data_offset << 4), flags, window, 0xCAFE, 0)
    return head + options


def udp_header(sport: int = 5000, dport: int = 6000, payload_len: int = 0) -> bytes:
    return struct.pack(">HHHH", sport, dport, 8 + payload_len, 0xABCD)


def ethernet(payload: bytes, ethertype: int = 0x0800,
             dst_mac: bytes = b"\xaa" * 6, src_mac: bytes = b"\xbb" * 6) -> bytes:
    return dst_mac + src_mac + struct.pack(">H", ethertype) + payload


def vlan_ethernet(payload: bytes, inner_ethertype: int = 0x0800,
                  tci: int = 0x0064) -> bytes:
    return (b"\xaa" * 6 + b"\xbb" * 6 + struct.pack(">H", 0x8100)
            + struct.pack(">H", tci) + struct.pack(">H", inner_ethertype) + payload)


def tcp_frame(payload: bytes = b"", sport: int = 443, dport: int = 50000,
              src: bytes = b"\x0a\x00\x00\x01", dst: bytes = b"\x08\x08\x08\x08",
              ihl: int = 5, ip_options: bytes = b"", tcp_options: bytes = b"",
              data_offset: int = 5, flags: int = 0x18) -> bytes:
    tcp = tcp_header(sport, dport, flags=flags, data_offset=data_offset,
                     options=tcp_options)
    ip = ipv4_header(src=src, dst=dst, proto=6, ihl=ihl, options=ip_options,
                     payload_len=len(tcp) + len(payload))
    return ethernet(ip + tcp + payload)


def udp_frame(payload: bytes = b"", sport: int = 5000, dport: int = 6000) -> bytes:
    udp = udp_header(sport, dport, payload_len=len(payload))
    ip = ipv4_header(proto=17, payload_len=len(udp) + len(payload))
    return ethernet(ip + udp + payload)


def pcap_bytes(frames: list[bytes], magic: bytes = b"\xd4\xc3\xb2\xa1",
               origlens: list[int] | None = None) -> bytes:
    """A legacy capture file holding the given frames."""
    order = {b"\xd4\xc3\xb2\xa1": "<", b"\xa1\xb2\xc3\xd4": ">",
             b"\x4d\x3c\xb2\xa1": "<", b"\xa1\xb2\x3c\x4d": ">"}[magic]
    out = bytearray(magic)
    out += struct.pack(order + "HHiIII", 2, 4, 0, 0, 65535, 1)
    for i, frame in enumerate(frames):
        orig = origlens[i] if origlens is not None else len(frame)
        out += struct.pack(order + "IIII", 1_700_000_000 + i, i, len(frame), orig)
        out += frame
    return bytes(out)
