"""Independent golden vectors for the event hash domain.

Builds the canonical encoding straight from the field layout (big-endian
fixed-width integers, u32 length prefixes, u32 count prefixes) and hashes
it with hashlib. Output lines: name, encoding hex, sha256 hex.
"""
import hashlib
import struct


def lp(b):
    return struct.pack(">I", len(b)) + b


def encode(creator, height, sp, sp_hash, op, op_hash, lamport, user, internal):
    out = lp(creator) + struct.pack(">Q", height)
    out += lp(sp) + lp(sp_hash) + lp(op) + lp(op_hash)
    out += struct.pack(">Q", lamport)
    out += struct.pack(">I", len(user)) + b"".join(lp(t) for t in user)
    out += struct.pack(">I", len(internal))
    out += b"".join(struct.pack(">H", tag) + lp(body) for tag, body in internal)
    return out


Z = bytes(32)
vectors = [
    ("leaf", encode(b"\x01" * 32, 0, Z, Z, Z, Z, 0, [], [])),
    ("leaf_lamport_42", encode(b"\x02" * 32, 0, Z, Z, Z, Z, 42, [], [])),
    (
        "mixed_payload",
        encode(b"\xab" * 32, 3, b"\x11" * 32, b"\x11" * 32, b"\x22" * 32, b"\x22" * 32, 42,
               [b"hello", b""], [(1, b"\x00\x01"), (300, b"xyz")]),
    ),
    (
        "wide_values",
        encode(bytes(range(32)), 2**40, b"\x33" * 32, b"\x33" * 32, b"\x44" * 32, b"\x44" * 32, 2**63,
               [b"", b"\x7f", bytes(range(255))], []),
    ),
    (
        "internal_only",
        encode(b"\xfe" * 32, 1, b"\x55" * 32, b"\x55" * 32, b"\x66" * 32, b"\x66" * 32, 7,
               [], [(4, b""), (65535, b"\xff" * 40)]),
    ),
]

if __name__ == "__main__":
    with open("golden_hashes.txt", "w") as f:
        f.write("# name encoding_hex sha256_hex\n")
        for name, enc in vectors:
            f.write(f"{name} {enc.hex()} {hashlib.sha256(enc).hexdigest()}\n")
