#!/usr/bin/env python3
"""Independent encoder for the golden fixtures.

Rebuilds the sample chain (genesis plus three blocks) from first principles
with struct/hashlib/cryptography, brute-forces the nonces, and compares every
byte and digest with the frozen files in tests/fixtures/golden.
"""

import hashlib
import struct
import sys
from pathlib import Path

from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

DIFFICULTY = 8

KIND_REG, KIND_ANCHOR, KIND_GRANT, KIND_REVOKE, KIND_APPT = 1, 2, 3, 4, 5
ROLE = {"patient": 0, "provider": 1, "admin": 2}
SCOPE = {"read": 0, "read_write": 1}


def sha(b):
    return hashlib.sha256(b).digest()


def u8(v):
    return struct.pack(">B", v)


def u32(v):
    return struct.pack(">I", v)


def u64(v):
    return struct.pack(">Q", v)


def blob(b):
    return u32(len(b)) + b


class Key:
    def __init__(self, label):
        self.sk = Ed25519PrivateKey.from_private_bytes(sha(label.encode()))
        self.pk = self.sk.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )
        self.id = sha(self.pk)


def tx(key, issued, kind, fields):
    body = u8(kind) + blob(key.pk) + u64(issued) + fields
    tx_id = sha(body)
    return body + tx_id + blob(key.sk.sign(tx_id))


def registration(key, role, name, issued):
    return tx(key, issued, KIND_REG, blob(key.pk) + u8(ROLE[role]) + blob(name.encode()))


def anchor(key, patient_id, address, issued):
    return tx(key, issued, KIND_ANCHOR, u64(patient_id) + address + key.id)


def grant(key, patient_id, grantee, scope, expires, issued):
    opt = u8(0) if expires is None else u8(1) + u64(expires)
    return tx(key, issued, KIND_GRANT, u64(patient_id) + grantee + u8(SCOPE[scope]) + opt)


def appointment(key, patient_id, provider, slot, note, issued):
    return tx(key, issued, KIND_APPT, u64(patient_id) + provider + u64(slot) + blob(note.encode()))


def header(index, prev, root, ts, bits, nonce):
    return u64(index) + prev + root + u64(ts) + u32(bits) + u64(nonce)


def leading_zero_bits(d):
    n = int.from_bytes(d, "big")
    return 256 - n.bit_length()


def mine(index, prev, txs, ts):
    tx_list = u32(len(txs)) + b"".join(txs)
    root = sha(tx_list)
    nonce = 0
    while True:
        h = header(index, prev, root, ts, DIFFICULTY, nonce)
        if leading_zero_bits(sha(h)) >= DIFFICULTY:
            return h + tx_list, sha(h)
        nonce += 1


def build():
    patient = Key("golden-patient")
    provider = Key("golden-provider")

    genesis = header(0, bytes(32), sha(u32(0)), 0, 0, 0)
    out = {"genesis_header.bin": genesis, "genesis.digest": sha(genesis)}
    blocks = [genesis + u32(0)]
    prev = sha(genesis)
    plan = [
        ([registration(patient, "patient", "hanu", 1000),
          registration(provider, "provider", "dr-rao", 1001)], 10000),
        ([anchor(patient, 52, sha(b"sample-blob"), 2000)], 20000),
        ([grant(patient, 52, provider.id, "read", 9000000, 3000),
          appointment(patient, 52, provider.id, 1700000000000, "follow-up", 3001)], 30000),
    ]
    for i, (txs, ts) in enumerate(plan, start=1):
        block, digest = mine(i, prev, txs, ts)
        out[f"block{i}.bin"] = block
        out[f"block{i}.digest"] = digest
        blocks.append(block)
        prev = digest
    out["chain.log"] = b"MLG1" + b"".join(blob(b) for b in blocks)
    return out


def main():
    fixtures = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent.parent / "fixtures" / "golden"
    failures = 0
    for name, expected in build().items():
        path = fixtures / name
        if name.endswith(".digest"):
            actual = path.read_text().strip()
            ok = actual == expected.hex()
        else:
            actual = path.read_bytes()
            ok = actual == expected
        print(("ok   " if ok else "FAIL ") + name)
        failures += 0 if ok else 1
    if sha(b"").hex() != "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855":
        print("FAIL sha256 empty vector")
        failures += 1
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
