"""MPC relay cell over simulated key pools.

Node A talks to node B through relay C.  A and B share an MDI key pool;
A/C and C/B each share a BB84 pool.  A message is first sealed with
AES-256-GCM under a 32-byte session key drawn from the MDI pool, then each
hop masks the sealed bytes with fresh one-time-pad material from that hop's
BB84 pool.  C strips the first pad and applies the second, so the only
thing it ever holds is the AES ciphertext.

The pools come from a seeded PRNG; the quantum layer is not simulated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import InvalidInput, PoolDepleted

AES_KEY_BYTES = 32
NONCE_BYTES = 12
TAG_BYTES = 16
SEAL_OVERHEAD = NONCE_BYTES + TAG_BYTES
# shortest secret fragment treated as a leak when found inside observed bytes
WINDOW = 16


class PoolLabel(str, Enum):
    MDI_AB = "MDI_AB"
    BB84_AC = "BB84_AC"
    BB84_CB = "BB84_CB"


@dataclass
class KeyPool:
    """Append-only view over a shared key stream.

    Bytes are handed out strictly in order; nothing below
    ``consumed_offset`` is ever returned again.
    """

    label: PoolLabel
    data: bytes
    consumed_offset: int = 0
    ranges: list = field(default_factory=list)

    @property
    def size(self):
        return len(self.data)

    @property
    def remaining(self):
        return len(self.data) - self.consumed_offset

    def reserve(self, n, after=None):
        """Offset where ``n`` bytes would start; raises if the pool runs dry.

        ``after`` lets a caller stack several reservations before committing.
        """
        start = self.consumed_offset if after is None else after
        if n < 0:
            raise InvalidInput("cannot reserve a negative byte count")
        if start + n > len(self.data):
            raise PoolDepleted(self.label.value, n, len(self.data) - start)
        return start

    def commit(self, start, n):
        if start != self.consumed_offset:
            raise RuntimeError("pool commits must be contiguous")
        self.consumed_offset = start + n
        if n:
            self.ranges.append((start, start + n))
        return self.data[start:start + n]

    def read(self, start, end):
        """Previously consumed bytes, for auditing."""
        if end > self.consumed_offset:
            raise InvalidInput(f"range {start}:{end} of {self.label.value} was never consumed")
        return self.data[start:end]


@dataclass
class PoolSet:
    mdi: KeyPool
    ac: KeyPool
    cb: KeyPool
    rekey_every: int = 1
    session_key: bytes | None = None
    session_range: tuple | None = None
    session_uses: int = 0
    session_count: int = 0

    def pools(self):
        return (self.mdi, self.ac, self.cb)

    def offsets(self):
        return tuple(p.consumed_offset for p in self.pools())


def establish_pools(seed, sizes, rekey_every=1):
    """Three independent seeded pools: MDI (A-B), BB84 (A-C), BB84 (C-B).

    ``sizes`` is one byte count for all pools or a triple.
    """
    if np.ndim(sizes) == 0:
        sizes = (int(sizes),) * 3
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) != 3 or any(s <= 0 for s in sizes):
        raise InvalidInput(f"pool sizes must be three positive byte counts, got {sizes}")
    if rekey_every < 1:
        raise InvalidInput("rekey_every must be at least 1")
    children = np.random.SeedSequence(int(seed)).spawn(3)
    labels = (PoolLabel.MDI_AB, PoolLabel.BB84_AC, PoolLabel.BB84_CB)
    pools = [KeyPool(lab, np.random.default_rng(ss).bytes(n))
             for lab, ss, n in zip(labels, children, sizes)]
    return PoolSet(*pools, rekey_every=rekey_every)


def xor(a, b):
    if len(a) != len(b):
        raise ValueError("xor operands differ in length")
    return (np.frombuffer(a, np.uint8) ^ np.frombuffer(b, np.uint8)).tobytes()


@dataclass
class TransmissionTrace:
    plaintext: bytes
    inner_ct: bytes
    wire_ac: bytes
    relay_view: bytes
    wire_cb: bytes
    recovered: bytes
    key_ids: dict
    protected: bool = True

    def to_dict(self):
        return {
            "plaintext": self.plaintext.hex(),
            "inner_ct": self.inner_ct.hex(),
            "wire_ac": self.wire_ac.hex(),
            "relay_view": self.relay_view.hex(),
            "wire_cb": self.wire_cb.hex(),
            "recovered": self.recovered.hex(),
            "key_ids": {k: list(v) for k, v in self.key_ids.items()},
            "protected": self.protected,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: bytes.fromhex(d[k]) for k in
                      ("plaintext", "inner_ct", "wire_ac", "relay_view", "wire_cb", "recovered")},
                   key_ids={k: (v[0], int(v[1]), int(v[2])) for k, v in d["key_ids"].items()},
                   protected=bool(d.get("protected", True)))


def _session(pools):
    """Session key and its pool range, plus the pending draw if a rekey is due."""
    if pools.session_key is not None and pools.session_uses < pools.rekey_every:
        return pools.session_key, pools.session_range, None
    start = pools.mdi.reserve(AES_KEY_BYTES)
    key = pools.mdi.data[start:start + AES_KEY_BYTES]
    return key, (start, start + AES_KEY_BYTES), start


def mpc_send(text, pools, encrypt_inner=True):
    """Carry ``text`` from A to B through C.

    All pool draws are reserved before anything is committed, so a
    depleted pool leaves every offset untouched.  ``encrypt_inner=False``
    skips the AES layer; it exists only as a negative control for audits.
    """
    text = bytes(text)
    if encrypt_inner:
        key, key_range, pending = _session(pools)
        uses = 0 if pending is not None else pools.session_uses
        # per-session counter nonce; unique because the key changes per session
        nonce = uses.to_bytes(NONCE_BYTES, "big")
        inner = nonce + AESGCM(key).encrypt(nonce, text, None)
    else:
        key_range, pending = None, None
        inner = text
    n = len(inner)
    a = pools.ac.reserve(n)
    c = pools.cb.reserve(n)

    # commit point: every reservation succeeded
    key_ids = {}
    if pending is not None:
        pools.mdi.commit(pending, AES_KEY_BYTES)
        pools.session_key = key
        pools.session_range = key_range
        pools.session_uses = 0
        pools.session_count += 1
    if encrypt_inner:
        pools.session_uses += 1
        key_ids["aes"] = (PoolLabel.MDI_AB.value, *key_range)
    k1 = pools.ac.commit(a, n)
    k2 = pools.cb.commit(c, n)
    key_ids["otp_ac"] = (PoolLabel.BB84_AC.value, a, a + n)
    key_ids["otp_cb"] = (PoolLabel.BB84_CB.value, c, c + n)

    wire_ac = xor(k1, inner)
    relay_view = xor(k1, wire_ac)
    wire_cb = xor(k2, relay_view)
    at_b = xor(k2, wire_cb)
    if encrypt_inner:
        recovered = AESGCM(key).decrypt(at_b[:NONCE_BYTES], at_b[NONCE_BYTES:], None)
    else:
        recovered = at_b
    return TransmissionTrace(text, inner, wire_ac, relay_view, wire_cb, recovered,
                             key_ids, protected=encrypt_inner)


def bb84_baseline_send(text, pools):
    """Hop-by-hop OTP only; the relay necessarily sees the plaintext."""
    return mpc_send(text, pools, encrypt_inner=False)


def _contains_fragment(haystack, secret):
    """True if ``secret`` leaks into ``haystack``.

    Secrets of at least ``WINDOW`` bytes leak when any ``WINDOW``-byte slice
    of them appears; shorter nonempty secrets only when equal to the whole
    observation (random bytes match short strings by chance).
    """
    if not secret:
        return False
    if len(secret) < WINDOW:
        return haystack == secret
    for i in range(len(secret) - WINDOW + 1):
        if secret[i:i + WINDOW] in haystack:
            return True
    return False


@dataclass
class ObserverView:
    observed: bytes
    saw_plaintext: bool
    saw_mdi_key: bool
    inner_ct_only: bool
    otp_masked: bool

    def to_dict(self):
        return {"observed": self.observed.hex(), "saw_plaintext": self.saw_plaintext,
                "saw_mdi_key": self.saw_mdi_key, "inner_ct_only": self.inner_ct_only,
                "otp_masked": self.otp_masked}


@dataclass
class ExposureReport:
    channel_ac: ObserverView
    relay_c: ObserverView
    channel_cb: ObserverView

    def observers(self):
        return {"channel_ac": self.channel_ac, "relay_c": self.relay_c,
                "channel_cb": self.channel_cb}

    def to_dict(self, include_bytes=True):
        out = {}
        for name, view in self.observers().items():
            d = view.to_dict()
            if not include_bytes:
                d.pop("observed")
            out[name] = d
        return out


def audit_exposure(trace, pools):
    """What each channel and the relay could read, checked against the secrets."""
    if "aes" in trace.key_ids:
        _, s, e = trace.key_ids["aes"]
        mdi_key = pools.mdi.read(s, e)
    else:
        mdi_key = b""
    pads = {}
    for step, pool in (("otp_ac", pools.ac), ("otp_cb", pools.cb)):
        _, s, e = trace.key_ids[step]
        pads[step] = pool.read(s, e)

    def view(observed, pad):
        saw_pt = _contains_fragment(observed, trace.plaintext)
        saw_key = _contains_fragment(observed, mdi_key)
        masked = pad is not None and observed == xor(pad, trace.inner_ct)
        return ObserverView(observed, saw_pt, saw_key,
                            observed == trace.inner_ct and not saw_pt and not saw_key,
                            masked)

    return ExposureReport(view(trace.wire_ac, pads["otp_ac"]),
                          view(trace.relay_view, None),
                          view(trace.wire_cb, pads["otp_cb"]))


def ranges_disjoint(pools):
    """True if no pool ever handed out overlapping byte ranges."""
    for pool in pools.pools():
        rs = sorted(pool.ranges)
        for (_, e0), (s1, _) in zip(rs, rs[1:]):
            if s1 < e0:
                return False
    return True


def required_pool_sizes(lengths, rekey_every=1, protected=True):
    """Pool sizes that exactly cover sending messages of the given lengths."""
    lengths = list(lengths)
    sessions = -(-len(lengths) // rekey_every) if protected else 0
    per_hop = sum(n + (SEAL_OVERHEAD if protected else 0) for n in lengths)
    return (max(sessions * AES_KEY_BYTES, 1), max(per_hop, 1), max(per_hop, 1))
