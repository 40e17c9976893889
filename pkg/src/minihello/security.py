"""Security identifiers, privilege bitmasks, and the two-layer access check.

A Sid is 16 opaque bytes acting as a capability token. Privileges are a
five-bit mask; ADMIN implies every other bit at check time. Requests travel
with the originating queue's Sid list; masks are always resolved at the
checking host, so a sender cannot forge privileges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

READ = 1
WRITE = 2
CREATE = 4
EXEC = 8
ADMIN = 16
ALL_PRIVS = READ | WRITE | CREATE | EXEC | ADMIN
_KNOWN_BITS = ALL_PRIVS

PRIV_NAMES = {READ: "READ", WRITE: "WRITE", CREATE: "CREATE", EXEC: "EXEC", ADMIN: "ADMIN"}

SID_LEN = 16

# Reserved capability every fresh (permissive) host grants full privileges to.
ANONYMOUS_SID = bytes(SID_LEN)


def new_sid(rng) -> bytes:
    """Fresh 128-bit random Sid drawn from the supplied RNG (sim-seeded or os random)."""
    return bytes(rng.getrandbits(8) for _ in range(SID_LEN))


def mask_grants(mask: int, priv: int) -> bool:
    if mask & ~_KNOWN_BITS:
        raise ValueError(f"unknown privilege bits in mask {mask:#x}")
    return bool(mask & ADMIN) or bool(mask & priv)


@dataclass
class CredentialSet:
    """Set of (Sid, privilege mask) pairs; at most one pair per Sid."""

    grants: dict[bytes, int] = field(default_factory=dict)

    def grant(self, sid: bytes, mask: int) -> None:
        if len(sid) != SID_LEN:
            raise ValueError("sid must be 16 bytes")
        if mask & ~_KNOWN_BITS:
            raise ValueError(f"unknown privilege bits in mask {mask:#x}")
        self.grants[sid] = mask

    def sids(self) -> list[bytes]:
        return list(self.grants.keys())

    def allows(self, sids, priv: int) -> bool:
        """True iff some sid of `sids` is granted `priv` here."""
        for sid in sids:
            mask = self.grants.get(sid)
            if mask is not None and mask_grants(mask, priv):
                return True
        return False

    def copy(self) -> "CredentialSet":
        return CredentialSet(dict(self.grants))

    @classmethod
    def permissive(cls) -> "CredentialSet":
        return cls({ANONYMOUS_SID: ALL_PRIVS})


@dataclass(frozen=True)
class AccessDecision:
    allowed: bool
    denied_layer: str | None = None  # 'host' or 'object'

    def __bool__(self) -> bool:
        return self.allowed


ALLOW = AccessDecision(True)


def check_access(queue_creds: CredentialSet, object_acl: CredentialSet | None,
                 host_map: CredentialSet, op: int) -> AccessDecision:
    """Two-layer check: the host map must grant `op` to some Sid the queue
    carries, and the object ACL (when present) must do the same. A host-layer
    refusal is reported as such regardless of the object layer."""
    if op not in PRIV_NAMES:
        raise ValueError("op must be a single privilege bit")
    sids = queue_creds.sids()
    if not host_map.allows(sids, op):
        return AccessDecision(False, "host")
    if object_acl is not None and not object_acl.allows(sids, op):
        return AccessDecision(False, "object")
    return ALLOW


def parse_grant_line(line: str) -> tuple[bytes, int]:
    """Parse a host-map config entry of the form `sid-hex:mask-bits`."""
    sid_hex, _, mask_text = line.partition(":")
    sid = bytes.fromhex(sid_hex.strip())
    if len(sid) != SID_LEN:
        raise ValueError(f"sid must be {SID_LEN} bytes: {line!r}")
    mask = int(mask_text.strip(), 0)
    if mask & ~_KNOWN_BITS:
        raise ValueError(f"unknown privilege bits: {line!r}")
    return sid, mask


def format_grant_line(sid: bytes, mask: int) -> str:
    return f"{sid.hex()}:{mask}"
