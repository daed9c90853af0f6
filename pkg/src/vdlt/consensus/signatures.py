"""Pluggable signature schemes.

The bundled scheme is simulated: a signature is an HMAC of the message under
a per-node secret held in a registry, and an aggregate binds the ordered
signer set. It exercises the protocol logic; it offers no cryptographic
hardness and is not a stand-in for EC-Schnorr.
"""

from __future__ import annotations

import hashlib
import hmac
from typing import Protocol, Sequence

from ..core_types import NodeId


class SignatureScheme(Protocol):
    def keygen(self, node: NodeId) -> bytes: ...

    def sign(self, secret: bytes, message: bytes) -> bytes: ...

    def verify(self, signer: NodeId, message: bytes, signature: bytes) -> bool: ...

    def aggregate(self, signatures: Sequence[bytes]) -> bytes: ...

    def verify_aggregate(
        self, signers: Sequence[NodeId], message: bytes, aggregate: bytes
    ) -> bool: ...


class SimulatedScheme:
    """Registry-backed keyed-digest signatures.

    ``aggregate`` must be given the shares in signer order (committee order);
    ``verify_aggregate`` recomputes every share from the registry.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._secrets: dict[NodeId, bytes] = {}

    def keygen(self, node: NodeId) -> bytes:
        secret = self._secrets.get(node)
        if secret is None:
            secret = hashlib.sha256(f"vdlt-key|{self.seed}|{node}".encode()).digest()
            self._secrets[node] = secret
        return secret

    def knows(self, node: NodeId) -> bool:
        return node in self._secrets

    def sign(self, secret: bytes, message: bytes) -> bytes:
        return hmac.new(secret, message, hashlib.sha256).digest()

    def verify(self, signer: NodeId, message: bytes, signature: bytes) -> bool:
        secret = self._secrets.get(signer)
        if secret is None or not isinstance(signature, bytes):
            return False
        return hmac.compare_digest(self.sign(secret, message), signature)

    def aggregate(self, signatures: Sequence[bytes]) -> bytes:
        h = hashlib.sha256(b"agg")
        for s in signatures:
            h.update(s)
        return h.digest()

    def verify_aggregate(
        self, signers: Sequence[NodeId], message: bytes, aggregate: bytes
    ) -> bool:
        if not signers:
            return False
        shares = []
        for node in signers:
            secret = self._secrets.get(node)
            if secret is None:
                return False
            shares.append(self.sign(secret, message))
        return hmac.compare_digest(self.aggregate(shares), aggregate)
