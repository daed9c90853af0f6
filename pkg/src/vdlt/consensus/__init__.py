"""PBFT consensus with classical and aggregate-signature (multisig) modes."""

from .harness import ConsensusHarness, InstanceResult, run_consensus
from .protocol import (
    Commit,
    ConsensusConfig,
    Decided,
    Evidence,
    InsufficientShares,
    InvalidShare,
    MismatchedDigest,
    Mode,
    NewView,
    Phase,
    PrePrepare,
    Prepare,
    QuorumCert,
    ReplicaState,
    Request,
    Share,
    Timeout,
    ViewChange,
    aggregate,
    block_digest,
    leader_for,
    max_faults,
    new_replica,
    quorum_size,
    step,
    verify_qc,
    vote_message,
)
from .signatures import SignatureScheme, SimulatedScheme
