#!/usr/bin/env python3
"""
Shared Knowledge

What each protocol lets leave a member's device, and the gate through which
the attack stage reads it. Model sharing exposes parameters; distillation
exposes only soft decisions on the reference dataset.
"""

import logging

from src.collab.distillation import SoftDecisionSet, emit_soft_decisions
from src.collab.protocols import DISTILLATION, MODEL_SHARING, PROTOCOLS
from src.recsys.model import ModelParams
from src.utils.errors import AccessViolation, InputError, ProtocolError

logger = logging.getLogger(__name__)

MODEL = "model"
SOFT_DECISIONS = "soft_decisions"

EXPOSED_KIND = {MODEL_SHARING: MODEL, DISTILLATION: SOFT_DECISIONS}
KIND_TYPES = {MODEL: ModelParams, SOFT_DECISIONS: SoftDecisionSet}


def export_knowledge(protocol, params, reference):
    """
    The object a member shares under ``protocol``.

    Returns:
        ModelParams (copy) or SoftDecisionSet
    """
    if protocol == MODEL_SHARING:
        return params.copy()
    if protocol == DISTILLATION:
        return emit_soft_decisions(params, reference)
    raise InputError(f"unknown protocol '{protocol}'; expected one of {PROTOCOLS}")


class KnowledgeGate:
    """
    Holds published knowledge and enforces what the attacker may read.

    Args:
        protocol (str): MODEL_SHARING or DISTILLATION
    """

    def __init__(self, protocol):
        if protocol not in EXPOSED_KIND:
            raise InputError(f"unknown protocol '{protocol}'")
        self.protocol = protocol
        self.kind = EXPOSED_KIND[protocol]
        self._published = {}
        self.reads = []

    def publish(self, user_id, knowledge):
        """Record what ``user_id`` shared; it must be of the protocol's kind."""
        if not isinstance(knowledge, KIND_TYPES[self.kind]):
            raise ProtocolError(f"{self.protocol} members share {self.kind}, "
                                f"got {type(knowledge).__name__}")
        self._published[user_id] = knowledge

    def users(self):
        return sorted(self._published)

    def read(self, user_id, kind=None):
        """
        Read a member's shared knowledge.

        Args:
            user_id (int): Target member
            kind (str, optional): Kind the caller expects

        Raises:
            AccessViolation: If ``kind`` is not what the protocol exposes
        """
        if kind is not None and kind != self.kind:
            raise AccessViolation(f"{self.protocol} does not expose {kind} (requested for user {user_id})")
        if user_id not in self._published:
            raise AccessViolation(f"user {user_id} has not shared anything")
        self.reads.append((user_id, self.kind))
        return self._published[user_id]

    def model_of(self, user_id):
        return self.read(user_id, MODEL)

    def soft_decisions_of(self, user_id):
        return self.read(user_id, SOFT_DECISIONS)
