#!/usr/bin/env python3
"""
Error Types

This module defines the exception hierarchy shared by every stage of the
simulator. Each exception carries the context needed to report the failure
without re-running the stage.
"""


class SimulationError(Exception):
    """Base class for all simulator errors."""


class InputError(SimulationError, ValueError):
    """An argument violates an operation's precondition."""


class DatasetExhaustedError(SimulationError):
    """Interaction filtering removed every user or POI."""


class CoverageError(SimulationError):
    """
    A sampling pool cannot cover the whole POI universe.

    Args:
        uncovered (iterable): POI ids that no available sequence contains
    """

    def __init__(self, uncovered, pool=None):
        self.uncovered = sorted(uncovered)
        self.pool = pool
        preview = ", ".join(str(p) for p in self.uncovered[:20])
        more = "" if len(self.uncovered) <= 20 else f" (+{len(self.uncovered) - 20} more)"
        where = f" for pool '{pool}'" if pool else ""
        super().__init__(f"cannot cover {len(self.uncovered)} POIs{where}: {preview}{more}")


class DivergenceError(SimulationError):
    """
    A trainer produced a non-finite loss.

    Args:
        player (str): Which model diverged (e.g. "recommender", "attacker")
        epoch (int): Zero-based epoch index at which the loss became non-finite
    """

    def __init__(self, player, epoch):
        self.player = player
        self.epoch = epoch
        super().__init__(f"{player} diverged at epoch {epoch}")


class ProtocolError(SimulationError):
    """A collaborative-learning protocol contract was violated."""


class AccessViolation(ProtocolError):
    """The attack stage asked for knowledge its protocol does not expose."""


class FabricationError(SimulationError):
    """
    A shadow sequence could not be fabricated under the distance constraint.

    Args:
        poi_id (int): Target POI
        slot (int): Index of the slot no candidate could fill
    """

    def __init__(self, poi_id, slot, reason):
        self.poi_id = poi_id
        self.slot = slot
        super().__init__(f"cannot fabricate shadow sequence for POI {poi_id}: slot {slot} {reason}")


class ConfigError(SimulationError):
    """The experiment configuration is invalid."""


class StageError(SimulationError):
    """
    A pipeline stage failed.

    Args:
        stage (str): Name of the failing stage
        cause (Exception): The underlying error
    """

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
