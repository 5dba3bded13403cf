#!/usr/bin/env python3
"""
Model Sharing

Within-group parameter exchange: every member moves halfway towards the
uniform mean of the other members' models, then fine-tunes locally.
"""

from src.recsys.model import ModelParams
from src.utils.errors import ProtocolError


def share_models_round(group_params, fine_tune=None):
    """
    Aggregate the models of one group.

    Args:
        group_params (list): ModelParams of every member (not modified)
        fine_tune (callable, optional): ``f(member_index, params) -> params``
            applied after aggregation

    Returns:
        list: Updated ModelParams, aligned with ``group_params``

    Raises:
        ProtocolError: If members differ in latent dimension or shape
    """
    shapes = {tuple(a.shape for a in p.arrays()) for p in group_params}
    if len(shapes) > 1:
        dims = sorted({p.latent_dim for p in group_params})
        raise ProtocolError(f"model sharing needs structurally equal models, got dims {dims}")

    count = len(group_params)
    updated = []
    for i, own in enumerate(group_params):
        if count == 1:
            mixed = own.copy()
        else:
            others = [p for j, p in enumerate(group_params) if j != i]
            mixed = ModelParams(*(
                0.5 * mine + 0.5 * sum(o.arrays()[k] for o in others) / len(others)
                for k, mine in enumerate(own.arrays())
            ))
        if fine_tune is not None:
            mixed = fine_tune(i, mixed)
        updated.append(mixed)
    return updated
