#!/usr/bin/env python3
"""
Geographic Utilities

Great-circle distances between POIs on a spherical Earth.
"""

import numpy as np

from src.utils.errors import InputError

EARTH_RADIUS_KM = 6371.0


def validate_coordinates(lat, lon):
    """
    Check that a latitude/longitude pair is in range.

    Raises:
        InputError: If lat is outside [-90, 90] or lon outside [-180, 180]
    """
    if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 180.0):
        raise InputError(f"coordinates out of range: lat={lat}, lon={lon}")


def haversine_km(a, b):
    """
    Great-circle distance between two points.

    Args:
        a (tuple): (lat, lon) in degrees
        b (tuple): (lat, lon) in degrees

    Returns:
        float: Distance in kilometers on a 6371 km sphere
    """
    validate_coordinates(*a)
    validate_coordinates(*b)
    lat1, lon1 = np.radians(a)
    lat2, lon2 = np.radians(b)
    h = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return float(2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(min(1.0, h))))


def haversine_km_many(anchor, lats, lons):
    """
    Distances from one anchor to many points.

    Args:
        anchor (tuple): (lat, lon) in degrees
        lats (numpy.ndarray): Latitudes in degrees
        lons (numpy.ndarray): Longitudes in degrees

    Returns:
        numpy.ndarray: Distances in kilometers, same shape as ``lats``
    """
    lat1, lon1 = np.radians(anchor)
    lat2 = np.radians(np.asarray(lats, dtype=float))
    lon2 = np.radians(np.asarray(lons, dtype=float))
    h = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.minimum(1.0, h)))
