"""Geo-pixel binning on a 0.001 degree grid.

A geo-pixel is keyed by integer millidegrees so that grouping on it is exact.
Rounding is half-away-from-zero on the decimal value of the coordinate as it
is written (``repr`` for floats), which keeps the binning in agreement with
the ``round(?lat * 1000)`` BIND evaluated by the engine over literal text.
"""

from __future__ import annotations

import math
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation
from typing import NamedTuple, Union

__all__ = [
    "GeoError",
    "InvalidCoordinateError",
    "OutOfRangeError",
    "GeoPixel",
    "METERS_PER_DEGREE",
    "PIXEL_DEGREES",
    "round_half_away",
    "pixel_of",
    "center_of",
    "pixel_extent_meters",
]

Number = Union[int, float, Decimal, str]

#: Length of one degree of latitude (and of longitude at the equator).
METERS_PER_DEGREE = 111_320.0
PIXEL_DEGREES = 0.001

_THOUSAND = Decimal(1000)


class GeoError(ValueError):
    pass


class InvalidCoordinateError(GeoError):
    pass


class OutOfRangeError(GeoError):
    pass


class GeoPixel(NamedTuple):
    lat_milli: int
    lon_milli: int

    def __str__(self) -> str:
        return f"({self.lat_milli / 1000:.3f}, {self.lon_milli / 1000:.3f})"


def _to_decimal(value: Number) -> Decimal:
    if isinstance(value, bool):
        raise InvalidCoordinateError(f"not a coordinate: {value!r}")
    if isinstance(value, float):
        if not math.isfinite(value):
            raise InvalidCoordinateError(f"non-finite coordinate: {value!r}")
        # repr gives the shortest string that round-trips, i.e. what was written
        return Decimal(repr(value))
    try:
        d = Decimal(value)
    except (InvalidOperation, TypeError, ValueError):
        raise InvalidCoordinateError(f"not a coordinate: {value!r}") from None
    if not d.is_finite():
        raise InvalidCoordinateError(f"non-finite coordinate: {value!r}")
    return d


def round_half_away(value: Number, factor: Number = 1) -> int:
    """Round ``value * factor`` to an integer, ties away from zero."""
    d = _to_decimal(value) * _to_decimal(factor)
    return int(d.to_integral_value(rounding=ROUND_HALF_UP))


def pixel_of(lat: Number, lon: Number, *, strict: bool = False) -> GeoPixel:
    """Bin a coordinate into its geo-pixel.

    With ``strict=True`` the coordinate must be a valid WGS-84 position.
    The default permissive mode accepts any finite value, because the
    Jianli scenario coordinates (e.g. 329.863) lie outside that range.
    """
    dlat = _to_decimal(lat)
    dlon = _to_decimal(lon)
    if strict:
        if not -90 <= dlat <= 90:
            raise OutOfRangeError(f"latitude {lat} outside [-90, 90]")
        if not -180 <= dlon <= 180:
            raise OutOfRangeError(f"longitude {lon} outside [-180, 180]")
    return GeoPixel(
        int((dlat * _THOUSAND).to_integral_value(rounding=ROUND_HALF_UP)),
        int((dlon * _THOUSAND).to_integral_value(rounding=ROUND_HALF_UP)),
    )


def center_of(pixel: GeoPixel) -> tuple[float, float]:
    return pixel.lat_milli / 1000, pixel.lon_milli / 1000


def pixel_extent_meters(lat: float) -> tuple[float, float]:
    """Return ``(east_west_m, north_south_m)`` covered by one pixel at ``lat``.

    North-south is constant; east-west shrinks with the cosine of latitude.
    """
    if not math.isfinite(lat):
        raise InvalidCoordinateError(f"non-finite latitude: {lat!r}")
    if abs(lat) > 90:
        raise OutOfRangeError(f"latitude {lat} outside [-90, 90]")
    north_south = METERS_PER_DEGREE * PIXEL_DEGREES
    # cos(90 deg) is 6e-17 in floating point; the pole has no width
    east_west = 0.0 if abs(lat) == 90 else north_south * math.cos(math.radians(lat))
    return east_west, north_south
