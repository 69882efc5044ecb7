"""Gridded vehicle-count inventories from geotagged tiles and detector labels."""

__version__ = "0.1.0"
