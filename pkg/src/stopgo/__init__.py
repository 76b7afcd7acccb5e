"""Pedestrian stop / go transition prediction from ego-view tracks."""
__version__ = "0.1.0"
