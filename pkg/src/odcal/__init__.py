"""OD demand calibration from path travel times."""
__version__ = "0.1.0"
