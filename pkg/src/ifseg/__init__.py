"""IF-UNet segmentation lab."""

__version__ = "0.1.0"
