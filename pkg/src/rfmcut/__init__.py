"""Customer segmentation by max-k-cut on a reduced RFM score graph."""

__version__ = "0.1.0"
