"""Epoch-skipping training: sample parameter updates instead of backprops."""

__version__ = "0.1.0"
