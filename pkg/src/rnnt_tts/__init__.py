"""Text-to-speech over residual codec tokens with a transducer for the first codebook."""

__version__ = "0.1.0"
