"""Recurrent neural decoding of convolutional codes with a Viterbi baseline."""

__version__ = "0.1.0"
