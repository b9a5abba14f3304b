"""deeprx: baseband IQ link simulation, classical receivers, and a
trainable convolutional bit-recovery receiver."""

__version__ = "0.1.0"
