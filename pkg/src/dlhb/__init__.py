"""Desk-scale lab for deep-learning-assisted hybrid beamforming in
broadband mmWave massive MIMO-OFDM.

Pipeline: synthesize frequency-selective clustered channels, compute
reference hybrid beamformers by manifold optimization, generate labeled
training data under controlled channel corruption, train a convolutional
regression network to predict beamformers from corrupted channels, and
evaluate spectral efficiency, robustness and timing.
"""

__version__ = "0.1.0"
