"""Weakly supervised dynamic background subtraction.

A fully connected autoencoder learns the static background of one scene, a
U-Net learns where that scene's background moves, and an online thresholding
stage turns the cleaned residual into moving-object masks.
"""

__version__ = "0.1.0"
