"""
gestdiff: co-speech gesture synthesis toolkit.

Data preparation and alignment, contrastive speech-and-motion pretraining
(CSMP) and conditional DDPM gesture synthesis with classifier-free guidance.
"""

__version__ = "0.1.0"
