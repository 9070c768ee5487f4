"""Text-guided image inpainting toolkit.

A dual-path latent inpainting model conditioned on a descriptive sentence,
with data ingestion, mask protocols, training, evaluation metrics, and an
HTTP inference service.
"""

__version__ = "0.1.0"
