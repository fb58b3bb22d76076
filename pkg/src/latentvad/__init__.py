"""Latent-difference video anomaly detection on a synthetic stick-figure world.

A frozen pose-to-Gaussian flow guides an RGB token encoder toward motion
latents, the RGB encoder guides a masked-token encoder toward appearance
latents, and a triple memory bank flags behavior that does not match its
scene.  Anomaly scores are distances between latent features, never pixel
reconstruction errors.
"""

__version__ = "0.1.0"
