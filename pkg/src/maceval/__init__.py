"""maceval: label-free dataset dissimilarity and detector generalization
evaluation for frame-level detectors.

Core pieces: the MACE embedding distance (squared Fréchet distance between
Gaussian fits of frame-embedding collections), a deterministic seeded
bootstrap with superiority / non-inferiority / z tests, temporal-filtered
TPR-vs-FAPM curve evaluation, modality (NBI/CE) cohorting, 2-D projections,
and a synthetic-data generator with closed-form ground truth.
"""

__version__ = "0.1.0"
