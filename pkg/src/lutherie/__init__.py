"""Design, partition and acoustically verify 3D-printable classical guitars."""

__version__ = "0.1.0"
