"""Multiparameter noncommutative Laplace transform over Cayley-Dickson algebras."""

from .algebra import CdNumber, PurePolar, cd_conj, cd_exp, cd_inv, cd_mul

__version__ = "0.1.0"

__all__ = [
    "CdNumber",
    "PurePolar",
    "cd_mul",
    "cd_conj",
    "cd_exp",
    "cd_inv",
    "__version__",
]
