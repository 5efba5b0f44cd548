"""Weighted simplicial complexes, link localization of the boundary operator, and Hodge Laplacians."""

from __future__ import annotations

__version__ = "0.1.0"

from .complex import EMPTY, ComplexBuilder, Simplex, Truncation, WeightedComplex, faces, sign
from .generators import ComplexGenerator, generate
from .links import LinkGraph, lift, link_energy, link_laplacian, link_of, restrict, verify_localization
from .operators import Cochain, assemble, boundary, coboundary, inner, q_hodge, q_minus, q_plus

__all__ = [
    "EMPTY",
    "Cochain",
    "ComplexBuilder",
    "ComplexGenerator",
    "LinkGraph",
    "Simplex",
    "Truncation",
    "WeightedComplex",
    "assemble",
    "boundary",
    "coboundary",
    "faces",
    "generate",
    "inner",
    "lift",
    "link_energy",
    "link_laplacian",
    "link_of",
    "q_hodge",
    "q_minus",
    "q_plus",
    "restrict",
    "sign",
    "verify_localization",
]
