"""Mechanistic dataset imputation from elementary reaction templates."""

from mechimpute.kernels import BACKEND
from mechimpute.molgraph import Molecule, ParseError, StateBag, canonical_form, parse_smiles, write_smiles

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Molecule", "ParseError", "StateBag", "canonical_form", "parse_smiles", "write_smiles",
    "__version__",
]
