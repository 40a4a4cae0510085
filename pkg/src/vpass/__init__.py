"""Virtual-password login schemes, a known-transcript attack, an auth server and two-password recovery."""

from vpass.core import (
    ALPHABETS,
    Alphabet,
    ContractError,
    CredentialError,
    Response,
    Salt,
    SecretCredential,
    compute_response_modified,
    compute_response_original,
    verify_modified,
    verify_original,
)
from vpass.kernels import BACKEND

__all__ = [
    "ALPHABETS",
    "Alphabet",
    "BACKEND",
    "ContractError",
    "CredentialError",
    "Response",
    "Salt",
    "SecretCredential",
    "compute_response_modified",
    "compute_response_original",
    "verify_modified",
    "verify_original",
]
