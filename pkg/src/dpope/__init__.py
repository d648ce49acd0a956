"""Differentially private order-preserving encoding and encryption."""

from .core import (DiscreteDomain, DomainError, Dataset, Partition, Prior,
                   RandomizedOrder, partition_map)
from .opec import EncodingModel, build_encoding_model, encode, encode_many
from .opeps import OpepsScheme, encrypt_dataset, opeps_keygen

__all__ = [
    "DiscreteDomain", "DomainError", "Dataset", "Partition", "Prior", "RandomizedOrder",
    "partition_map", "EncodingModel", "build_encoding_model", "encode", "encode_many",
    "OpepsScheme", "encrypt_dataset", "opeps_keygen",
]

__version__ = "0.1.0"
