"""Concept subspace erasure and amplification for text-to-image checkpoints."""

from ._core import (
    ArgumentError,
    ConceptBasis,
    DataError,
    Projector,
    amplify_projector,
    apply,
    compose,
    generate,
    identify_subspace,
    load_basis,
    load_embeddings,
    load_projector,
    orthogonalized_removal,
    patch_file,
    read_tensors,
    removal_projector,
    run_cli,
    save_basis,
    save_embeddings,
    save_projector,
    style_similarity,
    verify_file,
)

__all__ = [
    "ArgumentError",
    "ConceptBasis",
    "DataError",
    "Projector",
    "amplify_projector",
    "apply",
    "compose",
    "generate",
    "identify_subspace",
    "load_basis",
    "load_embeddings",
    "load_projector",
    "orthogonalized_removal",
    "patch_file",
    "read_tensors",
    "removal_projector",
    "run_cli",
    "save_basis",
    "save_embeddings",
    "save_projector",
    "style_similarity",
    "verify_file",
]
