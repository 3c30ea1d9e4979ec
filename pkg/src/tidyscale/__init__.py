"""Exact arithmetic for scale functions, tidy subgroups and eigenfactor invariants.

The library computes, without floating point, the scale of automorphisms of
three families of totally disconnected groups (p-adic vector spaces, pattern
subgroups of SL(n, Q_p), and restricted products of a finite group over Z),
together with the derived invariants of finitely generated flat automorphism
groups: relative scales, factor number, rank, corank group and the geometry of
the set of scaling functionals.
"""

from tidyscale.errors import (
    TidyscaleError,
    InputError,
    SingularityError,
    SlopeSeparabilityError,
    CommensurabilityError,
    InfiniteIndexError,
    NormalizationError,
    ResourceCapError,
    UnsupportedInputError,
)
from tidyscale.padic import (
    Lattice,
    PAdicAutomorphism,
    scale,
    step1_tidy,
    common_tidy,
    family_eigenfactors,
)
from tidyscale.torus import (
    PatternSubgroup,
    DiagonalAutomorphism,
    iwahori,
    root_eigenfactors,
    halving_factorization_check,
)
from tidyscale.finprod import (
    FiniteGroup,
    AmbientGroup,
    WindowedSubgroup,
    ShiftAutomorphism,
    cyclic_group,
    s3_group,
    order8_group,
    basic_subgroup,
    product_subgroup,
    is_tidy,
    tidying_procedure,
    common_tidy_iterative,
)
from tidyscale.invariants import (
    DiagonalBackend,
    PatternBackend,
    WindowedBackend,
    EigenfactorRecord,
    relative_scale_table,
    rank_corank,
    m_set,
    separation_sequence,
    verify_suite,
    weyl_action,
    full_report,
)

__version__ = "0.1.0"

__all__ = [
    "TidyscaleError",
    "InputError",
    "SingularityError",
    "SlopeSeparabilityError",
    "CommensurabilityError",
    "InfiniteIndexError",
    "NormalizationError",
    "ResourceCapError",
    "UnsupportedInputError",
    "Lattice",
    "PAdicAutomorphism",
    "scale",
    "step1_tidy",
    "common_tidy",
    "family_eigenfactors",
    "PatternSubgroup",
    "DiagonalAutomorphism",
    "iwahori",
    "root_eigenfactors",
    "halving_factorization_check",
    "FiniteGroup",
    "AmbientGroup",
    "WindowedSubgroup",
    "ShiftAutomorphism",
    "cyclic_group",
    "s3_group",
    "order8_group",
    "basic_subgroup",
    "product_subgroup",
    "is_tidy",
    "tidying_procedure",
    "common_tidy_iterative",
    "DiagonalBackend",
    "PatternBackend",
    "WindowedBackend",
    "EigenfactorRecord",
    "relative_scale_table",
    "rank_corank",
    "m_set",
    "separation_sequence",
    "verify_suite",
    "weyl_action",
    "full_report",
    "__version__",
]
