"""Exact lattice computations for linear automorphisms of Q_p^n.

An automorphism of the vector group Q_p^n is an invertible rational matrix.
Compact open subgroups are full-rank lattices over the p-local integers
(rationals with denominator prime to p); eigenfactors of commuting families
live on partial-rank lattices inside invariant subspaces.  All arithmetic is
exact: a lattice is stored as a p-power scale times a canonical integral
Hermite basis, so equality of subgroups is equality of representations.

Slopes are root valuations of characteristic polynomials.  A slope -1
direction is expanded by the automorphism (valuations drop by 1 per step),
slope +1 is contracted.  The scale of alpha is p raised to the sum of -v over
root valuations v <= 0, and a lattice V is tidy when the displacement index
[alpha(V) : alpha(V) n V] attains that minimum.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from math import gcd, lcm

from .errors import (
    CommensurabilityError,
    InfiniteIndexError,
    InputError,
    SlopeSeparabilityError,
    UnsupportedInputError,
)
from .exactmath import (
    IntegerMatrix,
    charpoly,
    factor_over_q,
    hermite_form,
    hermite_form_with_transform,
    is_prime,
    kernel_basis,
    mat_identity,
    mat_inverse,
    mat_mul,
    mat_vec,
    newton_polygon,
    padic_valuation,
    rat_kernel,
    smith_decomposition,
)


def _frac_rows(rows):
    return tuple(tuple(Fraction(x) for x in row) for row in rows)


def _rat_det(mat):
    work = [list(row) for row in mat]
    n = len(work)
    det = Fraction(1)
    for col in range(n):
        piv = next((r for r in range(col, n) if work[r][col] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != col:
            work[col], work[piv] = work[piv], work[col]
            det = -det
        det *= work[col][col]
        inv = 1 / work[col][col]
        for r in range(col + 1, n):
            if work[r][col] != 0:
                f = work[r][col] * inv
                work[r] = [x - f * y for x, y in zip(work[r], work[col])]
    return det


def _solve_in_span(basis_cols, targets, n):
    """Solve B x = t for each target, B the n x r matrix with the given
    columns (full column rank).  Returns the r x k solution columns, or None
    when some target leaves the span."""
    r = len(basis_cols)
    if r == 0:
        if any(any(x != 0 for x in t) for t in targets):
            return None
        return [[] for _ in targets]
    # Gram trick: B^T B is invertible over Q exactly when columns are
    # independent, because x^T B^T B x is a sum of rational squares.
    bt = [list(c) for c in basis_cols]  # r x n
    gram = [[sum(bt[i][t] * bt[j][t] for t in range(n)) for j in range(r)] for i in range(r)]
    ginv = mat_inverse(gram)
    sols = []
    for t in targets:
        rhs = [sum(bt[i][k] * t[k] for k in range(n)) for i in range(r)]
        x = mat_vec(ginv, rhs)
        back = [sum(basis_cols[j][i] * x[j] for j in range(r)) for i in range(n)]
        if any(a != b for a, b in zip(back, t)):
            return None
        sols.append(x)
    return sols


class Lattice:
    """Finitely generated module over the p-local integers inside Q^n.

    Canonical representation: ambient dimension, prime, an integer exponent e,
    and an integral column Hermite basis H of full column rank whose entries
    are saturated at every prime other than p and share no factor of p; the
    module is p^e times the span of H.  Construct through span()/standard(),
    never directly.
    """

    __slots__ = ("ambient", "prime", "exponent", "hermite")

    def __init__(self, ambient, prime, exponent, hermite):
        self.ambient = ambient
        self.prime = prime
        self.exponent = exponent
        self.hermite = hermite  # IntegerMatrix (n x r) or None for rank 0

    # -- construction -------------------------------------------------

    @classmethod
    def standard(cls, n, p):
        """The lattice of p-locally integral vectors, Z_(p)^n."""
        _check_ambient(n, p)
        return cls(n, p, 0, IntegerMatrix.identity(n))

    @classmethod
    def zero(cls, n, p):
        _check_ambient(n, p)
        return cls(n, p, 0, None)

    @classmethod
    def span(cls, p, columns, ambient=None):
        """Module generated by the given column vectors (exact rationals)."""
        cols = [[Fraction(x) for x in c] for c in columns]
        cols = [c for c in cols if any(x != 0 for x in c)]
        if ambient is None:
            if not cols:
                raise InputError("ambient dimension required for an empty span")
            ambient = len(cols[0])
        _check_ambient(ambient, p)
        if any(len(c) != ambient for c in cols):
            raise InputError("generator vectors of unequal length")
        if not cols:
            return cls.zero(ambient, p)
        den = 1
        for c in cols:
            for x in c:
                den = lcm(den, x.denominator)
        a = padic_valuation(den, p)
        scaled = [[int(x * den) for x in c] for c in cols]
        mat = IntegerMatrix(tuple(zip(*scaled)))
        rank, factors, pinv, _ = smith_decomposition(mat)
        if rank == 0:
            return cls.zero(ambient, p)
        # Replace each elementary divisor by its p-part: prime-to-p content
        # is a unit p-locally, and this saturates the basis at other primes.
        gens = tuple(
            tuple(
                pinv.entries[i][j] * p ** padic_valuation(factors[j], p)
                for j in range(rank)
            )
            for i in range(ambient)
        )
        h = hermite_form(IntegerMatrix(gens))
        c = min(
            padic_valuation(x, p)
            for row in h.entries
            for x in row
            if x != 0
        )
        if c:
            h = IntegerMatrix(
                tuple(tuple(x // p**c for x in row) for row in h.entries)
            )
        return cls(ambient, p, c - a, h)

    # -- inspection ---------------------------------------------------

    @property
    def rank(self):
        return 0 if self.hermite is None else self.hermite.cols

    def basis_columns(self):
        """Generators as columns of exact rationals (p^e times Hermite)."""
        if self.hermite is None:
            return ()
        s = Fraction(self.prime) ** self.exponent
        return tuple(
            tuple(s * self.hermite.entries[i][j] for i in range(self.ambient))
            for j in range(self.hermite.cols)
        )

    def to_data(self):
        return {
            "ambient": self.ambient,
            "prime": self.prime,
            "rank": self.rank,
            "exponent": self.exponent,
            "basis": [] if self.hermite is None else self.hermite.to_lists(),
        }

    def __eq__(self, other):
        if not isinstance(other, Lattice):
            return NotImplemented
        return (
            self.ambient == other.ambient
            and self.prime == other.prime
            and self.exponent == other.exponent
            and (self.hermite.entries if self.hermite else None)
            == (other.hermite.entries if other.hermite else None)
        )

    def __hash__(self):
        return hash(
            (
                self.ambient,
                self.prime,
                self.exponent,
                self.hermite.entries if self.hermite else None,
            )
        )

    def __repr__(self):
        if self.hermite is None:
            return f"Lattice(0 in Q^{self.ambient}, p={self.prime})"
        return (
            f"Lattice(p={self.prime}, {self.prime}^{self.exponent} * "
            f"{self.hermite.to_lists()})"
        )

    # -- module arithmetic --------------------------------------------

    def _require_compatible(self, other):
        if self.ambient != other.ambient or self.prime != other.prime:
            raise InputError("lattices live in different ambient spaces")

    def __add__(self, other):
        self._require_compatible(other)
        cols = list(self.basis_columns()) + list(other.basis_columns())
        return Lattice.span(self.prime, cols, ambient=self.ambient)

    def intersect(self, other):
        self._require_compatible(other)
        if self.rank == 0 or other.rank == 0:
            return Lattice.zero(self.ambient, self.prime)
        p = self.prime
        e0 = min(self.exponent, other.exponent)
        a = [
            [self.hermite.entries[i][j] * p ** (self.exponent - e0) for j in range(self.rank)]
            for i in range(self.ambient)
        ]
        b = [
            [other.hermite.entries[i][j] * p ** (other.exponent - e0) for j in range(other.rank)]
            for i in range(self.ambient)
        ]
        stacked = IntegerMatrix(
            tuple(tuple(a[i] + [-x for x in b[i]]) for i in range(self.ambient))
        )
        kern = kernel_basis(stacked)
        if kern is None:
            return Lattice.zero(self.ambient, p)
        scale = Fraction(p) ** e0
        cols = [
            [
                scale * sum(a[i][t] * kern.entries[t][j] for t in range(self.rank))
                for i in range(self.ambient)
            ]
            for j in range(kern.cols)
        ]
        return Lattice.span(p, cols, ambient=self.ambient)

    def image(self, matrix):
        """Image under a rational n x n matrix applied to the generators."""
        a = _frac_rows(matrix)
        if len(a) != self.ambient or any(len(r) != self.ambient for r in a):
            raise InputError("matrix shape does not match the ambient space")
        cols = [mat_vec([list(r) for r in a], list(c)) for c in self.basis_columns()]
        return Lattice.span(self.prime, cols, ambient=self.ambient)

    def contains(self, other):
        self._require_compatible(other)
        return (self + other) == self

    def member(self, vector):
        v = [Fraction(x) for x in vector]
        if len(v) != self.ambient:
            raise InputError("vector length does not match the ambient space")
        if all(x == 0 for x in v):
            return True
        if self.rank == 0:
            return False
        sols = _solve_in_span(self.basis_columns(), [v], self.ambient)
        if sols is None:
            return False
        return all(padic_valuation(x, self.prime) >= 0 for x in sols[0])

    def same_span(self, other):
        self._require_compatible(other)
        if self.rank != other.rank:
            return False
        if self.rank == 0:
            return True
        return (
            _solve_in_span(self.basis_columns(), other.basis_columns(), self.ambient)
            is not None
        )

    def index_exponent_in(self, super_lattice):
        """v_p of [super : self] for self a finite-index sublattice."""
        self._require_compatible(super_lattice)
        if self.rank != super_lattice.rank:
            raise CommensurabilityError(
                f"ranks differ: {self.rank} vs {super_lattice.rank}"
            )
        if self.rank == 0:
            return 0
        x = _solve_in_span(
            super_lattice.basis_columns(), self.basis_columns(), self.ambient
        )
        if x is None:
            raise CommensurabilityError("lattices span different subspaces")
        cols = x  # r columns, each of length r
        if any(padic_valuation(v, self.prime) < 0 for col in cols for v in col):
            raise InfiniteIndexError(super_lattice, self)
        mat = [[cols[j][i] for j in range(len(cols))] for i in range(len(cols))]
        return padic_valuation(_rat_det(mat), self.prime)

    def intersect_subspace(self, columns):
        """Sublattice of vectors lying in the rational span of the columns."""
        cols = [[Fraction(x) for x in c] for c in columns]
        cols = [c for c in cols if any(x != 0 for x in c)]
        if not cols:
            return Lattice.zero(self.ambient, self.prime)
        if self.rank == 0:
            return self
        # The linear conditions cutting out the span: vectors annihilating
        # every spanning column, i.e. the kernel of the matrix whose rows
        # are those columns.
        conditions = rat_kernel([list(c) for c in cols])
        if not conditions:
            return self
        basis = self.basis_columns()
        t = [
            [sum(cond[i] * basis[j][i] for i in range(self.ambient)) for j in range(self.rank)]
            for cond in conditions
        ]
        rows = []
        for row in t:
            den = 1
            for v in row:
                den = lcm(den, v.denominator)
            rows.append(tuple(int(v * den) for v in row))
        kern = kernel_basis(IntegerMatrix(tuple(rows)))
        if kern is None:
            return Lattice.zero(self.ambient, self.prime)
        new_cols = [
            [
                sum(basis[t_][i] * kern.entries[t_][j] for t_ in range(self.rank))
                for i in range(self.ambient)
            ]
            for j in range(kern.cols)
        ]
        return Lattice.span(self.prime, new_cols, ambient=self.ambient)


def _check_ambient(n, p):
    if not isinstance(n, int) or n < 1:
        raise InputError(f"ambient dimension must be a positive integer, got {n!r}")
    if not is_prime(p):
        raise InputError(f"{p!r} is not a prime")


def lattice_index(first, second):
    """[second : first] as a p-power when first is contained in second.

    For commensurable but incomparable lattices returns the pair
    ([second : first n second], [first : first n second]).
    """
    first._require_compatible(second)
    if not first.same_span(second):
        raise CommensurabilityError("lattices are not commensurable")
    p = first.prime
    if second.contains(first):
        return p ** first.index_exponent_in(second)
    meet = first.intersect(second)
    return (
        p ** meet.index_exponent_in(second),
        p ** meet.index_exponent_in(first),
    )


def lattice_arith(op, *args):
    """Dispatcher for the four module operations used by the front end."""
    if op == "image":
        lattice, matrix = args
        return lattice.image(matrix)
    if op == "intersect":
        a, b = args
        return a.intersect(b)
    if op == "sum":
        a, b = args
        return a + b
    if op == "index":
        a, b = args
        return lattice_index(a, b)
    raise InputError(f"unknown lattice operation {op!r}")


# ---------------------------------------------------------------------------
# Automorphisms


@dataclass(frozen=True)
class PAdicAutomorphism:
    matrix: tuple
    prime: int

    def __post_init__(self):
        rows = _frac_rows(self.matrix)
        object.__setattr__(self, "matrix", rows)
        n = len(rows)
        if n < 1 or any(len(r) != n for r in rows):
            raise InputError("automorphism matrix must be square and nonempty")
        if not is_prime(self.prime):
            raise InputError(f"{self.prime!r} is not a prime")
        if _rat_det(rows) == 0:
            from .errors import SingularityError

            raise SingularityError("automorphism matrix is singular")

    @property
    def dimension(self):
        return len(self.matrix)

    def det(self):
        return _rat_det(self.matrix)

    def charpoly(self):
        return charpoly([list(r) for r in self.matrix])

    def inverse(self):
        inv = mat_inverse([list(r) for r in self.matrix])
        return PAdicAutomorphism(tuple(tuple(r) for r in inv), self.prime)

    def compose(self, other):
        if self.prime != other.prime or self.dimension != other.dimension:
            raise InputError("automorphisms act on different spaces")
        prod = mat_mul([list(r) for r in self.matrix], [list(r) for r in other.matrix])
        return PAdicAutomorphism(tuple(tuple(r) for r in prod), self.prime)

    __mul__ = compose

    def power(self, k):
        if k == 0:
            return PAdicAutomorphism(
                tuple(tuple(mat_identity(self.dimension)[i]) for i in range(self.dimension)),
                self.prime,
            )
        base = self if k > 0 else self.inverse()
        out = base
        for _ in range(abs(k) - 1):
            out = out.compose(base)
        return out

    def commutes_with(self, other):
        a = mat_mul([list(r) for r in self.matrix], [list(r) for r in other.matrix])
        b = mat_mul([list(r) for r in other.matrix], [list(r) for r in self.matrix])
        return a == b

    def __repr__(self):
        return f"PAdicAutomorphism(p={self.prime}, {[list(r) for r in self.matrix]})"


def word(generators, exponents):
    """Product of generator powers; order-free for commuting families."""
    gens = list(generators)
    exps = list(exponents)
    if len(gens) != len(exps):
        raise InputError("one exponent per generator required")
    if not gens:
        raise InputError("empty generator list")
    out = gens[0].power(0)
    for g, e in zip(gens, exps):
        if e:
            out = out.compose(g.power(e))
    return out


# ---------------------------------------------------------------------------
# Scale and slopes


def scale(alpha):
    """Minimal displacement index of alpha over all lattices, as an integer.

    Read off the Newton polygon of the characteristic polynomial: each
    polygon segment of strictly negative root valuation -s contributes its
    integer rise s * length to the exponent of p.
    """
    poly = newton_polygon(alpha.charpoly(), alpha.prime)
    expo = Fraction(0)
    for v, m in poly.root_valuations():
        if v < 0:
            expo += -v * m
    assert expo.denominator == 1
    return alpha.prime ** int(expo)


def _poly_str(coeffs):
    terms = []
    for i in range(len(coeffs) - 1, -1, -1):
        c = coeffs[i]
        if c == 0:
            continue
        if i == 0:
            terms.append(str(c))
        elif i == 1:
            terms.append(f"{c}*x" if c != 1 else "x")
        else:
            terms.append(f"{c}*x^{i}" if c != 1 else f"x^{i}")
    return " + ".join(terms) if terms else "0"


@dataclass(frozen=True)
class SlopePiece:
    slope: Fraction
    basis: tuple  # columns spanning the invariant subspace
    dim: int


@dataclass(frozen=True)
class SlopeDecomposition:
    ambient: int
    prime: int
    pieces: tuple  # SlopePiece, sorted by slope

    def subspace_columns(self, predicate):
        cols = []
        for piece in self.pieces:
            if predicate(piece.slope):
                cols.extend(piece.basis)
        return cols


def _poly_of_matrix(coeffs, rows):
    n = len(rows)
    out = [[Fraction(coeffs[-1]) * (i == j) for j in range(n)] for i in range(n)]
    for c in reversed(coeffs[:-1]):
        out = mat_mul(rows, out)
        for i in range(n):
            out[i][i] += c
    return out


def slope_decomposition(alpha):
    """Invariant-subspace grading by root valuation.

    Requires each rational-irreducible factor of the characteristic
    polynomial to carry a single Newton-polygon slope; the subspace for a
    slope is the kernel of the product of those factors at alpha, each taken
    to its multiplicity.
    """
    p = alpha.prime
    n = alpha.dimension
    rows = [list(r) for r in alpha.matrix]
    by_slope = {}
    for coeffs, mult in factor_over_q(alpha.charpoly()):
        vals = newton_polygon(list(coeffs), p).root_valuations()
        if len(vals) != 1:
            raise SlopeSeparabilityError(
                _poly_str(coeffs),
                "irreducible factor carries more than one root valuation: "
                + _poly_str(coeffs),
            )
        by_slope.setdefault(vals[0][0], []).append((coeffs, mult))
    pieces = []
    for slope in sorted(by_slope):
        prod = mat_identity(n)
        for coeffs, mult in by_slope[slope]:
            fm = _poly_of_matrix(list(coeffs), rows)
            for _ in range(mult):
                prod = mat_mul(prod, fm)
        basis = rat_kernel(prod)
        pieces.append(
            SlopePiece(slope=slope, basis=tuple(tuple(v) for v in basis), dim=len(basis))
        )
    total = sum(piece.dim for piece in pieces)
    if total != n:
        raise RuntimeError("slope subspaces do not fill the space (internal)")
    return SlopeDecomposition(ambient=n, prime=p, pieces=tuple(pieces))


# ---------------------------------------------------------------------------
# Indices and tidiness


def expansion_exponent(alpha, lattice):
    """v_p of [alpha(V) : alpha(V) n V]."""
    img = lattice.image(alpha.matrix)
    meet = img.intersect(lattice)
    return meet.index_exponent_in(img)


def expansion_index(alpha, lattice):
    return alpha.prime ** expansion_exponent(alpha, lattice)


def modular_exponent(alpha, lattice):
    """v_p of the measure ratio of alpha(V) to V (can be negative)."""
    img = lattice.image(alpha.matrix)
    meet = img.intersect(lattice)
    return meet.index_exponent_in(img) - meet.index_exponent_in(lattice)


def is_invariant(alpha, lattice):
    return lattice.image(alpha.matrix) == lattice


def step1_tidy(alpha):
    """Trim the standard lattice by forward images until the index is minimal.

    Iterates V_m = intersection of alpha^k(Z_(p)^n) for k = 0..m and returns
    the first iterate whose displacement index equals the scale; in this
    commutative slope-separable setting minimal index certifies tidiness.
    """
    sd = slope_decomposition(alpha)
    target = scale(alpha)
    n = alpha.dimension
    spread = sd.pieces[-1].slope - sd.pieces[0].slope
    bound = n + 2 + (math.ceil(n * spread) if spread > 0 else 0)
    standard = Lattice.standard(n, alpha.prime)
    v = standard
    for _ in range(bound + 1):
        if expansion_index(alpha, v) == target:
            return v
        v = standard.intersect(v.image(alpha.matrix))
    raise RuntimeError("forward trimming failed to reach the minimal index (internal)")


def parts(alpha, lattice):
    """(V_plus, V_minus, V_zero) of a tidy lattice.

    V_plus is the sublattice on the slope-nonpositive subspace (the
    directions alpha does not contract), V_minus on the slope-nonnegative
    one, V_zero their intersection; checks T1 as V = V_plus + V_minus.
    """
    sd = slope_decomposition(alpha)
    if expansion_index(alpha, lattice) != scale(alpha):
        raise InputError("lattice is not tidy: displacement index exceeds the scale")
    v_plus = lattice.intersect_subspace(sd.subspace_columns(lambda s: s <= 0))
    v_minus = lattice.intersect_subspace(sd.subspace_columns(lambda s: s >= 0))
    v_zero = v_plus.intersect(v_minus)
    if (v_plus + v_minus) != lattice:
        raise InputError("lattice is not tidy: it does not split into its parts")
    return v_plus, v_minus, v_zero


def _check_family(words, require_separable=True):
    ws = list(words)
    for w in ws:
        if not isinstance(w, PAdicAutomorphism):
            raise InputError("family members must be automorphisms")
    if len({(w.prime, w.dimension) for w in ws}) > 1:
        raise InputError("family members act on different spaces")
    for i in range(len(ws)):
        for j in range(i + 1, len(ws)):
            if not ws[i].commutes_with(ws[j]):
                raise UnsupportedInputError(
                    "only commuting families are supported here"
                )
    if require_separable:
        for w in ws:
            slope_decomposition(w)
    return ws


def eigenfactor(lattice, words):
    """Sublattice on which every listed automorphism word is non-contracting.

    Implements the common non-contracted part: the intersection of the
    lattice with each word's slope-nonpositive subspace.  The empty list
    returns the lattice itself.
    """
    ws = _check_family(words)
    if not ws:
        return lattice
    if any(w.dimension != lattice.ambient or w.prime != lattice.prime for w in ws):
        raise InputError("automorphisms and lattice live in different spaces")
    for w in ws:
        if expansion_index(w, lattice) != scale(w):
            raise InputError("lattice is not tidy for a member of the family")
    n = lattice.ambient
    cols = [tuple(Fraction(int(i == j)) for i in range(n)) for j in range(n)]
    for w in ws:
        sd = slope_decomposition(w)
        cols = _subspace_intersect(cols, sd.subspace_columns(lambda s: s <= 0), n)
        if not cols:
            break
    return lattice.intersect_subspace(cols)


def _subspace_intersect(cols_a, cols_b, n):
    if not cols_a or not cols_b:
        return []
    da, db = len(cols_a), len(cols_b)
    stacked = [
        [cols_a[j][i] for j in range(da)] + [-cols_b[j][i] for j in range(db)]
        for i in range(n)
    ]
    kern = rat_kernel(stacked)
    out = []
    for vec in kern:
        col = tuple(
            sum(cols_a[j][i] * vec[j] for j in range(da)) for i in range(n)
        )
        out.append(col)
    return out


def relative_scale(words, beta, lattice, verify=False):
    """Index by which beta expands the common eigenfactor of words + beta.

    With verify=True the index is recomputed from translated tidy lattices
    and must agree; a disagreement indicates a bug, not bad input.
    """
    ws = _check_family(list(words) + [beta])
    ef = eigenfactor(lattice, ws)
    result = _pure_expansion_index(beta, ef)
    if verify:
        candidates = [lattice.image(g.matrix) for g in ws]
        prod = ws[0]
        for g in ws[1:]:
            prod = prod.compose(g)
        candidates.append(lattice.image(prod.matrix))
        for cand in candidates:
            if any(expansion_index(g, cand) != scale(g) for g in ws):
                continue
            other = _pure_expansion_index(beta, eigenfactor(cand, ws))
            if other != result:
                raise RuntimeError(
                    "relative scale depended on the choice of tidy lattice (internal)"
                )
    return result


def _pure_expansion_index(beta, ef):
    if ef.rank == 0:
        return 1
    img = ef.image(beta.matrix)
    if not img.contains(ef):
        raise InputError("the eigenfactor is not purely expanded by the word")
    return beta.prime ** ef.index_exponent_in(img)


# ---------------------------------------------------------------------------
# Commuting families: common refinement, joint tidy lattices, eigenfactors


def _common_pieces(gens):
    """Simultaneous slope refinement: [(columns, slope vector)] covering Q^n."""
    n = gens[0].dimension
    pieces = [
        (
            [tuple(Fraction(int(i == j)) for i in range(n)) for j in range(n)],
            (),
        )
    ]
    for g in gens:
        sd = slope_decomposition(g)
        new = []
        for cols, slopes in pieces:
            for piece in sd.pieces:
                inter = _subspace_intersect(cols, list(piece.basis), n)
                if inter:
                    new.append((inter, slopes + (piece.slope,)))
        pieces = new
    if sum(len(cols) for cols, _ in pieces) != n:
        raise RuntimeError("joint slope refinement lost dimensions (internal)")
    return pieces


def _halfspace_monoid_exponents(nu):
    """Exponent vectors generating the monoid of words that do not expand a
    piece with slope vector nu: the two boundary directions of the kernel of
    nu together with one word of minimal positive slope."""
    g = len(nu)
    if all(x == 0 for x in nu):
        out = []
        for i in range(g):
            e = [0] * g
            e[i] = 1
            out.append(tuple(e))
            e2 = [0] * g
            e2[i] = -1
            out.append(tuple(e2))
        return out
    den = 1
    for x in nu:
        den = lcm(den, Fraction(x).denominator)
    w = [int(Fraction(x) * den) for x in nu]
    content = 0
    for x in w:
        content = gcd(content, abs(x))
    w = [x // content for x in w]
    mat = IntegerMatrix((tuple(w),))
    out = []
    kern = kernel_basis(mat)
    if kern is not None:
        for j in range(kern.cols):
            vec = tuple(kern.entries[i][j] for i in range(g))
            out.append(vec)
            out.append(tuple(-x for x in vec))
    h, u = hermite_form_with_transform(mat)
    piv = next(j for j in range(g) if h.entries[0][j] != 0)
    out.append(tuple(u.entries[i][piv] for i in range(g)))
    return out


def common_tidy(generators):
    """A lattice tidy for every word in a commuting slope-separable family.

    Built piecewise on the joint slope refinement: on each piece, close a
    base lattice under the monoid of all non-expanding words (generated by
    the slope-zero boundary directions and one minimal-slope word), which
    makes every word's action on the piece a pure containment.  The direct
    sum over pieces then realizes each word's scale exactly.
    """
    gens = _check_family(generators)
    if not gens:
        raise InputError("empty generator list")
    if len(gens) == 1:
        return step1_tidy(gens[0])
    p = gens[0].prime
    n = gens[0].dimension
    total = Lattice.zero(n, p)
    for cols, nu in _common_pieces(gens):
        piece_lattice = Lattice.span(p, cols, ambient=n)
        operators = [
            word(gens, exps).matrix for exps in _halfspace_monoid_exponents(nu)
        ]
        for _ in range(500):
            grown = piece_lattice
            for op in operators:
                grown = grown + piece_lattice.image(op)
            if grown == piece_lattice:
                break
            piece_lattice = grown
        else:
            raise RuntimeError("piece closure failed to stabilize (internal)")
        total = total + piece_lattice
    if total.rank != n:
        raise RuntimeError("joint tidy lattice is rank-deficient (internal)")
    for g in gens:
        if expansion_index(g, total) != scale(g):
            raise RuntimeError("joint tidy lattice misses a scale (internal)")
    return total


@dataclass(frozen=True)
class FamilyEigenfactor:
    key: str
    direction: tuple  # primitive integer slope direction over the generators
    lattice: Lattice
    delta_weight: tuple  # Fractions w with measure ratio p^(w . exponents)


def _primitive_direction(nu):
    den = 1
    for x in nu:
        den = lcm(den, Fraction(x).denominator)
    w = [int(Fraction(x) * den) for x in nu]
    content = 0
    for x in w:
        content = gcd(content, abs(x))
    return tuple(x // content for x in w)


def family_eigenfactors(generators, tidy=None):
    """Distinct eigenfactors of a commuting family, plus the inert part.

    Eigenfactors are grouped by the direction of the joint slope vector:
    pieces whose slope vectors are positive multiples of one another expand
    and contract together under every word, and each such ray together with
    the slope-zero part carries one eigenfactor.  Returns (records, inert)
    with deterministic ordering by direction.
    """
    gens = _check_family(generators)
    if tidy is None:
        tidy = common_tidy(gens) if len(gens) > 1 else step1_tidy(gens[0])
    pieces = _common_pieces(gens)
    zero_cols = []
    rays = {}
    for cols, nu in pieces:
        if all(x == 0 for x in nu):
            zero_cols.extend(cols)
        else:
            rays.setdefault(_primitive_direction(nu), []).append((cols, nu))
    records = []
    for direction in sorted(rays):
        cols = list(zero_cols)
        weight = [Fraction(0)] * len(gens)
        for piece_cols, nu in rays[direction]:
            cols.extend(piece_cols)
            for i, s in enumerate(nu):
                weight[i] += -Fraction(s) * len(piece_cols)
        records.append(
            FamilyEigenfactor(
                key="ray" + str(direction).replace(" ", ""),
                direction=direction,
                lattice=tidy.intersect_subspace(cols),
                delta_weight=tuple(weight),
            )
        )
    inert = tidy.intersect_subspace(zero_cols)
    return records, inert
