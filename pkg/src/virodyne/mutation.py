"""Two-parameter Kimura substitution matrices and mutation-direction ranking.

The base substitution channel assigns probability q to the transition
partner (A<->G, C<->T), gamma*q to each of the two transversion partners,
and 1 - q(1 + 2 gamma) to staying put, giving a symmetric row-stochastic
4x4 matrix. Restricted modes (transitions only / transversions only) zero
the excluded class and rescale the kept off-diagonal entries so that the
total per-row mutation mass q(1 + 2 gamma) is preserved: conditioned on a
mutation happening, it is of the kept class.

Because per-site mutations are treated as independent, the 64x64 codon
matrix is the threefold Kronecker product of the base matrix, and the
amino-acid matrix aggregates codon paths under a per-amino-acid codon
weight distribution. STOP is carried as a first-class 21st state (a sense
codon can mutate into a termination codon); a STOP-free 20x20 conditional
view is available when downstream tooling requires it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .core import (
    AMINO_STATE_INDEX,
    AMINO_STATES,
    CODON_INDEX,
    CODONS,
    NUCLEOTIDE_INDEX,
    NUCLEOTIDES,
    STANDARD_GENETIC_CODE,
    TRANSITION_PARTNER,
)
from .errors import InvalidParams, InvalidWeights, NoData
from .seqstat import Alphabet, AlignmentMatrix, column_distribution

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class KimuraParams:
    """q: per-event transition probability scale; gamma: transversion-to-
    transition factor. Validity requires q (1 + 2 gamma) <= 1."""

    q: float
    gamma: float

    def __post_init__(self):
        if not (math.isfinite(self.q) and math.isfinite(self.gamma)):
            raise InvalidParams("q and gamma must be finite")
        if self.q < 0 or self.gamma < 0:
            raise InvalidParams("q and gamma must be >= 0")
        if self.q * (1.0 + 2.0 * self.gamma) > 1.0 + 1e-15:
            raise InvalidParams(
                f"q (1 + 2 gamma) = {self.q * (1 + 2 * self.gamma)} exceeds 1"
            )

    @property
    def mutation_mass(self) -> float:
        return self.q * (1.0 + 2.0 * self.gamma)


class SubstitutionMode:
    FULL = "full"
    TRANSITIONS_ONLY = "ts"
    TRANSVERSIONS_ONLY = "tv"

    ALL = (FULL, TRANSITIONS_ONLY, TRANSVERSIONS_ONLY)


@dataclass(frozen=True)
class SubstitutionMatrix:
    """Row-stochastic substitution matrix with ordered state labels."""

    level: str               # 'base' | 'codon' | 'amino'
    states: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        n = len(self.states)
        if m.shape != (n, n):
            raise ValueError(f"matrix shape {m.shape} does not match {n} states")
        if (m < -ROW_SUM_TOL).any():
            raise ValueError("substitution probabilities must be >= 0")
        rows = m.sum(axis=1)
        if np.abs(rows - 1.0).max() > 1e-9:
            raise ValueError(f"rows must sum to 1, worst deviation {np.abs(rows-1).max()}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "states", tuple(self.states))

    def index(self, state: str) -> int:
        return self.states.index(state)

    def prob(self, src: str, dst: str) -> float:
        return float(self.matrix[self.index(src), self.index(dst)])


def kimura_base_matrix(params: KimuraParams,
                       mode: str = SubstitutionMode.FULL) -> SubstitutionMatrix:
    """4x4 base substitution matrix over states A, C, G, T."""
    if mode not in SubstitutionMode.ALL:
        raise ValueError(f"mode must be one of {SubstitutionMode.ALL}")
    q, g = params.q, params.gamma
    mass = params.mutation_mass
    m = np.zeros((4, 4))
    for i, a in enumerate(NUCLEOTIDES):
        for j, b in enumerate(NUCLEOTIDES):
            if a == b:
                continue
            m[i, j] = q if TRANSITION_PARTNER[a] == b else g * q
    if mode == SubstitutionMode.TRANSITIONS_ONLY:
        keep = np.zeros_like(m, dtype=bool)
        for a, b in TRANSITION_PARTNER.items():
            keep[NUCLEOTIDE_INDEX[a], NUCLEOTIDE_INDEX[b]] = True
        m = _restrict(m, keep, mass)
    elif mode == SubstitutionMode.TRANSVERSIONS_ONLY:
        keep = (m > 0)
        for a, b in TRANSITION_PARTNER.items():
            keep[NUCLEOTIDE_INDEX[a], NUCLEOTIDE_INDEX[b]] = False
        m = _restrict(m, keep, mass)
    np.fill_diagonal(m, 0.0)
    np.fill_diagonal(m, 1.0 - m.sum(axis=1))
    return SubstitutionMatrix(level="base", states=tuple(NUCLEOTIDES), matrix=m)


def _restrict(m: np.ndarray, keep: np.ndarray, mass: float) -> np.ndarray:
    """Zero the excluded off-diagonals and rescale the kept ones so each row
    still carries `mass` of mutation probability."""
    out = np.where(keep, m, 0.0)
    if mass == 0.0:
        return out
    for i in range(m.shape[0]):
        row = out[i].sum()
        if row > 0:
            # Shares first: dividing same-magnitude entries stays finite
            # even when the kept class is subnormal (tiny gamma * q).
            out[i] = (out[i] / row) * mass
    return out


def codon_matrix(base: SubstitutionMatrix) -> SubstitutionMatrix:
    """64x64 codon matrix: independent per-site mutation, so the entry for
    c -> c' is the product of the three per-position base entries
    (threefold Kronecker product of the base matrix)."""
    if base.level != "base":
        raise ValueError("codon_matrix expects a base-level matrix")
    b = base.matrix
    m = np.kron(np.kron(b, b), b)
    return SubstitutionMatrix(level="codon", states=CODONS, matrix=m)


def uniform_codon_weights() -> np.ndarray:
    """Uniform weight over the synonymous codons of each amino acid."""
    w = np.zeros(64)
    for aa in AMINO_STATES:
        codons = STANDARD_GENETIC_CODE.codons_for(aa)
        for c in codons:
            w[CODON_INDEX[c]] = 1.0 / len(codons)
    return w


def empirical_codon_weights(codon_counts: Mapping[str, float]) -> np.ndarray:
    """Weights proportional to observed codon counts, normalized within each
    amino acid's synonym class; classes with no observations fall back to
    uniform."""
    w = np.zeros(64)
    for codon, count in codon_counts.items():
        if codon not in CODON_INDEX:
            raise InvalidWeights(f"unknown codon {codon!r}")
        if count < 0:
            raise InvalidWeights(f"negative count for codon {codon!r}")
        w[CODON_INDEX[codon]] = float(count)
    for aa in AMINO_STATES:
        codons = STANDARD_GENETIC_CODE.codons_for(aa)
        idx = [CODON_INDEX[c] for c in codons]
        total = w[idx].sum()
        if total > 0:
            w[idx] /= total
        else:
            w[idx] = 1.0 / len(idx)
    return w


def _validate_weights(weights: np.ndarray) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (64,):
        raise InvalidWeights(f"codon weights must have shape (64,), got {w.shape}")
    if (w < 0).any() or not np.isfinite(w).all():
        raise InvalidWeights("codon weights must be finite and >= 0")
    for aa in AMINO_STATES:
        idx = [CODON_INDEX[c] for c in STANDARD_GENETIC_CODE.codons_for(aa)]
        total = w[idx].sum()
        if abs(total - 1.0) > 1e-9:
            raise InvalidWeights(
                f"weights for {aa!r} sum to {total}, expected 1"
            )
    return w


def amino_matrix(codon: SubstitutionMatrix,
                 codon_weights: np.ndarray | None = None) -> SubstitutionMatrix:
    """21x21 amino-acid matrix (20 amino acids + STOP).

    P(a -> b) = sum over codons c of a, weighted, of the total codon-matrix
    mass landing in b's codons. Weights within each synonym class must sum
    to 1 (uniform by default).
    """
    if codon.level != "codon":
        raise ValueError("amino_matrix expects a codon-level matrix")
    w = _validate_weights(uniform_codon_weights() if codon_weights is None
                          else codon_weights)
    # Aggregation matrix: codon -> amino acid membership.
    agg = np.zeros((64, 21))
    for c in CODONS:
        agg[CODON_INDEX[c], AMINO_STATE_INDEX[STANDARD_GENETIC_CODE.translate(c)]] = 1.0
    weighted = w[:, None] * codon.matrix           # (64, 64)
    m = agg.T @ weighted @ agg                     # (21, 21)
    return SubstitutionMatrix(level="amino", states=tuple(AMINO_STATES), matrix=m)


def drop_stop_state(amino: SubstitutionMatrix) -> SubstitutionMatrix:
    """20x20 view conditioned on not mutating into STOP."""
    if amino.level != "amino":
        raise ValueError("drop_stop_state expects an amino-level matrix")
    keep = [i for i, s in enumerate(amino.states) if s != "*"]
    m = amino.matrix[np.ix_(keep, keep)]
    m = m / m.sum(axis=1, keepdims=True)
    states = tuple(amino.states[i] for i in keep)
    return SubstitutionMatrix(level="amino", states=states, matrix=m)


# ---------------------------------------------------------------------------
# Direction reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RankedTarget:
    state: str
    probability: float


@dataclass(frozen=True)
class DirectionReport:
    """Where a position's residues are likely to mutate.

    `source` is the observed state distribution at the position; `targets`
    ranks destination states by the pushed-forward mutation mass
    sum_{a != b} p(a) P(a -> b), self-transitions excluded, ties broken by
    state order. Probabilities are per-generation masses, not renormalized.
    """

    level: str
    mode: str
    position: int
    source: dict[str, float]
    targets: tuple[RankedTarget, ...]


def _rank_targets(source_probs: np.ndarray, matrix: SubstitutionMatrix
                  ) -> tuple[RankedTarget, ...]:
    push = source_probs @ matrix.matrix
    self_mass = source_probs * np.diag(matrix.matrix)
    mutated = push - self_mass
    order = sorted(range(len(matrix.states)),
                   key=lambda j: (-mutated[j], j))
    return tuple(RankedTarget(matrix.states[j], float(mutated[j]))
                 for j in order)


def _codon_column(alignment: AlignmentMatrix, position: int) -> dict[str, int]:
    """Observed codon counts at 1-based amino position of a nucleotide
    alignment (columns 3p-2 .. 3p); rows with masked bases are skipped."""
    if alignment.alphabet is not Alphabet.NUCLEOTIDE:
        raise ValueError("codon columns need a nucleotide alignment")
    j0 = 3 * (position - 1)
    if j0 + 3 > alignment.length:
        raise IndexError(
            f"amino position {position} needs nucleotide columns up to "
            f"{j0 + 3}, alignment length is {alignment.length}"
        )
    counts: dict[str, int] = {}
    sub = alignment.matrix[:, j0:j0 + 3]
    ok = alignment.mask[:, j0:j0 + 3].all(axis=1)
    for row in sub[ok]:
        codon = "".join(row)
        counts[codon] = counts.get(codon, 0) + 1
    if not counts:
        raise NoData(f"no complete codons at amino position {position}")
    return counts


def mutation_direction(
    alignment: AlignmentMatrix,
    position: int,
    params: KimuraParams,
    level: str = "amino",
    mode: str = SubstitutionMode.FULL,
    codon_weights: np.ndarray | None = None,
) -> DirectionReport:
    """Rank the likely mutation targets of one alignment position.

    level 'base': the position indexes a nucleotide column pushed through
    the 4x4 matrix. level 'codon' / 'amino': for nucleotide alignments the
    position indexes a codon (three nucleotide columns); amino level for a
    protein alignment uses the supplied codon weights (uniform-synonymous
    fallback) to resolve codons.
    """
    base = kimura_base_matrix(params, mode)
    if level == "base":
        dist = column_distribution(alignment, position)
        if alignment.alphabet is not Alphabet.NUCLEOTIDE:
            raise ValueError("base-level direction needs a nucleotide alignment")
        source = dist.probabilities
        report_matrix = base
        source_dict = {s: float(p) for s, p in zip(NUCLEOTIDES, source) if p > 0}
        targets = _rank_targets(source, report_matrix)
        return DirectionReport(level=level, mode=mode, position=position,
                               source=source_dict, targets=targets)

    cod = codon_matrix(base)
    if level == "codon":
        counts = _codon_column(alignment, position)
        total = sum(counts.values())
        source = np.zeros(64)
        for c, n in counts.items():
            source[CODON_INDEX[c]] = n / total
        targets = _rank_targets(source, cod)
        source_dict = {c: float(source[CODON_INDEX[c]]) for c in counts}
        return DirectionReport(level=level, mode=mode, position=position,
                               source=source_dict, targets=targets)

    if level == "amino":
        if alignment.alphabet is Alphabet.NUCLEOTIDE:
            counts = _codon_column(alignment, position)
            weights = empirical_codon_weights(counts) if codon_weights is None \
                else _validate_weights(codon_weights)
            total = sum(counts.values())
            source = np.zeros(21)
            for c, n in counts.items():
                aa = STANDARD_GENETIC_CODE.translate(c)
                source[AMINO_STATE_INDEX[aa]] += n / total
        else:
            dist = column_distribution(alignment, position)
            source = dist.probabilities
            weights = (uniform_codon_weights() if codon_weights is None
                       else _validate_weights(codon_weights))
        am = amino_matrix(cod, weights)
        targets = _rank_targets(source, am)
        source_dict = {s: float(p) for s, p in zip(AMINO_STATES, source) if p > 0}
        return DirectionReport(level=level, mode=mode, position=position,
                               source=source_dict, targets=targets)

    raise ValueError("level must be 'base', 'codon', or 'amino'")
