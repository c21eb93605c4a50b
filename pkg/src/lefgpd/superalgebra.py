"""Z/2-graded endomorphisms of the exterior algebra and their supertraces.

A :class:`GradedEndomorphism` stores one block per form degree ``p``.  Blocks
may carry leading batch axes (one entry per quadrature node, say); every
operation broadcasts over them.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np


def multi_indices(n, p):
    """Strictly increasing multi-indices of length ``p`` in lexicographic order."""
    return list(itertools.combinations(range(n), p))


@dataclass(frozen=True)
class DeRhamBundleData:
    n: int

    @property
    def basis(self):
        return [multi_indices(self.n, p) for p in range(self.n + 1)]

    @property
    def ranks(self):
        return [comb(self.n, p) for p in range(self.n + 1)]

    @property
    def total_rank(self):
        return 2 ** self.n


@dataclass
class GradedEndomorphism:
    blocks: list

    def __post_init__(self):
        self.blocks = [np.asarray(b) for b in self.blocks]
        n = len(self.blocks) - 1
        for p, b in enumerate(self.blocks):
            if b.shape[-2:] != (comb(n, p), comb(n, p)):
                raise ValueError(f"block {p} has shape {b.shape[-2:]}, expected C({n},{p}) square")

    @property
    def n(self):
        return len(self.blocks) - 1

    @classmethod
    def identity(cls, n):
        return cls([np.eye(comb(n, p)) for p in range(n + 1)])

    @classmethod
    def from_degree_zero(cls, n, value):
        """Endomorphism acting by ``value`` on functions and by zero on higher forms."""
        value = np.asarray(value, dtype=float)
        blocks = [value[..., None, None]]
        blocks += [np.zeros(value.shape + (comb(n, p), comb(n, p))) for p in range(1, n + 1)]
        return cls(blocks)

    def __matmul__(self, other):
        if not isinstance(other, GradedEndomorphism):
            return NotImplemented
        return GradedEndomorphism([a @ b for a, b in zip(self.blocks, other.blocks)])

    def __add__(self, other):
        return GradedEndomorphism([a + b for a, b in zip(self.blocks, other.blocks)])

    def __sub__(self, other):
        return GradedEndomorphism([a - b for a, b in zip(self.blocks, other.blocks)])

    def scale(self, factor):
        """Multiply by a scalar field; ``factor`` broadcasts against the batch axes."""
        factor = np.asarray(factor)[..., None, None]
        return GradedEndomorphism([factor * b for b in self.blocks])

    def supercommutator(self, other):
        # both operands are even, so the graded commutator is the ordinary one
        return self @ other - other @ self


def exterior_power_action(B, p):
    """Matrix of the induced map on ``Lambda^p`` in the lexicographic basis.

    Entry ``(I, J)`` is the minor of ``B`` on rows ``I`` and columns ``J``.
    ``B`` may carry leading batch axes.
    """
    B = np.asarray(B)
    n = B.shape[-1]
    if not 0 <= p <= n:
        raise ValueError(f"degree {p} outside 0..{n}")
    batch = B.shape[:-2]
    if p == 0:
        return np.ones(batch + (1, 1), dtype=B.dtype)
    idx = multi_indices(n, p)
    rows = np.array(idx)
    # sub[..., I, J, :, :] = B[..., rows[I], :][..., rows[J]]
    sub = B[..., rows[:, None, :, None], rows[None, :, None, :]]
    if p == 1:
        return sub[..., 0, 0]
    return np.linalg.det(sub)


def exterior_algebra_action(B):
    """All blocks ``Lambda^p(B)``, p = 0..n, as a GradedEndomorphism."""
    n = np.shape(B)[-1]
    return GradedEndomorphism([exterior_power_action(B, p) for p in range(n + 1)])


def supertrace(g):
    """sum_p (-1)^p tr(block_p), batched over leading axes."""
    total = 0
    for p, block in enumerate(g.blocks):
        total = total + (-1) ** p * np.trace(block, axis1=-2, axis2=-1)
    return total


def zeta_de_rham(map, x):
    """Pullback action on forms at ``x``: blocks ``Lambda^p(dphi(x)^T)``.

    For affine maps the result has no batch axes since the differential is
    constant; for circle maps it is batched over the points in ``x``.
    """
    if hasattr(map, "matrix"):
        D = np.array(map.matrix, dtype=float)
    else:
        D = map.differential(x)
    return exterior_algebra_action(np.swapaxes(D, -1, -2))
