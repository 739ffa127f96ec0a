"""Matrix-approximation paths: anchored segments with learned rank-one models."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry, oracle

DROP_SIGMA = 1e-15


class RankOneModel:
    """Append-only sum of rank-one terms sigma * left right^T.

    The term list is the source of truth; a dense accumulator is kept in
    sync so applies stay O(mn) regardless of how many terms accrue.
    Terms with |sigma| below 1e-15 are dropped.
    """

    def __init__(self, m, n):
        self.m = m
        self.n = n
        self.sigmas = []
        self.lefts = []
        self.rights = []
        self.absorbed = 0
        self._acc = None

    @property
    def nterms(self):
        return len(self.sigmas) + self.absorbed

    def add_term(self, sigma, left, right, outer=None):
        """outer, when given, must equal np.outer(left, right); callers
        charging many models with the same pair share it."""
        if abs(sigma) < DROP_SIGMA:
            return
        left = np.array(left, dtype=np.float64, copy=True)
        right = np.array(right, dtype=np.float64, copy=True)
        self.sigmas.append(float(sigma))
        self.lefts.append(left)
        self.rights.append(right)
        if self._acc is None:
            self._acc = np.zeros((self.m, self.n))
        if outer is None:
            outer = np.outer(left, right)
        self._acc += sigma * outer

    def apply(self, v):
        if self._acc is None:
            return np.zeros(self.m)
        return self._acc @ v

    def apply_t(self, w):
        if self._acc is None:
            return np.zeros(self.n)
        return self._acc.T @ w

    def bilinear(self, w, v):
        if self._acc is None:
            return 0.0
        return float(w @ (self._acc @ v))

    def dense(self):
        if self._acc is None:
            return np.zeros((self.m, self.n))
        return self._acc.copy()

    def absorb_dense(self, dense, new_terms):
        """Bulk update from an externally maintained accumulator.

        Solvers that charge many terms in one jitted pass hand back the
        finished dense sum and a term count instead of replaying each
        rank-one pair; the individual vectors are not retained.
        """
        if new_terms == 0:
            return
        self.absorbed += int(new_terms)
        self._acc = np.array(dense, dtype=np.float64, copy=True)

    def dense_from_terms(self):
        """Recompute the dense form from the term list (audit route)."""
        if self.absorbed:
            raise RuntimeError("term log incomplete after bulk updates")
        out = np.zeros((self.m, self.n))
        for s, l, r in zip(self.sigmas, self.lefts, self.rights):
            out += s * np.outer(l, r)
        return out


@dataclass
class PathSegment:
    """One segment: grounded-matrix difference (A)_head - (A)_tail with its model.

    A null tail stands for the zero matrix and may appear only on the first
    segment of a path.
    """

    tail: geometry.Point | None
    head: geometry.Point
    model: RankOneModel


class MatrixApproxPath:
    """Chain of segments telescoping to the grounded matrix at the terminal anchor."""

    def __init__(self, segments):
        segments = list(segments)
        if not segments:
            raise ValueError("path needs at least one segment")
        for i in range(1, len(segments)):
            if segments[i].tail is None:
                raise ValueError("null tail allowed only on the first segment")
            if segments[i].tail is not segments[i - 1].head:
                raise ValueError(f"segment {i} tail does not chain to segment {i - 1} head")
        self.segments = segments

    @property
    def length(self):
        return len(self.segments)

    @property
    def terminal(self):
        return self.segments[-1].head

    def anchors(self):
        """Anchor list a_0..a_L with a_0 possibly None."""
        out = [self.segments[0].tail]
        out.extend(seg.head for seg in self.segments)
        return out

    def models_dense_sum(self):
        m0 = self.segments[0].model
        out = np.zeros((m0.m, m0.n))
        for seg in self.segments:
            if seg.model._acc is not None:
                out += seg.model._acc
        return out


def append_head(path, new_head):
    """Extend the path by one segment from the current terminal, with a zero model.

    The returned path shares the existing segments (and their models) with
    the input, so model updates amortize across both.
    """
    m0 = path.segments[0].model
    seg = PathSegment(path.terminal, new_head, RankOneModel(m0.m, m0.n))
    return MatrixApproxPath(path.segments + [seg])


def residual_sum_apply(path, setup, orc, ledger, phase, v):
    """(sum_l Delta_l - M_l) v using exactly one counted matvec.

    The segment differences telescope to the grounded matrix at the
    terminal anchor, so the whole residual costs a single oracle call
    plus explicit model applies.
    """
    out = oracle.grounded_apply(setup, orc, ledger, phase, path.terminal, v)
    for seg in path.segments:
        if seg.model._acc is not None:
            out = out - seg.model.apply(v)
    return out


def residual_sum_apply_t(path, setup, orc, ledger, phase, w):
    out = oracle.grounded_apply_t(setup, orc, ledger, phase, path.terminal, w)
    for seg in path.segments:
        if seg.model._acc is not None:
            out = out - seg.model.apply_t(w)
    return out


def anchor_products(path, setup, orc, ledger, phase, u, cache=None):
    """Grounded products (A)_{a_j} u for every anchor, None mapping to zeros.

    Distinct anchors cost one counted matvec each; repeated anchor objects
    (and any seeded cache entries) are free.
    """
    if cache is None:
        cache = {}
    out = []
    for a in path.anchors():
        if a is None:
            out.append(np.zeros(setup.m))
            continue
        key = id(a)
        if key not in cache:
            cache[key] = oracle.grounded_apply(setup, orc, ledger, phase, a, u)
        out.append(cache[key])
    return out


def per_segment_residual_bilinear(path, setup, orc, ledger, phase, w, u, cache=None):
    """Per-segment values <w, (Delta_l - M_l) u>, sharing anchor matvecs.

    Costs at most one counted matvec per distinct anchor (<= L+1, fewer
    with repeats or a seeded cache).
    """
    prods = anchor_products(path, setup, orc, ledger, phase, u, cache)
    wp = [float(w @ p) for p in prods]
    out = []
    for i, seg in enumerate(path.segments):
        out.append(wp[i + 1] - wp[i] - seg.model.bilinear(w, u))
    return out


def size_dense(path, setup, dense_matrix):
    """sum_l ||Delta_l - M_l||_F^2 from a dense matrix; audit only, no oracle calls."""
    a = np.asarray(dense_matrix)
    total = 0.0
    for seg in path.segments:
        if seg.tail is None:
            tails = np.zeros_like(a)
        else:
            tails = geometry.grounded_dense(setup, a, seg.tail)
        heads = geometry.grounded_dense(setup, a, seg.head)
        resid = heads - tails - seg.model.dense()
        total += float(np.sum(resid * resid))
    return total
