"""Affine unimodular lattices, commensurability, and thin-tube enumeration.

A lattice is the point set (Z^d + omega) M with det M = 1.  Scatterer
centers of a grain are anchor + eps * (Z^d + omega) M, and the ray tracer
asks for every center within a small radius of a ray segment.  Enumeration
maps the tube into lattice coordinates, walks integer slabs along the
dominant axis, and filters candidates by exact Euclidean distance, so the
output has no false negatives.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

DET_TOL = 1e-12


class CommensurabilityUndecidable(ValueError):
    """Raised when a float matrix has no exact rational representation."""


def bcc_matrix():
    """Unimodular generator of the body-centered cubic lattice."""
    c = 2.0 ** (1.0 / 3.0)
    h = 2.0 ** (-2.0 / 3.0)
    return np.array([[c, 0.0, 0.0],
                     [0.0, c, 0.0],
                     [h, h, h]])


def _parse_rational_matrix(rows):
    """Fraction matrix from entries given as Fraction/int/'p/q' strings."""
    out = []
    for row in rows:
        r = []
        for e in row:
            if isinstance(e, Fraction):
                r.append(e)
            elif isinstance(e, int):
                r.append(Fraction(e))
            elif isinstance(e, str):
                r.append(Fraction(e))
            else:
                return None
        out.append(r)
    return out


def _frac_det(m):
    n = len(m)
    if n == 1:
        return m[0][0]
    det = Fraction(0)
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        term = m[0][j] * _frac_det(minor)
        det += term if j % 2 == 0 else -term
    return det


@dataclass(frozen=True, eq=False)
class AffineLattice:
    """Point set (Z^d + omega) M with unimodular M (row-vector convention)."""

    M: np.ndarray
    omega: np.ndarray
    rational_form: Optional[tuple] = None   # Fraction rows of M up to scale

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float))
        if abs(np.linalg.det(M) - 1.0) > 1e-9:
            raise ValueError("lattice matrix must have det 1 "
                             f"(got {np.linalg.det(M)})")

    @classmethod
    def from_rows(cls, rows, omega=None):
        """Build from matrix rows; 'p/q' strings keep an exact rational form.

        A rational matrix Q is normalized to det 1 as (det Q)^(-1/d) Q.
        """
        rat = _parse_rational_matrix(rows)
        d = len(rows)
        omega = np.zeros(d) if omega is None else np.asarray(omega, dtype=float)
        if rat is not None:
            det = _frac_det(rat)
            if det <= 0:
                raise ValueError("rational matrix must have positive det")
            scale = float(det) ** (-1.0 / d)
            M = scale * np.array([[float(e) for e in row] for row in rat])
            return cls(M, omega, tuple(tuple(row) for row in rat))
        M = np.array([[float(e) for e in row] for row in rows])
        return cls(M, omega, None)

    @property
    def dimension(self):
        return self.M.shape[0]

    def points(self, ks):
        """Lattice points for integer vectors ks, shape (n, d)."""
        ks = np.atleast_2d(np.asarray(ks, dtype=float))
        return (ks + self.omega) @ self.M

    def with_omega(self, omega):
        return AffineLattice(self.M, np.asarray(omega, dtype=float),
                             self.rational_form)


@dataclass(frozen=True)
class CrystalMedium:
    """Crystal grain medium: scatterers on a scaled affine lattice.

    mode 'anchored' ties the lattice to the scene anchor (centers
    anchor + eps (Z^d + omega) M); 'random-offset' draws omega uniformly
    per run and drops the anchor shift.
    """
    lattice: AffineLattice
    mode: str = "anchored"
    kind = "crystal"

    def __post_init__(self):
        if self.mode not in ("anchored", "random-offset"):
            raise ValueError(f"unknown lattice mode {self.mode!r}")


@dataclass(frozen=True)
class PoissonMedium:
    """Disordered grain medium: scatterers on a unit-intensity Poisson set."""
    kind = "poisson"


def is_commensurable(lat1, lat2):
    """Commensurator membership test for the pair of lattice matrices.

    Two unimodular matrices are commensurable iff M1 M2^-1 equals
    (det T)^(-1/d) T for a rational T with det T > 0.  Matrices supplied
    with exact rational forms always satisfy this (the commensurator is a
    group containing every normalized rational matrix), so the test
    returns True for any exact pair and raises for float-only input, where
    the property is undecidable.
    """
    f1 = lat1.rational_form if isinstance(lat1, AffineLattice) else _parse_rational_matrix(lat1)
    f2 = lat2.rational_form if isinstance(lat2, AffineLattice) else _parse_rational_matrix(lat2)
    if f1 is None or f2 is None:
        raise CommensurabilityUndecidable(
            "commensurability is undecidable on floats; supply exact "
            "rational entries or assert incommensurability in the config")
    d1, d2 = _frac_det([list(r) for r in f1]), _frac_det([list(r) for r in f2])
    if d1 <= 0 or d2 <= 0:
        raise ValueError("rational forms must have positive determinant")
    return True


@dataclass(frozen=True, eq=False)
class ScaledGrainLattice:
    """Scatterer centers anchor + eps (Z^d + omega) M of one grain."""

    lattice: AffineLattice
    epsilon: float
    anchor: np.ndarray

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=float))
        object.__setattr__(self, "_Minv", np.linalg.inv(self.lattice.M))

    def to_lattice_coords(self, p):
        return (np.asarray(p, dtype=float) - self.anchor) / self.epsilon \
            @ self._Minv - self.lattice.omega

    def from_integer(self, ks):
        ks = np.atleast_2d(np.asarray(ks, dtype=float))
        return self.anchor + self.epsilon * ((ks + self.lattice.omega)
                                             @ self.lattice.M)


def integer_points_near_segment(a0, a1, margin):
    """All k in Z^d within margin (euclidean) of the segment [a0, a1].

    May overshoot (superset); callers filter by exact distance.  Works by
    integer slabs along the dominant axis of the segment.
    """
    a0 = np.asarray(a0, dtype=float)
    a1 = np.asarray(a1, dtype=float)
    d = a0.size
    u = a1 - a0
    j = int(np.argmax(np.abs(u)))
    if abs(u[j]) < 1.0:
        los = np.floor(np.minimum(a0, a1) - margin).astype(int)
        his = np.ceil(np.maximum(a0, a1) + margin).astype(int)
        grids = np.meshgrid(*[np.arange(lo, hi + 1) for lo, hi in zip(los, his)],
                            indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    if u[j] < 0:
        a0, a1 = a1, a0
        u = -u
    ms = np.arange(int(np.floor(a0[j] - margin)), int(np.ceil(a1[j] + margin)) + 1)
    # parameter window on [0,1] where |a(t)_j - m| <= margin
    t_lo = np.clip((ms - margin - a0[j]) / u[j], 0.0, 1.0)
    t_hi = np.clip((ms + margin - a0[j]) / u[j], 0.0, 1.0)
    others = [i for i in range(d) if i != j]
    pieces = []
    per_axis_ranges = []
    for i in others:
        c0 = a0[i] + t_lo * u[i]
        c1 = a0[i] + t_hi * u[i]
        lo_i = np.ceil(np.minimum(c0, c1) - margin).astype(int)
        hi_i = np.floor(np.maximum(c0, c1) + margin).astype(int)
        per_axis_ranges.append((lo_i, hi_i))
    counts = [np.maximum(hi - lo + 1, 0) for lo, hi in per_axis_ranges]
    if d == 1:
        return ms[:, None]
    max_counts = [int(c.max()) if c.size else 0 for c in counts]
    if any(mc == 0 for mc in max_counts):
        return np.empty((0, d), dtype=int)
    # broadcast slab index x offsets over the (small) cross-section box
    offset_grids = np.meshgrid(*[np.arange(mc) for mc in max_counts],
                               indexing="ij")
    offs = np.stack([g.ravel() for g in offset_grids], axis=1)  # (m, d-1)
    n_slab, n_off = ms.size, offs.shape[0]
    out = np.empty((n_slab, n_off, d), dtype=int)
    out[:, :, j] = ms[:, None]
    valid = np.ones((n_slab, n_off), dtype=bool)
    for a, i in enumerate(others):
        lo_i, hi_i = per_axis_ranges[a]
        vals = lo_i[:, None] + offs[None, :, a]
        out[:, :, i] = vals
        valid &= vals <= hi_i[:, None]
    return out[valid]


def dist_point_segment(pts, p0, p1):
    """Euclidean distances from pts (n,d) to the segment [p0, p1]."""
    pts = np.atleast_2d(pts)
    u = p1 - p0
    uu = float(u @ u)
    if uu == 0.0:
        return np.linalg.norm(pts - p0, axis=1)
    t = np.clip((pts - p0) @ u / uu, 0.0, 1.0)
    proj = p0 + t[:, None] * u
    return np.linalg.norm(pts - proj, axis=1)


def points_in_tube(sgl, x, v, t0, t1, radius, return_indices=False):
    """All scatterer centers within radius of the segment x + [t0,t1] v.

    Exact: enumeration overshoots in lattice coordinates and then filters
    by true distance, so no admissible center is missed.
    """
    if not (0 <= t0 < t1):
        raise ValueError("need 0 <= t0 < t1")
    if radius <= 0:
        raise ValueError("radius must be positive")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    p0 = x + t0 * v
    p1 = x + t1 * v
    a0 = sgl.to_lattice_coords(p0)
    a1 = sgl.to_lattice_coords(p1)
    op_norm = np.linalg.norm(sgl._Minv, 2)
    margin = radius / sgl.epsilon * op_norm + 1e-9
    ks = integer_points_near_segment(a0, a1, margin)
    if ks.size == 0:
        pts = np.empty((0, x.size))
        return (pts, ks) if return_indices else pts
    pts = sgl.from_integer(ks)
    keep = dist_point_segment(pts, p0, p1) <= radius
    pts, ks = pts[keep], ks[keep]
    order = np.lexsort(ks.T[::-1])
    pts, ks = pts[order], ks[order]
    return (pts, ks) if return_indices else pts
