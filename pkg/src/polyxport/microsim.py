"""Exact microscopic Lorentz-gas dynamics on a polylattice.

A particle moves straight and reflects specularly off balls of radius r
centered on the per-grain scatterer sets.  The scaling eps = r^((d-1)/d)
keeps the mean free path of order one as r -> 0.  First-hit search walks
the grains traversed by the ray in order and enumerates candidate centers
inside a thin tube around the ray, so the expected work per free path is
O(1) at this scaling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import scattering
from .geometry import SceneError, ray_grain_intersect
from .lattice import (ScaledGrainLattice, dist_point_segment,
                      integer_points_near_segment, points_in_tube)

MAX_EVENTS = 10 ** 7


def epsilon_for(r, dimension):
    """Boltzmann-Grad coupling eps = r^((d-1)/d)."""
    if r <= 0:
        raise ValueError("r must be positive")
    return r ** ((dimension - 1) / dimension)


@dataclass(frozen=True)
class BetaSpec:
    """Initial offset r*beta(v) from the base point.

    mode 'zero' starts exactly at the base point.  mode 'radial' starts on
    the unit sphere at angle alpha from v (alpha <= pi/2 keeps the forward
    ray outside the ball, as required for starts on a scatterer).
    """
    mode: str = "zero"
    alpha: float = 0.0

    def __post_init__(self):
        if self.mode not in ("zero", "radial"):
            raise ValueError(f"unknown beta mode {self.mode!r}")
        if self.mode == "radial" and not 0.0 <= self.alpha <= np.pi / 2:
            raise ValueError("radial beta needs alpha in [0, pi/2]")

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if self.mode == "zero":
            return np.zeros_like(v)
        d = v.size
        if d == 2:
            perp = np.array([-v[1], v[0]])
        else:
            ref = np.array([0.0, 0.0, 1.0]) if abs(v[2]) < 0.9 \
                else np.array([1.0, 0.0, 0.0])
            perp = np.cross(v, ref)
            perp /= np.linalg.norm(perp)
        return math.cos(self.alpha) * v + math.sin(self.alpha) * perp


@dataclass(frozen=True)
class MicroConfig:
    r: float
    seed: int = 0
    beta: BetaSpec = field(default_factory=BetaSpec)
    q_mode: str = "random"          # "random" | "zero" | fixed vector via q
    q: Optional[np.ndarray] = None
    on_scatterer: bool = False      # start on a scatterer of start_grain
    start_grain: Optional[int] = None
    cutoff_factor: float = 10.0     # escape cutoff in scene diameters
    chunk_length: Optional[float] = None   # tube query granularity (tests)
    resample_offsets: bool = False  # fresh lattice offsets per sample

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("r must be positive")
        if self.q_mode not in ("random", "zero", "fixed"):
            raise ValueError(f"unknown q mode {self.q_mode!r}")
        if self.q_mode == "fixed" and self.q is None:
            raise ValueError("fixed q mode needs q")
        if self.on_scatterer and self.start_grain is None:
            raise ValueError("on_scatterer start needs start_grain")


@dataclass(frozen=True)
class CollisionEvent:
    time: float
    center: np.ndarray
    w1: np.ndarray            # unit impact point, hit = center + r w1
    grain_id: int
    v_in: np.ndarray
    v_out: np.ndarray


class PointGrid:
    """Uniform cell hash over a fixed point set for segment-tube queries."""

    def __init__(self, points, cell_size):
        self.points = np.asarray(points, dtype=float)
        self.cell = float(cell_size)
        self._index = {}
        keys = np.floor(self.points / self.cell).astype(int)
        for i, k in enumerate(map(tuple, keys)):
            self._index.setdefault(k, []).append(i)

    def query_segment(self, p0, p1, radius):
        d = self.points.shape[1] if self.points.size else len(p0)
        margin = radius / self.cell + math.sqrt(d) + 1e-9
        cells = integer_points_near_segment(np.asarray(p0) / self.cell,
                                            np.asarray(p1) / self.cell, margin)
        idx = []
        for c in map(tuple, cells):
            idx.extend(self._index.get(c, ()))
        if not idx:
            return np.empty((0, d))
        pts = self.points[sorted(set(idx))]
        keep = dist_point_segment(pts, np.asarray(p0, dtype=float),
                                  np.asarray(p1, dtype=float)) <= radius
        return pts[keep]


def poisson_realization(grain, epsilon, rng):
    """Fixed unit-intensity Poisson set, scaled by eps and cut to the grain."""
    verts = grain.get_vertices()
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    vol = float(np.prod(hi - lo))
    n = rng.poisson(vol / epsilon ** grain.dimension)
    pts = rng.uniform(lo, hi, size=(n, grain.dimension))
    keep = np.all(pts @ grain.normals.T < grain.offsets, axis=1)
    return pts[keep]


class MicroRuntime:
    """Scene + radius bound to concrete scatterer sets for one run."""

    def __init__(self, scene, cfg):
        if scene.periodic_box is not None:
            raise SceneError("microscopic runs need a finite scene")
        self.scene = scene
        self.cfg = cfg
        self.r = cfg.r
        self.epsilon = epsilon_for(cfg.r, scene.dimension)
        self._media = {}
        for g, m in zip(scene.grains, scene.media):
            if m.kind == "crystal":
                if m.mode == "random-offset":
                    rng = np.random.default_rng([cfg.seed, 0x0FF5E7, g.id])
                    lat = m.lattice.with_omega(rng.uniform(0.0, 1.0, scene.dimension))
                    sgl = ScaledGrainLattice(lat, self.epsilon,
                                             np.zeros(scene.dimension))
                else:
                    sgl = ScaledGrainLattice(m.lattice, self.epsilon, scene.anchor)
                self._media[g.id] = ("crystal", sgl)
            else:
                rng = np.random.default_rng([cfg.seed, 0x9012550, g.id])
                pts = poisson_realization(g, self.epsilon, rng)
                cell = max(self.epsilon, 4.0 * self.r)
                self._media[g.id] = ("poisson", PointGrid(pts, cell))
        allv = np.vstack([g.get_vertices() for g in scene.grains])
        self.scene_diameter = float(np.linalg.norm(allv.max(0) - allv.min(0)))
        self.cutoff = cfg.cutoff_factor * self.scene_diameter
        if cfg.resample_offsets:
            bad = [g.id for g, m in zip(scene.grains, scene.media)
                   if m.kind != "crystal" or m.mode != "random-offset"]
            if bad:
                raise SceneError("per-sample offsets need random-offset "
                                 f"crystal media everywhere (grains {bad})")

    def resample_media(self, rng):
        """Fresh uniform lattice offsets (random-offset annealed sampling)."""
        for g, m in zip(self.scene.grains, self.scene.media):
            lat = m.lattice.with_omega(rng.uniform(0.0, 1.0,
                                                   self.scene.dimension))
            self._media[g.id] = ("crystal",
                                 ScaledGrainLattice(lat, self.epsilon,
                                                    np.zeros(self.scene.dimension)))

    def scatterers(self, grain_id):
        kind, store = self._media[grain_id]
        if kind == "crystal":
            grain = self.scene.grain_by_id(grain_id)
            ks = _lattice_points_in_grain(store, grain)
            return store.from_integer(ks) if ks.size else np.empty((0, self.scene.dimension))
        return store.points

    def candidates(self, grain_id, x, v, t0, t1):
        """All scatterer centers of the grain within r of x + [t0,t1] v."""
        kind, store = self._media[grain_id]
        grain = self.scene.grain_by_id(grain_id)
        radius = self.r * (1.0 + 1e-12)
        chunk = self.cfg.chunk_length or (t1 - t0)
        pieces = []
        t = t0
        while t < t1:
            s = min(t + chunk, t1)
            if kind == "crystal":
                pts, ks = points_in_tube(store, x, v, t, s, radius,
                                         return_indices=True)
                if len(pts):
                    keep = np.all(pts @ grain.normals.T < grain.offsets, axis=1)
                    pts = pts[keep]
            else:
                pts = store.query_segment(x + t * np.asarray(v),
                                          x + s * np.asarray(v), radius)
            if len(pts):
                pieces.append(pts)
            t = s
        if not pieces:
            return np.empty((0, self.scene.dimension))
        pts = np.vstack(pieces)
        if len(pieces) > 1:
            pts = np.unique(pts, axis=0)
        return pts


def _lattice_points_in_grain(sgl, grain):
    verts = grain.get_vertices()
    lo = sgl.to_lattice_coords(verts.min(axis=0))
    corners = np.array([sgl.to_lattice_coords(v) for v in verts])
    los = np.floor(corners.min(axis=0)) - 1
    his = np.ceil(corners.max(axis=0)) + 1
    grids = np.meshgrid(*[np.arange(l, h + 1) for l, h in zip(los, his)],
                        indexing="ij")
    ks = np.stack([g.ravel() for g in grids], axis=1)
    pts = sgl.from_integer(ks)
    keep = np.all(pts @ grain.normals.T < grain.offsets, axis=1)
    return ks[keep]


def _search_segments(runtime, x, v):
    """Grain windows along the ray, inflated by r so near-boundary
    scatterers poking out of their grain are still found."""
    segs = []
    r = runtime.r
    for g in runtime.scene.grains:
        inflated = replace_offsets(g, g.offsets + r)
        hit = ray_grain_intersect(inflated, x, v)
        if hit is not None:
            segs.append((hit[0], hit[1], g.id))
    segs.sort()
    return segs


def replace_offsets(grain, offsets):
    import dataclasses
    return dataclasses.replace(grain, offsets=offsets, vertices=None)


def first_collision(runtime, x, v, exclude_center=None):
    """Earliest sphere hit along x + t v, or None when the ray escapes.

    The search visits grain windows in ray order and stops as soon as no
    later grain can produce an earlier hit.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    r = runtime.r
    cutoff = runtime.cutoff
    best_t = np.inf
    best = None
    for a, b, gid in _search_segments(runtime, x, v):
        if best_t < a - 2.0 * r or a > cutoff:
            break
        t0 = max(a, 0.0)
        t1 = min(b, cutoff + 2.0 * r)
        if t1 <= t0:
            continue
        centers = runtime.candidates(gid, x, v, t0, t1)
        if exclude_center is not None and len(centers):
            keep = np.linalg.norm(centers - exclude_center, axis=1) \
                > 1e-9 * runtime.epsilon
            centers = centers[keep]
        if not len(centers):
            continue
        u = centers - x
        tc = u @ v
        q = np.sum(u * u, axis=1)
        disc = r * r - (q - tc * tc)
        ok = (disc > 0.0) & (tc > 0.0) & (q > r * r * (1.0 + 1e-12))
        if not ok.any():
            continue
        # entry root of |x + t v - y|^2 = r^2 in the cancellation-free form
        thit = np.full(len(centers), np.inf)
        sq = np.sqrt(np.maximum(disc, 0.0))
        thit[ok] = (q[ok] - r * r) / (tc[ok] + sq[ok])
        i = int(np.argmin(thit))
        if thit[i] < best_t:
            best_t = float(thit[i])
            best = (centers[i], gid)
    if best is None or best_t > cutoff:
        return None
    center, gid = best
    w1 = (x + best_t * v - center) / r
    w1 = w1 / np.linalg.norm(w1)
    v_out = scattering.reflect(v, w1)
    return CollisionEvent(best_t, center, w1, gid, v.copy(), v_out)


def trajectory(runtime, x0, v0, t_max):
    """Chain of collision events up to time t_max (unit speed)."""
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    events = []
    x = np.asarray(x0, dtype=float)
    v = np.asarray(v0, dtype=float)
    t = 0.0
    exclude = None
    while t < t_max:
        ev = first_collision(runtime, x, v, exclude_center=exclude)
        if ev is None or t + ev.time > t_max:
            break
        t += ev.time
        events.append(CollisionEvent(t, ev.center, ev.w1, ev.grain_id,
                                     ev.v_in, ev.v_out))
        x = ev.center + runtime.r * ev.w1
        v = ev.v_out
        exclude = ev.center
        if len(events) > MAX_EVENTS:
            raise RuntimeError("runaway trajectory: too many events")
    return events


# ---------------------------------------------------------------------------
# tau_1 sampling
# ---------------------------------------------------------------------------

@dataclass
class Tau1Sample:
    """Empirical joint law of (tau_1, impact data) for one radius."""
    r: float
    epsilon: float
    seed: int
    tau1: np.ndarray        # inf marks escape
    hit_grain: np.ndarray   # -1 marks escape
    u_impact: np.ndarray    # rows -w1 K(v), zero rows for escapes
    directions: np.ndarray
    escaped: np.ndarray
    start_point: np.ndarray
    exit_w: Optional[np.ndarray] = None   # (beta(v) K(v))_perp, on-scatterer runs

    @property
    def n(self):
        return len(self.tau1)

    @property
    def escape_fraction(self):
        return float(np.mean(self.escaped))


def sample_direction_lambda(rng, dimension, spec=None, n=None):
    """Directions from the experiment law (uniform or a spherical cap)."""
    spec = spec or {"type": "uniform"}
    kind = spec.get("type", "uniform")
    if kind == "uniform":
        return scattering.sample_direction(rng, dimension, n)
    if kind == "cap":
        size = n or 1
        if dimension == 2:
            a0, a1 = spec.get("angles", (0.0, 2.0 * np.pi))
            th = rng.uniform(a0, a1, size=size)
            out = np.stack([np.cos(th), np.sin(th)], axis=1)
        else:
            cmin = math.cos(spec.get("half_angle", np.pi))
            c = rng.uniform(cmin, 1.0, size=size)
            ph = rng.uniform(0.0, 2.0 * np.pi, size=size)
            s = np.sqrt(1.0 - c * c)
            out = np.stack([s * np.cos(ph), s * np.sin(ph), c], axis=1)
        return out if n is not None else out[0]
    raise ValueError(f"unknown direction law {kind!r}")


def _start_point(runtime, rng):
    scene, cfg = runtime.scene, runtime.cfg
    x = scene.anchor.copy()
    if cfg.on_scatterer:
        kind, store = runtime._media[cfg.start_grain]
        if kind != "crystal":
            centers = runtime.scatterers(cfg.start_grain)
            if not len(centers):
                raise SceneError("start grain holds no scatterers at this radius")
            return centers[int(np.argmin(np.linalg.norm(centers - x, axis=1)))]
        k = np.round(store.to_lattice_coords(x))
        center = store.from_integer(k)[0]
        grain = scene.grain_by_id(cfg.start_grain)
        if not grain.contains(center):
            centers = runtime.scatterers(cfg.start_grain)
            if not len(centers):
                raise SceneError("start grain holds no scatterers at this radius")
            center = centers[int(np.argmin(np.linalg.norm(centers - x, axis=1)))]
        return center
    if cfg.q_mode == "zero":
        q = np.zeros(scene.dimension)
    elif cfg.q_mode == "fixed":
        q = np.asarray(cfg.q, dtype=float)
    else:
        q = rng.uniform(0.0, 1.0, scene.dimension)
    return x + runtime.epsilon * q


def sample_tau1_distribution(scene, cfg, n_samples, lambda_spec=None,
                             runtime=None):
    """Empirical (tau_1, -w1 K(v)) law over n directions drawn from lambda."""
    rt = runtime or MicroRuntime(scene, cfg)
    rng = np.random.default_rng([cfg.seed, 0x7A01])
    base = _start_point(rt, rng)
    dirs = sample_direction_lambda(rng, scene.dimension, lambda_spec, n_samples)
    tau1 = np.full(n_samples, np.inf)
    grains = np.full(n_samples, -1, dtype=int)
    u_imp = np.zeros((n_samples, scene.dimension))
    exit_w = np.zeros((n_samples, scene.dimension - 1))
    for i in range(n_samples):
        v = dirs[i]
        if cfg.resample_offsets:
            rt.resample_media(rng)
            base = _start_point(rt, rng)
        start = base + cfg.r * cfg.beta(v)
        Kv = scattering.frame_matrix(v)
        if cfg.on_scatterer:
            exit_w[i] = (cfg.beta(v) @ Kv)[1:]
        ev = first_collision(rt, start, v,
                             exclude_center=base if cfg.on_scatterer else None)
        if ev is None:
            continue
        tau1[i] = ev.time
        grains[i] = ev.grain_id
        u_imp[i] = -(ev.w1 @ Kv)
    escaped = ~np.isfinite(tau1)
    return Tau1Sample(cfg.r, rt.epsilon, cfg.seed, tau1, grains, u_imp,
                      dirs, escaped, base,
                      exit_w if cfg.on_scatterer else None)
