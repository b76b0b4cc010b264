"""Structural analysis of mass configurations.

Quantifies the phenomena seen in near-minimal and slightly-above-minimal
central configurations: radial density profiles, nearest-neighbor
regularity, minimum-spanning-tree filaments, near-equal edge-length tiers,
voids, and similarity-invariant shape fingerprints.  All reported lengths
are in units of the configuration's rms length, so every output is
invariant under similarity transformations of the input.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import QhullError, cKDTree, Delaunay, Voronoi
from scipy.spatial.distance import pdist, squareform

from .core import MassConfiguration, _complexity_arrays

DEFAULT_GAP_THRESHOLD = 0.15
DEFAULT_INNER_FRACTION = 0.7
# A tier partition counts as "no ladder" when the member-weighted median
# of the tier coefficients of variation exceeds this.
LADDER_CV_LIMIT = 0.25
FINGERPRINT_SPECTRUM_TOL = 1e-6
FINGERPRINT_C_TOL = 1e-9


class DegenerateGeometry(ValueError):
    """Input points are affinely dependent (e.g. collinear in 2D)."""


@dataclass(frozen=True)
class MstEdges:
    """Minimum spanning tree: (N-1) index pairs with Euclidean lengths.

    `scale` is the rms length of the source configuration, used to report
    tier statistics in similarity-invariant units.
    """

    pairs: np.ndarray
    lengths: np.ndarray
    scale: float = 1.0

    @property
    def total_weight(self) -> float:
        return float(self.lengths.sum())

    def __len__(self) -> int:
        return len(self.lengths)


@dataclass(frozen=True)
class Tier:
    lengths: np.ndarray
    mean: float
    cv: float

    @property
    def count(self) -> int:
        return len(self.lengths)


@dataclass(frozen=True)
class EdgeTierLadder:
    """MST edge lengths clustered into near-equal tiers.

    Tier means are strictly increasing; `edge_tiers[e]` is the tier index
    of input edge e, so the partition is exhaustive and disjoint.
    """

    tiers: tuple
    step_ratios: np.ndarray
    step_diffs: np.ndarray
    edge_tiers: np.ndarray
    gap_threshold: float
    no_ladder: bool

    @property
    def tier_means(self) -> np.ndarray:
        return np.array([t.mean for t in self.tiers])


@dataclass(frozen=True)
class RadialProfile:
    """Equal-width radial bins about the center of mass, rms-length units."""

    bin_edges: np.ndarray
    counts: np.ndarray
    densities: np.ndarray


@dataclass(frozen=True)
class NeighborStats:
    """Nearest-neighbor distances of the inner particles, rms-length units."""

    mean: float
    cv: float
    hist_counts: np.ndarray
    hist_edges: np.ndarray
    n_used: int


@dataclass(frozen=True)
class VoidReport:
    """Largest empty balls inside the convex hull, rms-length units."""

    centers: np.ndarray
    radii: np.ndarray


@dataclass(frozen=True)
class CountingReport:
    pairs: int
    coordinates: int
    excess: int


@dataclass(frozen=True)
class ShapeFingerprint:
    """Sorted separation spectrum in rms-length units, plus the C value.

    Invariant under similarity transformations and (for equal masses)
    particle relabeling; two fingerprints match when the spectra agree in
    L2 to 1e-6 * sqrt(P) and the C values to 1e-9.
    """

    spectrum: np.ndarray
    c_value: float

    def matches(self, other: "ShapeFingerprint") -> bool:
        if self.spectrum.shape != other.spectrum.shape:
            return False
        tol = FINGERPRINT_SPECTRUM_TOL * np.sqrt(self.spectrum.size)
        if np.linalg.norm(self.spectrum - other.spectrum) > tol:
            return False
        return abs(self.c_value - other.c_value) <= FINGERPRINT_C_TOL

    def sha(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.round(self.spectrum, 6).tobytes())
        digest.update(f"{self.c_value:.9f}".encode())
        return digest.hexdigest()[:16]


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def euclidean_mst(config: MassConfiguration) -> MstEdges:
    """Exact Euclidean MST via Kruskal; ties broken by index pair."""
    x = config.positions
    n = config.n
    r = pdist(x)
    i, j = np.triu_indices(n, k=1)
    order = np.lexsort((j, i, r))
    uf = _UnionFind(n)
    pairs = []
    lengths = []
    for e in order:
        if uf.union(int(i[e]), int(j[e])):
            pairs.append((int(i[e]), int(j[e])))
            lengths.append(float(r[e]))
            if len(pairs) == n - 1:
                break
    lrms, _, _, _ = _complexity_arrays(config.masses, x)
    return MstEdges(pairs=np.array(pairs, dtype=int),
                    lengths=np.array(lengths), scale=lrms)


def _weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    order = np.argsort(values, kind="stable")
    values, weights = values[order], weights[order]
    cum = np.cumsum(weights)
    return float(values[np.searchsorted(cum, 0.5 * cum[-1])])


def edge_tier_ladder(edges, gap_threshold: float = DEFAULT_GAP_THRESHOLD) -> EdgeTierLadder:
    """Cluster edge lengths into tiers split at large relative gaps.

    Lengths are sorted ascending and split wherever the relative gap
    (l_{k+1} - l_k) / l_k exceeds `gap_threshold`.  Reports per-tier mean
    and coefficient of variation plus the inter-tier step ratios and
    differences.  The `no_ladder` flag is set when there is a single tier
    or when the member-weighted median tier cv exceeds LADDER_CV_LIMIT,
    i.e. when a typical edge lives in an unstructured tier.
    """
    if isinstance(edges, MstEdges):
        raw = np.asarray(edges.lengths, dtype=float) / edges.scale
    else:
        raw = np.asarray(edges, dtype=float)
    if raw.size < 1:
        raise ValueError("need at least one edge")
    if gap_threshold <= 0.0:
        raise ValueError("gap threshold must be positive")
    order = np.argsort(raw, kind="stable")
    ls = raw[order]
    rel_gaps = (ls[1:] - ls[:-1]) / ls[:-1] if ls.size > 1 else np.array([])
    breaks = np.flatnonzero(rel_gaps > gap_threshold) + 1
    bounds = np.concatenate([[0], breaks, [ls.size]])
    tiers = []
    edge_tiers = np.empty(raw.size, dtype=int)
    for k in range(len(bounds) - 1):
        members = ls[bounds[k]:bounds[k + 1]]
        mean = float(members.mean())
        cv = float(members.std() / mean) if members.size > 1 else 0.0
        tiers.append(Tier(lengths=members, mean=mean, cv=cv))
        edge_tiers[order[bounds[k]:bounds[k + 1]]] = k
    means = np.array([t.mean for t in tiers])
    cvs = np.array([t.cv for t in tiers])
    counts = np.array([t.count for t in tiers])
    no_ladder = len(tiers) == 1 or _weighted_median(cvs, counts) > LADDER_CV_LIMIT
    return EdgeTierLadder(
        tiers=tuple(tiers),
        step_ratios=means[1:] / means[:-1] if len(tiers) > 1 else np.array([]),
        step_diffs=np.diff(means),
        edge_tiers=edge_tiers,
        gap_threshold=gap_threshold,
        no_ladder=no_ladder,
    )


def radial_density_profile(config: MassConfiguration, bins: int) -> RadialProfile:
    """Particle counts and area/volume densities in equal-width radial bins."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    m, x = config.masses, config.positions
    lrms, _, _, _ = _complexity_arrays(m, x)
    radii = np.linalg.norm(x - m @ x, axis=1) / lrms
    edges = np.linspace(0.0, radii.max(), bins + 1)
    counts, _ = np.histogram(radii, edges)
    if config.d == 2:
        measures = np.pi * (edges[1:] ** 2 - edges[:-1] ** 2)
    else:
        measures = (4.0 / 3.0) * np.pi * (edges[1:] ** 3 - edges[:-1] ** 3)
    return RadialProfile(bin_edges=edges, counts=counts,
                         densities=counts / measures)


def nearest_neighbor_stats(config: MassConfiguration,
                           inner_fraction: float = DEFAULT_INNER_FRACTION,
                           hist_bins: int = 20) -> NeighborStats:
    """Nearest-neighbor distance statistics over the inner particles.

    Only particles within `inner_fraction` of the maximum center-of-mass
    radius contribute (their neighbors may be anywhere), which suppresses
    the rim effect of finite 2D configurations.  Falls back to all
    particles when the cut selects none.
    """
    if not 0.0 < inner_fraction <= 1.0:
        raise ValueError("inner fraction must be in (0, 1]")
    m, x = config.masses, config.positions
    lrms, _, _, _ = _complexity_arrays(m, x)
    radii = np.linalg.norm(x - m @ x, axis=1)
    sel = radii <= inner_fraction * radii.max() * (1.0 + 1e-12)
    if not sel.any():
        sel = np.ones(config.n, dtype=bool)
    dist = squareform(pdist(x)) / lrms
    np.fill_diagonal(dist, np.inf)
    nn = dist.min(axis=1)[sel]
    mean = float(nn.mean())
    cv = float(nn.std() / mean) if mean > 0 else 0.0
    counts, hist_edges = np.histogram(nn, bins=hist_bins)
    return NeighborStats(mean=mean, cv=cv, hist_counts=counts,
                         hist_edges=hist_edges, n_used=int(sel.sum()))


def void_census(config: MassConfiguration, k: int) -> VoidReport:
    """Top-k largest empty balls centered at Voronoi vertices in the hull.

    Candidates whose center falls inside an already-reported ball are
    suppressed, so the reported voids are distinct.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    m, x = config.masses, config.positions
    if config.n < config.d + 1:
        raise DegenerateGeometry(f"need at least {config.d + 1} particles in {config.d}D")
    try:
        vor = Voronoi(x)
        hull = Delaunay(x)
    except QhullError as exc:
        raise DegenerateGeometry(f"affinely dependent points: {exc}") from exc
    verts = vor.vertices
    inside = hull.find_simplex(verts) >= 0
    verts = verts[inside]
    if verts.size == 0:
        return VoidReport(centers=np.empty((0, config.d)), radii=np.empty(0))
    tree = cKDTree(x)
    radii, _ = tree.query(verts)
    # Sort by radius descending, coordinates as deterministic tie-break.
    order = np.lexsort(tuple(verts[:, a] for a in range(config.d - 1, -1, -1)) + (-radii,))
    chosen = []
    for idx in order:
        center = verts[idx]
        if any(np.linalg.norm(center - c) < r for c, r in chosen):
            continue
        chosen.append((center, radii[idx]))
        if len(chosen) == k:
            break
    lrms, _, _, _ = _complexity_arrays(m, x)
    com = m @ x
    centers = np.array([(c - com) / lrms for c, _ in chosen])
    out_radii = np.array([r / lrms for _, r in chosen])
    return VoidReport(centers=centers, radii=out_radii)


def fingerprint(config: MassConfiguration) -> ShapeFingerprint:
    """Similarity-invariant sorted separation spectrum plus C."""
    lrms, _, c, _ = _complexity_arrays(config.masses, config.positions)
    spectrum = np.sort(pdist(config.positions)) / lrms
    spectrum.setflags(write=False)
    return ShapeFingerprint(spectrum=spectrum, c_value=c)


def counting_report(n: int, d: int) -> CountingReport:
    """Pair count versus shape coordinates that determine the separations.

    N particles have N(N-1)/2 separations, but only d*N - d - d(d-1)/2
    shape coordinates (3N-6 in 3D, 2N-3 in 2D); the excess counts the
    constraints among the separations.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if d not in (2, 3):
        raise ValueError("d must be 2 or 3")
    pairs = n * (n - 1) // 2
    coords = d * n - d - d * (d - 1) // 2
    return CountingReport(pairs=pairs, coordinates=coords, excess=pairs - coords)
