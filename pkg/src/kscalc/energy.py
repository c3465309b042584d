"""Scale energies of metric-valued maps and their density estimates.

The central quantity is the ball-averaged difference quotient at scale
r,

    ks(x) = [ (1/m(B_r(x))) sum_{y in B_r(x)} w_y d_Y(u(x), u(y))^p / r^p ]^(1/p),

evaluated over a sampled domain.  Densities can be estimated either by
sweeping scales and extrapolating, or by fitting a local seminorm and
taking its p-size; agreement of the two routes on smooth maps is a core
consistency check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .charts import default_fit_radius, fit_metric_differential
from .errors import ValidationError
from .parallel import parallel_map
from .seminorms import QUADRATIC, QuadratureSpec, hs_norm, size_p
from .targets import EuclideanTarget, HyperbolicTarget

RELIABLE_SPACING_FACTOR = 3.0


class MetricMap:
    """A sampled map: one target point per domain index."""

    def __init__(self, space, target, values):
        if len(values) != space.n:
            raise ValidationError("one value per domain index required")
        self.space = space
        self.target = target
        self.values = [target.canonical(v) for v in values]
        if isinstance(target, (EuclideanTarget, HyperbolicTarget)):
            self.values_array = np.asarray(self.values, dtype=float)
        else:
            self.values_array = None
        self._pack = None

    def pack(self):
        """Cached packed value representation for block distances."""
        if self._pack is None:
            self._pack = self.target.values_pack(self.values)
        return self._pack

    def dist_to_many(self, i, idx):
        """Target distances from value i to the values at ``idx``."""
        if self.values_array is not None:
            arr = self.values_array
            if isinstance(self.target, EuclideanTarget):
                delta = arr[idx] - arr[i]
                return np.sqrt(np.einsum("ij,ij->i", delta, delta))
            m = (
                arr[idx, 0] * arr[i, 0]
                - arr[idx, 1] * arr[i, 1]
                - arr[idx, 2] * arr[i, 2]
            )
            return np.arccosh(np.maximum(m, 1.0))
        return self.target.dist_block(self.values[i], [self.values[j] for j in idx])

    def distance_to(self, other):
        """Pointwise target distances to another map on the same domain."""
        if other.space is not self.space:
            raise ValidationError("maps live on different domains")
        return np.asarray(
            [self.target.dist(a, b) for a, b in zip(self.values, other.values)]
        )

    def compose(self, fn):
        return MetricMap(self.space, self.target, [fn(v) for v in self.values])

    def midpoint_map(self, other):
        """Pointwise geodesic midpoints with another map (same target)."""
        vals = [
            self.target.geodesic_point(a, b, 0.5)
            for a, b in zip(self.values, other.values)
        ]
        return MetricMap(self.space, self.target, vals)

    def separation_map(self, other):
        """Pointwise distance to another map, as a real-valued map."""
        d = self.distance_to(other)
        return MetricMap(self.space, EuclideanTarget(1), d[:, None])

    def to_json(self):
        return {"values": [self.target.point_to_json(v) for v in self.values]}


def _target_dist_block(u, rows, cols, squared=False):
    """Target distances between the values at two index sets."""
    arr = u.values_array
    if arr is not None:
        if isinstance(u.target, EuclideanTarget):
            delta = arr[rows][:, None, :] - arr[cols][None, :, :]
            d2 = np.einsum("ijk,ijk->ij", delta, delta)
            return d2 if squared else np.sqrt(d2)
        m = (
            arr[rows][:, None, 0] * arr[cols][None, :, 0]
            - arr[rows][:, None, 1] * arr[cols][None, :, 1]
            - arr[rows][:, None, 2] * arr[cols][None, :, 2]
        )
        d = np.arccosh(np.maximum(m, 1.0))
        return d**2 if squared else d
    pack = u.pack()
    if pack is not None:
        return u.target.packed_block(pack, rows, cols, squared=squared)
    col_vals = [u.values[int(j)] for j in cols]
    d = np.stack([u.target.dist_block(u.values[int(i)], col_vals) for i in rows])
    return d**2 if squared else d


def ks_profile(u, p, scales, omega=None):
    """ks values at several scales in one blocked pass.

    Returns a ``(len(scales), n)`` array.  Ball membership, masses, and
    target distances are shared across scales, so sweeps cost one
    neighbor pass.
    """
    scales = [float(r) for r in scales]
    if any(r <= 0 for r in scales):
        raise ValidationError("scale r must be positive")
    space = u.space
    mask = None
    if omega is not None:
        mask = np.zeros(space.n, dtype=bool)
        mask[np.asarray(omega, dtype=int)] = True
    w = space.weights
    out = np.zeros((len(scales), space.n))
    rmax = max(scales)
    for pts, cand in space.cell_partition(rmax):
        dom2 = space.pair_dist_block(pts, cand, squared=True)
        tar_p = _target_dist_block(u, pts, cand, squared=(p == 2.0))
        if p != 2.0:
            tar_p = tar_p**p
        wc = w[cand]
        for k, r in enumerate(scales):
            member = dom2 < r * r
            counts = member.sum(axis=1)
            num = (wc[None, :] * tar_p * member).sum(axis=1)
            mass = (wc[None, :] * member).sum(axis=1)
            vals = np.zeros(pts.shape[0])
            ok = counts > 1
            vals[ok] = (num[ok] / (mass[ok] * r**p)) ** (1.0 / p)
            if mask is not None:
                outside = (member & ~mask[cand][None, :]).any(axis=1)
                vals[outside | ~mask[pts]] = 0.0
            out[k, pts] = vals
    return out


def ks_at_scale(u, p, r, omega=None):
    """Per-point scale-r energy density of a map.

    With an ``omega`` index mask the value is zeroed wherever the ball is
    not contained in omega; singleton balls also give zero.
    """
    return ks_profile(u, p, [r], omega=omega)[0]


@dataclass
class EnergyReport:
    """Scale sweep: totals per scale, selected-scale densities, extrapolation."""

    p: float
    scales: np.ndarray
    per_scale_total: np.ndarray
    reliable: np.ndarray
    selected_scale: float
    per_point_density: np.ndarray
    extrapolated_total: float
    spacing: float = field(default=0.0)

    def to_json(self):
        return {
            "p": self.p,
            "scales": [float(s) for s in self.scales],
            "per_scale_total": [float(t) for t in self.per_scale_total],
            "reliable": [bool(b) for b in self.reliable],
            "selected_scale": float(self.selected_scale),
            "extrapolated_total": float(self.extrapolated_total),
            "median_nn_spacing": float(self.spacing),
        }


def _affine_intercept(x, y):
    """Least-squares affine fit through (x, y); returns the intercept."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] == 1:
        return y[..., 0] if np.ndim(y) > 1 else float(y[0])
    xbar = x.mean()
    den = float(((x - xbar) ** 2).sum())
    yarr = np.asarray(y, dtype=float)
    ybar = yarr.mean(axis=-1)
    slope = ((x - xbar) * (yarr - ybar[..., None])).sum(axis=-1) / den
    return ybar - slope * xbar


def energy_sweep(u, p, scales, omega=None):
    """Totals across a decreasing scale list with linear extrapolation.

    Scales below three median nearest-neighbor spacings are flagged
    unreliable and excluded from both selection and extrapolation; the
    per-point density is the one at the smallest reliable scale.
    """
    scales = np.asarray(scales, dtype=float)
    if scales.ndim != 1 or scales.shape[0] == 0 or np.any(scales <= 0):
        raise ValidationError("scales must be a nonempty positive list")
    if np.any(np.diff(scales) >= 0):
        raise ValidationError("scales must be sorted strictly decreasing")
    spacing = u.space.median_nn_spacing()
    reliable = scales >= RELIABLE_SPACING_FACTOR * spacing
    if not np.any(reliable):
        raise ValidationError("all scales unreliable at this resolution")
    totals = np.empty(scales.shape[0])
    w = u.space.weights
    density = None
    selected = None
    profile = ks_profile(u, p, scales, omega=omega)
    for k, r in enumerate(scales):
        ks = profile[k]
        totals[k] = float(np.dot(w, ks**p))
        if reliable[k]:
            selected = float(r)
            density = ks
    rel_idx = np.nonzero(reliable)[0]
    tail = rel_idx[-3:]
    extrapolated = float(_affine_intercept(scales[tail], totals[tail]))
    return EnergyReport(
        p=p,
        scales=scales,
        per_scale_total=totals,
        reliable=reliable,
        selected_scale=selected,
        per_point_density=density,
        extrapolated_total=extrapolated,
        spacing=spacing,
    )


def density_extrapolated(u, p, scales, omega=None):
    """Per-point density extrapolated linearly in r to r = 0.

    Uses the three smallest reliable scales from the list; intended for
    interior points where every used ball is resolution-honest.
    """
    scales = np.asarray(scales, dtype=float)
    spacing = u.space.median_nn_spacing()
    ok = scales[scales >= RELIABLE_SPACING_FACTOR * spacing]
    if ok.shape[0] == 0:
        raise ValidationError("all scales unreliable at this resolution")
    use = np.sort(ok)[: min(3, ok.shape[0])]
    ks = ks_profile(u, p, use, omega=omega).T
    return _affine_intercept(use, ks)


@dataclass
class FitConfig:
    """Per-point fit configuration for density estimation."""

    family: str = QUADRATIC
    radius: float | None = None
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)
    points: list | None = None


@dataclass
class DensityResult:
    densities: np.ndarray
    residuals: np.ndarray
    errors: dict

    def evaluated(self):
        return np.nonzero(~np.isnan(self.densities))[0]


def _fit_points(u, atlas, config, per_point, threads=1):
    space = u.space
    if config.points is None:
        points = [
            int(i) for i in range(space.n) if atlas.chart_of(i) is not None
        ]
    else:
        points = [int(i) for i in config.points]
    densities = np.full(space.n, np.nan)
    residuals = np.full(space.n, np.nan)
    errors = {}

    def work(i):
        chart = atlas.chart_of(i)
        if chart is None:
            return i, None, None, "point not covered by any chart"
        try:
            fit = fit_metric_differential(
                space, chart, u, u.target, i, radius=config.radius, family=config.family
            )
            val = per_point(fit)
            return i, val, fit.residual, None
        except Exception as exc:  # per-point failures do not stop the rest
            return i, None, None, str(exc)

    for i, val, res, err in parallel_map(work, points, threads=threads):
        if err is None:
            densities[i] = val
            residuals[i] = res
        else:
            errors[i] = err
    return DensityResult(densities=densities, residuals=residuals, errors=errors)


def density_via_mdiff(u, atlas, p=2.0, config=None, threads=1):
    """Energy density through local seminorm fits: p-size of the fit."""
    config = config or FitConfig()
    return _fit_points(
        u,
        atlas,
        config,
        lambda fit: size_p(fit.seminorm, p, config.quad),
        threads=threads,
    )


def hs_energy(u, atlas, config=None, threads=1):
    """Density through the Hilbert-Schmidt norm of quadratic fits.

    Requires the quadratic family and a CAT(0) target; agrees with the
    2-size route up to quadrature tolerance.
    """
    config = config or FitConfig()
    if config.family != QUADRATIC:
        raise ValidationError("Hilbert-Schmidt energy needs the quadratic family")
    if not u.target.is_cat0:
        raise ValidationError("Hilbert-Schmidt energy needs a CAT(0) target")
    d = atlas.charts[0].chart_dim if atlas.charts else 1
    scale = math.sqrt(d + 2.0)
    return _fit_points(
        u, atlas, config, lambda fit: hs_norm(fit.seminorm) / scale, threads=threads
    )


def contraction_check(u, post_map, p, r, seed=0, n_pairs=256):
    """Max pointwise increase of ks under a 1-Lipschitz post-composition.

    The declared Lipschitz property is audited on seeded value pairs
    first; a failed audit rejects the post map.
    """
    rng = np.random.default_rng(seed)
    n = u.space.n
    pairs = rng.integers(0, n, size=(n_pairs, 2))
    for a, b in pairs:
        da = u.target.dist(u.values[a], u.values[b])
        db = u.target.dist(post_map(u.values[a]), post_map(u.values[b]))
        if db > da * (1.0 + 1e-12) + 1e-15:
            raise ValidationError(
                f"post map expands pair ({a}, {b}): {db} > {da}", detail=(int(a), int(b))
            )
    v = u.compose(post_map)
    gap = ks_at_scale(v, p, r) - ks_at_scale(u, p, r)
    return float(gap.max())


def hajlasz_gradient(u, R):
    """Largest distance quotient over the R-ball at every point.

    By construction each value alone dominates the pair quotient, so the
    two-sided pair bound holds with room to spare.
    """
    if R <= 0:
        raise ValidationError("R must be positive")
    space = u.space
    out = np.zeros(space.n)
    balls = space.all_balls(R)
    for i in range(space.n):
        idx = balls[i]
        idx = idx[idx != i]
        if idx.shape[0] == 0:
            continue
        dom = space.dist_subset(i, idx)
        tar = u.dist_to_many(i, idx)
        out[i] = float((tar / dom).max())
    return out


def locality_check(u, v, p, r=None, source="ks", atlas=None, config=None):
    """Max density discrepancy over the interior of the agreement set.

    The agreement set holds indices where the two maps coincide exactly;
    a point qualifies when the ball (or fit neighborhood) it reads lies
    inside that set.  Empty agreement passes vacuously with 0.
    """
    agree = u.distance_to(v) == 0.0
    if not np.any(agree):
        return 0.0
    space = u.space
    if source == "ks":
        if r is None:
            raise ValidationError("scale r required for the ks source")
        eu = ks_at_scale(u, p, r)
        ev = ks_at_scale(v, p, r)
        worst = 0.0
        balls = space.all_balls(r)
        for i in range(space.n):
            if agree[i] and np.all(agree[balls[i]]):
                worst = max(worst, abs(float(eu[i] - ev[i])))
        return worst
    if source == "mdiff":
        if atlas is None:
            raise ValidationError("atlas required for the mdiff source")
        config = config or FitConfig()
        worst = 0.0
        for i in range(space.n):
            if not agree[i]:
                continue
            chart = atlas.chart_of(i)
            if chart is None:
                continue
            try:
                radius = config.radius or default_fit_radius(space, chart, i)
            except Exception:
                continue
            ball_idx = space.ball_indices(i, radius)
            member = np.asarray([chart.contains(j) for j in ball_idx])
            region = ball_idx[member]
            if not np.all(agree[region]):
                continue
            cfg = FitConfig(
                family=config.family, radius=radius, quad=config.quad, points=[i]
            )
            du = density_via_mdiff(u, atlas, p, cfg).densities[i]
            dv = density_via_mdiff(v, atlas, p, cfg).densities[i]
            if not (np.isnan(du) or np.isnan(dv)):
                worst = max(worst, abs(float(du - dv)))
        return worst
    raise ValidationError(f"unknown density source {source!r}")


def midpoint_scale_gap(u, v, r, omega=None):
    """Slack of the fixed-scale midpoint inequality, pointwise max.

    Returns ``max_x (2 ks^2[m] + ks^2[s]/2) - (ks^2[u] + ks^2[v])``;
    nonpositive (up to noise) for CAT(0) targets at every scale.
    """
    m = u.midpoint_map(v)
    s = u.separation_map(v)
    km = ks_at_scale(m, 2.0, r, omega=omega)
    ks_ = ks_at_scale(s, 2.0, r, omega=omega)
    ku = ks_at_scale(u, 2.0, r, omega=omega)
    kv = ks_at_scale(v, 2.0, r, omega=omega)
    return float((2.0 * km**2 + 0.5 * ks_**2 - ku**2 - kv**2).max())
