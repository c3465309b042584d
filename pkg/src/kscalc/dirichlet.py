"""Discrete Dirichlet problems: minimize the fixed-scale energy over maps
into a CAT(0) target with prescribed boundary values.

The solver relaxes each interior point to the weighted barycenter of the
values its ball reads; for Euclidean targets one sweep is exactly a
Jacobi iteration of the induced graph-Laplacian system.  The energy
reported per sweep is the weighted sum of squared scale energies over
the interior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import AuditError, ValidationError
from .targets import EuclideanTarget, barycenter

JACOBI = "jacobi"
GAUSS_SEIDEL = "gauss-seidel"

_ENERGY_SLACK = 1e-12


class DirichletProblem:
    """Interior mask, boundary trace, CAT(0) target, and the scale.

    The boundary layer is derived: every non-interior index read by some
    interior ball.  Boundary data must cover the layer; the exponent is
    fixed to two.
    """

    def __init__(self, space, target, interior, boundary_data, scale):
        if not target.is_cat0:
            raise ValidationError("Dirichlet problems need a CAT(0) target kind")
        if scale <= 0:
            raise ValidationError("scale must be positive")
        self.space = space
        self.target = target
        self.scale = float(scale)
        self.p = 2.0
        self.interior = np.unique(np.asarray(interior, dtype=int))
        if self.interior.size == 0:
            raise ValidationError("interior must be nonempty")
        if self.interior.size >= space.n:
            raise ValidationError("the complement of the interior must carry mass")
        inside = np.zeros(space.n, dtype=bool)
        inside[self.interior] = True
        self._inside = inside
        self.balls = []
        layer = set()
        for x in self.interior:
            idx = space.ball_indices(int(x), self.scale)
            if idx.shape[0] < 2:
                raise ValidationError(
                    f"interior point {int(x)} has an empty ball at the scale",
                    detail=int(x),
                )
            self.balls.append(idx)
            layer.update(int(j) for j in idx if not inside[j])
        self.boundary_layer = np.asarray(sorted(layer), dtype=int)
        data = {}
        for k, v in dict(boundary_data).items():
            k = int(k)
            if inside[k]:
                raise ValidationError(f"boundary value given at interior index {k}")
            data[k] = target.canonical(v)
        missing = [int(j) for j in self.boundary_layer if j not in data]
        if missing:
            raise ValidationError(
                f"missing boundary values at {missing[:8]}", detail=missing
            )
        self.boundary_data = data
        self.referenced = np.asarray(
            sorted(set(map(int, self.interior)) | set(map(int, self.boundary_layer))),
            dtype=int,
        )
        w = space.weights
        self._coef = np.asarray(
            [
                w[x] / (w[idx].sum() * self.scale**2)
                for x, idx in zip(self.interior, self.balls)
            ]
        )
        # unordered in-ball pairs with an interior endpoint: the edge set
        # of the relaxation's own energy (conductance w_a w_b / r^2)
        pa, pb = [], []
        for x, idx in zip(self.interior, self.balls):
            for j in idx:
                j = int(j)
                if j == int(x):
                    continue
                if inside[j] and j < int(x):
                    continue  # interior-interior pairs counted once
                pa.append(int(x))
                pb.append(j)
        self._pair_a = np.asarray(pa, dtype=int)
        self._pair_b = np.asarray(pb, dtype=int)
        self._pair_w = w[self._pair_a] * w[self._pair_b] / self.scale**2
        self._euclid = isinstance(target, EuclideanTarget)
        if self._euclid:
            self._flat_nbr = np.concatenate(self.balls)
            self._flat_ptr = np.concatenate(
                [[0], np.cumsum([b.shape[0] for b in self.balls])]
            )
            nc = [b[b != x] for x, b in zip(self.interior, self.balls)]
            self._nbrx = np.concatenate(nc)
            self._nbrx_ptr = np.concatenate([[0], np.cumsum([b.shape[0] for b in nc])])
            self._nbrx_w = w[self._nbrx]
            self._nbrx_wsum = np.add.reduceat(self._nbrx_w, self._nbrx_ptr[:-1])

    # -- value containers -------------------------------------------------

    def blank_values(self):
        if self._euclid:
            return np.zeros((self.space.n, self.target.dim))
        return [None] * self.space.n

    def assemble(self, interior_values):
        """Full value assignment from interior values plus the trace."""
        vals = self.blank_values()
        for x, v in zip(self.interior, interior_values):
            vals[int(x)] = self.target.canonical(v)
        for j, v in self.boundary_data.items():
            vals[j] = v
        return vals

    def default_init(self):
        """Copy the nearest boundary value to each interior point."""
        out = []
        layer = self.boundary_layer
        for x in self.interior:
            d = self.space.dist_subset(int(x), layer)
            out.append(self.boundary_data[int(layer[int(np.argmin(d))])])
        return self.assemble(out)

    def seeded_init(self, seed):
        """A feasible start copying seeded random boundary values."""
        rng = np.random.default_rng(seed)
        layer = self.boundary_layer
        picks = rng.integers(0, layer.shape[0], size=self.interior.shape[0])
        return self.assemble([self.boundary_data[int(layer[k])] for k in picks])

    def check_feasible(self, values):
        for j, v in self.boundary_data.items():
            if values[j] is None or self.target.dist(values[j], v) != 0.0:
                raise ValidationError(f"boundary value altered at index {j}")

    def _value_block(self, values, idx):
        if isinstance(values, np.ndarray):
            return values[idx]
        out = []
        for j in idx:
            if values[j] is None:
                raise ValidationError(f"missing value at referenced index {int(j)}")
            out.append(values[j])
        return out


def discrete_energy(prob, values, target=None):
    """Fixed-scale interior energy sum for a full value assignment.

    ``target`` overrides the problem target (the real-valued comparison
    map in the midpoint test reuses the same ball structure).
    """
    target = target or prob.target
    w = prob.space.weights
    if prob._euclid and isinstance(values, np.ndarray) and isinstance(target, EuclideanTarget):
        delta = values[prob._flat_nbr] - np.repeat(
            values[prob.interior], np.diff(prob._flat_ptr), axis=0
        )
        d2 = np.einsum("ij,ij->i", delta, delta)
        per = np.add.reduceat(w[prob._flat_nbr] * d2, prob._flat_ptr[:-1])
        return float(np.dot(prob._coef, per))
    total = 0.0
    for c, x, idx in zip(prob._coef, prob.interior, prob.balls):
        vals = prob._value_block(values, idx)
        vx = values[int(x)]
        if vx is None:
            raise ValidationError(f"missing value at referenced index {int(x)}")
        dy = target.dist_block(vx, vals)
        total += c * float(np.dot(w[idx], dy**2))
    return total


def relaxation_energy(prob, values):
    """The pairwise ball energy the barycentric sweeps descend.

    Sums ``w_a w_b d^2(u_a, u_b) / r^2`` over unordered in-ball pairs with
    an interior endpoint.  Replacing an interior value by the weighted
    barycenter of its ball minimizes this form exactly in that
    coordinate, so relaxation sweeps never increase it; the scale-energy
    sum of ``discrete_energy`` normalizes by ball masses instead and can
    fluctuate near the boundary layer along the same iteration.
    """
    a, b = prob._pair_a, prob._pair_b
    if isinstance(values, np.ndarray) and prob._euclid:
        delta = values[a] - values[b]
        d2 = np.einsum("ij,ij->i", delta, delta)
        return float(np.dot(prob._pair_w, d2))
    t = prob.target
    total = 0.0
    for wab, i, j in zip(prob._pair_w, a, b):
        vi, vj = values[int(i)], values[int(j)]
        if vi is None or vj is None:
            raise ValidationError("missing value at a referenced index")
        total += wab * t.dist(vi, vj) ** 2
    return total


def relax_sweep(prob, values, mode=JACOBI, bary_tol=1e-10, check_energy=True):
    """One relaxation sweep: every interior point moves to the weighted
    barycenter of the other values in its ball.

    Jacobi reads a frozen snapshot; Gauss-Seidel updates in index order.
    The relaxation energy never increases (checked when asked).
    """
    if mode not in (JACOBI, GAUSS_SEIDEL):
        raise ValidationError(f"unknown sweep mode {mode!r}")
    before = relaxation_energy(prob, values) if check_energy else None
    new_values = _sweep(prob, values, mode, bary_tol)
    if check_energy:
        after = relaxation_energy(prob, new_values)
        if after > before + _ENERGY_SLACK:
            raise AuditError(
                f"energy increased across a sweep: {before} -> {after}"
            )
    return new_values


def _sweep(prob, values, mode, bary_tol):
    target = prob.target
    if prob._euclid and mode == JACOBI:
        out = values.copy()
        num = np.add.reduceat(
            prob._nbrx_w[:, None] * values[prob._nbrx], prob._nbrx_ptr[:-1], axis=0
        )
        out[prob.interior] = num / prob._nbrx_wsum[:, None]
        return out
    if isinstance(values, np.ndarray):
        out = values.copy()
        src = values if mode == JACOBI else out
        for x, idx in zip(prob.interior, prob.balls):
            nbr = idx[idx != x]
            out[int(x)] = barycenter(
                target, list(src[nbr]), prob.space.weights[nbr], tol=bary_tol
            )
        return out
    out = list(values)
    src = values if mode == JACOBI else out
    for x, idx in zip(prob.interior, prob.balls):
        nbr = idx[idx != x]
        pts = [src[int(j)] for j in nbr]
        out[int(x)] = barycenter(target, pts, prob.space.weights[nbr], tol=bary_tol)
    return out


@dataclass
class SolveReport:
    """Iteration record; the trajectory tracks the relaxation energy."""

    iterations: int
    energy_trajectory: list
    final_energy: float
    max_displacement_last_sweep: float
    converged: bool
    uniqueness_gap: float | None = None
    final_scale_energy: float | None = None

    def to_json(self):
        return {
            "iterations": self.iterations,
            "energy_trajectory": [float(e) for e in self.energy_trajectory],
            "final_energy": float(self.final_energy),
            "final_scale_energy": None
            if self.final_scale_energy is None
            else float(self.final_scale_energy),
            "max_displacement_last_sweep": float(self.max_displacement_last_sweep),
            "converged": self.converged,
            "uniqueness_gap": None
            if self.uniqueness_gap is None
            else float(self.uniqueness_gap),
        }


def _displacement(prob, old, new):
    if isinstance(old, np.ndarray):
        delta = new[prob.interior] - old[prob.interior]
        return float(np.sqrt(np.einsum("ij,ij->i", delta, delta)).max())
    return max(
        prob.target.dist(old[int(x)], new[int(x)]) for x in prob.interior
    )


def default_tolerance(target):
    return 1e-8 if isinstance(target, EuclideanTarget) else 1e-6


def solve(
    prob,
    init=None,
    tol=None,
    max_sweeps=20_000,
    mode=JACOBI,
    bary_tol=None,
    uniqueness_audit=True,
    seed=0,
):
    """Relax until the sweep displacement or energy decrease is small.

    Returns the final values and a report.  Exhausting ``max_sweeps``
    yields a non-converged report, not an exception.  On convergence a
    second seeded start re-solves the problem and the two final maps
    must agree within ten tolerances in sup target-distance.
    """
    if tol is None:
        tol = default_tolerance(prob.target)
    if bary_tol is None:
        bary_tol = max(tol * 1e-2, 1e-12)
    values = prob.default_init() if init is None else init
    prob.check_feasible(values)
    energy = relaxation_energy(prob, values)
    trajectory = [energy]
    converged = False
    disp = math.inf
    sweeps = 0
    rho_window = []
    for sweeps in range(1, max_sweeps + 1):
        new_values = _sweep(prob, values, mode, bary_tol)
        new_energy = relaxation_energy(prob, new_values)
        if new_energy > energy + _ENERGY_SLACK:
            raise AuditError(
                f"energy increased across sweep {sweeps}: {energy} -> {new_energy}"
            )
        disp = _displacement(prob, values, new_values)
        decrease = energy - new_energy
        values, energy = new_values, new_energy
        trajectory.append(energy)
        # geometric sweeps leave a tail of about disp * rho / (1 - rho)
        # behind the last iterate, so the displacement test is sharpened
        # by the observed contraction factor; the two-sweep ratio rides
        # out the period-2 oscillation of Jacobi on bipartite stencils
        rho_window.append(disp)
        rho_window = rho_window[-3:]
        if len(rho_window) == 3 and rho_window[0] > 0:
            rho = math.sqrt(min(rho_window[2] / rho_window[0], 1.0 - 1e-9))
        else:
            rho = 1.0 - 1e-9
        err_est = disp * max(rho / (1.0 - rho), 1.0)
        # an exactly-zero decrease is floating-point saturation of the
        # energy, not evidence of optimality; defer to the displacement
        if err_est < tol or 0.0 < decrease < tol * tol:
            converged = True
            break
    report = SolveReport(
        iterations=sweeps,
        energy_trajectory=trajectory,
        final_energy=energy,
        max_displacement_last_sweep=disp,
        converged=converged,
        final_scale_energy=discrete_energy(prob, values),
    )
    if converged and uniqueness_audit:
        values2, _ = solve(
            prob,
            init=prob.seeded_init(seed + 1),
            tol=tol,
            max_sweeps=max_sweeps,
            mode=mode,
            bary_tol=bary_tol,
            uniqueness_audit=False,
        )
        gap = max(
            prob.target.dist(values[int(x)], values2[int(x)]) for x in prob.interior
        )
        report.uniqueness_gap = float(gap)
        if gap > 10.0 * tol:
            raise AuditError(
                f"uniqueness audit failed: seeded restart differs by {gap}"
            )
    return values, report


@dataclass
class MidpointReport:
    lhs: float
    rhs: float
    slack: float
    energy_mid: float
    energy_sep: float


def midpoint_test(prob, u_values, v_values):
    """Fixed-scale comparison inequality for a feasible pair.

    With m the pointwise geodesic midpoint and s the pointwise target
    distance, checks ``2 E(m) + E_s(s)/2 <= E(u) + E(v)`` and reports
    the slack.
    """
    t = prob.target
    for j in prob.boundary_data:
        if t.dist(u_values[j], v_values[j]) != 0.0:
            raise ValidationError(f"boundary values differ at index {j}")
    n = prob.space.n
    mid = prob.blank_values()
    sep = np.zeros((n, 1))
    for j in prob.referenced:
        j = int(j)
        mid[j] = t.geodesic_point(u_values[j], v_values[j], 0.5)
        sep[j, 0] = t.dist(u_values[j], v_values[j])
    e_u = discrete_energy(prob, u_values)
    e_v = discrete_energy(prob, v_values)
    e_m = discrete_energy(prob, mid)
    e_s = discrete_energy(prob, sep, target=EuclideanTarget(1))
    lhs = 2.0 * e_m + 0.5 * e_s
    rhs = e_u + e_v
    if lhs > rhs + 1e-9:
        raise AuditError(f"midpoint inequality violated: {lhs} > {rhs}")
    return MidpointReport(
        lhs=lhs, rhs=rhs, slack=rhs - lhs, energy_mid=e_m, energy_sep=e_s
    )


def _interior_components(prob):
    """Connected components of the interior under ball adjacency."""
    pos = {int(x): k for k, x in enumerate(prob.interior)}
    parent = list(range(len(pos)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    touches = [False] * len(pos)
    for x, idx in zip(prob.interior, prob.balls):
        a = find(pos[int(x)])
        for j in idx:
            j = int(j)
            if j in pos:
                b = find(pos[j])
                if a != b:
                    parent[b] = a
                    a = find(a)
            else:
                touches[a] = True
    comp = {}
    for k in range(len(pos)):
        comp.setdefault(find(k), []).append(k)
    out = []
    for root, members in comp.items():
        touched = touches[root] or any(touches[m] for m in members)
        out.append((touched, [int(prob.interior[m]) for m in members]))
    return out


def poincare_estimate(prob, tol=1e-13, max_iter=500):
    """Inverse of the smallest Dirichlet eigenvalue at the problem scale.

    Assembles the real-valued quadratic form of maps vanishing on the
    boundary layer and runs inverse power iteration against the interior
    mass; the result converts energy gaps into squared L2 distances.
    """
    for touched, members in _interior_components(prob):
        if not touched:
            raise ValidationError(
                f"interior component {members[:8]} touches no boundary",
                detail=members,
            )
    ni = prob.interior.shape[0]
    pos = {int(x): k for k, x in enumerate(prob.interior)}
    q = np.zeros((ni, ni))
    w = prob.space.weights
    for c, x, idx in zip(prob._coef, prob.interior, prob.balls):
        a = pos[int(x)]
        for j in idx:
            j = int(j)
            if j == int(x):
                continue
            cw = c * w[j]
            q[a, a] += cw
            if j in pos:
                b = pos[j]
                q[b, b] += cw
                q[a, b] -= cw
                q[b, a] -= cw
    mass = w[prob.interior]
    factor = cho_factor(q)
    x = np.ones(ni)
    lam_prev = math.inf
    for _ in range(max_iter):
        y = cho_solve(factor, mass * x)
        y /= math.sqrt(float(np.dot(mass * y, y)))
        lam = float(np.dot(y, q @ y)) / float(np.dot(mass * y, y))
        x = y
        if abs(lam - lam_prev) <= tol * max(lam, 1e-300):
            break
        lam_prev = lam
    return 1.0 / lam
