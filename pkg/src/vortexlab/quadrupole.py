"""Lagrangian evolution of an odd-odd vortex quadrupole under linear strain.

The scalar vorticity rides on blob particles whose positions follow

    dA2/dt = u2(A) - M * A2,      dA3/dt = u3(A),

so each particle's circulation is constant in time and the field value at a
particle is exp(M*t) times its initial value.  This turns the L^p growth
law, the flow-map Jacobian determinant exp(-M*t), and the near-origin
velocity-gradient decay into directly measurable diagnostics.
"""

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .torus_kernels import (
    KernelEvalOptions,
    ParticleEnsemble2D,
    TorusDomain2D,
    biot_savart_direct,
    deposit,
    grid_poisson_velocity,
    interpolate,
    velocity_gradient_direct,
)


class UnderResolvedBump(ValueError):
    """Particle spacing too coarse for the quadrupole bump."""


class CFLViolation(ValueError):
    """Time step too large for the strain rate or particle spacing."""


class BlowupGuard(RuntimeError):
    """A particle left |x| <= 10 where the ambient strain is linear."""


class TracersNotSeeded(KeyError):
    """Jacobian requested for a label without co-evolved tracers."""


class SupportIntrudesProbeBall(ValueError):
    """Vorticity support overlaps the gradient probe ball."""


class FlowSeriesGap(KeyError):
    """Requested time is not a stored node of the flow series."""


# guard radius: outside |x| = 10 the ambient strain is no longer the pure
# linear field, so the simulation stops being meaningful there
STRAIN_REGION_RADIUS = 10.0


@dataclass(frozen=True)
class StrainParams:
    """Strain rate M >= 0 and the associated horizon T_M = log(1+M)/M."""

    M: float = 2.0

    def __post_init__(self):
        if not (self.M >= 0.0 and math.isfinite(self.M)):
            raise ValueError("M must be finite and >= 0")

    @property
    def T_M(self):
        if self.M == 0.0:
            return 1.0  # continuity choice: log(1+M)/M -> 1
        return math.log1p(self.M) / self.M


@dataclass(frozen=True)
class QuadrupoleSpec:
    """Four mirrored copies of a radial bump, odd in both coordinates.

    The profile is amplitude * exp(1 - 1/(1 - (r/radius)^2)) centered at
    (1.5, 1.5) inside the box [1, 2]^2, mirrored with signs (+, -, -, +)
    over the four quadrants.
    """

    amplitude: float = 1.0
    center: tuple = (1.5, 1.5)
    radius: float = 0.5

    def __post_init__(self):
        if self.amplitude < 0.0:
            raise ValueError("amplitude must be >= 0")
        c2, c3 = self.center
        r = self.radius
        if not (1.0 <= c2 - r and c2 + r <= 2.0 and 1.0 <= c3 - r and c3 + r <= 2.0):
            raise ValueError("bump must be supported inside [1, 2]^2")

    def profile(self, r):
        """Radial bump, smooth and compactly supported on r < radius."""
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        inside = r < self.radius
        u = (r[inside] / self.radius) ** 2
        out[inside] = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - u))
        return out

    def vorticity0(self, x2, x3):
        """Initial scalar vorticity: mirrored bumps, odd in x2 and in x3."""
        x2 = np.asarray(x2, dtype=float)
        x3 = np.asarray(x3, dtype=float)
        c2, c3 = self.center
        out = np.zeros(np.broadcast(x2, x3).shape)
        for s2 in (1.0, -1.0):
            for s3 in (1.0, -1.0):
                r = np.hypot(s2 * x2 - c2, s3 * x3 - c3)
                out += s2 * s3 * self.profile(r)
        return out


@dataclass(frozen=True)
class JacobianProbe:
    a2: float
    a3: float
    fd_step: float
    tracer_start: int


@dataclass(frozen=True)
class IntermediateState:
    """Immutable snapshot of the strained quadrupole simulation."""

    time: float
    strain: StrainParams
    domain: TorusDomain2D
    ensemble: ParticleEnsemble2D
    vorticity0: np.ndarray        # initial field value at each particle label
    quad_area: float              # lattice quadrature area per particle
    spacing: float                # initial particle lattice spacing
    backend: str = "direct"
    opts: KernelEvalOptions = KernelEvalOptions()
    grid_resolution: int = 512
    tracers: np.ndarray = None    # (Q, 2) passive positions or None
    tracer_labels: np.ndarray = None
    jacobian_probes: tuple = ()
    mirror2: np.ndarray = None    # permutation: partner under x2 -> -x2
    mirror3: np.ndarray = None

    def __post_init__(self):
        if self.backend not in ("direct", "grid"):
            raise ValueError(f"unknown backend {self.backend!r}")

    @property
    def n_particles(self):
        return len(self.ensemble)

    def vorticity_values(self):
        """Field values carried by the particles: exp(M t) * w0(a)."""
        return math.exp(self.strain.M * self.time) * self.vorticity0


def init_quadrupole(spec, spacing, strain, domain=None, backend="direct",
                    opts=None, sigma_factor=2.0, grid_resolution=512,
                    min_particles_per_radius=16):
    """Seed blob particles on a lattice over the four mirrored bumps.

    Circulations are w0(a) * h^2; the total circulation is exactly zero by
    the mirrored construction.  Blob radius is sigma_factor * spacing.
    """
    domain = domain or TorusDomain2D()
    opts = opts or KernelEvalOptions()
    n_side = round(1.0 / spacing)
    if abs(n_side * spacing - 1.0) > 1e-9:
        raise UnderResolvedBump("spacing must divide the unit support box")
    if spec.radius / spacing < min_particles_per_radius:
        raise UnderResolvedBump(
            f"{spec.radius / spacing:.1f} particles per bump radius; "
            f"need >= {min_particles_per_radius}")

    ax = 1.0 + (np.arange(n_side) + 0.5) * spacing
    A2, A3 = np.meshgrid(ax, ax, indexing="ij")
    a = np.column_stack([A2.ravel(), A3.ravel()])
    w0 = spec.vorticity0(a[:, 0], a[:, 1])
    keep = w0 != 0.0
    a = a[keep]
    w0 = w0[keep]
    b1 = len(a)

    # blocks: Q1, Q2 (x2 mirrored), Q4 (x3 mirrored), Q3 (both)
    signs = [(1.0, 1.0, 1.0), (-1.0, 1.0, -1.0), (1.0, -1.0, -1.0),
             (-1.0, -1.0, 1.0)]
    labels = np.concatenate([a * (s2, s3) for s2, s3, _ in signs])
    values = np.concatenate([sg * w0 for _, _, sg in signs])
    area = spacing ** 2
    gammas = values * area
    sigma = sigma_factor * spacing
    ens = ParticleEnsemble2D(labels, labels.copy(), gammas,
                             np.full(len(labels), sigma))

    idx = np.arange(b1)
    mirror2 = np.concatenate([idx + b1, idx, idx + 3 * b1, idx + 2 * b1])
    mirror3 = np.concatenate([idx + 2 * b1, idx + 3 * b1, idx, idx + b1])

    return IntermediateState(
        time=0.0, strain=strain, domain=domain, ensemble=ens,
        vorticity0=values, quad_area=area, spacing=spacing, backend=backend,
        opts=opts, grid_resolution=grid_resolution,
        mirror2=mirror2, mirror3=mirror3,
    )


def add_tracers(state, points):
    """Append passive zero-circulation markers co-evolved with the flow."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if state.tracers is None:
        tr, lb = points, points.copy()
    else:
        tr = np.vstack([state.tracers, points])
        lb = np.vstack([state.tracer_labels, points])
    return replace(state, tracers=tr, tracer_labels=lb)


def seed_jacobian_tracers(state, a, fd_step):
    """Seed the four tracers a +- fd_step e2, a +- fd_step e3."""
    a2, a3 = float(a[0]), float(a[1])
    start = 0 if state.tracers is None else len(state.tracers)
    pts = np.array([[a2 + fd_step, a3], [a2 - fd_step, a3],
                    [a2, a3 + fd_step], [a2, a3 - fd_step]])
    state = add_tracers(state, pts)
    probe = JacobianProbe(a2, a3, float(fd_step), start)
    return replace(state, jacobian_probes=state.jacobian_probes + (probe,))


def _grid_velocity(state, ens_positions, points):
    ens = state.ensemble.with_positions(ens_positions)
    vort = deposit(ens, state.domain, state.grid_resolution)
    u2g, u3g = grid_poisson_velocity(vort)
    return np.column_stack([interpolate(u2g, points), interpolate(u3g, points)])


def _induced_velocity(state, ens_positions, points):
    """Self-induced velocity at points, from the staged ensemble positions."""
    if state.n_particles == 0:
        return np.zeros((len(points), 2))
    if state.backend == "grid":
        return _grid_velocity(state, ens_positions, points)
    ens = state.ensemble.with_positions(ens_positions)
    return biot_savart_direct(ens, points, state.opts, state.domain)


def step(state, dt):
    """Advance particles and tracers one RK4 step of the strained dynamics."""
    M = state.strain.M
    if dt <= 0.0:
        raise CFLViolation("dt must be positive")
    if dt * M > 0.1 + 1e-12:
        raise CFLViolation(f"dt * M = {dt * M:.3f} exceeds 0.1")
    B = state.n_particles
    y0 = state.ensemble.positions
    if state.tracers is not None:
        y0 = np.vstack([y0, state.tracers])
    if len(y0) == 0:
        return replace(state, time=state.time + dt)

    if B:
        u0 = _induced_velocity(state, y0[:B], y0[:B])
        umax = float(np.max(np.abs(u0))) if len(u0) else 0.0
        if umax * dt > 0.5 * state.spacing:
            raise CFLViolation(
                f"dt * max|u| = {umax * dt:.3e} exceeds half a particle spacing")

    def rhs(y):
        u = _induced_velocity(state, y[:B], y)
        u[:, 0] -= M * y[:, 0]
        return u

    k1 = rhs(y0)
    k2 = rhs(y0 + 0.5 * dt * k1)
    k3 = rhs(y0 + 0.5 * dt * k2)
    k4 = rhs(y0 + dt * k3)
    y1 = y0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    r = np.max(np.hypot(y1[:, 0], y1[:, 1])) if len(y1) else 0.0
    if r > STRAIN_REGION_RADIUS:
        raise BlowupGuard(f"particle reached |x| = {r:.2f} > "
                          f"{STRAIN_REGION_RADIUS}; strain model invalid")

    new_ens = state.ensemble.with_positions(y1[:B])
    tracers = y1[B:] if state.tracers is not None else None
    return replace(state, time=state.time + dt, ensemble=new_ens,
                   tracers=tracers)


def lp_norm(state, p):
    """L^p norm of the particle-carried vorticity field.

    Uses the exact area element exp(-M t) of the strained flow map, so the
    particle-quadrature norms follow the exp(M (p-1) t / p) law identically.
    """
    if not (p >= 1.0):
        raise ValueError("p must be >= 1")
    if state.n_particles == 0:
        return 0.0
    amp = math.exp(state.strain.M * state.time)
    absw = np.abs(state.vorticity0)
    if math.isinf(p):
        return amp * float(np.max(absw))
    jac = math.exp(-state.strain.M * state.time)
    total = float(np.sum((amp * absw) ** p)) * state.quad_area * jac
    return total ** (1.0 / p)


def grid_lp_norm(state, p, resolution=None, sigma=None):
    """L^p norm measured on a deposited grid field (mollified measurement)."""
    resolution = resolution or state.grid_resolution
    dom = state.domain
    d = 2.0 * dom.half_length / resolution
    sigma = sigma or 2.0 * d
    ens = ParticleEnsemble2D(state.ensemble.labels, state.ensemble.positions,
                             state.ensemble.circulations,
                             np.full(state.n_particles, sigma))
    field = deposit(ens, dom, resolution)
    a = np.abs(field.samples)
    if math.isinf(p):
        return float(a.max()) if a.size else 0.0
    return float((a ** p).sum() * d * d) ** (1.0 / p)


def flow_map_jacobian(state, a, fd_step):
    """Centered-difference determinant of the flow map at label a."""
    for probe in state.jacobian_probes:
        if (abs(probe.a2 - a[0]) < 1e-12 and abs(probe.a3 - a[1]) < 1e-12
                and abs(probe.fd_step - fd_step) < 1e-15):
            i = probe.tracer_start
            t = state.tracers[i:i + 4]
            da2 = (t[0] - t[1]) / (2.0 * fd_step)
            da3 = (t[2] - t[3]) / (2.0 * fd_step)
            return float(da2[0] * da3[1] - da3[0] * da2[1])
    raise TracersNotSeeded(f"no jacobian tracers for label {tuple(a)} "
                           f"with fd_step {fd_step}")


@dataclass(frozen=True)
class SupportBounds:
    min_x2: float
    max_x2: float
    min_x3: float
    max_x3: float


def support_bounds(state):
    """Componentwise extrema over particles seeded in the first quadrant."""
    lb = state.ensemble.labels
    q1 = (lb[:, 0] > 0.0) & (lb[:, 1] > 0.0)
    if not np.any(q1):
        nan = float("nan")
        return SupportBounds(nan, nan, nan, nan)
    pos = state.ensemble.positions[q1]
    return SupportBounds(float(pos[:, 0].min()), float(pos[:, 0].max()),
                         float(pos[:, 1].min()), float(pos[:, 1].max()))


def probe_radius(strain, c=0.1, gamma=1.0):
    """Probe-ball radius rule c * (M+1)^-gamma near the origin."""
    return c * (strain.M + 1.0) ** (-gamma)


def probe_points(radius, count):
    """Deterministic low-discrepancy sample of the disk B_0(radius)."""
    i = np.arange(count)
    r = radius * np.sqrt((i + 0.5) / count)
    golden = math.pi * (3.0 - math.sqrt(5.0))
    th = golden * i
    return np.column_stack([r * np.cos(th), r * np.sin(th)])


def gradient_probe(state, radius, sample_count=64):
    """Max Frobenius norm of the induced velocity gradient over B_0(radius)."""
    if state.n_particles == 0:
        return 0.0
    pos = state.ensemble.positions
    rmin = float(np.min(np.hypot(pos[:, 0], pos[:, 1])))
    if rmin <= 3.0 * radius:
        raise SupportIntrudesProbeBall(
            f"nearest particle at |x| = {rmin:.3e} <= 3 * radius = "
            f"{3.0 * radius:.3e}")
    pts = probe_points(radius, sample_count)
    g = velocity_gradient_direct(state.ensemble, pts, state.opts, state.domain)
    return float(np.max(np.sqrt(np.sum(g * g, axis=(1, 2)))))


def mirror_mismatch(state):
    """Largest position error of the four-fold odd symmetry, if seeded."""
    if state.mirror2 is None or state.n_particles == 0:
        return 0.0
    pos = state.ensemble.positions
    f2 = pos.copy()
    f2[:, 0] = -f2[:, 0]
    f3 = pos.copy()
    f3[:, 1] = -f3[:, 1]
    e2 = np.max(np.hypot(*(pos[state.mirror2] - f2).T))
    e3 = np.max(np.hypot(*(pos[state.mirror3] - f3).T))
    return float(max(e2, e3))


class FlowSeries:
    """Simulation snapshots at uniform times, exposing field evaluation."""

    def __init__(self, states):
        if not states:
            raise ValueError("need at least one state")
        self.states = list(states)
        self.times = np.array([s.time for s in self.states])
        self.node_dt = (float(self.times[1] - self.times[0])
                        if len(self.states) > 1 else 0.0)

    def __len__(self):
        return len(self.states)

    @property
    def t_end(self):
        return float(self.times[-1])

    def index_of(self, t):
        if self.node_dt == 0.0:
            i = 0
        else:
            i = int(round((t - self.times[0]) / self.node_dt))
        if i < 0 or i >= len(self.states) or abs(self.times[i] - t) > 1e-9 * max(
                1.0, abs(t)):
            raise FlowSeriesGap(f"time {t} is not a stored node "
                                f"(dt = {self.node_dt}, t_end = {self.t_end})")
        return i

    def at(self, t):
        return self.states[self.index_of(t)]

    def velocity_at(self, t, points):
        s = self.at(t)
        return _induced_velocity(s, s.ensemble.positions,
                                 np.atleast_2d(np.asarray(points, dtype=float)))

    def gradient_at(self, t, points):
        s = self.at(t)
        if s.n_particles == 0:
            return np.zeros((len(np.atleast_2d(points)), 2, 2))
        return velocity_gradient_direct(s.ensemble, points, s.opts, s.domain)


def simulate(state, t_end, dt=None, max_dt=None):
    """Run to t_end with uniform steps; returns the stored FlowSeries."""
    span = t_end - state.time
    if span <= 0.0:
        return FlowSeries([state])
    if dt is None:
        cap = max_dt or 0.1
        if state.strain.M > 0.0:
            cap = min(cap, 0.1 / state.strain.M)
        n = max(1, math.ceil(span / cap - 1e-12))
        dt = span / n
    else:
        n = max(1, round(span / dt))
        if abs(n * dt - span) > 1e-9:
            raise ValueError("dt must divide the simulated span")
    states = [state]
    for _ in range(n):
        state = step(state, dt)
        states.append(state)
    return FlowSeries(states)
