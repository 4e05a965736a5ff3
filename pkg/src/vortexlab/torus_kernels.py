"""Velocity and velocity-gradient induction on the periodic square.

A 2D vorticity distribution on [-L, L)^2 is carried by Gaussian-regularized
vortex blobs.  Two backends evaluate the induced velocity and validate each
other:

* direct periodic-image summation of the regularized perpendicular kernel
  K_sigma(z) = (-z3, z2) / (2*pi*|z|^2) * (1 - exp(-|z|^2 / (2*sigma^2))),
  summed over lattice shifts 2*L*n with |n|_inf <= K;
* a grid-spectral Poisson solve (stream-function form) on deposited
  vorticity.

Image sums are accumulated shell by shell with +n/-n images adjacent
("pair-cancel"), which makes the partial sums converge even for ensembles
with nonzero net circulation and at rate O(K^-2) on odd-symmetric ones.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange


class EmptyEnsembleWarning(UserWarning):
    """Velocity requested for an ensemble with no blobs; field is zero."""


class BlobUnderResolved(UserWarning):
    """Blob radius below two grid spacings; deposit fidelity degrades."""


class NonFiniteInput(ValueError):
    """Positions, circulations or radii contain NaN/inf."""


class TargetTooCloseToSupport(ValueError):
    """Gradient target within 3 sigma of a blob, outside the valid regime."""


class NonzeroMeanVorticity(ValueError):
    """Periodic Poisson solve requires zero-mean vorticity."""


@dataclass(frozen=True)
class TorusDomain2D:
    """Periodic square [-L, L)^2; positions are reduced componentwise."""

    half_length: float = 100.0

    def __post_init__(self):
        if not (self.half_length > 0.0 and math.isfinite(self.half_length)):
            raise ValueError("half_length must be positive and finite")

    def wrap(self, x):
        """Reduce positions to [-L, L) componentwise."""
        L = self.half_length
        return (np.asarray(x, dtype=float) + L) % (2.0 * L) - L


@dataclass(frozen=True)
class VortexBlob:
    """Regularized point vortex: label, position, circulation, core radius."""

    label: tuple
    position: tuple
    circulation: float
    blob_radius: float

    def __post_init__(self):
        if not self.blob_radius > 0.0:
            raise ValueError("blob_radius must be positive")
        if not math.isfinite(self.circulation):
            raise NonFiniteInput("circulation must be finite")


class ParticleEnsemble2D:
    """Array-of-struct view of a blob list (labels, positions, circulations).

    Arrays are read-only; evolution produces new ensembles.
    """

    def __init__(self, labels, positions, circulations, radii):
        self.labels = _freeze(np.atleast_2d(np.asarray(labels, dtype=float)))
        self.positions = _freeze(np.atleast_2d(np.asarray(positions, dtype=float)))
        self.circulations = _freeze(np.atleast_1d(np.asarray(circulations, dtype=float)))
        self.radii = _freeze(np.atleast_1d(np.asarray(radii, dtype=float)))
        n = len(self.circulations)
        if self.positions.shape != (n, 2) or self.labels.shape != (n, 2):
            raise ValueError("labels/positions must have shape (n, 2)")
        if self.radii.shape != (n,):
            raise ValueError("radii must have shape (n,)")
        if n and not np.all(self.radii > 0.0):
            raise ValueError("blob radii must be positive")

    def __len__(self):
        return len(self.circulations)

    @classmethod
    def empty(cls):
        z2 = np.zeros((0, 2))
        return cls(z2, z2, np.zeros(0), np.zeros(0))

    @classmethod
    def from_blobs(cls, blobs):
        if not blobs:
            return cls.empty()
        return cls(
            np.array([b.label for b in blobs], dtype=float),
            np.array([b.position for b in blobs], dtype=float),
            np.array([b.circulation for b in blobs], dtype=float),
            np.array([b.blob_radius for b in blobs], dtype=float),
        )

    def with_positions(self, positions):
        return ParticleEnsemble2D(self.labels, positions,
                                  self.circulations, self.radii)


def _freeze(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class KernelEvalOptions:
    """Image-sum controls: shell count K, summation grouping, tolerance."""

    image_radius: int = 32
    tail_mode: str = "pair-cancel"
    target_tolerance: float = 1e-10
    deterministic_sum: bool = False

    def __post_init__(self):
        if self.image_radius < 1:
            raise ValueError("image_radius must be >= 1")
        if self.tail_mode not in ("truncate", "pair-cancel"):
            raise ValueError(f"unknown tail_mode {self.tail_mode!r}")
        if not self.target_tolerance > 0.0:
            raise ValueError("target_tolerance must be positive")


def image_shifts(domain, opts):
    """Lattice shifts 2*L*n for |n|_inf <= K in the summation order of opts.

    pair-cancel: n = 0 first, then shells k = 1..K with -n immediately
    after +n so partial sums over complete shells are well conditioned.
    truncate: raster order over the box.
    """
    K = opts.image_radius
    if opts.tail_mode == "truncate":
        ns = [(n2, n3) for n2 in range(-K, K + 1) for n3 in range(-K, K + 1)]
    else:
        ns = [(0, 0)]
        for k in range(1, K + 1):
            for n2 in range(-k, k + 1):
                for n3 in range(-k, k + 1):
                    if max(abs(n2), abs(n3)) != k:
                        continue
                    if (n2, n3) > (0, 0):
                        ns.append((n2, n3))
                        ns.append((-n2, -n3))
    return 2.0 * domain.half_length * np.array(ns, dtype=float)


def _as_ensemble(blobs):
    if isinstance(blobs, ParticleEnsemble2D):
        return blobs
    return ParticleEnsemble2D.from_blobs(list(blobs))


def _validate_inputs(ens, targets):
    if not np.all(np.isfinite(ens.positions)) or not np.all(np.isfinite(ens.circulations)):
        raise NonFiniteInput("ensemble contains non-finite positions or circulations")
    if not np.all(np.isfinite(targets)):
        raise NonFiniteInput("targets contain non-finite values")


@njit(cache=True, inline="always")
def _vel_accumulate(t2, t3, pos, gam, inv2s2, rcut2, shifts, twoL):
    u2 = 0.0
    u3 = 0.0
    for b in range(pos.shape[0]):
        # minimum-image reduction of the principal displacement
        w2 = t2 - pos[b, 0]
        w3 = t3 - pos[b, 1]
        w2 -= twoL * np.rint(w2 / twoL)
        w3 -= twoL * np.rint(w3 / twoL)
        g = gam[b]
        i2s = inv2s2[b]
        rc2 = rcut2[b]
        for s in range(shifts.shape[0]):
            z2 = w2 - shifts[s, 0]
            z3 = w3 - shifts[s, 1]
            rho = z2 * z2 + z3 * z3
            if rho < 1e-300:
                continue
            if rho < rc2:
                f = 1.0 - math.exp(-rho * i2s)
            else:
                f = 1.0
            c = g * f / (2.0 * math.pi * rho)
            u2 -= c * z3
            u3 += c * z2
    return u2, u3


@njit(cache=True, parallel=True)
def _vel_parallel(pos, gam, inv2s2, rcut2, targets, shifts, twoL, out):
    for i in prange(targets.shape[0]):
        u2, u3 = _vel_accumulate(targets[i, 0], targets[i, 1], pos, gam,
                                 inv2s2, rcut2, shifts, twoL)
        out[i, 0] = u2
        out[i, 1] = u3


@njit(cache=True)
def _vel_serial(pos, gam, inv2s2, rcut2, targets, shifts, twoL, out):
    for i in range(targets.shape[0]):
        u2, u3 = _vel_accumulate(targets[i, 0], targets[i, 1], pos, gam,
                                 inv2s2, rcut2, shifts, twoL)
        out[i, 0] = u2
        out[i, 1] = u3


@njit(cache=True, inline="always")
def _grad_accumulate(t2, t3, pos, gam, inv2s2, rcut2, shifts, twoL):
    d22 = 0.0
    d32 = 0.0
    d23 = 0.0
    for b in range(pos.shape[0]):
        w2 = t2 - pos[b, 0]
        w3 = t3 - pos[b, 1]
        w2 -= twoL * np.rint(w2 / twoL)
        w3 -= twoL * np.rint(w3 / twoL)
        gm = gam[b]
        i2s = inv2s2[b]
        rc2 = rcut2[b]
        for s in range(shifts.shape[0]):
            z2 = w2 - shifts[s, 0]
            z3 = w3 - shifts[s, 1]
            rho = z2 * z2 + z3 * z3
            if rho < 1e-300:
                continue
            if rho < rc2:
                e = math.exp(-rho * i2s)
                g = (1.0 - e) / (2.0 * math.pi * rho)
                gp = (rho * e * i2s - (1.0 - e)) / (2.0 * math.pi * rho * rho)
            else:
                g = 1.0 / (2.0 * math.pi * rho)
                gp = -g / rho
            d22 += gm * (-2.0 * z2 * z3 * gp)
            d32 += gm * (-2.0 * z3 * z3 * gp - g)
            d23 += gm * (2.0 * z2 * z2 * gp + g)
    return d22, d32, d23


@njit(cache=True, parallel=True)
def _grad_parallel(pos, gam, inv2s2, rcut2, targets, shifts, twoL, out):
    for i in prange(targets.shape[0]):
        d22, d32, d23 = _grad_accumulate(targets[i, 0], targets[i, 1], pos,
                                         gam, inv2s2, rcut2, shifts, twoL)
        out[i, 0, 0] = d22
        out[i, 0, 1] = d32
        out[i, 1, 0] = d23
        out[i, 1, 1] = -d22


@njit(cache=True)
def _grad_serial(pos, gam, inv2s2, rcut2, targets, shifts, twoL, out):
    for i in range(targets.shape[0]):
        d22, d32, d23 = _grad_accumulate(targets[i, 0], targets[i, 1], pos,
                                         gam, inv2s2, rcut2, shifts, twoL)
        out[i, 0, 0] = d22
        out[i, 0, 1] = d32
        out[i, 1, 0] = d23
        out[i, 1, 1] = -d22


@njit(cache=True, parallel=True)
def _min_dist2_torus(pos, targets, twoL, out):
    for i in prange(targets.shape[0]):
        best = 1e300
        arg = -1
        for b in range(pos.shape[0]):
            z2 = targets[i, 0] - pos[b, 0]
            z3 = targets[i, 1] - pos[b, 1]
            z2 -= twoL * np.rint(z2 / twoL)
            z3 -= twoL * np.rint(z3 / twoL)
            d2 = z2 * z2 + z3 * z3
            if d2 < best:
                best = d2
                arg = b
        out[i, 0] = best
        out[i, 1] = arg


def _kernel_args(ens, targets, domain, opts):
    targets = np.ascontiguousarray(np.atleast_2d(np.asarray(targets, dtype=float)))
    _validate_inputs(ens, targets)
    inv2s2 = np.where(ens.radii > 0.0, 0.5 / np.maximum(ens.radii, 1e-300) ** 2, 0.0)
    # beyond rho = 100 sigma^2 the core factor is 1 to 4e-22
    rcut2 = 100.0 * ens.radii ** 2
    shifts = image_shifts(domain, opts)
    return targets, inv2s2, rcut2, shifts, 2.0 * domain.half_length


def biot_savart_direct(blobs, targets, opts=None, domain=None):
    """Velocity induced at targets by the blob ensemble, with periodic images.

    Returns an (n_targets, 2) array of (u2, u3).  An empty ensemble yields a
    zero field and an EmptyEnsembleWarning.
    """
    opts = opts or KernelEvalOptions()
    domain = domain or TorusDomain2D()
    ens = _as_ensemble(blobs)
    targets, inv2s2, rcut2, shifts, twoL = _kernel_args(ens, targets, domain, opts)
    out = np.zeros((targets.shape[0], 2))
    if len(ens) == 0:
        warnings.warn("no blobs in ensemble; returning zero velocity",
                      EmptyEnsembleWarning, stacklevel=2)
        return out
    drive = _vel_serial if opts.deterministic_sum else _vel_parallel
    drive(ens.positions, ens.circulations, inv2s2, rcut2, targets, shifts,
          twoL, out)
    return out


def velocity_gradient_direct(blobs, targets, opts=None, domain=None):
    """Velocity-gradient tensors [[d2u2, d3u2], [d2u3, d3u3]] at targets.

    Valid only away from the vorticity support: every target must sit more
    than 3 sigma from every blob (minimum-image distance), else
    TargetTooCloseToSupport.  The returned tensors are exactly trace-free.
    """
    opts = opts or KernelEvalOptions()
    domain = domain or TorusDomain2D()
    ens = _as_ensemble(blobs)
    targets, inv2s2, rcut2, shifts, twoL = _kernel_args(ens, targets, domain, opts)
    out = np.zeros((targets.shape[0], 2, 2))
    if len(ens) == 0:
        warnings.warn("no blobs in ensemble; returning zero gradients",
                      EmptyEnsembleWarning, stacklevel=2)
        return out
    dist = np.empty((targets.shape[0], 2))
    _min_dist2_torus(ens.positions, targets, twoL, dist)
    sep = np.sqrt(dist[:, 0])
    limit = 3.0 * ens.radii[dist[:, 1].astype(int)]
    bad = sep <= limit
    if np.any(bad):
        i = int(np.argmax(bad))
        b = int(dist[i, 1])
        raise TargetTooCloseToSupport(
            f"target {i} at {tuple(targets[i])} is {sep[i]:.3e} from blob {b} "
            f"(3 sigma = {limit[i]:.3e})"
        )
    drive = _grad_serial if opts.deterministic_sum else _grad_parallel
    drive(ens.positions, ens.circulations, inv2s2, rcut2, targets, shifts,
          twoL, out)
    return out


# ---------------------------------------------------------------------------
# grid backend
# ---------------------------------------------------------------------------

class GridField2D:
    """Cell-centered samples of a periodic scalar field on the torus."""

    def __init__(self, domain, resolution, samples=None):
        if resolution < 4 or resolution & (resolution - 1):
            raise ValueError("resolution must be a power of two >= 4")
        self.domain = domain
        self.resolution = int(resolution)
        if samples is None:
            samples = np.zeros((resolution, resolution))
        samples = np.asarray(samples, dtype=float)
        if samples.shape != (resolution, resolution):
            raise ValueError("samples shape must be (n, n)")
        self.samples = samples

    @property
    def spacing(self):
        return 2.0 * self.domain.half_length / self.resolution

    def cell_centers_1d(self):
        L = self.domain.half_length
        return -L + (np.arange(self.resolution) + 0.5) * self.spacing

    def integral(self):
        return float(self.samples.sum()) * self.spacing ** 2

    def mean(self):
        return float(self.samples.mean())


def grid_poisson_velocity(vorticity):
    """Spectral stream-function solve: vorticity -> (u2, u3) grid fields.

    uhat = i k_perp * what / |k|^2 with the k = 0 mode zeroed; the discrete
    velocity is divergence-free in the spectral sense to round-off.
    """
    w = vorticity.samples
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    mean = vorticity.mean()
    if abs(mean) > 1e-10 * max(scale, 1e-300):
        raise NonzeroMeanVorticity(f"vorticity mean {mean:.3e} is not zero")
    n = vorticity.resolution
    d = vorticity.spacing
    what = np.fft.rfft2(w)
    k2 = 2.0 * math.pi * np.fft.fftfreq(n, d=d)[:, None]
    k3 = 2.0 * math.pi * np.fft.rfftfreq(n, d=d)[None, :]
    ksq = k2 ** 2 + k3 ** 2
    inv = np.zeros_like(ksq)
    nz = ksq > 0.0
    inv[nz] = 1.0 / ksq[nz]
    # derivatives of the unpaired Nyquist modes are ill-defined on the real
    # grid; drop those modes so the velocity is exactly solenoidal
    inv[n // 2, :] = 0.0
    inv[:, -1] = 0.0
    u2 = np.fft.irfft2(1j * k3 * what * inv, s=(n, n))
    u3 = np.fft.irfft2(-1j * k2 * what * inv, s=(n, n))
    dom = vorticity.domain
    return GridField2D(dom, n, u2), GridField2D(dom, n, u3)


@njit(cache=True)
def _deposit_kernel(pos, gam, radii, n, L, halfw, grid):
    d = 2.0 * L / n
    for b in range(pos.shape[0]):
        sig = radii[b]
        w = halfw[b]
        # cell containing the blob; the +-w stencil covers the 6 sigma core
        c2 = int(np.floor((pos[b, 0] + L) / d))
        c3 = int(np.floor((pos[b, 1] + L) / d))
        total = 0.0
        for i in range(c2 - w, c2 + w + 1):
            x2 = -L + (i + 0.5) * d
            z2 = x2 - pos[b, 0]
            for j in range(c3 - w, c3 + w + 1):
                x3 = -L + (j + 0.5) * d
                z3 = x3 - pos[b, 1]
                total += math.exp(-(z2 * z2 + z3 * z3) / (2.0 * sig * sig))
        if total <= 0.0:
            continue
        # per-blob normalization keeps the grid integral exactly sum(gamma)
        c = gam[b] / (total * d * d)
        for i in range(c2 - w, c2 + w + 1):
            x2 = -L + (i + 0.5) * d
            z2 = x2 - pos[b, 0]
            ii = i % n
            for j in range(c3 - w, c3 + w + 1):
                x3 = -L + (j + 0.5) * d
                z3 = x3 - pos[b, 1]
                jj = j % n
                grid[ii, jj] += c * math.exp(-(z2 * z2 + z3 * z3) / (2.0 * sig * sig))


def deposit(blobs, domain, resolution):
    """Spread blob circulations onto a grid as normalized Gaussian densities.

    The integral of the returned field equals the total circulation to
    round-off.  Emits BlobUnderResolved when sigma < 2 grid spacings.
    """
    ens = _as_ensemble(blobs)
    out = GridField2D(domain, resolution)
    if len(ens) == 0:
        return out
    _validate_inputs(ens, np.zeros((1, 2)))
    d = out.spacing
    ratio = float(np.min(ens.radii)) / d
    if ratio < 2.0:
        warnings.warn(f"smallest blob radius is {ratio:.2f} grid spacings "
                      "(< 2); deposited field under-resolves the core",
                      BlobUnderResolved, stacklevel=2)
    halfw = np.ceil(6.0 * ens.radii / d).astype(np.int64) + 1
    # cap the stencil at the full grid to avoid periodic double counting
    halfw = np.minimum(halfw, resolution // 2 - 1)
    pos = domain.wrap(ens.positions)
    _deposit_kernel(pos, ens.circulations, ens.radii, resolution,
                    domain.half_length, halfw, out.samples)
    return out


@njit(cache=True)
def _interp_kernel(samples, n, L, pts, out):
    d = 2.0 * L / n
    for p in range(pts.shape[0]):
        acc = 0.0
        s2 = (pts[p, 0] + L) / d - 0.5
        s3 = (pts[p, 1] + L) / d - 0.5
        i0 = int(np.floor(s2))
        j0 = int(np.floor(s3))
        f2 = s2 - i0
        f3 = s3 - j0
        # 4-point Lagrange weights per axis (4th-order on smooth fields)
        w2 = _lagrange4(f2)
        w3 = _lagrange4(f3)
        for a in range(4):
            ii = (i0 - 1 + a) % n
            row = 0.0
            for bb in range(4):
                jj = (j0 - 1 + bb) % n
                row += w3[bb] * samples[ii, jj]
            acc += w2[a] * row
        out[p] = acc


@njit(cache=True, inline="always")
def _lagrange4(f):
    w = np.empty(4)
    w[0] = -f * (f - 1.0) * (f - 2.0) / 6.0
    w[1] = (f * f - 1.0) * (f - 2.0) / 2.0
    w[2] = -f * (f + 1.0) * (f - 2.0) / 2.0
    w[3] = f * (f * f - 1.0) / 6.0
    return w


def interpolate(grid, points):
    """Sample a grid field at arbitrary points (4-point Lagrange, periodic)."""
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    if not np.all(np.isfinite(pts)):
        raise NonFiniteInput("interpolation points contain non-finite values")
    out = np.empty(pts.shape[0])
    _interp_kernel(grid.samples, grid.resolution, grid.domain.half_length,
                   pts, out)
    return out


def grid_velocity_at(blobs, points, domain, resolution):
    """Grid-backend velocity: deposit, Poisson solve, interpolate at points."""
    vort = deposit(blobs, domain, resolution)
    u2g, u3g = grid_poisson_velocity(vort)
    return np.column_stack([interpolate(u2g, points), interpolate(u3g, points)])
