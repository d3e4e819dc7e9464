"""Effective finite-dimensional soliton mechanics.

V^eff_m(q) = ∫ V(x+q) b^2(x) dx is computed as an FFT convolution on the
field grid (b^2 is even), cubically interpolated for the ODE; the force used
by the integrator is the exact derivative of the energy's spline so that
leapfrog energy errors stay bounded.  H_mech = |p|^2/(2m) + eps V^eff(q).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline, RegularGridInterpolator

from .field import Grid
from .model import PotentialModel

__all__ = [
    "EffectivePotential", "MechState", "MechOrbit",
    "build_effective_potential", "mech_energy", "mech_step", "mech_run",
    "orbit_distance", "critical_values", "critical_margin",
]


class MechError(RuntimeError):
    pass


class _UniformCubic:
    """Scalar-fast evaluation of a CubicSpline built on uniform knots."""

    def __init__(self, spline: CubicSpline):
        self.x0 = float(spline.x[0])
        self.x1 = float(spline.x[-1])
        self.h = float(spline.x[1] - spline.x[0])
        self.c = spline.c                    # (4, n-1)
        self.n_seg = self.c.shape[1]

    def __call__(self, q: float) -> float:
        j = int((q - self.x0) / self.h)
        j = 0 if j < 0 else (self.n_seg - 1 if j >= self.n_seg else j)
        t = q - (self.x0 + j * self.h)
        c = self.c
        return ((c[0, j] * t + c[1, j]) * t + c[2, j]) * t + c[3, j]

    def deriv(self, q: float) -> float:
        j = int((q - self.x0) / self.h)
        j = 0 if j < 0 else (self.n_seg - 1 if j >= self.n_seg else j)
        t = q - (self.x0 + j * self.h)
        c = self.c
        return (3.0 * c[0, j] * t + 2.0 * c[1, j]) * t + c[2, j]


@dataclass
class EffectivePotential:
    mass: float
    grid: Grid
    values: np.ndarray            # V^eff on the grid
    grad: list                    # spectral gradient arrays, one per axis

    def __post_init__(self):
        d = self.grid.dim
        if d == 1:
            self._spline = CubicSpline(self.grid.axes[0], self.values)
            self._dspline = self._spline.derivative()
            self._fast = _UniformCubic(self._spline)
        else:
            # multilinear: exact on node planes, so symmetry-plane forces
            # vanish identically (the tensor cubic leaks ~1e-7 across planes)
            pts = self.grid.axes
            self._spline = RegularGridInterpolator(pts, self.values, method="linear")
            self._gsplines = [RegularGridInterpolator(pts, gj, method="linear")
                              for gj in self.grad]

    def _check_range(self, q):
        for j in range(self.grid.dim):
            a = self.grid.axes[j]
            if not a[0] <= q[j] <= a[-1]:
                raise MechError(f"q[{j}]={q[j]:.4g} outside interpolation range")

    def value_at(self, q) -> float:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        self._check_range(q)
        if self.grid.dim == 1:
            return self._fast(float(q[0]))
        return float(self._spline(q)[0])

    def grad_at(self, q) -> np.ndarray:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        self._check_range(q)
        if self.grid.dim == 1:
            return np.array([self._fast.deriv(float(q[0]))])
        return np.array([float(gs(q)[0]) for gs in self._gsplines])


def build_effective_potential(potential: PotentialModel, b_grid: np.ndarray,
                              grid: Grid, mass: float) -> EffectivePotential:
    """Spectral convolution (V * b^2)(q); b^2 must be centered and decayed."""
    b2 = np.asarray(b_grid, dtype=float) ** 2
    edge = [np.max(np.abs(np.take(b2, [0], axis=j))) for j in range(grid.dim)]
    if max(edge) > 1e-8 * np.max(b2):
        raise MechError("soliton density not decayed at the box edge (wrap-around)")
    V = np.broadcast_to(potential(*grid.x), grid.n) if potential.terms else np.zeros(grid.n)
    conv = np.fft.ifftn(np.fft.fftn(V) * np.fft.fftn(np.fft.ifftshift(b2))).real * grid.cell
    ghat = np.fft.fftn(conv)
    grad = [np.fft.ifftn(1j * grid.k_deriv[j] * ghat).real for j in range(grid.dim)]
    return EffectivePotential(mass=mass, grid=grid, values=conv, grad=grad)


@dataclass
class MechState:
    p: np.ndarray
    q: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.p = np.atleast_1d(np.asarray(self.p, dtype=float))
        self.q = np.atleast_1d(np.asarray(self.q, dtype=float))
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.q))):
            raise MechError("non-finite mechanical state")


def mech_energy(state: MechState, m: float, eps: float,
                veff: EffectivePotential, scaled: bool = False) -> float:
    """|p|^2/2m + eps V^eff(q); scaled=True returns the eps-divided form
    |p~|^2/2m + V^eff with p = mu^2 p~ (i.e. H_mech / eps)."""
    kin = float(np.sum(state.p**2)) / (2.0 * m)
    if scaled:
        if eps <= 0:
            raise MechError("scaled form needs eps > 0")
        return kin / eps + veff.value_at(state.q)
    return kin + eps * veff.value_at(state.q)


def mech_step(state: MechState, m: float, eps: float,
              veff: EffectivePotential, dt: float) -> MechState:
    """One Stormer-Verlet (kick-drift-kick) step of q' = p/m, p' = -eps grad V^eff."""
    p = state.p - 0.5 * dt * eps * veff.grad_at(state.q)
    q = state.q + dt * p / m
    p = p - 0.5 * dt * eps * veff.grad_at(q)
    return MechState(p, q, state.t + dt)


@dataclass
class MechOrbit:
    ts: np.ndarray
    ps: np.ndarray                # (n, d)
    qs: np.ndarray                # (n, d)
    energies: np.ndarray
    mass: float
    eps: float

    def period_estimate(self) -> float | None:
        """Mean spacing of upward mean-crossings of q[0] (None if not periodic)."""
        q = self.qs[:, 0] - np.mean(self.qs[:, 0])
        up = np.where((q[:-1] < 0) & (q[1:] >= 0))[0]
        if len(up) < 2:
            return None
        # linear interpolation of the crossing times
        tcross = self.ts[up] - q[up] * (self.ts[up + 1] - self.ts[up]) / (q[up + 1] - q[up])
        return float(np.mean(np.diff(tcross)))


def mech_run(state0: MechState, m: float, eps: float, veff: EffectivePotential,
             dt: float, t_final: float, store_every: int = 1) -> MechOrbit:
    n = int(round(t_final / dt))
    if veff.grid.dim == 1:
        return _mech_run_1d(state0, m, eps, veff, dt, n, store_every)
    ts, ps, qs, es = [state0.t], [state0.p.copy()], [state0.q.copy()], \
        [mech_energy(state0, m, eps, veff)]
    s = state0
    for i in range(n):
        s = mech_step(s, m, eps, veff, dt)
        if (i + 1) % store_every == 0 or i == n - 1:
            ts.append(s.t)
            ps.append(s.p.copy())
            qs.append(s.q.copy())
            es.append(mech_energy(s, m, eps, veff))
    return MechOrbit(np.array(ts), np.array(ps), np.array(qs), np.array(es), m, eps)


def _mech_run_1d(state0, m, eps, veff, dt, n, store_every):
    """Scalar leapfrog loop on raw floats (the spline calls dominate otherwise)."""
    fast = veff._fast
    lo = veff.grid.axes[0][0]
    hi = veff.grid.axes[0][-1]
    p, q, t = float(state0.p[0]), float(state0.q[0]), state0.t
    n_keep = n // store_every + 2
    ts = np.empty(n_keep)
    ps = np.empty(n_keep)
    qs = np.empty(n_keep)
    ts[0], ps[0], qs[0] = t, p, q
    k = 1
    half = 0.5 * dt * eps
    for i in range(n):
        p -= half * fast.deriv(q)
        q += dt * p / m
        if not lo <= q <= hi:
            raise MechError(f"q={q:.4g} left the interpolation range")
        p -= half * fast.deriv(q)
        t += dt
        if (i + 1) % store_every == 0 or i == n - 1:
            ts[k], ps[k], qs[k] = t, p, q
            k += 1
    ts, ps, qs = ts[:k], ps[:k].reshape(-1, 1), qs[:k].reshape(-1, 1)
    es = ps[:, 0] ** 2 / (2.0 * m) + eps * np.array([fast(v) for v in qs[:, 0]])
    return MechOrbit(ts, ps, qs, es, m, eps)


def _weighted_sq(dp, dq, eps):
    return np.sum(dp**2, axis=-1) + eps * np.sum(dq**2, axis=-1)


def orbit_distance(point: MechState, orbit: MechOrbit, eps: float) -> float:
    """min over the orbit of ||(p-p', q-q')||_eps, golden-refined between the
    bracketing samples (||(p,q)||_eps^2 = sum p_k^2 + eps q_k^2)."""
    if len(orbit.ts) == 0:
        raise MechError("empty orbit")
    d2 = _weighted_sq(orbit.ps - point.p, orbit.qs - point.q, eps)
    i = int(np.argmin(d2))
    lo, hi = max(0, i - 1), min(len(d2) - 1, i + 1)
    if hi == lo:
        return float(np.sqrt(d2[i]))

    def f(s):
        j = int(np.floor(s))
        j = min(j, len(d2) - 2)
        w = s - j
        p = (1 - w) * orbit.ps[j] + w * orbit.ps[j + 1]
        q = (1 - w) * orbit.qs[j] + w * orbit.qs[j + 1]
        return float(_weighted_sq(p - point.p, q - point.q, eps))

    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(80):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
        if b - a < 1e-12:
            break
    return float(np.sqrt(min(fc, fd, d2[i])))


def critical_values(veff: EffectivePotential) -> np.ndarray:
    """Critical values of V^eff on the axis: interior zeros of dV^eff plus the
    value at infinity (0 for decaying potentials)."""
    if veff.grid.dim != 1:
        raise MechError("critical values implemented for the 1D/axial case")
    x = veff.grid.axes[0]
    dv = veff._dspline(x)
    vals = [0.0]
    sign = np.sign(dv)
    for i in np.where(np.diff(sign) != 0)[0]:
        # bisect the spline derivative on [x_i, x_i+1]
        a, b = x[i], x[i + 1]
        fa = veff._dspline(a)
        for _ in range(80):
            mdl = 0.5 * (a + b)
            fm = veff._dspline(mdl)
            if fa * fm <= 0:
                b = mdl
            else:
                a, fa = mdl, fm
        vals.append(float(veff._spline(0.5 * (a + b))))
    return np.unique(np.round(vals, 12))


def critical_margin(h_over_eps: float, veff: EffectivePotential) -> float:
    """Distance of H_mech/eps from the nearest critical value of V^eff."""
    return float(np.min(np.abs(critical_values(veff) - h_over_eps)))
