"""Soliton chart: projector on the symplectic-orthogonal complement, its
Neumann inverse, and Newton extraction of (p, q, phi) from a field.

The chart writes psi = e^{q.JA}(eta_p + Pi_p phi).  Extraction solves the
2(dim+1) root-finding conditions on Phi := e^{-q.JA} psi - eta_p

    f_l = <A_l eta_p, Phi> = 0,      g_l = <E d eta_p/d p_l, Phi> = 0

(the bracket carries the factor 2).  At a chart point the Jacobian is
approximately block-diagonal (df/dp ~ -I, dg/dq ~ +I), which is what makes
warm-started Newton reliable along a trajectory.

phi in the returned decomposition is the reference-space coordinate
(Pi_0-range) obtained by inverting Pi_p on Phi; the reported phi norms are
those of the physical remainder Phi itself (= Pi_p phi), the quantity the
long-time bounds control.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import FieldState, h1_norm, l2_norm
from .groundstate import SolitonFamily, SolitonTangents

__all__ = [
    "ExtractionError", "NewtonDivergenceError", "MaxIterExceededError",
    "LeavesChartError", "SolitonCoordinates", "Decomposition",
    "project", "invert_projector", "residuals", "initial_guess", "extract",
    "newton_jacobian",
]


class ExtractionError(RuntimeError):
    pass


class NewtonDivergenceError(ExtractionError):
    pass


class MaxIterExceededError(ExtractionError):
    pass


class LeavesChartError(ExtractionError):
    pass


@dataclass
class SolitonCoordinates:
    p: np.ndarray
    q: np.ndarray                # q4 lives on the covering space (unwrapped)

    def copy(self):
        return SolitonCoordinates(self.p.copy(), self.q.copy())


@dataclass
class Decomposition:
    coords: SolitonCoordinates
    phi: FieldState              # reference-space chart coordinate
    residual: np.ndarray         # the 2(dim+1) orthogonality pairings of Phi
    phi_h1: float                # norms of the physical remainder Pi_p phi
    phi_l2: float
    newton_iters: int


def _bracket(cell, u, v):
    return 2.0 * cell * float(np.sum(u.real * v.real + u.imag * v.imag))


def _pairings(tg: SolitonTangents, vals):
    """(f_l, g_l) for the active indices: f = <A_l eta, vals>, g = <E t_l, vals>."""
    cell = tg.grid.cell
    f = [_bracket(cell, tg.A_eta[j], vals) for j in tg.active]
    g = [_bracket(cell, 1j * tg.t[j], vals) for j in tg.active]
    return np.array(f + g)


def project(psi: FieldState, tangents: SolitonTangents) -> FieldState:
    """Pi_p psi = psi - sum <A_j eta, psi> t_j + sum <E t_j, psi> J A_j eta."""
    if not psi.grid.compatible(tangents.grid):
        raise ExtractionError("grid mismatch between field and tangents")
    cell = psi.grid.cell
    out = psi.values.copy()
    for j in tangents.active:
        out -= _bracket(cell, tangents.A_eta[j], psi.values) * tangents.t[j]
        # J A_j eta = -i A_j eta (spatial j: = d_j eta; j = 4: = -i eta)
        out += _bracket(cell, 1j * tangents.t[j], psi.values) * (-1j * tangents.A_eta[j])
    return FieldState(psi.grid, out)


def invert_projector(phi_raw: FieldState, tangents_p: SolitonTangents,
                     tangents_0: SolitonTangents, tol: float = 1e-12,
                     max_iter: int = 50) -> FieldState:
    """Solve Pi_p u = phi_raw for u in the reference range of Pi_0 by the
    Neumann iteration u <- phi_raw + (Pi_0 - Pi_p) u."""
    g = phi_raw.grid
    eta_scale = float(np.sqrt(g.cell) * np.linalg.norm(tangents_p.eta.ravel()))
    # series convergence is judged on the iterate increments (the equation
    # defect bottoms out at the size of the input's tangent component)
    threshold = max(tol * l2_norm(phi_raw), 1e-13 * eta_scale)
    u = phi_raw
    best = np.inf
    stall = 0
    for _ in range(max_iter):
        u_next = FieldState(g, phi_raw.values + project(u, tangents_0).values
                            - project(u, tangents_p).values)
        inc = l2_norm(FieldState(g, u_next.values - u.values))
        u = u_next
        if inc <= threshold:
            return u
        if inc < best * (1.0 - 1e-9):
            best, stall = inc, 0
        else:
            stall += 1
            if stall >= 4:
                raise ExtractionError("projector inversion: no contraction")
    raise ExtractionError(f"projector inversion did not converge in {max_iter} iterations")


class _Workspace:
    """Caches for one extraction: fft of psi, tangent bundles keyed by p."""

    def __init__(self, psi: FieldState, family: SolitonFamily):
        self.grid = psi.grid
        self.family = family
        self.psi_hat = np.fft.fftn(psi.values)
        self._tg = {}

    def tangents(self, p) -> SolitonTangents:
        key = tuple(np.round(np.asarray(p, dtype=float), 14))
        if key not in self._tg:
            if len(self._tg) > 128:
                self._tg.clear()
            self._tg[key] = self.family.tangents(np.asarray(p, dtype=float), self.grid)
        return self._tg[key]

    def pulled_back(self, q) -> np.ndarray:
        """e^{-q.JA} psi = e^{+i q4} psi(. + q_vec), spectrally."""
        g = self.grid
        ph = self.psi_hat
        shift = 0.0
        for j in range(g.dim):
            if q[j] != 0.0:
                shift = shift + g.k[j] * q[j]
        if np.ndim(shift) or shift != 0.0:
            ph = ph * np.exp(1j * shift)
        out = np.fft.ifftn(ph)
        if q[3] != 0.0:
            out = out * np.exp(1j * q[3])
        return out

    def residual(self, p, q) -> np.ndarray:
        """Pairings at (p, q); +inf vector for trial points outside the
        family's validity range (rejected by the Newton damping)."""
        from .groundstate import GroundStateError
        n = 2 * (self.family.dim + 1)
        try:
            tg = self.tangents(p)
        except GroundStateError:
            return np.full(n, np.inf)
        phi = self.pulled_back(q) - tg.eta
        r = _pairings(tg, phi)
        return r if np.all(np.isfinite(r)) else np.full(n, np.inf)


def residuals(psi: FieldState, p, q, family: SolitonFamily) -> np.ndarray:
    """Orthogonality pairings of Phi = e^{-q.JA} psi - eta_p (root targets)."""
    ws = _Workspace(psi, family)
    return ws.residual(np.asarray(p, dtype=float), np.asarray(q, dtype=float))


def newton_jacobian(ws: _Workspace, p, q, h: float = 1e-6) -> np.ndarray:
    """Centered finite-difference Jacobian of the residuals in (p, q)."""
    act = ws.tangents(p).active
    n = 2 * len(act)
    J = np.empty((n, n))
    col = 0
    for j in act:
        pp, pm = p.copy(), p.copy()
        pp[j] += h
        pm[j] -= h
        J[:, col] = (ws.residual(pp, q) - ws.residual(pm, q)) / (2.0 * h)
        col += 1
    for j in act:
        qp, qm = q.copy(), q.copy()
        qp[j] += h
        qm[j] -= h
        J[:, col] = (ws.residual(p, qp) - ws.residual(p, qm)) / (2.0 * h)
        col += 1
    return J


def initial_guess(psi: FieldState, family: SolitonFamily,
                  prev: SolitonCoordinates | None = None):
    """(coords, info): centroid position, spectral momenta, mass offset, and
    the gauge angle from the complex pairing with the guessed soliton."""
    from .field import momenta

    g = psi.grid
    w = np.abs(psi.values) ** 2
    total = float(np.sum(w)) * g.cell
    if total <= 1e-12:
        raise ExtractionError("total mass below threshold")

    P = momenta(psi)
    p = np.zeros(4)
    p[:g.dim] = P[:g.dim]
    p[3] = P[3] - 2.0 * family.m_ref
    info = {"mass": P[3],
            "low_confidence": abs(P[3] - 2.0 * family.m_ref) > 0.5 * 2.0 * family.m_ref}
    # reference soliton for the gauge angle: clamp the mass offset so the
    # profile stays representable even for radiation-dominated fields
    p_ref = p.copy()
    p_ref[3] = min(max(p[3], -family.m_ref), 2.0 * family.m_ref)

    # centroid about the density peak (avoids wrap bias on the torus)
    peak = np.unravel_index(int(np.argmax(w)), g.n)
    q = np.zeros(4)
    rolled = np.roll(w, tuple(g.n[j] // 2 - peak[j] for j in range(g.dim)),
                     axis=tuple(range(g.dim)))
    tot_r = float(np.sum(rolled))
    for j in range(g.dim):
        c = float(np.sum(g.x[j] * rolled)) / tot_r
        q[j] = c + g.axes[j][peak[j]]
        L = g.length[j]
        q[j] = (q[j] + L / 2.0) % L - L / 2.0

    eta_guess = family.build(_params(p_ref, q), g)
    z = complex(np.sum(psi.values * np.conj(eta_guess.values)))
    q[3] = -np.angle(z)

    if prev is not None:
        q[3] += 2.0 * np.pi * np.round((prev.q[3] - q[3]) / (2.0 * np.pi))
        for j in range(g.dim):
            q[j] += g.length[j] * np.round((prev.q[j] - q[j]) / g.length[j])
    return SolitonCoordinates(p, q), info


def _params(p, q):
    from .groundstate import SolitonParameters
    return SolitonParameters(tuple(p), tuple(q))


def extract(psi: FieldState, family: SolitonFamily,
            guess: SolitonCoordinates | None = None,
            tol: float = 1e-10, max_iter: int = 40,
            phi_frac_max: float = 0.75,
            prev: SolitonCoordinates | None = None) -> Decomposition:
    """Newton-solve the orthogonality system; assemble the decomposition.

    `prev` doubles as warm start and q4/q unwrapping reference.
    """
    ws = _Workspace(psi, family)
    if guess is None:
        guess = prev.copy() if prev is not None else initial_guess(psi, family)[0]
    p, q = np.asarray(guess.p, dtype=float).copy(), np.asarray(guess.q, dtype=float).copy()

    r = ws.residual(p, q)
    rn = float(np.max(np.abs(r)))
    if not np.isfinite(rn):
        raise ExtractionError("guess outside the chart's validity range")
    increases = 0
    iters = 0
    while rn > tol:
        if iters >= max_iter:
            raise MaxIterExceededError(f"newton: residual {rn:.3e} after {iters} iterations")
        J = newton_jacobian(ws, p, q)
        if not np.all(np.isfinite(J)):
            raise NewtonDivergenceError("newton: jacobian hit the chart boundary")
        try:
            delta = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as e:
            raise NewtonDivergenceError(f"newton: singular jacobian ({e})") from e
        # step clamp: a wild trial cannot leave the family's validity range
        big = np.max(np.abs(delta))
        if big > 1.0:
            delta *= 1.0 / big
        act = ws.tangents(p).active
        lam = 1.0
        for _ in range(6):
            p_new, q_new = p.copy(), q.copy()
            for i, j in enumerate(act):
                p_new[j] += lam * delta[i]
                q_new[j] += lam * delta[len(act) + i]
            r_new = ws.residual(p_new, q_new)
            rn_new = float(np.max(np.abs(r_new)))
            if rn_new < rn:
                break
            lam *= 0.5
        if not np.isfinite(rn_new):
            raise NewtonDivergenceError("newton: step left the chart's validity range")
        if rn_new >= rn:
            increases += 1
            if increases >= 2:
                raise NewtonDivergenceError(
                    f"newton: residual increased twice (at {rn:.3e})")
        else:
            increases = 0
        p, q, r, rn = p_new, q_new, r_new, rn_new
        iters += 1

    tg = ws.tangents(p)
    phi_raw = FieldState(psi.grid, ws.pulled_back(q) - tg.eta)
    phi_h1 = h1_norm(phi_raw)
    eta_h1 = h1_norm(FieldState(psi.grid, tg.eta))
    if phi_h1 > phi_frac_max * eta_h1:
        raise LeavesChartError(
            f"remainder H1 norm {phi_h1:.3e} exceeds {phi_frac_max} of the soliton's")
    tg0 = ws.tangents(np.zeros(4))
    phi = invert_projector(phi_raw, tg, tg0)
    return Decomposition(
        coords=SolitonCoordinates(p, q),
        phi=phi,
        residual=r,
        phi_h1=phi_h1,
        phi_l2=l2_norm(phi_raw),
        newton_iters=iters,
    )
