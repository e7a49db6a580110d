#!/usr/bin/env python3
"""
Method of Moving Asymptotes.

One call of `mma_step` builds the convex separable approximation around the
current point and solves it with a primal-dual Newton interior method. The
problem solved is

    minimize    f_0(x) + a0*z + sum(c_i*y_i + 0.5*d_i*y_i^2)
    subject to  f_i(x) - a_i*z - y_i <= 0,   lower <= x <= upper,   y, z >= 0

with the usual choice a0 = 1, a = 0, c = 1000, d = 1 so the artificial
variables y vanish whenever the constraints can be met.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)


class InfeasibleBoundsError(ValueError):
    """Lower bound above upper bound, or a start point outside the box."""


@dataclass(frozen=True)
class MmaSettings:
    move: float = 0.5
    asyinit: float = 0.5
    asyincr: float = 1.2
    asydecr: float = 0.7
    albefa: float = 0.1
    raa0: float = 1e-5
    epsimin: float = 1e-9
    a0: float = 1.0
    c: float = 1000.0
    d: float = 1.0


@dataclass
class MmaState:
    """Asymptotes and history carried between iterations."""
    lower: np.ndarray
    upper: np.ndarray
    settings: MmaSettings = field(default_factory=MmaSettings)
    iteration: int = 0
    low: Optional[np.ndarray] = None
    upp: Optional[np.ndarray] = None
    xold1: Optional[np.ndarray] = None
    xold2: Optional[np.ndarray] = None
    kkt_residual: float = float("nan")
    multipliers: Optional[np.ndarray] = None

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape:
            raise InfeasibleBoundsError("lower and upper bounds differ in shape")
        if np.any(self.lower > self.upper):
            bad = int(np.flatnonzero(self.lower > self.upper)[0])
            raise InfeasibleBoundsError(
                f"Infeasible bounds at variable {bad}: {self.lower[bad]} > {self.upper[bad]}"
            )


@dataclass
class Subproblem:
    low: np.ndarray
    upp: np.ndarray
    alfa: np.ndarray
    beta: np.ndarray
    p0: np.ndarray
    q0: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    b: np.ndarray
    a0: float
    a: np.ndarray
    c: np.ndarray
    d: np.ndarray


def _asymptotes(state: MmaState, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    s = state.settings
    span = state.upper - state.lower
    if state.iteration < 3 or state.low is None:
        return x - s.asyinit * span, x + s.asyinit * span
    zzz = (x - state.xold1) * (state.xold1 - state.xold2)
    factor = np.ones_like(x)
    factor[zzz > 0] = s.asyincr
    factor[zzz < 0] = s.asydecr
    low = x - factor * (state.xold1 - state.low)
    upp = x + factor * (state.upp - state.xold1)
    low = np.clip(low, x - 10.0 * span, x - 0.01 * span)
    upp = np.clip(upp, x + 0.01 * span, x + 10.0 * span)
    return low, upp


def build_subproblem(state: MmaState, x: np.ndarray, df0dx: np.ndarray, fval: np.ndarray,
                     dfdx: np.ndarray) -> Subproblem:
    s = state.settings
    n = len(x)
    m = len(fval)
    low, upp = _asymptotes(state, x)
    span = state.upper - state.lower

    alfa = np.maximum.reduce([low + s.albefa * (x - low), x - s.move * span, state.lower])
    beta = np.minimum.reduce([upp - s.albefa * (upp - x), x + s.move * span, state.upper])

    xmamiinv = 1.0 / np.maximum(span, 1e-5)
    ux1 = upp - x
    xl1 = x - low
    ux2 = ux1 * ux1
    xl2 = xl1 * xl1

    p0 = np.maximum(df0dx, 0.0)
    q0 = np.maximum(-df0dx, 0.0)
    pq0 = 0.001 * (p0 + q0) + s.raa0 * xmamiinv
    p0 = (p0 + pq0) * ux2
    q0 = (q0 + pq0) * xl2

    P = np.maximum(dfdx, 0.0)
    Q = np.maximum(-dfdx, 0.0)
    PQ = 0.001 * (P + Q) + s.raa0 * np.outer(np.ones(m), xmamiinv)
    P = (P + PQ) * ux2[None, :]
    Q = (Q + PQ) * xl2[None, :]
    b = P @ (1.0 / ux1) + Q @ (1.0 / xl1) - fval

    return Subproblem(low, upp, alfa, beta, p0, q0, P, Q, b,
                      s.a0, np.zeros(m), np.full(m, s.c), np.full(m, s.d))


def _residual(sp_: Subproblem, x, y, z, lam, xsi, eta, mu, zet, s, epsi: float) -> np.ndarray:
    ux1 = sp_.upp - x
    xl1 = x - sp_.low
    plam = sp_.p0 + sp_.P.T @ lam
    qlam = sp_.q0 + sp_.Q.T @ lam
    gvec = sp_.P @ (1.0 / ux1) + sp_.Q @ (1.0 / xl1)
    dpsidx = plam / (ux1 * ux1) - qlam / (xl1 * xl1)
    return np.concatenate([
        dpsidx - xsi + eta,
        sp_.c + sp_.d * y - mu - lam,
        [sp_.a0 - zet - sp_.a @ lam],
        gvec - sp_.a * z - y + s - sp_.b,
        xsi * (x - sp_.alfa) - epsi,
        eta * (sp_.beta - x) - epsi,
        mu * y - epsi,
        [zet * z - epsi],
        lam * s - epsi,
    ])


def subsolv(sp_: Subproblem, epsimin: float):
    """Primal-dual Newton solve of the MMA subproblem.

    Returns (x, y, z, lam, xsi, eta, mu, zet, s).
    """
    n = len(sp_.alfa)
    m = len(sp_.b)
    een = np.ones(n)
    eem = np.ones(m)
    epsi = 1.0
    x = 0.5 * (sp_.alfa + sp_.beta)
    y = eem.copy()
    z = 1.0
    lam = eem.copy()
    xsi = np.maximum(een / (x - sp_.alfa), een)
    eta = np.maximum(een / (sp_.beta - x), een)
    mu = np.maximum(eem, 0.5 * sp_.c)
    zet = 1.0
    s = eem.copy()

    while epsi > epsimin:
        residu = _residual(sp_, x, y, z, lam, xsi, eta, mu, zet, s, epsi)
        residunorm = np.linalg.norm(residu)
        residumax = np.max(np.abs(residu))
        ittt = 0
        while residumax > 0.9 * epsi and ittt < 200:
            ittt += 1
            ux1 = sp_.upp - x
            xl1 = x - sp_.low
            ux2 = ux1 * ux1
            xl2 = xl1 * xl1
            ux3 = ux1 * ux2
            xl3 = xl1 * xl2
            plam = sp_.p0 + sp_.P.T @ lam
            qlam = sp_.q0 + sp_.Q.T @ lam
            gvec = sp_.P @ (1.0 / ux1) + sp_.Q @ (1.0 / xl1)
            GG = sp_.P / ux2[None, :] - sp_.Q / xl2[None, :]
            dpsidx = plam / ux2 - qlam / xl2
            delx = dpsidx - epsi / (x - sp_.alfa) + epsi / (sp_.beta - x)
            dely = sp_.c + sp_.d * y - lam - epsi / y
            delz = sp_.a0 - sp_.a @ lam - epsi / z
            dellam = gvec - sp_.a * z - y - sp_.b + epsi / lam
            diagx = 2.0 * (plam / ux3 + qlam / xl3) + xsi / (x - sp_.alfa) + eta / (sp_.beta - x)
            diagy = sp_.d + mu / y
            diaglamyi = s / lam + 1.0 / diagy

            if m < n:
                blam = dellam + dely / diagy - GG @ (delx / diagx)
                Alam = np.diag(diaglamyi) + (GG / diagx[None, :]) @ GG.T
                AA = np.block([[Alam, sp_.a[:, None]], [sp_.a[None, :], np.array([[-zet / z]])]])
                solut = np.linalg.solve(AA, np.concatenate([blam, [delz]]))
                dlam = solut[:m]
                dz = solut[m]
                dx = -delx / diagx - (GG.T @ dlam) / diagx
            else:
                dellamyi = dellam + dely / diagy
                Axx = np.diag(diagx) + GG.T @ (GG / diaglamyi[:, None])
                azz = zet / z + sp_.a @ (sp_.a / diaglamyi)
                axz = -GG.T @ (sp_.a / diaglamyi)
                bx = delx + GG.T @ (dellamyi / diaglamyi)
                bz = delz - sp_.a @ (dellamyi / diaglamyi)
                AA = np.block([[Axx, axz[:, None]], [axz[None, :], np.array([[azz]])]])
                solut = np.linalg.solve(AA, -np.concatenate([bx, [bz]]))
                dx = solut[:n]
                dz = solut[n]
                dlam = (GG @ dx) / diaglamyi - dz * (sp_.a / diaglamyi) + dellamyi / diaglamyi

            dy = -dely / diagy + dlam / diagy
            dxsi = -xsi + epsi / (x - sp_.alfa) - (xsi * dx) / (x - sp_.alfa)
            deta = -eta + epsi / (sp_.beta - x) + (eta * dx) / (sp_.beta - x)
            dmu = -mu + epsi / y - (mu * dy) / y
            dzet = -zet + epsi / z - zet * dz / z
            ds = -s + epsi / lam - (s * dlam) / lam

            xx = np.concatenate([y, [z], lam, xsi, eta, mu, [zet], s])
            dxx = np.concatenate([dy, [dz], dlam, dxsi, deta, dmu, [dzet], ds])
            stmxx = np.max(-1.01 * dxx / xx)
            stmalfa = np.max(-1.01 * dx / (x - sp_.alfa))
            stmbeta = np.max(1.01 * dx / (sp_.beta - x))
            steg = 1.0 / max(stmalfa, stmbeta, stmxx, 1.0)

            old = (x, y, z, lam, xsi, eta, mu, zet, s)
            itto = 0
            resinew = 2.0 * residunorm
            while resinew > residunorm and itto < 50:
                itto += 1
                x = old[0] + steg * dx
                y = old[1] + steg * dy
                z = old[2] + steg * dz
                lam = old[3] + steg * dlam
                xsi = old[4] + steg * dxsi
                eta = old[5] + steg * deta
                mu = old[6] + steg * dmu
                zet = old[7] + steg * dzet
                s = old[8] + steg * ds
                residu = _residual(sp_, x, y, z, lam, xsi, eta, mu, zet, s, epsi)
                resinew = np.linalg.norm(residu)
                steg = steg / 2.0
            residunorm = resinew
            residumax = np.max(np.abs(residu))
        epsi = 0.1 * epsi

    return x, y, z, lam, xsi, eta, mu, zet, s


def kkt_residual(sp_: Subproblem, solution) -> float:
    """Max-norm of the unrelaxed subproblem optimality conditions."""
    return float(np.max(np.abs(_residual(sp_, *solution, epsi=0.0))))


def mma_step(state: MmaState, x: np.ndarray, f0: float, df0dx: np.ndarray,
             fval: Optional[np.ndarray] = None, dfdx: Optional[np.ndarray] = None) -> Tuple[MmaState, np.ndarray]:
    """One MMA iteration; returns the updated state and the subproblem minimizer.

    With no constraints a slack constraint -1 <= 0 keeps the subproblem well posed.
    """
    x = np.asarray(x, dtype=float)
    df0dx = np.asarray(df0dx, dtype=float)
    if x.shape != state.lower.shape:
        raise InfeasibleBoundsError(f"x has shape {x.shape}, bounds have {state.lower.shape}")
    if np.any(x < state.lower - 1e-12) or np.any(x > state.upper + 1e-12):
        raise InfeasibleBoundsError("Current point lies outside the bounds")
    x = np.clip(x, state.lower, state.upper)

    if fval is None or len(np.atleast_1d(fval)) == 0:
        fval = np.array([-1.0])
        dfdx = np.zeros((1, len(x)))
    fval = np.atleast_1d(np.asarray(fval, dtype=float))
    dfdx = np.atleast_2d(np.asarray(dfdx, dtype=float))

    state = replace(state, iteration=state.iteration + 1)
    sp_ = build_subproblem(state, x, df0dx, fval, dfdx)
    solution = subsolv(sp_, state.settings.epsimin)
    xnew = np.clip(solution[0], state.lower, state.upper)

    new_state = replace(
        state,
        low=sp_.low,
        upp=sp_.upp,
        xold2=state.xold1 if state.xold1 is not None else x.copy(),
        xold1=x.copy(),
        kkt_residual=kkt_residual(sp_, solution),
        multipliers=solution[3],
    )
    logger.debug(f"MMA iteration {new_state.iteration}: f0={f0:.6e}, kkt={new_state.kkt_residual:.2e}")
    return new_state, xnew
