#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Output-feedback stabilization of the target set with a high-gain observer.

The plant x' = f(x) + g(x)u is driven by u = sat_M(-(k . xihat) / phi0(xihat)),
where xihat estimates the transversal coordinates from the measured first
coordinate xi_1(x) through the observer

    xihat_i' = xihat_{i+1} + (alpha_i / eps^i)(xi_1(x) - xihat_1),   i < r
    xihat_r' = phi0(xihat) u + (alpha_r / eps^r)(xi_1(x) - xihat_1).
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.integrate import solve_ivp

from core.errors import FormatError, NoConvergence, PreconditionError
from symbolic.expr import Expr, VarTable, compile_exprs, to_text
from symbolic.parser import parse

logger = logging.getLogger(__name__)

HURWITZ_MARGIN = 1e-9


def observer_vars(r):
    return VarTable(tuple(f"xi{i + 1}" for i in range(r)))


def _numbers(text, key):
    try:
        return [float(tok) for tok in str(text).replace(",", " ").split()]
    except ValueError:
        raise FormatError(0, f"[observer] {key} must be a list of numbers, got {text!r}")


class ObserverConfig(BaseModel):
    """High-gain observer and control law parameters."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    r: int = Field(gt=0)
    eps: float = Field(gt=0)
    alpha: List[float]
    gains: List[float]
    phi0: Expr
    sat: float = Field(gt=0)

    @field_validator("gains")
    @classmethod
    def _positive_gains(cls, gains):
        if any(k <= 0 for k in gains):
            raise ValueError(f"controller gains must be positive, got {gains}")
        return gains

    @model_validator(mode="after")
    def _check_dimensions(self):
        if len(self.alpha) != self.r or len(self.gains) != self.r:
            raise ValueError(f"alpha and gains need r = {self.r} entries each")
        roots = np.roots([1.0] + list(self.alpha))
        if np.max(roots.real) >= -HURWITZ_MARGIN:
            raise ValueError(f"s^r + alpha_1 s^(r-1) + ... is not Hurwitz (roots {roots.tolist()})")
        return self

    @classmethod
    def from_section(cls, section, r, eps=None, sat=None, defaults=None):
        """
        Build from an [observer] section with optional command-line overrides.

        Args:
            section: key -> text mapping from the system file
            r: Transversal dimension
            eps: Override for eps
            sat: Override for the saturation bound
            defaults: The observer section of the configuration
        """
        defaults = defaults or {}
        phi0_text = section.get("phi0", "1")
        phi0 = parse(phi0_text, observer_vars(r))
        return cls(
            r=r,
            eps=eps if eps is not None else float(section.get("eps", defaults.get("eps", 0.01))),
            alpha=_numbers(section["alpha"], "alpha") if "alpha" in section else [],
            gains=_numbers(section["gains"], "gains") if "gains" in section else [],
            phi0=phi0,
            sat=sat if sat is not None else float(section.get("sat", defaults.get("sat", 20.0))),
        )

    def summary(self):
        return {
            "r": self.r,
            "eps": self.eps,
            "alpha": self.alpha,
            "gains": self.gains,
            "phi0": to_text(self.phi0, tuple(observer_vars(self.r))),
            "sat": self.sat,
        }


class TrajectorySummary(BaseModel):
    samples: int
    final_time: float
    final_transverse_norm: float
    max_transverse_norm: float
    final_gamma_residual: float
    saturated_steps: int
    peak_observer_norm: float
    peaking: bool
    blowup: Optional[str] = None
    observer: dict


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    xihat: np.ndarray
    u: np.ndarray
    transverse_norm: np.ndarray
    gamma_residual: np.ndarray
    saturated: np.ndarray
    observer: ObserverConfig
    blowup: Optional[str] = None
    notes: List[str] = field(default_factory=list)

    @property
    def saturated_steps(self):
        return int(np.count_nonzero(self.saturated))

    @property
    def peak_observer_norm(self):
        if self.xihat.size == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.xihat, axis=1)))

    @property
    def peaking(self):
        if self.transverse_norm.size == 0:
            return False
        return self.peak_observer_norm > 10.0 * (1.0 + float(self.transverse_norm[0]))

    def summary(self) -> TrajectorySummary:
        return TrajectorySummary(
            samples=len(self.times),
            final_time=float(self.times[-1]) if len(self.times) else 0.0,
            final_transverse_norm=float(self.transverse_norm[-1]) if len(self.times) else 0.0,
            max_transverse_norm=float(np.max(self.transverse_norm)) if len(self.times) else 0.0,
            final_gamma_residual=float(self.gamma_residual[-1]) if len(self.times) else 0.0,
            saturated_steps=self.saturated_steps,
            peak_observer_norm=self.peak_observer_norm,
            peaking=self.peaking,
            blowup=self.blowup,
            observer=self.observer.summary(),
        )


class _BlowupEvent:
    terminal = True
    direction = 1.0

    def __init__(self, limit):
        self.limit = limit

    def __call__(self, t, z):
        return float(np.max(np.abs(z))) - self.limit


class ClosedLoopSimulator:
    """
    Integrates plant and observer together.
    """

    def __init__(self, config):
        """
        Initialize the simulator.

        Args:
            config: Configuration dictionary (integrator and observer sections)
        """
        self.config = config
        integrator = config["integrator"]
        observer = config["observer"]
        self.method = integrator["method"]
        self.rtol = integrator["rtol"]
        self.atol = integrator["atol"]
        self.out_dt = observer["out_dt"]
        self.blowup_norm = observer["blowup_norm"]

        logger.info(
            f"Closed-loop simulator initialized with {self.method}, rtol={self.rtol}, "
            f"output step {self.out_dt}"
        )

    @staticmethod
    def control(obs: ObserverConfig, phi0, xihat):
        """Saturated control and whether the bound was hit."""
        numerator = -float(np.dot(obs.gains, xihat))
        denominator = float(phi0(xihat)[0])
        if denominator == 0.0:
            raw = 0.0 if numerator == 0.0 else np.copysign(np.inf, numerator)
        else:
            raw = numerator / denominator
        u = float(np.clip(raw, -obs.sat, obs.sat))
        return u, abs(raw) > obs.sat

    def simulate(self, sys, tset, chain, obs: ObserverConfig, x_init, xihat_init=None, T=20.0,
                 out_dt=None, rtol=None, atol=None) -> Trajectory:
        """
        Run the closed loop from (x_init, xihat_init) over [0, T].

        Args:
            sys: Control system
            tset: Target set (for the gamma residual column)
            chain: Symbolic xi chain (xi_1 .. xi_r) of a verified output
            obs: Observer parameters
            x_init: Plant initial state
            xihat_init: Observer initial state, zero by default
            T: Final time
            out_dt: Recording step (config default)
            rtol, atol: Integrator tolerances (config default)

        Returns:
            Trajectory, truncated with a blowup reason if the state escaped
        """
        n, r = sys.n, obs.r
        if len(chain) != r:
            raise PreconditionError(f"xi chain has {len(chain)} entries, observer expects r = {r}")
        if T <= 0:
            raise PreconditionError(f"final time must be positive, got {T}")
        x_init = np.asarray(x_init, dtype=float)
        if x_init.shape != (n,):
            raise PreconditionError(f"initial state must have {n} entries")
        xihat_init = np.zeros(r) if xihat_init is None else np.asarray(xihat_init, dtype=float)
        out_dt = out_dt or self.out_dt

        measured = compile_exprs([chain[0]], n)
        transverse = compile_exprs(list(chain), n)
        phi0 = compile_exprs([obs.phi0], r)
        gains = np.array([obs.alpha[i] / obs.eps ** (i + 1) for i in range(r)])
        f, g = sys.f, sys.g

        def rhs(t, z):
            x, xihat = z[:n], z[n:]
            u, _ = self.control(obs, phi0, xihat)
            innovation = float(measured(x)[0]) - xihat[0]
            dxihat = np.empty(r)
            dxihat[:-1] = xihat[1:]
            dxihat[-1] = float(phi0(xihat)[0]) * u
            dxihat += gains * innovation
            return np.concatenate([f(x) + g(x) * u, dxihat])

        sol_t, z, blowup = self._solve(rhs, np.concatenate([x_init, xihat_init]), T, out_dt, rtol, atol)

        states, xihat = z[:, :n], z[:, n:]
        controls, saturated = [], []
        for xh in xihat:
            u, hit = self.control(obs, phi0, xh)
            controls.append(u)
            saturated.append(hit)
        norms = np.array([float(np.linalg.norm(transverse(x))) for x in states])
        residuals = np.array([tset.residual(x) for x in states])

        trajectory = Trajectory(
            times=sol_t,
            states=states,
            xihat=xihat,
            u=np.array(controls),
            transverse_norm=norms,
            gamma_residual=residuals,
            saturated=np.array(saturated, dtype=bool),
            observer=obs,
            blowup=blowup,
        )
        if trajectory.saturated_steps:
            logger.warning(f"Control saturated at {trajectory.saturated_steps} recorded steps")
        if trajectory.peaking:
            logger.warning(f"Observer peaking: |xihat| reached {trajectory.peak_observer_norm:.3g}")
            trajectory.notes.append("observer peaking")
        if len(norms):
            logger.info(f"Closed loop finished at t={sol_t[-1]:.4g} with transverse norm {norms[-1]:.3e}")
        return trajectory

    @staticmethod
    def full_information_control(form, obs: ObserverConfig, x):
        """Saturated u = (-a1 - k . xi(x)) / a2 on the exact transversal state."""
        v = -float(np.dot(obs.gains, form.transverse(x)))
        try:
            raw = form.feedback(x, v)
        except PreconditionError:
            a1 = float(form.coefficients(x)[0])
            raw = 0.0 if v == a1 else np.copysign(np.inf, v - a1)
        u = float(np.clip(raw, -obs.sat, obs.sat))
        return u, abs(raw) > obs.sat

    def simulate_full_information(self, sys, tset, form, obs: ObserverConfig, x_init, T=20.0,
                                  out_dt=None, rtol=None, atol=None) -> Trajectory:
        """
        Run the plant under the same gains with xi measured exactly, no observer.

        The xihat columns of the returned trajectory hold the exact xi(x).

        Args:
            sys: Control system
            tset: Target set
            form: NormalForm of the output driving the loop
            obs: Gains and saturation bound; eps, alpha and phi0 are unused
            x_init: Plant initial state
            T: Final time
            out_dt: Recording step (config default)
            rtol, atol: Integrator tolerances (config default)
        """
        n = sys.n
        if form.r != obs.r:
            raise PreconditionError(f"normal form has r = {form.r}, observer expects r = {obs.r}")
        if T <= 0:
            raise PreconditionError(f"final time must be positive, got {T}")
        x_init = np.asarray(x_init, dtype=float)
        if x_init.shape != (n,):
            raise PreconditionError(f"initial state must have {n} entries")
        out_dt = out_dt or self.out_dt
        f, g = sys.f, sys.g

        def rhs(t, x):
            u, _ = self.full_information_control(form, obs, x)
            return f(x) + g(x) * u

        sol_t, states, blowup = self._solve(rhs, x_init, T, out_dt, rtol, atol)
        xi = np.array([form.transverse(x) for x in states]).reshape(-1, form.r)
        controls, saturated = [], []
        for x in states:
            u, hit = self.full_information_control(form, obs, x)
            controls.append(u)
            saturated.append(hit)

        trajectory = Trajectory(
            times=sol_t,
            states=states,
            xihat=xi,
            u=np.array(controls),
            transverse_norm=np.linalg.norm(xi, axis=1),
            gamma_residual=np.array([tset.residual(x) for x in states]),
            saturated=np.array(saturated, dtype=bool),
            observer=obs,
            blowup=blowup,
            notes=["full information"],
        )
        if len(sol_t):
            logger.info(
                f"Full-information loop finished at t={sol_t[-1]:.4g} "
                f"with transverse norm {trajectory.transverse_norm[-1]:.3e}"
            )
        return trajectory

    def _solve(self, rhs, z0, T, out_dt, rtol, atol):
        """Integrate on the recording grid; returns (times, states, blowup reason)."""
        times = np.arange(0.0, T + 0.5 * out_dt, out_dt)
        times = times[times <= T]
        if times[-1] < T:
            times = np.append(times, T)
        sol = solve_ivp(
            rhs,
            (0.0, float(T)),
            z0,
            method=self.method,
            t_eval=times,
            rtol=rtol or self.rtol,
            atol=atol or self.atol,
            events=_BlowupEvent(self.blowup_norm),
        )

        blowup = None
        if sol.status == 1:
            blowup = f"state norm exceeded {self.blowup_norm:g} at t = {sol.t_events[0][0]:.6g}"
        elif sol.status < 0:
            blowup = f"integration failed: {sol.message}"
        z = sol.y.T
        finite = np.all(np.isfinite(z), axis=1)
        if not np.all(finite):
            blowup = blowup or "non-finite state"
            keep = np.argmin(finite)
            z, sol_t = z[:keep], sol.t[:keep]
        else:
            sol_t = sol.t
        if blowup:
            logger.warning(f"Closed loop blew up: {blowup}")
        return sol_t, z, blowup

    def cross_check(self, trajectory: Trajectory, chain, chart, stride=100):
        """
        Largest |lambda_chart(x) - xi_1(x)| over recorded states inside the chart's ball.

        States the chart cannot invert are skipped and counted.
        """
        n = trajectory.states.shape[1]
        measured = compile_exprs([chain[0]], n)
        worst, skipped, compared = 0.0, 0, 0
        for x in trajectory.states[::stride]:
            if np.max(np.abs(x - chart.chart.x0)) > chart.radius:
                skipped += 1
                continue
            try:
                value = chart.lam(x)
            except NoConvergence:
                skipped += 1
                continue
            compared += 1
            worst = max(worst, abs(value - float(measured(x)[0])))
        return {"max_difference": worst, "compared": compared, "skipped": skipped}
