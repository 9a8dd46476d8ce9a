"""Pseudospectral time integration of the BBM equation on a periodic domain.

The equation (1 - dx^2) dt u + dx(u + u^2) = 0 becomes

    u_t = -(1 - dx^2)^(-1) dx (u + u^2),

and the nonlocal operator is diagonal in frequency, ik/(1 + k^2).  Its
symbol is bounded, so the system is not stiff and classical RK4 with a
fixed step is accurate and reproducible; the step size is an accuracy
knob, not a stability one.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import PERIODIC, Grid, GridFunction, integrate
from .profiles import energy_mass

__all__ = [
    "IntegratorConfig",
    "EvolutionState",
    "Trajectory",
    "NonFiniteError",
    "BBMIntegrator",
    "rhs",
    "evolve",
    "conserved",
]


class NonFiniteError(RuntimeError):
    """A state value became non-finite during time stepping."""


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_end: float
    dealias: bool = True
    record_every: int = 0   # 0: keep only the final state

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.t_end < 0.0:
            raise ValueError("t_end must be nonnegative")


@dataclass(frozen=True)
class EvolutionState:
    u: GridFunction
    t: float
    step_count: int = 0


@dataclass
class Trajectory:
    states: list = field(default_factory=list)
    conserved: list = field(default_factory=list)   # (t, E, N)

    @property
    def final(self) -> EvolutionState:
        return self.states[-1]

    def conservation_drift(self) -> tuple[float, float]:
        """Max relative drift of (E, N) over the recorded trajectory."""
        arr = np.array(self.conserved)
        e0, n0 = arr[0, 1], arr[0, 2]
        de = np.abs(arr[:, 1] - e0).max() / max(abs(e0), 1e-300)
        dn = np.abs(arr[:, 2] - n0).max() / max(abs(n0), 1e-300)
        return float(de), float(dn)


class BBMIntegrator:
    """Method-of-lines RK4 stepper; the spatial operator is exact in k."""

    def __init__(self, grid: Grid, dealias: bool = True):
        if grid.kind != PERIODIC:
            raise ValueError("time integration requires a periodic grid")
        self.grid = grid
        self.dealias = dealias
        k = grid.wavenumbers
        self._sym = -1j * k / (1.0 + k**2)
        kmax = k[-1]
        self._mask = k <= (2.0 / 3.0) * kmax

    def rhs_values(self, u: np.ndarray) -> np.ndarray:
        n = self.grid.n_points
        u2hat = np.fft.rfft(u * u)
        if self.dealias:
            u2hat = np.where(self._mask, u2hat, 0.0)
        return np.fft.irfft(self._sym * (np.fft.rfft(u) + u2hat), n=n)

    def step_values(self, u: np.ndarray, dt: float) -> np.ndarray:
        k1 = self.rhs_values(u)
        k2 = self.rhs_values(u + 0.5 * dt * k1)
        k3 = self.rhs_values(u + 0.5 * dt * k2)
        k4 = self.rhs_values(u + dt * k3)
        return u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rhs(u: GridFunction, dealias: bool = True) -> GridFunction:
    stepper = BBMIntegrator(u.grid, dealias)
    return u.with_values(stepper.rhs_values(u.values))


def conserved(u: GridFunction) -> tuple[float, float]:
    return energy_mass(u)


def evolve(state: EvolutionState, cfg: IntegratorConfig,
           observer=None) -> Trajectory:
    """Advance to t_end; snapshots every ``record_every`` steps.

    ``observer(state)`` is called at every recorded snapshot (including the
    initial and final states); exceptions from it propagate.
    """
    stepper = BBMIntegrator(state.u.grid, cfg.dealias)
    n_full = int(np.floor(cfg.t_end / cfg.dt + 1e-12))
    remainder = cfg.t_end - n_full * cfg.dt
    if remainder < 1e-12 * max(1.0, cfg.t_end):
        remainder = 0.0
    n_steps = n_full + (1 if remainder else 0)
    u = state.u.values.copy()
    t0 = state.t
    traj = Trajectory()

    def record(uv, t, steps):
        st = EvolutionState(GridFunction(state.u.grid, uv), t, steps)
        traj.states.append(st)
        e, n = conserved(st.u)
        traj.conserved.append((t, e, n))
        if observer is not None:
            observer(st)

    record(u, t0, state.step_count)
    for i in range(1, n_steps + 1):
        partial = bool(remainder) and i == n_steps
        u = stepper.step_values(u, remainder if partial else cfg.dt)
        want = (cfg.record_every and i % cfg.record_every == 0) or i == n_steps
        if want:
            if not np.all(np.isfinite(u)):
                raise NonFiniteError(f"non-finite state at step {i}")
            t = cfg.t_end if i == n_steps else i * cfg.dt
            record(u, t0 + t, state.step_count + i)
    return traj
