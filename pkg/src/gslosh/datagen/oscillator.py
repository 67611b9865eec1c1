"""Thermal damped oscillator: the analytic verification system.

A mass on a spring with a velocity-proportional friction force whose
dissipated work heats an attached thermal reservoir:

    dq/dt = p / m
    dp/dt = -k q - d p / (m T)
    dT/dt = d p^2 / (m^2 C T)

Total energy E = p^2/2m + k q^2/2 + C T is conserved exactly (friction
moves energy into heat), entropy S = C ln(T / T_ref) never decreases,
and the system carries a closed-form operator quadruple

    L = [[0, 1, 0], [-1, 0, 0], [0, 0, 0]],   M = d w w^T,
    w = (0, 1, -p / (m C)),  grad E = (k q, p/m, C),  grad S = (0, 0, C/T)

whose degeneracy residuals vanish identically (w is orthogonal to
grad E, the third column of L is zero). This gives exact targets for
every structural and thermodynamic check in the pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..metriplectic import GenericOperators


@dataclass(frozen=True)
class OscillatorSystem:
    m: float = 1.0           # mass
    k_spring: float = 1.0    # stiffness
    d: float = 0.1           # dissipation coefficient
    heat_capacity: float = 1.0
    t_ref: float = 1.0       # entropy reference temperature

    def __post_init__(self):
        for name in ("m", "k_spring", "heat_capacity", "t_ref"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.d < 0:
            raise ValueError("dissipation coefficient must be >= 0")


def energy(sys: OscillatorSystem, state):
    q, p, t = state
    return p * p / (2 * sys.m) + sys.k_spring * q * q / 2 + sys.heat_capacity * t


def entropy(sys: OscillatorSystem, state):
    t = state[2]
    return sys.heat_capacity * np.log(t / sys.t_ref)


def _rhs(sys: OscillatorSystem, state):
    q, p, t = state
    return np.array([
        p / sys.m,
        -sys.k_spring * q - sys.d * p / (sys.m * t),
        sys.d * p * p / (sys.m * sys.m * sys.heat_capacity * t),
    ])


def oscillator_step_exact(sys: OscillatorSystem, state, dt, substeps=100):
    """High-accuracy reference step: classic RK4 at dt/substeps."""
    state = np.asarray(state, dtype=np.float64)
    if state[2] <= 0:
        raise ValueError(f"temperature must be > 0, got {state[2]}")
    h = dt / substeps
    y = state
    for _ in range(substeps):
        k1 = _rhs(sys, y)
        k2 = _rhs(sys, y + 0.5 * h * k1)
        k3 = _rhs(sys, y + 0.5 * h * k2)
        k4 = _rhs(sys, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if y[2] <= 0:
        raise ValueError("temperature left the positive domain")
    return y


def oscillator_operators(sys: OscillatorSystem, state) -> GenericOperators:
    """Exact quadruple at a state; residuals are zero by construction."""
    q, p, t = np.asarray(state, dtype=np.float64)
    if t <= 0:
        raise ValueError(f"temperature must be > 0, got {t}")
    c = sys.heat_capacity
    l = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    w = np.array([0.0, 1.0, -p / (sys.m * c)])
    m = sys.d * np.outer(w, w)
    de = np.array([sys.k_spring * q, p / sys.m, c])
    ds = np.array([0.0, 0.0, c / t])
    return GenericOperators(L=l, M=m, DE=de, DS=ds)


def oscillator_trajectories(sys: OscillatorSystem, n_traj, n_steps, dt, seed,
                            q_range=(-1.0, 1.0), p_range=(-1.0, 1.0),
                            t_range=(0.9, 1.1)):
    """Reference trajectories from randomized initial conditions.

    Returns an array of shape (n_traj, n_steps + 1, 3).
    """
    rng = np.random.default_rng(seed)
    out = np.empty((n_traj, n_steps + 1, 3))
    for i in range(n_traj):
        state = np.array([
            rng.uniform(*q_range),
            rng.uniform(*p_range),
            rng.uniform(*t_range) * sys.t_ref,
        ])
        out[i, 0] = state
        for j in range(n_steps):
            state = oscillator_step_exact(sys, state, dt)
            out[i, j + 1] = state
    return out


def without_dissipation(sys: OscillatorSystem) -> OscillatorSystem:
    return replace(sys, d=0.0)
