"""Laminated iron core in air, driven by a coil, plus small test boxes."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .discrete_ops import Trajectory
from .materials import AIR, CORE_METAL, INSULATOR, Coefficients, MaterialMap, build_material_map
from .mesh import BoundarySplit, Grid, build_grid


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class TimeProfile:
    """Causal scalar time profile; zero for t <= onset.

    smooth_ramp rises with the C1 smoothstep 3x^2 - 2x^3 over ``width``;
    sine_burst is a sine of ``frequency`` under that same ramp; step jumps
    to ``amplitude`` right after onset.
    """

    kind: str = "smooth_ramp"
    amplitude: float = 1.0
    onset: float = 0.0
    width: float = 1.0
    frequency: float = 0.5

    KINDS = ("smooth_ramp", "sine_burst", "step")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ScenarioError(f"unknown time profile {self.kind!r}; expected one of {self.KINDS}")
        if self.width <= 0:
            raise ScenarioError("profile width must be positive")

    def _ramp(self, t):
        x = np.clip((np.asarray(t, dtype=float) - self.onset) / self.width, 0.0, 1.0)
        return x * x * (3.0 - 2.0 * x)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "smooth_ramp":
            v = self._ramp(t)
        elif self.kind == "sine_burst":
            v = self._ramp(t) * np.sin(2 * np.pi * self.frequency * (t - self.onset))
        else:
            v = (t > self.onset).astype(float)
        return self.amplitude * np.where(t > self.onset, v, 0.0)


@dataclass(frozen=True)
class CoilLoop:
    """Rectangular edge loop in the plane normal to ``axis`` at node ``position``.

    ``lo``/``hi`` are node indices along the two in-plane axes (in increasing
    axis order).  Current circulates counter-clockwise about ``axis``.
    """

    axis: int
    position: int
    lo: tuple
    hi: tuple
    amplitude: float = 1.0

    def in_plane_axes(self):
        return [a for a in range(3) if a != self.axis]

    def edges(self) -> list:
        """Ordered (edge_axis, (i, j, k), orientation) around the loop."""
        b, c = self.in_plane_axes()
        (b0, c0), (b1, c1) = self.lo, self.hi
        path = []

        def node(pb, pc):
            p = [0, 0, 0]
            p[self.axis], p[b], p[c] = self.position, pb, pc
            return p

        for x in range(b0, b1):
            path.append((b, tuple(node(x, c0)), 1.0))
        for y in range(c0, c1):
            path.append((c, tuple(node(b1, y)), 1.0))
        for x in range(b1 - 1, b0 - 1, -1):
            path.append((b, tuple(node(x, c1)), -1.0))
        for y in range(c1 - 1, c0 - 1, -1):
            path.append((c, tuple(node(b0, y)), -1.0))
        return path

    def current_vector(self, grid: Grid) -> np.ndarray:
        """Edge current density J (length n_e)."""
        J = np.zeros(grid.n_e)
        for axis, ijk, sign in self.edges():
            try:
                J[grid.edges.index(axis, *ijk)] += sign * self.amplitude
            except (KeyError, IndexError):
                raise ScenarioError(f"coil edge {axis}{ijk} is not a retained E DOF") from None
        return J


def coil_forcing(grid: Grid, J: np.ndarray, profile: TimeProfile, tau: float, T: float,
                 rho: float = 1.0) -> Trajectory:
    """F_n = (-J * profile(t_n), 0) for n = 1 .. T/tau."""
    n_steps = int(round(T / tau))
    t = tau * np.arange(1, n_steps + 1)
    states = np.zeros((n_steps, grid.ndof))
    states[:, : grid.n_e] = -np.outer(profile(t), J)
    return Trajectory(tau, states, rho, start_index=1, cell_volume=grid.cell_volume)


class BuiltScenario(NamedTuple):
    grid: Grid
    material: MaterialMap
    forcing: Trajectory
    current: np.ndarray
    coeffs: Coefficients


def _box(lo, hi, name):
    lo, hi = tuple(int(x) for x in lo), tuple(int(x) for x in hi)
    if len(lo) != 3 or len(hi) != 3 or any(h <= l for l, h in zip(lo, hi)):
        raise ScenarioError(f"{name} must be a nonempty cell range, got {lo}..{hi}")
    return lo, hi


@dataclass(frozen=True)
class LaminatedCoreScenario:
    outer_box_cells: tuple = (16, 16, 16)
    spacing: float = 1.0
    core_lo: tuple = (5, 5, 5)
    core_hi: tuple = (11, 11, 11)
    lamination_axis: int = 0
    lamination_period: int = 1
    window: Optional[tuple] = None
    air_gap: Optional[tuple] = None
    coil: Optional[CoilLoop] = None
    profile: TimeProfile = field(default_factory=TimeProfile)
    coeffs: Coefficients = field(default_factory=Coefficients)
    boundary_split: BoundarySplit = field(default_factory=BoundarySplit)

    def default_coil(self) -> CoilLoop:
        axis = 2 if self.lamination_axis != 2 else 0
        b, c = [a for a in range(3) if a != axis]
        lo = (self.core_lo[b] - 1, self.core_lo[c] - 1)
        hi = (self.core_hi[b] + 1, self.core_hi[c] + 1)
        mid = (self.core_lo[axis] + self.core_hi[axis]) // 2
        return CoilLoop(axis, mid, lo, hi)

    def resolved_coil(self) -> CoilLoop:
        return self.coil if self.coil is not None else self.default_coil()

    def labels(self) -> np.ndarray:
        n = tuple(self.outer_box_cells)
        lo, hi = _box(self.core_lo, self.core_hi, "core")
        if any(l < 1 or h > m - 1 for l, h, m in zip(lo, hi, n)):
            raise ScenarioError("core must lie strictly inside the outer box")
        a, p = self.lamination_axis, self.lamination_period
        if a not in (0, 1, 2) or p < 1:
            raise ScenarioError("lamination axis must be 0..2 and period >= 1")
        if (hi[a] - lo[a]) % p:
            raise ScenarioError(f"core length {hi[a] - lo[a]} along axis {a} is not a multiple of the lamination period {p}")
        labels = np.full(n, AIR, dtype=np.int8)
        slab = (np.arange(n[a]) - lo[a]) // p
        kind = np.where(slab % 2 == 0, CORE_METAL, INSULATOR).astype(np.int8)
        shape = [1, 1, 1]
        shape[a] = n[a]
        core = tuple(slice(l, h) for l, h in zip(lo, hi))
        labels[core] = np.broadcast_to(kind.reshape(shape), n)[core]
        for name, rng in (("window", self.window), ("air_gap", self.air_gap)):
            if rng is not None:
                wlo, whi = _box(*rng, name)
                labels[tuple(slice(l, h) for l, h in zip(wlo, whi))] = AIR
        return labels

    def validate_coil(self, coil: CoilLoop) -> None:
        n = self.outer_box_cells
        b, c = coil.in_plane_axes()
        if not 0 < coil.position < n[coil.axis]:
            raise ScenarioError("coil plane must be strictly inside the box")
        for k, ax in enumerate((b, c)):
            if not (0 < coil.lo[k] < coil.hi[k] < n[ax]):
                raise ScenarioError("coil loop must lie strictly inside the box")
            if not (coil.lo[k] < self.core_lo[ax] and coil.hi[k] > self.core_hi[ax]):
                raise ScenarioError("coil loop must surround the core limb")
        if not self.core_lo[coil.axis] <= coil.position <= self.core_hi[coil.axis]:
            raise ScenarioError("coil plane must cut the core limb")


def build_laminated_core(scenario: LaminatedCoreScenario, tau: float, T: float,
                         rho: float = 1.0, profile: TimeProfile | None = None) -> BuiltScenario:
    """Grid, materials and coil forcing (-J, 0) of the laminated-core setup."""
    labels = scenario.labels()
    grid = build_grid(scenario.outer_box_cells, scenario.spacing, None, scenario.boundary_split)
    material = build_material_map(grid, labels, scenario.coeffs)
    coil = scenario.resolved_coil()
    scenario.validate_coil(coil)
    J = coil.current_vector(grid)
    forcing = coil_forcing(grid, J, profile or scenario.profile, tau, T, rho)
    return BuiltScenario(grid, material, forcing, J, scenario.coeffs)


UNIT_KINDS = ("homogeneous_box", "single_conductor_block", "all_gamma2_box")


def build_unit_test_scenario(kind: str, tau: float = 0.05, T: float = 1.0, rho: float = 1.0,
                             cells: int = 6, profile: TimeProfile | None = None) -> BuiltScenario:
    if kind not in UNIT_KINDS:
        raise ScenarioError(f"unknown unit scenario {kind!r}; expected one of {UNIT_KINDS}")
    if not 4 <= cells <= 8:
        raise ScenarioError("unit scenarios use 4..8 cells per axis")
    n = (cells,) * 3
    split = BoundarySplit.all_gamma2() if kind == "all_gamma2_box" else BoundarySplit.all_gamma1()
    grid = build_grid(n, 1.0, None, split)
    labels = np.full(n, AIR, dtype=np.int8)
    if kind == "single_conductor_block":
        coeffs = Coefficients()
        labels[2:-2, 2:-2, 2:-2] = CORE_METAL
    else:
        coeffs = Coefficients(eps_air=1.0, eps_lam=1.0, eps_cor=1.0, sigma_cor=0.0, mu=1.0)
    material = build_material_map(grid, labels, coeffs)
    m = cells // 2
    coil = CoilLoop(2, m, (1, 1), (cells - 1, cells - 1))
    J = coil.current_vector(grid)
    forcing = coil_forcing(grid, J, profile or TimeProfile(), tau, T, rho)
    return BuiltScenario(grid, material, forcing, J, coeffs)
