"""Terms of the effective potential on a grid.

The effective potential is the sum of an external field, the Hartree
convolution, and the quantum corrections: a power-law LDA term, fixed ionic
Coulomb centres and a time-history convolution.  With a positive smoothing
length the LDA and Coulomb terms are mollified; the history term never is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .convolution import GridConvolver
from .errors import (InvalidLdaParams, IonOnGridNode, MissingHistory,
                     NegativeDensity, ValidationError)
from .fields import GridSpec
from .mollifier import MollifierKernel, mollify

EXTERNAL_KINDS = ("zero", "harmonic", "dipole_pulse")

# integral of 1/|x| over the unit cube centred at the origin
_CUBE_INV_R = 3.0 * math.log((math.sqrt(3.0) + 1.0) / (math.sqrt(3.0) - 1.0)) - math.pi / 2


@dataclass(frozen=True)
class ExternalPotentialSpec:
    """Closed-form external potentials.

    ``harmonic``: 0.5 * strength * |x - c|^2 about the box centre ``c``.
    ``dipole_pulse``: amplitude * (x - c_x) * sin(frequency t) * exp(-t^2 / (2 width^2)).
    """

    kind: str = "zero"
    strength: float = 0.0
    amplitude: float = 0.0
    frequency: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in EXTERNAL_KINDS:
            raise ValueError(f"unknown external potential kind {self.kind!r}")
        if self.kind == "dipole_pulse" and not self.width > 0:
            raise ValueError("dipole pulse width must be positive")

    @property
    def time_dependent(self) -> bool:
        return self.kind == "dipole_pulse" and self.amplitude != 0.0

    def _pulse(self, t):
        env = math.exp(-t * t / (2 * self.width ** 2))
        w = self.frequency
        return math.sin(w * t) * env, (w * math.cos(w * t) - t / self.width ** 2 * math.sin(w * t)) * env

    def value(self, grid: GridSpec, t: float) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(grid.shape)
        x, y, z = grid.mesh()
        cx, cy, cz = grid.center
        if self.kind == "harmonic":
            return 0.5 * self.strength * ((x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2)
        return self.amplitude * (x - cx) * self._pulse(t)[0]

    def time_derivative(self, grid: GridSpec, t: float) -> np.ndarray:
        if self.kind != "dipole_pulse":
            return np.zeros(grid.shape)
        x = grid.mesh()[0]
        return self.amplitude * (x - grid.center[0]) * self._pulse(t)[1]


@dataclass(frozen=True)
class LdaSpec:
    lam: float = 0.0
    alpha: float = 2.0

    @property
    def enabled(self) -> bool:
        return self.lam != 0.0


def validate_lda_params(spec: LdaSpec) -> None:
    """Raise InvalidLdaParams unless (lambda, alpha) lies in the admissible range."""
    lam, alpha = spec.lam, spec.alpha
    if not (math.isfinite(lam) and math.isfinite(alpha)):
        raise InvalidLdaParams(f"lambda and alpha must be finite, got ({lam}, {alpha})")
    if lam == 0:
        return
    if alpha < 1:
        raise InvalidLdaParams(f"alpha >= 1 required, got alpha={alpha}")
    if lam > 0 and not alpha < 4:
        raise InvalidLdaParams(f"lambda>0 requires alpha < 4, got alpha={alpha}")
    if lam < 0 and not alpha <= 4 / 3:
        raise InvalidLdaParams(f"lambda<0 requires alpha <= 4/3, got alpha={alpha}")


def lda_potential(rho: np.ndarray, spec: LdaSpec) -> np.ndarray:
    validate_lda_params(spec)
    rho = np.asarray(rho, dtype=float)
    if not spec.enabled:
        return np.zeros_like(rho)
    return spec.lam * np.maximum(rho, 0.0) ** (spec.alpha / 2)


@dataclass(frozen=True)
class IonSpec:
    centers: tuple[tuple[float, float, float], ...] = ()
    charges: tuple[float, ...] = ()

    def __post_init__(self):
        centers = tuple(tuple(float(c) for c in x) for x in self.centers)
        charges = tuple(float(c) for c in self.charges)
        if len(centers) != len(charges) or any(len(c) != 3 for c in centers):
            raise ValueError("each ion needs a 3D centre and a charge")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "charges", charges)

    @property
    def enabled(self) -> bool:
        return any(c != 0 for c in self.charges)

    @property
    def has_negative(self) -> bool:
        return any(c < 0 for c in self.charges)


def check_ion_placement(ions: IonSpec, grid: GridSpec) -> None:
    for x in ions.centers:
        for xi, L, h in zip(x, grid.extents, grid.spacing):
            if min(xi, L - xi) < h:
                raise ValidationError("ion placement",
                                      f"ion at {x} is closer than one grid spacing to the boundary")


def snap_ions(ions: IonSpec, grid: GridSpec) -> IonSpec:
    """Move each centre to the nearest cell centre (node + h/2 on every axis)."""
    snapped = []
    for x in ions.centers:
        y = []
        for xi, h, n in zip(x, grid.spacing, grid.points):
            k = min(max(math.floor(xi / h), 1), n - 1)
            y.append((k + 0.5) * h)
        snapped.append(tuple(y))
    return IonSpec(tuple(snapped), ions.charges)


def coulomb_field(ions: IonSpec, grid: GridSpec) -> np.ndarray:
    out = np.zeros(grid.shape)
    if not ions.centers:
        return out
    x, y, z = grid.mesh()
    for (cx, cy, cz), c in zip(ions.centers, ions.charges):
        r = np.sqrt((x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2)
        if r.min() < 1e-9 * grid.h:
            raise IonOnGridNode(f"ion at {(cx, cy, cz)} coincides with a grid node")
        out += c / r
    return out


def truncated_coulomb_kernel(grid: GridSpec):
    """1/|z| out to diam(box), raised-cosine taper to zero at 1.25 diam.

    The r = 0 entry is the cell average of 1/|z| over one cell.
    """
    d = grid.diameter
    self_term = _CUBE_INV_R / grid.cell_volume ** (1.0 / 3.0)

    def kernel(r):
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, 1.0)
        w = np.where(r > 0, 1.0 / safe, self_term)
        taper = 0.5 * (1 + np.cos(np.pi * np.clip((r - d) / (0.25 * d), 0.0, 1.0)))
        return np.where(r <= d, w, w * taper)

    return kernel


def smooth_bump(amplitude: float, radius: float):
    """C^2 radial bump amplitude * (1 - (r/R)^2)^3 on r < R."""
    def profile(r):
        s = np.clip(1.0 - (np.asarray(r) / radius) ** 2, 0.0, None)
        return amplitude * s ** 3
    return profile


@dataclass(frozen=True)
class HistorySpec:
    """Phi = F*rho(t) + int_0^t kappa(t-s) G*rho(s) ds with kappa(u) = exp(-u/memory_time).

    F and G are ``smooth_bump`` profiles.  ``memory_time = inf`` gives kappa = 1.
    """

    instant_amplitude: float = 0.0
    instant_radius: float = 1.0
    memory_amplitude: float = 0.0
    memory_radius: float = 1.0
    memory_time: float = math.inf

    def __post_init__(self):
        if not (self.instant_radius > 0 and self.memory_radius > 0 and self.memory_time > 0):
            raise ValueError("history radii and memory time must be positive")

    @property
    def enabled(self) -> bool:
        return self.instant_amplitude != 0 or self.memory_amplitude != 0

    def kappa(self, u: float) -> float:
        return math.exp(-u / self.memory_time)

    def kappa_rate(self, u: float) -> float:
        return -math.exp(-u / self.memory_time) / self.memory_time

    def check_support(self, grid: GridSpec) -> None:
        if max(self.instant_radius, self.memory_radius) > grid.diameter:
            raise ValidationError("history kernel support",
                                  "kernel radius exceeds the box diameter")


class DensityHistory:
    """Append-only record of density snapshots and their memory convolutions."""

    def __init__(self):
        self.times: list[float] = []
        self.densities: list[np.ndarray] = []
        self.memory_fields: list[np.ndarray] = []

    def __len__(self):
        return len(self.times)

    def append(self, t: float, rho: np.ndarray, memory_field: np.ndarray) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("history snapshots must be appended in increasing time")
        self.times.append(float(t))
        self.densities.append(rho)
        self.memory_fields.append(memory_field)


@dataclass(frozen=True)
class PotentialStack:
    external: ExternalPotentialSpec = field(default_factory=ExternalPotentialSpec)
    lda: LdaSpec = field(default_factory=LdaSpec)
    ions: IonSpec = field(default_factory=IonSpec)
    history: HistorySpec | None = None
    hartree: bool = True
    epsilon: float = 0.0

    @property
    def has_history(self) -> bool:
        return self.history is not None and self.history.enabled

    @property
    def density_dependent(self) -> bool:
        return self.hartree or self.lda.enabled or self.has_history


class StackEvaluator:
    """A PotentialStack bound to a grid, with its static pieces precomputed."""

    def __init__(self, stack: PotentialStack, grid: GridSpec):
        validate_lda_params(stack.lda)
        if stack.epsilon < 0:
            raise ValidationError("smoothing level", "epsilon must be >= 0")
        self.stack = stack
        self.grid = grid
        self.kernel = MollifierKernel(grid, stack.epsilon) if stack.epsilon > 0 else None
        self._hartree = GridConvolver.radial(grid, truncated_coulomb_kernel(grid)) if stack.hartree else None
        if stack.ions.enabled:
            raw = coulomb_field(stack.ions, grid)
            self._coulomb = mollify(raw, self.kernel) if self.kernel else raw
        else:
            self._coulomb = np.zeros(grid.shape)
        self._instant = self._memory = None
        if stack.history is not None:
            stack.history.check_support(grid)
            h = stack.history
            self._instant = GridConvolver.radial(grid, smooth_bump(h.instant_amplitude, h.instant_radius))
            self._memory = GridConvolver.radial(grid, smooth_bump(h.memory_amplitude, h.memory_radius))

    @property
    def epsilon(self) -> float:
        return self.stack.epsilon

    def external(self, t: float) -> np.ndarray:
        return self.stack.external.value(self.grid, t)

    def external_rate(self, t: float) -> np.ndarray:
        return self.stack.external.time_derivative(self.grid, t)

    def hartree(self, rho: np.ndarray) -> np.ndarray:
        if self._hartree is None:
            return np.zeros(self.grid.shape)
        return hartree(rho, self.grid, self._hartree)

    def lda(self, rho: np.ndarray) -> np.ndarray:
        phi = lda_potential(rho, self.stack.lda)
        if self.kernel is not None and self.stack.lda.enabled:
            return mollify(phi, self.kernel)
        return phi

    def coulomb(self) -> np.ndarray:
        return self._coulomb

    def memory_field(self, rho: np.ndarray) -> np.ndarray:
        """G*rho, stored with each history snapshot."""
        if self._memory is None:
            return np.zeros(self.grid.shape)
        return self._memory(rho)

    def record(self, history: DensityHistory, t: float, rho: np.ndarray) -> None:
        history.append(t, rho, self.memory_field(rho))

    def history_term(self, rho: np.ndarray, t: float, history: DensityHistory | None) -> np.ndarray:
        if self._instant is None:
            return np.zeros(self.grid.shape)
        return history_potential(self.stack.history, rho, t, history, self._instant, self._memory)

    def history_rate(self, rho: np.ndarray, t: float, history: DensityHistory | None) -> np.ndarray:
        """d/dt of the memory integral: kappa(0) G*rho(t) + int kappa'(t-s) G*rho(s) ds."""
        if self._memory is None:
            return np.zeros(self.grid.shape)
        spec = self.stack.history
        g_now = self._memory(rho)
        out = spec.kappa(0.0) * g_now
        if t > 0 and spec.memory_amplitude != 0:
            out = out + memory_integral(history, t, g_now, spec.kappa_rate)
        return out

    def components(self, rho: np.ndarray, t: float, history: DensityHistory | None = None) -> dict:
        return {
            "external": self.external(t),
            "hartree": self.hartree(rho),
            "lda": self.lda(rho),
            "coulomb": self._coulomb,
            "history": self.history_term(rho, t, history),
        }

    def correction(self, rho, t, history=None) -> np.ndarray:
        """The (smoothed) quantum correction: LDA + Coulomb + history."""
        return self.lda(rho) + self._coulomb + self.history_term(rho, t, history)

    def __call__(self, rho, t, history=None) -> np.ndarray:
        return effective_potential(self, rho, t, history)


def hartree(rho: np.ndarray, grid: GridSpec, convolver: GridConvolver | None = None) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.size and rho.min() < -1e-12:
        raise NegativeDensity(f"density has negative value {rho.min():.3e}")
    if convolver is None:
        convolver = GridConvolver.radial(grid, truncated_coulomb_kernel(grid))
    return convolver(rho)


def memory_integral(history: DensityHistory | None, t: float, g_now: np.ndarray, weight) -> np.ndarray:
    """Trapezoid rule for int_0^t weight(t-s) g(s) ds on the nodes {s_k < t} + {t}.

    ``g_now`` is the integrand field at ``t`` itself.
    """
    if t <= 0:
        return np.zeros_like(g_now)
    if history is None or not history.times or history.times[0] > 0:
        raise MissingHistory(f"no density snapshot at t=0 for memory integral at t={t}")
    nodes = [s for s in history.times if s < t]
    fields = history.memory_fields[:len(nodes)] + [g_now]
    nodes.append(t)
    out = np.zeros_like(g_now)
    for j, (s, g) in enumerate(zip(nodes, fields)):
        left = s - nodes[j - 1] if j > 0 else 0.0
        right = nodes[j + 1] - s if j + 1 < len(nodes) else 0.0
        out = out + (0.5 * (left + right) * weight(t - s)) * g
    return out


def history_potential(spec: HistorySpec, rho_now: np.ndarray, t: float,
                      history: DensityHistory | None, instant: GridConvolver,
                      memory: GridConvolver | None = None) -> np.ndarray:
    out = instant(rho_now)
    if spec.memory_amplitude == 0 or t <= 0:
        return out
    if memory is None:
        memory = GridConvolver.radial(instant.grid, smooth_bump(spec.memory_amplitude, spec.memory_radius))
    return out + memory_integral(history, t, memory(rho_now), spec.kappa)


def effective_potential(ev: StackEvaluator, rho: np.ndarray, t: float,
                        history: DensityHistory | None = None) -> np.ndarray:
    out = ev.external(t) + ev.hartree(rho) + ev.lda(rho) + ev.coulomb()
    if ev.stack.history is not None:
        out = out + ev.history_term(rho, t, history)
    return out


def history_young_bound(spec: HistorySpec, grid: GridSpec, t_final: float, rho_norms) -> float:
    """(|F|_1 + T sup|kappa| |G|_1) * max_s |rho(s)|_2."""
    f1 = GridConvolver.radial(grid, smooth_bump(spec.instant_amplitude, spec.instant_radius)).kernel_l1
    g1 = GridConvolver.radial(grid, smooth_bump(spec.memory_amplitude, spec.memory_radius)).kernel_l1
    return (f1 + t_final * 1.0 * g1) * max(rho_norms)

