"""Scenario files: sectioned key = value text.

Example::

    [grid]
    extents = 10.0 10.0 10.0
    points = 24 24 24

    [run]
    t_final = 1.0

Every other section is optional.  ``epsilon`` may be written in units of the
grid spacing, e.g. ``epsilon = 4h``.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .diagnostics import constraint_check
from .errors import InvalidLdaParams, ScenarioParseError, ValidationError
from .fields import GridSpec, OrbitalSet, l2_norm, sine_mode
from .potentials import (ExternalPotentialSpec, HistorySpec, IonSpec, LdaSpec, PotentialStack,
                         StackEvaluator, check_ion_placement, snap_ions, validate_lda_params)
from .propagator import StepperConfig

INITIAL_KINDS = ("eigenmode", "gaussian")


@dataclass(frozen=True)
class InitialStateSpec:
    """Catalogue initial data, one entry of ``modes`` or ``centers`` per orbital.

    ``eigenmode``: box sine modes.  ``gaussian``: exp(-|x-c|^2/(2 width^2) + i kick.x),
    multiplied by the lowest box mode so it vanishes on the boundary.  Each orbital is
    normalised to unit charge.
    """

    kind: str = "eigenmode"
    modes: tuple[tuple[int, int, int], ...] = ((1, 1, 1),)
    centers: tuple[tuple[float, float, float], ...] = ()
    width: float = 1.0
    kick: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind not in INITIAL_KINDS:
            raise ValueError(f"unknown initial state kind {self.kind!r}")

    @property
    def n_orbitals(self) -> int:
        return len(self.modes) if self.kind == "eigenmode" else max(1, len(self.centers))


def initial_state(grid: GridSpec, spec: InitialStateSpec) -> OrbitalSet:
    orbitals = []
    if spec.kind == "eigenmode":
        for m in spec.modes:
            orbitals.append(sine_mode(grid, m).astype(complex))
    else:
        x, y, z = grid.mesh()
        envelope = sine_mode(grid, (1, 1, 1))
        phase = np.exp(1j * (spec.kick[0] * x + spec.kick[1] * y + spec.kick[2] * z))
        for c in spec.centers or (tuple(grid.center),):
            r2 = (x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2
            orbitals.append(envelope * np.exp(-r2 / (2 * spec.width ** 2)) * phase)
    orbitals = [o / l2_norm(grid, o) for o in orbitals]
    return OrbitalSet(grid, np.stack(orbitals), 0.0)


@dataclass(frozen=True)
class Scenario:
    grid: GridSpec
    t_final: float
    stepper: StepperConfig = field(default_factory=lambda: StepperConfig(0.005))
    stack: PotentialStack = field(default_factory=PotentialStack)
    initial: InitialStateSpec = field(default_factory=InitialStateSpec)
    snap_ions: bool = True
    seed: int = 0
    output: tuple[tuple[str, str], ...] = ()

    def ions(self) -> IonSpec:
        return snap_ions(self.stack.ions, self.grid) if self.snap_ions else self.stack.ions

    def resolved_stack(self) -> PotentialStack:
        return replace(self.stack, ions=self.ions())

    def evaluator(self) -> StackEvaluator:
        return StackEvaluator(self.resolved_stack(), self.grid)

    def psi0(self) -> OrbitalSet:
        return initial_state(self.grid, self.initial)

    def build(self):
        return self.psi0(), self.evaluator(), self.stepper

    def validate(self) -> Scenario:
        try:
            validate_lda_params(self.stack.lda)
        except InvalidLdaParams as exc:
            raise ValidationError("LDA exponent range", str(exc)) from None
        check_ion_placement(self.stack.ions, self.grid)
        eps = self.stack.epsilon
        if eps < 0 or (eps > 0 and eps < 2 * self.grid.h * (1 - 1e-12)):
            raise ValidationError("smoothing resolution",
                                  f"epsilon must be 0 or >= 2h = {2 * self.grid.h:g}, got {eps:g}")
        if self.stack.history is not None:
            self.stack.history.check_support(self.grid)
        if self.t_final < 0:
            raise ValidationError("final time", "t_final must be >= 0")
        if self.stack.lda.lam < 0:
            report = constraint_check(self.psi0(), self.resolved_stack(), self.grid,
                                      self.stepper.hbar, self.stepper.mass, seed=self.seed)
            if not report.passed:
                raise ValidationError(
                    "LDA smallness", f"C1 estimate {report.c1_estimate:.4g} is not below "
                    f"hbar^2/2m = {report.limit:.4g}; reduce |lambda|")
        return self

    def with_epsilon(self, eps: float) -> Scenario:
        return replace(self, stack=replace(self.stack, epsilon=eps))

    def with_dt(self, dt: float) -> Scenario:
        return replace(self, stepper=self.stepper.with_dt(dt))

    def digest(self) -> str:
        return hashlib.sha256(dumps_scenario(self).encode()).hexdigest()[:16]


def _floats(text: str, n: int | None = None) -> tuple[float, ...]:
    vals = tuple(float(v) for v in text.replace(",", " ").split())
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} numbers, got {text!r}")
    return vals


def _triples(text: str, conv=float) -> tuple:
    if not text.strip():
        return ()
    return tuple(tuple(conv(v) for v in part.split()) for part in text.split(";"))


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, (tuple, list)):
        if x and isinstance(x[0], (tuple, list)):
            return "; ".join(_fmt(v) for v in x)
        return " ".join(_fmt(v) for v in x)
    return str(x)


_KEYS = {
    "grid": {"extents", "points"},
    "run": {"t_final", "seed"},
    "stepper": {"dt", "picard_tol", "picard_max", "linear_tol", "hbar", "mass", "frozen_potential"},
    "external": {"kind", "strength", "amplitude", "frequency", "width"},
    "hartree": {"enabled"},
    "lda": {"lambda", "alpha"},
    "ions": {"centers", "charges", "snap"},
    "history": {"instant_amplitude", "instant_radius", "memory_amplitude", "memory_radius", "memory_time"},
    "smoothing": {"epsilon"},
    "initial": {"kind", "modes", "centers", "width", "kick"},
    "output": None,
}


def _line_of(text: str, needle: str) -> int | None:
    for i, line in enumerate(text.splitlines(), 1):
        if line.strip().startswith(needle):
            return i
    return None


def parse_scenario(text: str) -> Scenario:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ScenarioParseError("missing [section] header", exc.lineno, 1) from None
    except configparser.ParsingError as exc:
        lineno, _ = exc.errors[0]
        raise ScenarioParseError("malformed line", lineno, 1) from None
    except configparser.Error as exc:
        raise ScenarioParseError(str(exc).splitlines()[0], getattr(exc, "lineno", None), 1) from None

    for sec in cp.sections():
        if sec not in _KEYS:
            raise ScenarioParseError(f"unknown section [{sec}]", _line_of(text, f"[{sec}]"), 1)
        allowed = _KEYS[sec]
        for key in cp[sec]:
            if allowed is not None and key not in allowed:
                raise ScenarioParseError(f"unknown key {key!r} in [{sec}]", _line_of(text, key), 1)

    def get(sec, key, conv, default):
        if not cp.has_option(sec, key):
            return default
        raw = cp.get(sec, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise ScenarioParseError(f"[{sec}] {key}: {exc}", _line_of(text, key), 1) from None

    def boolean(s):
        s = s.strip().lower()
        if s in ("true", "yes", "on", "1"):
            return True
        if s in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"not a boolean: {s!r}")

    if not cp.has_section("grid"):
        raise ScenarioParseError("missing [grid] section")
    if not cp.has_option("run", "t_final"):
        raise ScenarioParseError("missing t_final in [run]")
    extents = get("grid", "extents", lambda s: _floats(s, 3), None)
    points = get("grid", "points", lambda s: tuple(int(v) for v in s.split()), None)
    if extents is None or points is None:
        raise ScenarioParseError("[grid] needs extents and points", _line_of(text, "[grid]"), 1)
    try:
        grid = GridSpec(extents, points)
    except ValueError as exc:
        raise ValidationError("grid", str(exc)) from None

    d = StepperConfig(0.005)
    stepper = StepperConfig(
        dt=get("stepper", "dt", float, d.dt),
        picard_tol=get("stepper", "picard_tol", float, d.picard_tol),
        picard_max=get("stepper", "picard_max", int, d.picard_max),
        linear_tol=get("stepper", "linear_tol", float, d.linear_tol),
        hbar=get("stepper", "hbar", float, d.hbar),
        mass=get("stepper", "mass", float, d.mass),
        frozen_potential=get("stepper", "frozen_potential", boolean, d.frozen_potential),
    )
    external = ExternalPotentialSpec(
        kind=get("external", "kind", str.strip, "zero"),
        strength=get("external", "strength", float, 0.0),
        amplitude=get("external", "amplitude", float, 0.0),
        frequency=get("external", "frequency", float, 0.0),
        width=get("external", "width", float, 1.0),
    )
    lda = LdaSpec(get("lda", "lambda", float, 0.0), get("lda", "alpha", float, 2.0))
    ions = IonSpec(get("ions", "centers", _triples, ()), get("ions", "charges", _floats, ()))
    history = None
    if cp.has_section("history"):
        dh = HistorySpec()
        history = HistorySpec(
            instant_amplitude=get("history", "instant_amplitude", float, dh.instant_amplitude),
            instant_radius=get("history", "instant_radius", float, dh.instant_radius),
            memory_amplitude=get("history", "memory_amplitude", float, dh.memory_amplitude),
            memory_radius=get("history", "memory_radius", float, dh.memory_radius),
            memory_time=get("history", "memory_time", float, dh.memory_time),
        )

    def epsilon(s):
        s = s.strip()
        return float(s[:-1]) * grid.h if s.endswith("h") else float(s)

    stack = PotentialStack(external=external, lda=lda, ions=ions, history=history,
                           hartree=get("hartree", "enabled", boolean, True),
                           epsilon=get("smoothing", "epsilon", epsilon, 0.0))
    di = InitialStateSpec()
    initial = InitialStateSpec(
        kind=get("initial", "kind", str.strip, di.kind),
        modes=get("initial", "modes", lambda s: _triples(s, int), di.modes),
        centers=get("initial", "centers", _triples, di.centers),
        width=get("initial", "width", float, di.width),
        kick=get("initial", "kick", lambda s: _floats(s, 3), di.kick),
    )
    output = tuple((k, v) for k, v in cp["output"].items()) if cp.has_section("output") else ()
    return Scenario(grid=grid, t_final=get("run", "t_final", float, 0.0), stepper=stepper,
                    stack=stack, initial=initial, snap_ions=get("ions", "snap", boolean, True),
                    seed=get("run", "seed", int, 0), output=output)


def dumps_scenario(sc: Scenario) -> str:
    s, st = sc.stepper, sc.stack
    sections = {
        "grid": {"extents": sc.grid.extents, "points": sc.grid.points},
        "run": {"t_final": float(sc.t_final), "seed": sc.seed},
        "stepper": {"dt": s.dt, "picard_tol": s.picard_tol, "picard_max": s.picard_max,
                    "linear_tol": s.linear_tol, "hbar": s.hbar, "mass": s.mass,
                    "frozen_potential": s.frozen_potential},
        "external": {"kind": st.external.kind, "strength": st.external.strength,
                     "amplitude": st.external.amplitude, "frequency": st.external.frequency,
                     "width": st.external.width},
        "hartree": {"enabled": st.hartree},
        "lda": {"lambda": st.lda.lam, "alpha": st.lda.alpha},
        "ions": {"centers": st.ions.centers, "charges": st.ions.charges, "snap": sc.snap_ions},
        "smoothing": {"epsilon": float(st.epsilon)},
        "initial": {"kind": sc.initial.kind, "modes": sc.initial.modes,
                    "centers": sc.initial.centers, "width": sc.initial.width,
                    "kick": sc.initial.kick},
    }
    if st.history is not None:
        h = st.history
        sections["history"] = {"instant_amplitude": h.instant_amplitude, "instant_radius": h.instant_radius,
                               "memory_amplitude": h.memory_amplitude, "memory_radius": h.memory_radius,
                               "memory_time": h.memory_time}
    if sc.output:
        sections["output"] = dict(sc.output)
    lines = []
    for name, items in sections.items():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {_fmt(v)}" for k, v in items.items())
        lines.append("")
    return "\n".join(lines)


def load_scenario(path, validate: bool = True) -> Scenario:
    sc = parse_scenario(Path(path).read_text())
    return sc.validate() if validate else sc


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(dumps_scenario(sc))


def ladder(scenario: Scenario, text: str) -> list[float]:
    """Parse a comma list such as ``8h,4h,2h`` or ``0.01,0.005``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        out.append(float(part[:-1]) * scenario.grid.h if part.endswith("h") else float(part))
    return out
