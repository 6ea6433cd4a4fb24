"""Scenario files: a sectioned, line-oriented text format.

::

    [scenario]
    id = rabi
    entities = 1

    [hamiltonian]
    0.5 * X0

    [initial_state]
    0

    [povm]
    label: 0
    proj: 0 on 0

    label: 1
    proj: 1 on 0

    [observer]
    epsilon = 0.01
    mode = witness
    seed = 1
    gap_policy = break

    [schedule]
    t0 = 0.0
    dt = 3.141592653589793
    steps = 8

    [analysis]          # optional
    system = 0
    fragment = 1 2
    eta = 0.1

Initial states are either one named factor per entity (``0 1 + - i -i``) or
``amplitudes: a0 a1 ...``.  A POVM block starts with ``label:`` and sums its
``proj: <factors> [on <entities>]`` lines (identity on unlisted entities) or
lists explicit ``row:`` lines; ``weight:`` scales the whole block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import qcore
from .errors import CapacityError, EinselError, ParseError, ValidationError
from .hamiltonian import HamiltonianTerms, parse_terms
from .observer import ObservationSchedule
from .povm import DominanceRule, Povm, validate

SECTIONS = ("scenario", "hamiltonian", "initial_state", "povm", "observer", "schedule", "analysis")
REQUIRED = ("scenario", "hamiltonian", "initial_state", "povm", "observer", "schedule")

_S2 = 1 / math.sqrt(2)
NAMED_STATES = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([_S2, _S2], dtype=complex),
    "-": np.array([_S2, -_S2], dtype=complex),
    "i": np.array([_S2, 1j * _S2], dtype=complex),
    "-i": np.array([_S2, -1j * _S2], dtype=complex),
}


class ScenarioError(EinselError, ValueError):
    """Every problem found while loading a scenario, not just the first."""

    def __init__(self, errors: list[EinselError]):
        self.errors = errors
        self.category = "validation"
        for kind in (CapacityError, ParseError):
            if any(isinstance(e, kind) for e in errors):
                self.category = kind.category
        super().__init__("\n".join(str(e) for e in errors))


@dataclass(frozen=True)
class Analysis:
    system: tuple[int, ...]
    fragment: tuple[int, ...] = ()
    eta: float = 0.1
    delta: float = 1e-6
    tol: float = 1e-6
    system2: tuple[int, ...] = ()
    f1: tuple[int, ...] = ()
    f2: tuple[int, ...] = ()
    time: float = 0.0
    swaps: bool = False


@dataclass(frozen=True)
class PovmBlock:
    label: str
    lines: tuple[str, ...]


@dataclass(frozen=True)
class Scenario:
    id: str
    entity_count: int
    hamiltonian: HamiltonianTerms
    initial_state: str
    povm_blocks: tuple[PovmBlock, ...]
    epsilon: float = 0.01
    mode: str = "witness"
    seed: int = 0
    gap_policy: str = "break"
    t0: float = 0.0
    dt: float = 1.0
    steps: int = 1
    analysis: Analysis | None = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def schedule(self) -> ObservationSchedule:
        return ObservationSchedule(self.t0, self.dt, self.steps)

    @property
    def rule(self) -> DominanceRule:
        return DominanceRule(self.epsilon, self.mode)

    def state(self) -> qcore.StateVector:
        if "state" not in self._cache:
            self._cache["state"] = parse_state(self.initial_state, self.entity_count)
        return self._cache["state"]

    def povm(self) -> Povm:
        if "povm" not in self._cache:
            self._cache["povm"] = build_povm(self.povm_blocks, self.entity_count)
        return self._cache["povm"]

    def with_overrides(self, *, seed=None, epsilon=None, eta=None) -> "Scenario":
        out = self
        if seed is not None:
            out = replace(out, seed=int(seed), _cache={})
        if epsilon is not None:
            out = replace(out, epsilon=float(epsilon), _cache={})
        if eta is not None and out.analysis is not None:
            out = replace(out, analysis=replace(out.analysis, eta=float(eta)), _cache={})
        out.rule  # noqa: B018 - revalidates epsilon
        return out

    def echo(self) -> dict:
        out = {
            "id": self.id,
            "entities": self.entity_count,
            "hamiltonian": self.hamiltonian.format().splitlines(),
            "initial_state": self.initial_state,
            "povm_labels": [b.label for b in self.povm_blocks],
            "observer": {"epsilon": self.epsilon, "mode": self.mode, "seed": self.seed, "gap_policy": self.gap_policy},
            "schedule": {"t0": self.t0, "dt": self.dt, "steps": self.steps},
        }
        if self.analysis is not None:
            a = self.analysis
            out["analysis"] = {
                "system": list(a.system), "fragment": list(a.fragment), "eta": a.eta, "delta": a.delta,
                "tol": a.tol, "system2": list(a.system2), "f1": list(a.f1), "f2": list(a.f2),
                "time": a.time, "swaps": a.swaps,
            }
        return out


def parse_state(text: str, n: int) -> qcore.StateVector:
    """Product of named single-entity states, or explicit ``amplitudes:``."""
    body = text.strip()
    if body.startswith("amplitudes:"):
        try:
            amps = np.array([complex(tok) for tok in body[len("amplitudes:"):].split()])
        except ValueError as exc:
            raise ValidationError(f"bad amplitude: {exc}") from None
        if amps.size != 1 << n:
            raise ValidationError(f"{amps.size} amplitudes for {n} entities (need {1 << n})")
        norm = float(np.linalg.norm(amps))
        if not math.isfinite(norm) or abs(norm - 1.0) > 1e-6:
            raise ValidationError(f"amplitudes have norm {norm!r}, expected 1")
        return qcore.StateVector(amps / norm)
    tokens = body.split()
    if len(tokens) != n:
        raise ValidationError(f"{len(tokens)} state factors for {n} entities")
    factors = []
    for tok in tokens:
        if tok not in NAMED_STATES:
            raise ValidationError(f"unknown named state {tok!r} (use 0 1 + - i -i)")
        factors.append(NAMED_STATES[tok])
    amps = np.ones(1, dtype=complex)
    for f in factors:
        amps = np.kron(amps, f)
    return qcore.StateVector.normalized(amps)


def _parse_entities(text: str, n: int, what: str) -> tuple[int, ...]:
    out = []
    for tok in text.replace(",", " ").split():
        try:
            e = int(tok)
        except ValueError:
            raise ValidationError(f"{what}: bad entity index {tok!r}") from None
        if not 0 <= e < n:
            raise ValidationError(f"{what}: entity {e} ≥ {n}" if e >= n else f"{what}: negative entity {e}")
        out.append(e)
    if len(set(out)) != len(out):
        raise ValidationError(f"{what}: repeated entity")
    return tuple(out)


def _block_effect(block: PovmBlock, n: int, path: str) -> np.ndarray:
    d = 1 << n
    effect = np.zeros((d, d), dtype=complex)
    rows = []
    weight = 1.0
    for line in block.lines:
        key, _, value = line.partition(":")
        key = key.strip()
        value = value.strip()
        if key == "weight":
            weight = float(value)
            if not math.isfinite(weight):
                raise ValidationError(f"{path}.weight must be finite")
        elif key == "row":
            try:
                rows.append([complex(tok) for tok in value.split()])
            except ValueError:
                raise ValidationError(f"{path}.row: bad number in {value!r}") from None
        elif key == "proj":
            state_text, _, on_text = value.partition(" on ")
            on = _parse_entities(on_text, n, f"{path}.proj") if on_text.strip() else tuple(range(n))
            local = parse_state(state_text, len(on))
            vec = np.asarray(local)
            proj_local = np.outer(vec, vec.conj())
            effect += _embed(proj_local, on, n)
        else:
            raise ValidationError(f"{path}: unknown key {key!r}")
    if rows:
        mat = np.array(rows, dtype=complex) if all(len(r) == d for r in rows) else None
        if mat is None or mat.shape != (d, d):
            raise ValidationError(f"{path}.row: explicit effect must be {d}x{d}")
        effect += mat
    return weight * effect


def _embed(local: np.ndarray, on: tuple[int, ...], n: int) -> np.ndarray:
    """Operator acting as ``local`` on entities ``on`` (in that order), identity elsewhere."""
    rest = [k for k in range(n) if k not in on]
    full = np.kron(local, np.eye(1 << len(rest)))
    order = list(on) + rest
    t = full.reshape([2] * (2 * n))
    inv = [order.index(k) for k in range(n)]
    t = t.transpose(inv + [n + i for i in inv])
    return t.reshape(1 << n, 1 << n)


def build_povm(blocks: tuple[PovmBlock, ...], n: int) -> Povm:
    effects = [_block_effect(b, n, f"povm[{i}]") for i, b in enumerate(blocks)]
    return validate(effects, [b.label for b in blocks])


def _split_sections(text: str) -> tuple[dict[str, list[tuple[int, str]]], list[EinselError]]:
    sections: dict[str, list[tuple[int, str]]] = {}
    errors: list[EinselError] = []
    current = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            name = stripped[1:-1].strip()
            if name not in SECTIONS:
                errors.append(ParseError(f"unknown section [{name}]", n))
                current = None
                continue
            if name in sections:
                errors.append(ParseError(f"duplicate section [{name}]", n))
            current = name
            sections.setdefault(name, [])
            continue
        if current is None:
            if stripped:
                errors.append(ParseError(f"content outside any section: {stripped!r}", n))
            continue
        sections[current].append((n, stripped))
    return sections, errors


def _key_values(lines: list[tuple[int, str]], section: str, errors: list) -> dict[str, tuple[int, str]]:
    out: dict[str, tuple[int, str]] = {}
    for n, line in lines:
        if not line:
            continue
        if "=" not in line:
            errors.append(ParseError(f"[{section}] expected 'key = value', got {line!r}", n))
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key in out:
            errors.append(ParseError(f"[{section}] duplicate key {key!r}", n))
        out[key] = (n, value)
    return out


class _Section:
    """Typed access to one section's key/value pairs with error collection."""

    def __init__(self, section: str, values: dict, errors: list, known: tuple[str, ...]):
        self.section = section
        self.values = values
        self.errors = errors
        for key, (n, _) in values.items():
            if key not in known:
                errors.append(ParseError(f"[{section}] unknown key {key!r}", n))

    def get(self, key: str, conv, default=None, required: bool = False):
        if key not in self.values:
            if required:
                self.errors.append(ValidationError(f"{self.section}.{key}: missing"))
            return default
        n, raw = self.values[key]
        try:
            value = conv(raw)
        except (ValueError, EinselError) as exc:
            self.errors.append(ValidationError(f"{self.section}.{key}: {exc}"))
            return default
        if isinstance(value, float) and not math.isfinite(value):
            self.errors.append(ValidationError(f"{self.section}.{key}: must be finite"))
            return default
        return value


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_povm_blocks(lines: list[tuple[int, str]], errors: list) -> tuple[PovmBlock, ...]:
    blocks: list[PovmBlock] = []
    label = None
    body: list[str] = []
    for n, line in lines:
        if not line:
            continue
        key = line.partition(":")[0].strip()
        if key == "label":
            if label is not None:
                blocks.append(PovmBlock(label, tuple(body)))
            label = line.partition(":")[2].strip()
            body = []
            if not label or any(c in label for c in ", \t"):
                errors.append(ParseError(f"bad POVM label {label!r} (no spaces or commas)", n))
        elif label is None:
            errors.append(ParseError("POVM content before the first 'label:' line", n))
        elif key in ("proj", "row", "weight"):
            body.append(f"{key}: {' '.join(line.partition(':')[2].split())}")
        else:
            errors.append(ParseError(f"unknown POVM key {key!r}", n))
    if label is not None:
        blocks.append(PovmBlock(label, tuple(body)))
    return tuple(blocks)


def parse_scenario(text: str) -> Scenario:
    """Parse and fully validate a scenario, collecting every error."""
    sections, errors = _split_sections(text)
    for name in REQUIRED:
        if name not in sections:
            errors.append(ValidationError(f"{name}: missing section [{name}]"))

    head = _Section("scenario", _key_values(sections.get("scenario", []), "scenario", errors), errors, ("id", "entities"))
    sid = head.get("id", str, "anonymous", required=True)
    if sid and any(c.isspace() for c in sid):
        errors.append(ValidationError("scenario.id: must not contain whitespace"))
    n = head.get("entities", int, None, required=True)
    if n is not None and n < 1:
        errors.append(ValidationError(f"scenario.entities: must be positive, got {n}"))
        n = None
    elif n is not None:
        try:
            qcore.check_capacity(1 << n)
        except EinselError as exc:
            errors.append(type(exc)(f"scenario.entities: {exc}"))
            n = None

    ham = None
    if n is not None and "hamiltonian" in sections:
        lines = sections["hamiltonian"]
        first = lines[0][0] if lines else 1
        text_lines = {ln: body for ln, body in lines}
        joined = "\n".join(text_lines.get(k, "") for k in range(first, (lines[-1][0] + 1) if lines else first))
        try:
            ham = parse_terms(joined, n, first_line=first)
        except ParseError as exc:
            errors.append(exc)
        except ValidationError as exc:
            errors.append(ValidationError(f"hamiltonian.{exc}"))

    init = " ".join(body for _, body in sections.get("initial_state", []) if body)
    if n is not None and "initial_state" in sections:
        try:
            parse_state(init, n)
        except EinselError as exc:
            errors.append(ValidationError(f"initial_state: {exc}"))

    blocks = _parse_povm_blocks(sections.get("povm", []), errors)
    if n is not None and "povm" in sections:
        if not blocks:
            errors.append(ValidationError("povm: no effects"))
        else:
            try:
                build_povm(blocks, n)
            except EinselError as exc:
                errors.append(ValidationError(f"povm: {exc}"))

    obs = _Section("observer", _key_values(sections.get("observer", []), "observer", errors), errors,
                  ("epsilon", "mode", "seed", "gap_policy"))
    eps = obs.get("epsilon", float, 0.01)
    mode = obs.get("mode", str, "witness")
    seed = obs.get("seed", int, 0)
    gap = obs.get("gap_policy", str, "break")
    try:
        DominanceRule(eps, mode)
    except ValidationError as exc:
        errors.append(ValidationError(f"observer: {exc}"))
    if gap not in ("break", "bridge"):
        errors.append(ValidationError(f"observer.gap_policy: must be break or bridge, got {gap!r}"))
    if seed is not None and seed < 0:
        errors.append(ValidationError("observer.seed: must be nonnegative"))

    sch = _Section("schedule", _key_values(sections.get("schedule", []), "schedule", errors), errors, ("t0", "dt", "steps"))
    t0 = sch.get("t0", float, 0.0)
    dt = sch.get("dt", float, 1.0, required=True)
    steps = sch.get("steps", int, 1, required=True)
    try:
        ObservationSchedule(t0, dt, steps)
    except ValidationError as exc:
        errors.append(ValidationError(f"schedule: {exc}"))

    analysis = None
    if "analysis" in sections and n is not None:
        an = _Section("analysis", _key_values(sections["analysis"], "analysis", errors), errors,
                     ("system", "fragment", "eta", "delta", "tol", "system2", "f1", "f2", "time", "swaps"))

        def ents(key):
            return lambda raw: _parse_entities(raw, n, f"analysis.{key}")

        system = an.get("system", ents("system"), (), required=True)
        fragment = an.get("fragment", ents("fragment"), None)
        if fragment is None:
            fragment = tuple(k for k in range(n) if k not in system)
        analysis = Analysis(
            system=system,
            fragment=fragment,
            eta=an.get("eta", float, 0.1),
            delta=an.get("delta", float, 1e-6),
            tol=an.get("tol", float, 1e-6),
            system2=an.get("system2", ents("system2"), ()),
            f1=an.get("f1", ents("f1"), ()),
            f2=an.get("f2", ents("f2"), ()),
            time=an.get("time", float, 0.0),
            swaps=an.get("swaps", _bool, False),
        )
        if not analysis.system:
            errors.append(ValidationError("analysis.system: must be nonempty"))
        if set(analysis.system) & set(analysis.fragment):
            errors.append(ValidationError("analysis.fragment: overlaps analysis.system"))
        if not 0.0 < analysis.eta < 1.0:
            errors.append(ValidationError(f"analysis.eta: must lie in (0, 1), got {analysis.eta!r}"))
        if set(analysis.system2) & set(analysis.system):
            errors.append(ValidationError("analysis.system2: overlaps analysis.system"))
        if bool(analysis.f1) != bool(analysis.f2):
            errors.append(ValidationError("analysis.f1/f2: give both fragments or neither"))
        if set(analysis.f1) & set(analysis.f2):
            errors.append(ValidationError("analysis.f2: overlaps analysis.f1"))

    if errors:
        raise ScenarioError(errors)
    return Scenario(
        id=sid, entity_count=n, hamiltonian=ham, initial_state=" ".join(init.split()),
        povm_blocks=blocks, epsilon=float(eps), mode=mode, seed=int(seed), gap_policy=gap,
        t0=float(t0), dt=float(dt), steps=int(steps), analysis=analysis,
    )


def load_scenario(path) -> Scenario:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def _ents(values) -> str:
    return " ".join(str(v) for v in values)


def dump_scenario(sc: Scenario) -> str:
    """Canonical text form; ``parse_scenario(dump_scenario(s))`` reproduces ``s``."""
    out = ["[scenario]", f"id = {sc.id}", f"entities = {sc.entity_count}", "", "[hamiltonian]"]
    ham = sc.hamiltonian.format()
    if ham:
        out.extend(ham.splitlines())
    out += ["", "[initial_state]", sc.initial_state, "", "[povm]"]
    for i, b in enumerate(sc.povm_blocks):
        if i:
            out.append("")
        out.append(f"label: {b.label}")
        out.extend(b.lines)
    out += [
        "", "[observer]", f"epsilon = {sc.epsilon!r}", f"mode = {sc.mode}", f"seed = {sc.seed}",
        f"gap_policy = {sc.gap_policy}",
        "", "[schedule]", f"t0 = {sc.t0!r}", f"dt = {sc.dt!r}", f"steps = {sc.steps}",
    ]
    a = sc.analysis
    if a is not None:
        out += ["", "[analysis]", f"system = {_ents(a.system)}", f"fragment = {_ents(a.fragment)}",
                f"eta = {a.eta!r}", f"delta = {a.delta!r}", f"tol = {a.tol!r}"]
        if a.system2:
            out.append(f"system2 = {_ents(a.system2)}")
        if a.f1:
            out += [f"f1 = {_ents(a.f1)}", f"f2 = {_ents(a.f2)}"]
        out += [f"time = {a.time!r}", f"swaps = {'true' if a.swaps else 'false'}"]
    return "\n".join(out) + "\n"
