"""Scenario files: a YAML document describing one filtering or minimax experiment.

Layout (``?`` marks optional keys; the values shown for them are the defaults)::

    name: lorentzian_hole          # [A-Za-z0-9_.-]+
    grid:
      step: 0.25
      horizon: 8.0
      obs_window?: null            # default horizon + 2 * extent(S)
    geometry?:
      intervals: [[2.0, 1.0]]      # pairs (M, N): S contains [-M-N, -M]
    densities:                     # f and g are required, other names may be
      f: {family: lorentzian, power: 1.0, width: 1.0}     # used as class centers
      g: {family: constant, level: 0.25}
    weight:
      family: box                  # box | triangle | tabulated
      support: [0.0, 1.0]
      height?: 1.0
    minimax?:
      class_f?: {variant: l1_ball, eps: 0.1, center?: f}
      class_g?: {variant: contamination, eps: 0.1, power_cap: 1.2}
      damping?: 0.5
      tol?: 1.0e-8
      max_iter?: 500
      equations?: stationary       # stationary | mixed
    run?:
      seed?: 0
      paths?: 10000
      truncation?: []
      saddle_samples?: 100

Density families: ``constant`` (level), ``lorentzian`` (power, width),
``rational`` (numerator, denominator: coefficients in increasing powers of
``lambda**2``), ``tabulated`` (lambda + value lists, or ``file`` naming a
two-column CSV relative to the scenario file).  A tabulated weight takes
``values`` on the lattice ``0, step, 2 step, ...`` or a ``file`` with one value
per row.  When only one of ``class_f``/``class_g`` is given the other density
is taken as known.
"""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .grid import FreqGrid, GridError, TimeGrid, make_grids
from .minimax import Contamination, DensityClass, L1Ball, L2Ball
from .model import (
    ConstantBand,
    Lorentzian,
    ModelError,
    ObservationGeometry,
    ProcessModel,
    RationalRatio,
    SpectralDensity,
    Tabulated,
    WeightFunction,
)

__all__ = ["Scenario", "ScenarioError", "ClassSpec", "parse_scenario", "load_scenario"]

_NAME = re.compile(r"^[A-Za-z0-9_.-]+$")


class ScenarioError(ValueError):
    """Parse or validation failure; ``errors`` lists one message per problem."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


class _Map(dict):
    """Mapping that remembers the line of each key (1-based)."""

    def __init__(self, line: int):
        super().__init__()
        self.line = line
        self.lines: dict = {}


class _Loader(yaml.SafeLoader):
    def __init__(self, stream):
        super().__init__(stream)
        self.problems: list[str] = []


def _construct_mapping(loader: _Loader, node: yaml.MappingNode, deep: bool = False) -> _Map:
    loader.flatten_mapping(node)
    out = _Map(node.start_mark.line + 1)
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        line = key_node.start_mark.line + 1
        if key in out:
            loader.problems.append(
                f"line {line}: duplicate key '{key}' (first given on line {out.lines[key]})"
            )
            continue
        out[key] = loader.construct_object(value_node, deep=True)
        out.lines[key] = line
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


@dataclass(frozen=True)
class ClassSpec:
    variant: str
    center: str
    eps: float
    power_cap: float | None = None


@dataclass
class Scenario:
    name: str
    step: float
    horizon: float
    obs_window: float | None
    intervals: tuple
    densities: dict
    weight_spec: dict
    class_f: ClassSpec | None = None
    class_g: ClassSpec | None = None
    damping: float = 0.5
    tol: float = 1e-8
    max_iter: int = 500
    equations: str = "stationary"
    seed: int = 0
    paths: int = 10000
    truncation: tuple = ()
    saddle_samples: int = 100
    has_minimax: bool = field(default=False)

    @property
    def geometry(self) -> ObservationGeometry:
        return ObservationGeometry(self.intervals)

    def grids(self) -> tuple[TimeGrid, FreqGrid]:
        return make_grids(self.step, self.horizon, self.geometry, self.obs_window)

    def weight(self) -> WeightFunction:
        spec, geo = self.weight_spec, self.geometry
        if spec["family"] == "tabulated":
            vals = np.zeros(int(round(self.horizon / self.step)) + 1)
            given = np.asarray(spec["values"], dtype=float)
            if given.size > vals.size:
                raise ModelError("tabulated weight extends beyond the horizon")
            vals[: given.size] = given
            return WeightFunction(self.step, vals, geo)
        lo, hi = spec["support"]
        make = WeightFunction.box if spec["family"] == "box" else WeightFunction.triangle
        return make(lo, hi, self.step, self.horizon, geo, height=spec["height"])

    def model(self) -> ProcessModel:
        return ProcessModel(self.densities["f"], self.densities["g"], self.geometry,
                            self.weight())

    def density_class(self, spec: ClassSpec | None) -> DensityClass | None:
        if spec is None:
            return None
        center = self.densities[spec.center]
        if spec.variant == "l1_ball":
            return L1Ball(center, spec.eps)
        if spec.variant == "l2_ball":
            return L2Ball(center, spec.eps)
        return Contamination(center, spec.eps, spec.power_cap)

    def classes(self) -> tuple[DensityClass | None, DensityClass | None]:
        return self.density_class(self.class_f), self.density_class(self.class_g)


# --------------------------------------------------------------------------
# validation helpers


class _Checker:
    def __init__(self):
        self.errors: list[str] = []

    def err(self, line, msg):
        self.errors.append(f"line {line}: {msg}")

    def mapping(self, parent: _Map, key: str, path: str, required: bool = True):
        if key not in parent:
            if required:
                self.err(parent.line, f"missing required section '{path}'")
            return None
        val = parent[key]
        if not isinstance(val, _Map):
            self.err(parent.lines[key], f"'{path}' must be a mapping")
            return None
        return val

    def keys(self, m: _Map, allowed, path: str):
        for k in m:
            if k not in allowed:
                self.err(m.lines[k], f"unknown key '{k}' in '{path}'")

    def number(self, m: _Map, key, path, default=None, required=False, positive=False,
               nonneg=False, integer=False):
        if key not in m:
            if required:
                self.err(m.line, f"missing required key '{path}.{key}'")
            return default
        raw, line = m[key], m.lines[key]
        if raw is None and not required:
            return default
        ok = not isinstance(raw, bool)
        val = None
        if ok:
            try:
                val = float(raw)
            except (TypeError, ValueError):
                ok = False
        if not ok or not np.isfinite(val):
            self.err(line, f"'{path}.{key}' must be a finite number, got {raw!r}")
            return default
        if integer:
            if val != int(val):
                self.err(line, f"'{path}.{key}' must be an integer, got {raw!r}")
                return default
            val = int(val)
        if positive and not val > 0:
            self.err(line, f"'{path}.{key}' must be positive, got {raw!r}")
            return default
        if nonneg and val < 0:
            self.err(line, f"'{path}.{key}' must be >= 0, got {raw!r}")
            return default
        return val

    def numbers(self, m: _Map, key, path, required=True):
        if key not in m:
            if required:
                self.err(m.line, f"missing required key '{path}.{key}'")
            return None
        raw, line = m[key], m.lines[key]
        if not isinstance(raw, list):
            self.err(line, f"'{path}.{key}' must be a list of numbers")
            return None
        try:
            vals = [float(x) for x in raw if not isinstance(x, bool)]
        except (TypeError, ValueError):
            vals = []
        if len(vals) != len(raw) or not all(np.isfinite(vals)):
            self.err(line, f"'{path}.{key}' must be a list of finite numbers")
            return None
        return vals

    def choice(self, m: _Map, key, path, options, default=None):
        if key not in m:
            if default is None:
                self.err(m.line, f"missing required key '{path}.{key}'")
            return default
        val = m[key]
        if val not in options:
            self.err(m.lines[key], f"'{path}.{key}' must be one of {sorted(options)}, got {val!r}")
            return default
        return val


def _read_csv_columns(path: Path, ncols: int) -> list[list[float]]:
    cols = [[] for _ in range(ncols)]
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                vals = [float(x) for x in row[:ncols]]
            except ValueError:
                if not cols[0]:  # header row
                    continue
                raise
            if len(vals) != ncols:
                raise ValueError(f"expected {ncols} columns, got {len(vals)}")
            for c, v in zip(cols, vals):
                c.append(v)
    return cols


_DENSITY_KEYS = {
    "constant": {"family", "level"},
    "lorentzian": {"family", "power", "width"},
    "rational": {"family", "numerator", "denominator"},
    "tabulated": {"family", "lambda", "value", "file"},
}


def _density(ck: _Checker, m: _Map, path: str, base: Path | None) -> SpectralDensity | None:
    fam = ck.choice(m, "family", path, set(_DENSITY_KEYS))
    if fam is None:
        return None
    ck.keys(m, _DENSITY_KEYS[fam], path)
    n_err = len(ck.errors)
    try:
        if fam == "constant":
            level = ck.number(m, "level", path, required=True, nonneg=True)
            return ConstantBand(level) if len(ck.errors) == n_err else None
        if fam == "lorentzian":
            power = ck.number(m, "power", path, required=True, nonneg=True)
            width = ck.number(m, "width", path, required=True, positive=True)
            return Lorentzian(power, width) if len(ck.errors) == n_err else None
        if fam == "rational":
            num = ck.numbers(m, "numerator", path)
            den = ck.numbers(m, "denominator", path)
            return RationalRatio(tuple(num), tuple(den)) if len(ck.errors) == n_err else None
        if "file" in m:
            src = Path(str(m["file"]))
            if not src.is_absolute() and base is not None:
                src = base / src
            try:
                lam, val = _read_csv_columns(src, 2)
            except (OSError, ValueError) as exc:
                ck.err(m.lines["file"], f"cannot read '{path}.file': {exc}")
                return None
        else:
            lam = ck.numbers(m, "lambda", path)
            val = ck.numbers(m, "value", path)
            if len(ck.errors) != n_err:
                return None
        return Tabulated(lam, val)
    except ModelError as exc:
        ck.err(m.line, f"'{path}': {exc}")
        return None


def _class_spec(ck: _Checker, m: _Map, path: str, default_center: str, names) -> ClassSpec | None:
    ck.keys(m, {"variant", "center", "eps", "power_cap"}, path)
    n_err = len(ck.errors)
    variant = ck.choice(m, "variant", path, {"l1_ball", "l2_ball", "contamination"})
    center = m.get("center", default_center)
    if center not in names:
        ck.err(m.lines.get("center", m.line), f"'{path}.center' names unknown density {center!r}")
    eps = ck.number(m, "eps", path, required=True, nonneg=True)
    cap = None
    if variant == "contamination":
        if "power_cap" not in m:
            ck.err(m.line, f"'{path}': contamination class requires 'power_cap'")
        else:
            cap = ck.number(m, "power_cap", path, required=True, positive=True)
        if eps is not None and not eps < 1:
            ck.err(m.lines["eps"], f"'{path}.eps' must be < 1 for contamination")
    elif "power_cap" in m:
        ck.err(m.lines["power_cap"], f"'{path}.power_cap' only applies to contamination")
    if len(ck.errors) != n_err:
        return None
    return ClassSpec(variant, str(center), eps, cap)


def parse_scenario(text: str, base_dir: str | Path | None = None) -> Scenario:
    """Parse and validate scenario text.

    Raises
    ------
    ScenarioError
        With one line-numbered message per problem found.
    """
    base = Path(base_dir) if base_dir is not None else None
    loader = _Loader(text)
    try:
        doc = loader.get_single_data()
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 0
        raise ScenarioError([f"line {line}: malformed YAML: {getattr(exc, 'problem', exc)}"])
    finally:
        loader.dispose()
    ck = _Checker()
    ck.errors.extend(loader.problems)
    if not isinstance(doc, _Map):
        raise ScenarioError(ck.errors + ["line 1: scenario must be a mapping"])

    ck.keys(doc, {"name", "grid", "geometry", "densities", "weight", "minimax", "run"}, "<top>")

    name = doc.get("name")
    if name is None:
        ck.err(doc.line, "missing required key 'name'")
    elif not isinstance(name, str) or not _NAME.match(name):
        ck.err(doc.lines["name"], f"name {name!r} is not a file-system token [A-Za-z0-9_.-]+")

    step = horizon = window = None
    grid = ck.mapping(doc, "grid", "grid")
    if grid is not None:
        ck.keys(grid, {"step", "horizon", "obs_window"}, "grid")
        step = ck.number(grid, "step", "grid", required=True, positive=True)
        horizon = ck.number(grid, "horizon", "grid", required=True, positive=True)
        window = ck.number(grid, "obs_window", "grid", positive=True)

    intervals: list = []
    geo = ck.mapping(doc, "geometry", "geometry", required=False)
    if geo is not None:
        ck.keys(geo, {"intervals"}, "geometry")
        raw = geo.get("intervals", [])
        line = geo.lines.get("intervals", geo.line)
        if not isinstance(raw, list):
            ck.err(line, "'geometry.intervals' must be a list of [M, N] pairs")
        else:
            for item in raw:
                try:
                    m, n = (float(v) for v in item)
                except (TypeError, ValueError):
                    ck.err(line, f"interval {item!r} is not a pair of numbers")
                    continue
                intervals.append((m, n))
            try:
                ObservationGeometry(tuple(intervals))
            except ModelError as exc:
                ck.err(line, f"'geometry.intervals': {exc}")

    densities: dict = {}
    dens = ck.mapping(doc, "densities", "densities")
    if dens is not None:
        for req in ("f", "g"):
            if req not in dens:
                ck.err(dens.line, f"missing required density 'densities.{req}'")
        for key, spec in dens.items():
            if not isinstance(spec, _Map):
                ck.err(dens.lines[key], f"'densities.{key}' must be a mapping")
                continue
            d = _density(ck, spec, f"densities.{key}", base)
            if d is not None:
                densities[str(key)] = d

    weight_spec: dict = {}
    wt = ck.mapping(doc, "weight", "weight")
    if wt is not None:
        fam = ck.choice(wt, "family", "weight", {"box", "triangle", "tabulated"})
        if fam == "tabulated":
            ck.keys(wt, {"family", "values", "file"}, "weight")
            if "file" in wt:
                src = Path(str(wt["file"]))
                if not src.is_absolute() and base is not None:
                    src = base / src
                try:
                    (vals,) = _read_csv_columns(src, 1)
                except (OSError, ValueError) as exc:
                    ck.err(wt.lines["file"], f"cannot read 'weight.file': {exc}")
                    vals = None
            else:
                vals = ck.numbers(wt, "values", "weight")
            weight_spec = {"family": fam, "values": vals}
        elif fam is not None:
            ck.keys(wt, {"family", "support", "height"}, "weight")
            support = ck.numbers(wt, "support", "weight")
            if support is not None and (len(support) != 2 or not 0 <= support[0] <= support[1]):
                ck.err(wt.lines["support"], "'weight.support' must be [lo, hi] with 0 <= lo <= hi")
            height = ck.number(wt, "height", "weight", default=1.0)
            weight_spec = {"family": fam, "support": support, "height": height}

    opts: dict = {}
    mm = ck.mapping(doc, "minimax", "minimax", required=False)
    if mm is not None:
        ck.keys(mm, {"class_f", "class_g", "damping", "tol", "max_iter", "equations"}, "minimax")
        names = set(densities) | ({"f", "g"} if dens is not None else set())
        for side in ("f", "g"):
            key = f"class_{side}"
            sub = ck.mapping(mm, key, f"minimax.{key}", required=False)
            opts[key] = None if sub is None else _class_spec(ck, sub, f"minimax.{key}", side, names)
        if "class_f" not in mm and "class_g" not in mm:
            ck.err(mm.line, "'minimax' needs at least one of class_f, class_g")
        opts["damping"] = ck.number(mm, "damping", "minimax", default=0.5, positive=True)
        if opts["damping"] > 1:
            ck.err(mm.lines["damping"], "'minimax.damping' must lie in (0, 1]")
        opts["tol"] = ck.number(mm, "tol", "minimax", default=1e-8, positive=True)
        opts["max_iter"] = ck.number(mm, "max_iter", "minimax", default=500, positive=True,
                                     integer=True)
        opts["equations"] = ck.choice(mm, "equations", "minimax", {"stationary", "mixed"},
                                      default="stationary")

    run = ck.mapping(doc, "run", "run", required=False)
    if run is not None:
        ck.keys(run, {"seed", "paths", "truncation", "saddle_samples"}, "run")
        opts["seed"] = ck.number(run, "seed", "run", default=0, nonneg=True, integer=True)
        opts["paths"] = ck.number(run, "paths", "run", default=10000, positive=True, integer=True)
        opts["saddle_samples"] = ck.number(run, "saddle_samples", "run", default=100,
                                           positive=True, integer=True)
        trunc = ck.numbers(run, "truncation", "run", required=False)
        if trunc is not None:
            if any(t < 0 for t in trunc):
                ck.err(run.lines["truncation"], "'run.truncation' entries must be >= 0")
            opts["truncation"] = tuple(trunc)

    if ck.errors:
        raise ScenarioError(ck.errors)

    sc = Scenario(
        name=name, step=step, horizon=horizon, obs_window=window,
        intervals=tuple(intervals), densities=densities, weight_spec=weight_spec,
        has_minimax=mm is not None, **opts,
    )
    # lattice and model invariants need every piece built together
    try:
        time, freq = sc.grids()
        model = sc.model()
        model.check_grids(time, freq)
        for d in densities.values():
            d.check(freq.band)
        if sc.truncation and max(sc.truncation) > sc.horizon:
            raise ModelError("truncation points must not exceed the horizon")
    except (GridError, ModelError) as exc:
        raise ScenarioError([f"line {doc.line}: {exc}"]) from exc
    return sc


def load_scenario(path: str | Path) -> Scenario:
    """Read and parse a scenario file; relative data files resolve against its folder."""
    path = Path(path)
    return parse_scenario(path.read_text(), base_dir=path.parent)
