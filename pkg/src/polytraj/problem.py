"""Polytope-traversal problem model, JSON interchange and random generator."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from . import geometry
from .errors import DegenerateHullError, GenerationError, ProblemParseError, SamplingError
from .geometry import Polytope

SCHEMA_VERSION = 1
EQUALITY = "equality"
INEQUALITY = "inequality"
_RELATIONS = (EQUALITY, INEQUALITY)


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DerivativeBound:
    """Linear constraint ``matrix @ v (relation) offset`` on a derivative ``v``."""

    matrix: np.ndarray
    offset: np.ndarray
    relation: str = INEQUALITY

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        b = np.asarray(self.offset, dtype=float).ravel()
        if M.shape[0] != b.shape[0]:
            raise ValueError("bound matrix and offset row counts differ")
        if not (np.all(np.isfinite(M)) and np.all(np.isfinite(b))):
            raise ValueError("bound entries must be finite")
        if self.relation not in _RELATIONS:
            raise ValueError(f"relation must be one of {_RELATIONS}")
        object.__setattr__(self, "matrix", _frozen(M))
        object.__setattr__(self, "offset", _frozen(b))

    @classmethod
    def box(cls, upper, lower=None) -> "DerivativeBound":
        """Axis-aligned ``-lower <= v <= upper`` (``lower`` defaults to ``upper``)."""
        upper = np.asarray(upper, dtype=float).ravel()
        lower = upper if lower is None else np.asarray(lower, dtype=float).ravel()
        d = upper.shape[0]
        return cls(np.vstack([np.eye(d), -np.eye(d)]), np.concatenate([upper, lower]))

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    def __eq__(self, other):
        if not isinstance(other, DerivativeBound):
            return NotImplemented
        return (
            self.relation == other.relation
            and np.array_equal(self.matrix, other.matrix)
            and np.array_equal(self.offset, other.offset)
        )


@dataclass(frozen=True, eq=False)
class Proportions:
    """Fraction of the total time assigned to each polytope."""

    values: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.values, dtype=float).ravel()
        if s.size == 0 or np.any(~np.isfinite(s)) or np.any(s <= 0.0):
            raise ValueError("proportions must be finite and strictly positive")
        if abs(s.sum() - 1.0) > 1e-12:
            raise ValueError(f"proportions sum to {s.sum():.17g}, expected 1")
        object.__setattr__(self, "values", _frozen(s))

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __eq__(self, other):
        if not isinstance(other, Proportions):
            return NotImplemented
        return np.array_equal(self.values, other.values)


def as_proportions(s) -> Proportions:
    return s if isinstance(s, Proportions) else Proportions(s)


def _opt_vec(v):
    return None if v is None else _frozen(np.asarray(v, dtype=float).ravel())


def _eq_opt(a, b):
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(a, b)


@dataclass(frozen=True, eq=False)
class PTProblem:
    """Ordered polytope corridor with boundary and derivative constraints.

    ``start_velocity`` / ``end_velocity`` are equality targets on the first /
    last velocity control point, or ``None`` when free.
    """

    polytopes: tuple
    degree: int
    start: np.ndarray
    end: np.ndarray
    start_velocity: np.ndarray | None = None
    end_velocity: np.ndarray | None = None
    velocity_bounds: tuple = ()
    acceleration_bounds: tuple = ()

    def __post_init__(self):
        polys = tuple(self.polytopes)
        if not polys:
            raise ValueError("at least one polytope is required")
        d = polys[0].dim
        if any(p.dim != d for p in polys):
            raise ValueError("polytopes have mixed dimensions")
        if int(self.degree) < 1:
            raise ValueError("degree must be >= 1")
        object.__setattr__(self, "polytopes", polys)
        object.__setattr__(self, "degree", int(self.degree))
        for name in ("start", "end"):
            v = _frozen(np.asarray(getattr(self, name), dtype=float).ravel())
            if v.shape != (d,):
                raise ValueError(f"{name} must have dimension {d}")
            object.__setattr__(self, name, v)
        for name in ("start_velocity", "end_velocity"):
            v = _opt_vec(getattr(self, name))
            if v is not None and v.shape != (d,):
                raise ValueError(f"{name} must have dimension {d}")
            object.__setattr__(self, name, v)
        for name in ("velocity_bounds", "acceleration_bounds"):
            bounds = tuple(getattr(self, name))
            if any(b.matrix.shape[1] != d for b in bounds):
                raise ValueError(f"{name} column count must equal {d}")
            object.__setattr__(self, name, bounds)

    @property
    def dim(self) -> int:
        return self.polytopes[0].dim

    @property
    def n_polytopes(self) -> int:
        return len(self.polytopes)

    def __eq__(self, other):
        if not isinstance(other, PTProblem):
            return NotImplemented
        return (
            self.degree == other.degree
            and self.polytopes == other.polytopes
            and np.array_equal(self.start, other.start)
            and np.array_equal(self.end, other.end)
            and _eq_opt(self.start_velocity, other.start_velocity)
            and _eq_opt(self.end_velocity, other.end_velocity)
            and self.velocity_bounds == other.velocity_bounds
            and self.acceleration_bounds == other.acceleration_bounds
        )


def decel_impossible_axes(problem: PTProblem) -> list[int]:
    """Axes along which every admissible acceleration is strictly positive."""
    ineq = [b for b in problem.acceleration_bounds if b.relation == INEQUALITY]
    eq = [b for b in problem.acceleration_bounds if b.relation == EQUALITY]
    if not ineq and not eq:
        return []
    d = problem.dim
    kw = {"bounds": [(None, None)] * d, "method": "highs"}
    if ineq:
        kw["A_ub"] = np.vstack([b.matrix for b in ineq])
        kw["b_ub"] = np.concatenate([b.offset for b in ineq])
    if eq:
        kw["A_eq"] = np.vstack([b.matrix for b in eq])
        kw["b_eq"] = np.concatenate([b.offset for b in eq])
    axes = []
    for k in range(d):
        c = np.zeros(d)
        c[k] = 1.0
        res = linprog(c, **kw)
        if res.status == 0 and res.fun > 1e-12:
            axes.append(k)
    return axes


# ---------------------------------------------------------------------------
# generator

@dataclass(frozen=True)
class GeneratorConfig:
    dim: int = 2
    n_polytopes: int = 2
    degree: int = 5
    points_per_polytope: int = 10
    decel_impossible_prob: float = 0.4
    seed: int = 0
    translation_scale: float = 1.0
    velocity_bound_range: tuple = (0.5, 2.0)
    acceleration_bound_range: tuple = (0.5, 2.0)
    decel_floor_range: tuple = (0.0, 0.3)
    start_at_rest: bool = True
    end_at_rest: bool = True

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if self.n_polytopes < 1:
            raise ValueError("n_polytopes must be >= 1")
        if self.degree < 2:
            raise ValueError("degree must be >= 2 (acceleration bounds are generated)")
        if self.points_per_polytope < self.dim + 1:
            raise ValueError("too few points per polytope")
        if not 0.0 <= self.decel_impossible_prob <= 1.0:
            raise ValueError("decel_impossible_prob must be in [0, 1]")
        if self.translation_scale <= 0:
            raise ValueError("translation_scale must be positive")
        for name in ("velocity_bound_range", "acceleration_bound_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must be a positive range")
        lo, hi = self.decel_floor_range
        if not 0 <= lo <= hi:
            raise ValueError("decel_floor_range must be non-negative")


MAX_GENERATION_ATTEMPTS = 100


def _build_corridor(cfg: GeneratorConfig, rng: np.random.Generator):
    d = cfg.dim
    clouds = []
    for j in range(cfg.n_polytopes):
        pts = rng.uniform(0.0, 1.0, size=(cfg.points_per_polytope, d))
        shift = np.empty(d)
        shift[0] = rng.uniform() * j * cfg.translation_scale
        shift[1:] = rng.uniform(-0.5, 0.5, size=d - 1) * cfg.translation_scale
        clouds.append(pts + shift)
    hulls = [geometry.convex_hull(c, d) for c in clouds]
    # one point on a segment between the interiors of each consecutive pair
    shared = []
    for j in range(cfg.n_polytopes - 1):
        a = geometry.sample_interior(hulls[j], rng)
        b = geometry.sample_interior(hulls[j + 1], rng)
        shared.append(a + rng.uniform() * (b - a))
    for j, p in enumerate(shared):
        clouds[j] = np.vstack([clouds[j], p])
        clouds[j + 1] = np.vstack([clouds[j + 1], p])
    return [geometry.convex_hull(c, d) for c in clouds]


def generate(config: GeneratorConfig) -> PTProblem:
    """Pseudo-random corridor problem, deterministic for ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    d = config.dim
    for _ in range(MAX_GENERATION_ATTEMPTS):
        try:
            polys = _build_corridor(config, rng)
            start = geometry.sample_interior(polys[0], rng)
            end = geometry.sample_interior(polys[-1], rng)
        except (DegenerateHullError, SamplingError):
            continue
        if all(geometry.intersection_point(polys[j : j + 2], 1e-9) is not None
               for j in range(len(polys) - 1)):
            break
    else:
        raise GenerationError(f"no valid corridor after {MAX_GENERATION_ATTEMPTS} attempts")

    vmax = rng.uniform(*config.velocity_bound_range, size=d)
    amax = rng.uniform(*config.acceleration_bound_range, size=d)
    alow = amax.copy()
    if rng.uniform() < config.decel_impossible_prob:
        # a_x >= c: the lower side of the box moves above zero along the
        # corridor direction, so the curve can never slow down in x
        alow[0] = -rng.uniform(*config.decel_floor_range)
    zero = np.zeros(d)
    return PTProblem(
        polytopes=tuple(polys),
        degree=config.degree,
        start=start,
        end=end,
        start_velocity=zero if config.start_at_rest else None,
        end_velocity=zero if config.end_at_rest else None,
        velocity_bounds=(DerivativeBound.box(vmax),),
        acceleration_bounds=(DerivativeBound.box(amax, alow),),
    )


# ---------------------------------------------------------------------------
# JSON

def _vec(v):
    return None if v is None else [float(x) for x in v]


def _mat(M):
    return [[float(x) for x in row] for row in M]


def _bound_doc(b: DerivativeBound):
    return {"M": _mat(b.matrix), "b": _vec(b.offset), "relation": b.relation}


def problem_to_dict(problem: PTProblem) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "dim": problem.dim,
        "degree": problem.degree,
        "polytopes": [{"H": _mat(p.normals), "h": _vec(p.offsets)} for p in problem.polytopes],
        "start": _vec(problem.start),
        "end": _vec(problem.end),
        "start_velocity": _vec(problem.start_velocity),
        "end_velocity": _vec(problem.end_velocity),
        "velocity_bounds": [_bound_doc(b) for b in problem.velocity_bounds],
        "acceleration_bounds": [_bound_doc(b) for b in problem.acceleration_bounds],
    }


def to_json(problem: PTProblem, indent=None) -> str:
    # float repr is the shortest string that round-trips exactly
    return json.dumps(problem_to_dict(problem), indent=indent)


def _require(doc, key, where=""):
    if not isinstance(doc, dict) or key not in doc:
        raise ProblemParseError(where + key, "missing required field")
    return doc[key]


def _parse_matrix(value, dim, name):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProblemParseError(name, f"not numeric ({exc})") from None
    if arr.ndim == 1:
        # flat row-major layout
        if arr.size % dim:
            raise ProblemParseError(name, f"flat length {arr.size} not a multiple of dim {dim}")
        arr = arr.reshape(-1, dim)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ProblemParseError(name, f"expected rows of length {dim}")
    return arr


def _parse_vector(value, name, size=None):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProblemParseError(name, f"not numeric ({exc})") from None
    if arr.ndim != 1 or (size is not None and arr.size != size):
        raise ProblemParseError(name, f"expected a vector of length {size}")
    return arr


def _parse_bounds(docs, dim, name):
    if not isinstance(docs, list):
        raise ProblemParseError(name, "expected a list")
    out = []
    for k, doc in enumerate(docs):
        where = f"{name}[{k}]."
        M = _parse_matrix(_require(doc, "M", where), dim, where + "M")
        b = _parse_vector(_require(doc, "b", where), where + "b", M.shape[0])
        rel = doc.get("relation", INEQUALITY)
        if rel not in _RELATIONS:
            raise ProblemParseError(where + "relation", f"must be one of {_RELATIONS}")
        out.append(DerivativeBound(M, b, rel))
    return tuple(out)


def problem_from_dict(doc) -> PTProblem:
    if not isinstance(doc, dict):
        raise ProblemParseError("<root>", "expected a JSON object")
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ProblemParseError("version", f"unsupported schema version {version!r}")
    dim = _require(doc, "dim")
    if not isinstance(dim, int) or dim < 1:
        raise ProblemParseError("dim", "must be a positive integer")
    degree = _require(doc, "degree")
    if not isinstance(degree, int) or degree < 1:
        raise ProblemParseError("degree", "must be a positive integer")
    poly_docs = _require(doc, "polytopes")
    if not isinstance(poly_docs, list) or not poly_docs:
        raise ProblemParseError("polytopes", "expected a non-empty list")
    polys = []
    for j, pd in enumerate(poly_docs):
        where = f"polytopes[{j}]."
        H = _parse_matrix(_require(pd, "H", where), dim, where + "H")
        h = _parse_vector(_require(pd, "h", where), where + "h", H.shape[0])
        try:
            polys.append(Polytope(H, h))
        except ValueError as exc:
            raise ProblemParseError(where + "H", str(exc)) from None
    start = _parse_vector(_require(doc, "start"), "start", dim)
    end = _parse_vector(_require(doc, "end"), "end", dim)
    sv = doc.get("start_velocity")
    ev = doc.get("end_velocity")
    return PTProblem(
        polytopes=tuple(polys),
        degree=degree,
        start=start,
        end=end,
        start_velocity=None if sv is None else _parse_vector(sv, "start_velocity", dim),
        end_velocity=None if ev is None else _parse_vector(ev, "end_velocity", dim),
        velocity_bounds=_parse_bounds(doc.get("velocity_bounds", []), dim, "velocity_bounds"),
        acceleration_bounds=_parse_bounds(doc.get("acceleration_bounds", []), dim,
                                          "acceleration_bounds"),
    )


def from_json(text: str) -> PTProblem:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemParseError("<document>", f"invalid JSON ({exc})") from None
    return problem_from_dict(doc)
