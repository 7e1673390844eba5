"""Closed encircling paths mapping elapsed time to control parameters.

Three families:

  circle     -- loop in the (omega1, delta1) plane,
                delta1 = 0.5 sin(2 pi t/T + phase), omega1 = 0.5 + 0.5 cos(...),
                on the dissipative background omega2 = 1, gamma0 = 50,
                gamma2 = 10.
  experiment -- piecewise-linear loop in the (delta1, omega2) plane of the
                momentum-resolved model: ramp omega2 up (fast), sweep delta1
                to -6, ramp omega2 to 0, sweep delta1 back, with segment time
                fractions 1 : 10 : 40 : 50 (of 101).
  general    -- elliptical loop in the same plane with omega2 bounded away
                from zero, so the dissipation never switches off.

Clockwise traversal is implemented as the exact time reverse of the
counterclockwise one, params_cw(t) = params_ccw(T - t), so the closure and
time-reversal identities hold to the last bit. Segment boundaries are exact
rational fractions of the loop.

A note on the experiment family's start corner: the published description of
this loop is self-inconsistent about the corner where the encircling starts
(delta1 of 0 versus 3, omega2 of 3 versus 0). Both readings are supported
through ``delta1_start`` and ``omega2_start``. The default (0, 0) keeps the
closing sweep at omega2 = 0 exactly, which is the configuration with a
purely Hermitian segment; set omega2_start = 3 to reproduce the literal
published starting point, at the cost of a diagonal closing segment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .model import ControlParams

TWO_PI = 2.0 * math.pi

KINDS = ("circle", "experiment", "general")
DIRECTIONS = ("cw", "ccw")

CIRCLE_BASE = ControlParams(omega1=1.0, delta1=0.0, omega2=1.0, delta2=0.0,
                            gamma0=50.0, gamma2=10.0, qx=0.0)
EXPERIMENT_BASE = ControlParams(omega1=-2.25, delta1=0.0, omega2=3.0, delta2=0.0,
                                gamma0=110.57, gamma2=18.43, qx=-0.81)

# experiment-family segment boundaries as exact fractions of the loop:
# ramp omega2 up | sweep delta1 out | ramp omega2 down | sweep delta1 back
_SEG_BOUNDS = (0.0, 1.0 / 101.0, 11.0 / 101.0, 51.0 / 101.0, 1.0)
_DELTA1_FAR = -6.0


def default_base(kind: str) -> ControlParams:
    return CIRCLE_BASE if kind == "circle" else EXPERIMENT_BASE


@dataclass(frozen=True)
class PathSpec:
    """A closed loop in control-parameter space with direction and duration.

    ``base`` supplies every parameter the loop does not vary. The derived
    encircling velocity is 2 pi / total_time.
    """

    kind: str
    direction: str
    total_time: float
    base: ControlParams = None
    phase_offset: float = 0.0       # circle only
    omega2_max: float = 6.0         # experiment / general
    omega2_min: float = 0.5         # general: smallest omega2 on the loop
    delta1_start: float = 0.0       # experiment: delta1 at the start corner
    omega2_start: float = 0.0       # experiment: omega2 at the start corner
    delta1_center: float = -1.5     # general: ellipse center in delta1
    delta1_radius: float = 4.5      # general: ellipse radius in delta1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown path kind {self.kind!r}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be 'cw' or 'ccw', got {self.direction!r}")
        if not (self.total_time > 0.0 and math.isfinite(self.total_time)):
            raise ValueError("total_time must be positive and finite")
        if self.base is None:
            object.__setattr__(self, "base", default_base(self.kind))
        if self.kind in ("experiment", "general") and self.omega2_max <= 0.0:
            raise ValueError("omega2_max must be positive")
        if self.kind == "general" and self.omega2_min <= 0.0:
            raise ValueError(
                "omega2_min must be positive: omega2_min <= 0 would re-create "
                "a dissipation-free segment on the loop")

    @property
    def velocity(self) -> float:
        return TWO_PI / self.total_time

    def reversed(self) -> "PathSpec":
        return replace(self, direction="cw" if self.direction == "ccw" else "ccw")


def _fraction(t: float, total: float) -> float:
    # t = total maps to 0, making closure exact
    return math.fmod(t / total, 1.0)


def _circle_scalars(spec: PathSpec):
    T = spec.total_time
    phi = spec.phase_offset
    b = spec.base
    o2, d2, g0, g2, qx = b.omega2, b.delta2, b.gamma0, b.gamma2, b.qx

    def fn(t: float):
        if not 0.0 <= t <= T:
            raise ValueError(f"time {t!r} outside the path span [0, {T}]")
        th = TWO_PI * _fraction(t, T) + phi
        return (complex(0.5 + 0.5 * math.cos(th)), 0.5 * math.sin(th),
                o2, d2, g0, g2, qx)

    return fn


def _piecewise(u: float, corners) -> float:
    for k in range(4):
        if u < _SEG_BOUNDS[k + 1] or k == 3:
            lo, hi = _SEG_BOUNDS[k], _SEG_BOUNDS[k + 1]
            s = (u - lo) / (hi - lo)
            c0, c1 = corners[k], corners[k + 1]
            return c0 if c0 == c1 else c0 + (c1 - c0) * s
    raise AssertionError  # unreachable


def _experiment_scalars(spec: PathSpec):
    T = spec.total_time
    b = spec.base
    o1, d2, g0, g2, qx = b.omega1, b.delta2, b.gamma0, b.gamma2, b.qx
    d_corners = (spec.delta1_start, spec.delta1_start, _DELTA1_FAR, _DELTA1_FAR, spec.delta1_start)
    o_corners = (spec.omega2_start, spec.omega2_max, spec.omega2_max, 0.0, spec.omega2_start)

    def fn(t: float):
        if not 0.0 <= t <= T:
            raise ValueError(f"time {t!r} outside the path span [0, {T}]")
        u = _fraction(t, T)
        return (o1, _piecewise(u, d_corners), complex(_piecewise(u, o_corners)),
                d2, g0, g2, qx)

    return fn


def _general_scalars(spec: PathSpec):
    T = spec.total_time
    b = spec.base
    o1, d2, g0, g2, qx = b.omega1, b.delta2, b.gamma0, b.gamma2, b.qx
    dc, dr = spec.delta1_center, spec.delta1_radius
    oc = 0.5 * (spec.omega2_max + spec.omega2_min)
    orad = 0.5 * (spec.omega2_max - spec.omega2_min)

    def fn(t: float):
        if not 0.0 <= t <= T:
            raise ValueError(f"time {t!r} outside the path span [0, {T}]")
        th = TWO_PI * _fraction(t, T)
        return (o1, dc + dr * math.sin(th), complex(oc + orad * math.cos(th)),
                d2, g0, g2, qx)

    return fn


_FAMILIES = {
    "circle": _circle_scalars,
    "experiment": _experiment_scalars,
    "general": _general_scalars,
}


def scalar_path_fn(spec: PathSpec):
    """Fast accessor: a callable t -> (omega1, delta1, omega2, delta2,
    gamma0, gamma2, qx) with plain scalars, for integrator hot loops.

    Clockwise specs evaluate the counterclockwise loop at T - t, so the two
    directions are exact time reverses of each other.
    """
    ccw_fn = _FAMILIES[spec.kind](spec)
    if spec.direction == "ccw":
        return ccw_fn
    T = spec.total_time

    def fn(t: float):
        return ccw_fn(T - t)

    return fn


def params_at(t: float, spec: PathSpec) -> ControlParams:
    """Control parameters at elapsed time t along the loop."""
    o1, d1, o2, d2, g0, g2, qx = scalar_path_fn(spec)(t)
    return ControlParams(omega1=o1, delta1=d1, omega2=o2, delta2=d2,
                         gamma0=g0, gamma2=g2, qx=qx)


def circle_params(t: float, spec: PathSpec) -> ControlParams:
    if spec.kind != "circle":
        raise ValueError("spec is not a circle path")
    return params_at(t, spec)


def experiment_params(t: float, spec: PathSpec) -> ControlParams:
    if spec.kind != "experiment":
        raise ValueError("spec is not an experiment path")
    return params_at(t, spec)


def general_params(t: float, spec: PathSpec) -> ControlParams:
    if spec.kind != "general":
        raise ValueError("spec is not a general path")
    return params_at(t, spec)


def theta_at(t: float, spec: PathSpec) -> float:
    """Signed loop angle at time t: positive for ccw, negative for cw, with
    the circle's phase offset included."""
    sign = 1.0 if spec.direction == "ccw" else -1.0
    phi = spec.phase_offset if spec.kind == "circle" else 0.0
    return sign * TWO_PI * _fraction(t, spec.total_time) + phi


# ---------------------------------------------------------------------------
# Config-file loading (strict key-value schema).
# ---------------------------------------------------------------------------

_PATH_KEYS = {
    "kind", "direction", "total_time", "phase_offset", "omega2_max",
    "omega2_min", "delta1_start", "omega2_start", "delta1_center",
    "delta1_radius", "base",
}
_BASE_KEYS = {"omega1", "delta1", "omega2", "delta2", "gamma0", "gamma2", "qx"}


def _as_complex(v):
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ValueError(f"complex values are [re, im] pairs, got {v!r}")
        return complex(float(v[0]), float(v[1]))
    return complex(float(v))


def path_spec_from_dict(d: dict) -> PathSpec:
    """Build a PathSpec from a parsed config table, rejecting unknown keys."""
    unknown = set(d) - _PATH_KEYS
    if unknown:
        raise ValueError(f"unknown path config keys: {sorted(unknown)}")
    if "kind" not in d or "direction" not in d or "total_time" not in d:
        raise ValueError("path config requires 'kind', 'direction' and 'total_time'")
    base = default_base(d["kind"])
    if "base" in d:
        bd = dict(d["base"])
        unknown = set(bd) - _BASE_KEYS
        if unknown:
            raise ValueError(f"unknown base parameter keys: {sorted(unknown)}")
        fields = {
            "omega1": _as_complex(bd["omega1"]) if "omega1" in bd else base.omega1,
            "delta1": float(bd.get("delta1", base.delta1)),
            "omega2": _as_complex(bd["omega2"]) if "omega2" in bd else base.omega2,
            "delta2": float(bd.get("delta2", base.delta2)),
            "gamma0": float(bd.get("gamma0", base.gamma0)),
            "gamma2": float(bd.get("gamma2", base.gamma2)),
            "qx": float(bd.get("qx", base.qx)),
        }
        base = ControlParams(**fields)
    kwargs = {k: d[k] for k in d if k not in ("base",)}
    kwargs["base"] = base
    return PathSpec(**kwargs)


def load_path_spec(path) -> PathSpec:
    """Load a PathSpec from a TOML file with a top-level [path] table."""
    try:
        import tomllib
    except ModuleNotFoundError:  # Python 3.10
        import tomli as tomllib
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    unknown = set(data) - {"path"}
    if unknown:
        raise ValueError(f"unknown top-level sections: {sorted(unknown)}")
    if "path" not in data:
        raise ValueError("config file must contain a [path] table")
    return path_spec_from_dict(data["path"])
