"""Weighted-norm diagnostics on spectral states and trajectories.

Everything in this module is pure evaluation.  It turns states produced
by the solver into the bookkeeping quantities the stability analysis is
phrased in: instantaneous weighted Sobolev norms, their Linf/L2 time
composites (the A and B norms), the fourteen-row bootstrap panel, and
the end-state bound report with measured constants.

Conventions shared by every evaluator here:

* Frequency labels are mapped to absolute eta via the frame origin
  t - t_frame before any weight is applied, so all diagnostics are
  invariant under the solver's exact relabelling remaps.
* The Sobolev bracket uses absolute (k, eta, l); the moving-frame
  symbols use eta - k t.  Derivative prefixes act as per-mode symbol
  products.
* Time quadrature is trapezoidal on the sampled grid.  Sampling is
  decoupled from the solver step, so composites converge as the
  sampling cadence is refined, not as dt is.
* Implied constants are measured outputs.  Nothing here asserts a
  bound; reports carry lhs, the rhs scaling, and their ratio.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .multipliers import DEFAULT_K_MAX, m_combined_array, upsilon_array
from .spectral import (
    GridSpec,
    MhdState,
    PhysParams,
    SpectralScalarField,
    SpectralVectorField,
    mode_class_masks,
)

# ---------------------------------------------------------------------------
# norm specifications

#: Derivative prefixes, as per-mode squared symbol factors.  "dXZ" is the
#: vector (dX, dZ); composing it with itself gives the full second-order
#: family (dX,dZ)^2 since the tensor square telescopes to (k^2+l^2)^2.
#: "one_dZ2" is the operator set {1, dZ, dZZ}, squared weight 1+l^2+l^4.
PREFIX_SYMBOLS = (
    "dX",
    "dZ",
    "dYL",
    "grad",
    "absgrad",
    "dX_inv_grad",
    "dXZ",
    "one_dZ2",
)

NORM_BASES = ("HN",)
NORM_WEIGHTS = ("none", "M", "sqrt_Upsilon", "exp_ed")
NORM_CLASSES = ("zero", "homogeneous", "nonhomogeneous", "all_nonzero")
TIME_AGGREGATES = ("Linf", "L2", "pointwise")

#: Classes with no k = 0 content; |grad|^{-1} dX is only defined there.
_NONZERO_CLASSES = ("homogeneous", "nonhomogeneous", "all_nonzero")


@dataclass(frozen=True)
class NormSpec:
    """One weighted Sobolev norm: base H^n on a mode class, an optional
    multiplier weight, and a derivative prefix applied symbol-wise.

    weight "M" is the combined bookkeeping multiplier (m1 m2 with the
    slow exponential for k != 0, m3 for k = 0), "sqrt_Upsilon" the echo
    weight on the zero class, "exp_ed" the bare enhanced-dissipation
    factor exp(delta0 nu^{1/3} t).
    """

    n: float
    weight: str = "none"
    prefix: tuple[str, ...] = ()
    mode_class: str = "all_nonzero"
    time_aggregate: str = "pointwise"
    base: str = "HN"

    def __post_init__(self) -> None:
        object.__setattr__(self, "prefix", tuple(self.prefix))
        if self.base not in NORM_BASES:
            raise ValueError(f"unknown norm base {self.base!r}")
        if self.n < 0:
            raise ValueError(f"negative Sobolev index {self.n}")
        if self.weight not in NORM_WEIGHTS:
            raise ValueError(f"unknown weight {self.weight!r}; choose from {NORM_WEIGHTS}")
        if self.mode_class not in NORM_CLASSES:
            raise ValueError(f"unknown mode class {self.mode_class!r}; choose from {NORM_CLASSES}")
        if self.time_aggregate not in TIME_AGGREGATES:
            raise ValueError(f"unknown time aggregate {self.time_aggregate!r}")
        for sym in self.prefix:
            if sym not in PREFIX_SYMBOLS:
                raise ValueError(f"unknown prefix symbol {sym!r}; choose from {PREFIX_SYMBOLS}")
        if self.weight == "sqrt_Upsilon" and self.mode_class != "zero":
            raise ValueError("sqrt_Upsilon weight is defined on the zero class only")
        if self.weight == "exp_ed" and self.mode_class == "zero":
            raise ValueError("exp_ed weights the enhanced dissipation of k != 0 modes")
        if "dX_inv_grad" in self.prefix and self.mode_class not in _NONZERO_CLASSES:
            raise ValueError("dX_inv_grad requires a k != 0 mode class")


def _prefix_factor(
    sym: str, kk: np.ndarray, ll: np.ndarray, shifted: np.ndarray, p: np.ndarray
) -> np.ndarray:
    if sym == "dX":
        return kk * kk
    if sym == "dZ":
        return ll * ll
    if sym == "dYL":
        return shifted * shifted
    if sym in ("grad", "absgrad"):
        return p
    if sym == "dX_inv_grad":
        # p = 0 only at the origin, which has k = 0; the quotient is 0 there.
        return np.divide(kk * kk, p, out=np.zeros(np.broadcast(kk, p).shape), where=p > 0)
    if sym == "dXZ":
        return kk * kk + ll * ll
    if sym == "one_dZ2":
        return 1.0 + ll * ll + ll**4
    raise ValueError(f"unknown prefix symbol {sym!r}")


def _class_mask(grid: GridSpec, params: PhysParams, mode_class: str) -> np.ndarray:
    masks = mode_class_masks(grid, params.sigma)
    if mode_class == "all_nonzero":
        return masks["homogeneous"] | masks["nonhomogeneous"]
    return masks[mode_class]


def norm_weight2(
    grid: GridSpec,
    spec: NormSpec,
    params: PhysParams,
    t: float,
    t_frame: float = 0.0,
    k_max: int = DEFAULT_K_MAX,
) -> np.ndarray:
    """Per-mode squared weight realizing ``spec`` at absolute time t.

    ``t_frame`` is the shear age of the coefficient labels; the frame
    origin t - t_frame converts them to absolute eta, which feeds both
    the Sobolev bracket and the multiplier weights.
    """
    kk, ll = grid.k3, grid.l3
    eta_abs = grid.eta3 + kk * (t - t_frame)
    shifted = grid.eta3 - kk * t_frame
    p = kk * kk + shifted * shifted + ll * ll
    w2 = (1.0 + kk * kk + eta_abs * eta_abs + ll * ll) ** spec.n
    for sym in spec.prefix:
        w2 = w2 * _prefix_factor(sym, kk, ll, shifted, p)
    if spec.weight == "M":
        w2 = w2 * m_combined_array(t, kk, eta_abs, ll, params, k_max) ** 2
    elif spec.weight == "sqrt_Upsilon":
        # Only read on the k = 0 plane (class is validated to be zero),
        # where eta_abs equals the label eta.
        w2 = w2 * upsilon_array(t, 0, grid.eta3, k_max)
    elif spec.weight == "exp_ed":
        w2 = w2 * math.exp(2.0 * params.delta0 * params.nu ** (1.0 / 3.0) * t)
    return w2 * _class_mask(grid, params, spec.mode_class)


AnyField = SpectralScalarField | SpectralVectorField


def _mag2(coeffs: np.ndarray) -> np.ndarray:
    """|coeffs|^2 collapsed over any leading component axes."""
    m2 = coeffs.real**2 + coeffs.imag**2
    return m2.reshape(-1, *coeffs.shape[-3:]).sum(axis=0)


def weighted_norm(
    t: float,
    f: AnyField,
    spec: NormSpec,
    params: PhysParams,
    k_max: int = DEFAULT_K_MAX,
) -> float:
    """Instantaneous weighted H^n norm of one spectral field at absolute
    time t; the field's own t_frame supplies the label frame."""
    w2 = norm_weight2(f.grid, spec, params, t, f.t_frame, k_max)
    return float(np.sqrt(np.sum(w2 * _mag2(f.coeffs)) / f.grid.m))


# ---------------------------------------------------------------------------
# time series and composites

Sample = tuple[float, AnyField]


@dataclass
class DiagnosticSeries:
    """Sampled values of one norm spec along a trajectory.

    ``aggregates`` is (Linf, L2) with the L2 member the square root of
    the trapezoidal integral of values^2; it is filled by finalize().
    """

    spec: NormSpec
    times: np.ndarray
    values: np.ndarray
    aggregates: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be equal-length 1d arrays")
        if self.times.size and np.any(np.diff(self.times) < 0):
            raise ValueError("sample times must be nondecreasing")
        if np.any(self.values < 0):
            raise ValueError("norm values cannot be negative")

    @classmethod
    def from_samples(
        cls,
        samples: Sequence[Sample],
        spec: NormSpec,
        params: PhysParams,
        k_max: int = DEFAULT_K_MAX,
    ) -> "DiagnosticSeries":
        times = np.array([t for t, _ in samples], dtype=np.float64)
        vals = np.array(
            [weighted_norm(t, f, spec, params, k_max) for t, f in samples]
        )
        out = cls(spec=spec, times=times, values=vals)
        out.finalize()
        return out

    def finalize(self) -> "DiagnosticSeries":
        if self.times.size == 0:
            raise ValueError("cannot aggregate an empty series")
        l2 = math.sqrt(float(np.trapezoid(self.values**2, self.times)))
        self.aggregates = (float(self.values.max()), l2)
        return self

    @property
    def linf(self) -> float:
        if self.aggregates is None:
            raise ValueError("series not finalized")
        return self.aggregates[0]

    @property
    def l2(self) -> float:
        if self.aggregates is None:
            raise ValueError("series not finalized")
        return self.aggregates[1]


def _composite_samples(
    samples: Sequence[Sample],
    spec: NormSpec,
    params: PhysParams,
    kind: str,
    k_max: int,
) -> float:
    """Shared A/B composite: Linf of the weighted norm plus L2 members
    with extra per-mode factors (grad_L, dX |grad_L|^{-1} or sqrt(-Upsilon))."""
    if len(samples) == 0:
        raise ValueError("cannot evaluate a time composite on an empty series")
    times = np.array([t for t, _ in samples], dtype=np.float64)
    if np.any(np.diff(times) < 0):
        raise ValueError("sample times must be nondecreasing")
    v2 = np.empty(times.size)
    g2 = np.empty(times.size)
    x2 = np.empty(times.size)
    for i, (t, f) in enumerate(samples):
        grid = f.grid
        w2 = norm_weight2(grid, spec, params, t, f.t_frame, k_max)
        kk, ll = grid.k3, grid.l3
        shifted = grid.eta3 - kk * f.t_frame
        p = kk * kk + shifted * shifted + ll * ll
        mag2 = _mag2(f.coeffs)
        v2[i] = np.sum(w2 * mag2) / grid.m
        g2[i] = np.sum(w2 * p * mag2) / grid.m
        if kind == "A":
            xfac = _prefix_factor("dX_inv_grad", kk, ll, shifted, p)
        else:
            xfac = upsilon_array(t, 0, grid.eta3, k_max)
        x2[i] = np.sum(w2 * xfac * mag2) / grid.m
    nu = params.nu
    linf = math.sqrt(float(v2.max()))
    ig = math.sqrt(float(np.trapezoid(g2, times)))
    ix = math.sqrt(float(np.trapezoid(x2, times)))
    if kind == "A":
        iv = math.sqrt(float(np.trapezoid(v2, times)))
        return linf + math.sqrt(nu) * ig + ix + nu ** (1.0 / 6.0) * iv
    return linf + math.sqrt(nu) * ig + ix


def an_norm(
    samples: Sequence[Sample],
    spec: NormSpec,
    params: PhysParams,
    k_max: int = DEFAULT_K_MAX,
) -> float:
    """Four-term A composite of a sampled field:

        max_t |f|_{H^n} + nu^{1/2} L2(|grad_L f|_{H^n})
        + L2(|dX |grad_L|^{-1} f|_{H^n}) + nu^{1/6} L2(|f|_{H^n}),

    with trapezoidal time quadrature over the sampled interval.  The
    spec's weight and prefix are applied inside every member.  A single
    sample degenerates to the plain weighted norm.
    """
    return _composite_samples(samples, spec, params, "A", k_max)


def b_norm(
    samples: Sequence[Sample],
    spec: NormSpec,
    params: PhysParams,
    k_max: int = DEFAULT_K_MAX,
) -> float:
    """Zero-mode composite: max_t |g|_{H^n} + nu^{1/2} L2(|grad_L g|_{H^n})
    + L2 of the echo-weighted norm (squared weight Upsilon >= 0, the
    negated echo symbol per the multipliers convention)."""
    if spec.mode_class != "zero":
        raise ValueError("the B composite is defined on the zero-mode class only")
    return _composite_samples(samples, spec, params, "B", k_max)


# ---------------------------------------------------------------------------
# derived-field magnitudes

#: Squared-magnitude lattices derivable from one state.  Elsasser
#: composites z+- = u +- b stand in for the oscillation-conjugated good
#: unknowns: the conjugation is unimodular per mode, so every weighted
#: norm of W and F = lap_L W can be read off z directly.  Keys map to a
#: list of tracks; a bound quoted for a pair (both signs) gets one track
#: per sign and reports are the maximum over tracks.
_FIELD_BUILDERS: dict[str, Callable[[dict], list[np.ndarray]]] = {
    "W2": lambda c: [c["zp"][1], c["zm"][1]],
    "W3": lambda c: [c["zp"][2], c["zm"][2]],
    "W0": lambda c: [c["zp"].sum(axis=0), c["zm"].sum(axis=0)],
    "F1": lambda c: [c["p2"] * c["zp"][0], c["p2"] * c["zm"][0]],
    "F2": lambda c: [c["p2"] * c["zp"][1], c["p2"] * c["zm"][1]],
    "F3": lambda c: [c["p2"] * c["zp"][2], c["p2"] * c["zm"][2]],
    "U1": lambda c: [c["u"][0]],
    "U2": lambda c: [c["u"][1]],
    "U3": lambda c: [c["u"][2]],
    "B1": lambda c: [c["b"][0]],
    "B2": lambda c: [c["b"][1]],
    "B3": lambda c: [c["b"][2]],
    "B23": lambda c: [c["b"][1] + c["b"][2]],
    "Q2": lambda c: [c["p2"] * c["u"][1]],
    "Q3": lambda c: [c["p2"] * c["u"][2]],
    "G2": lambda c: [c["p2"] * c["b"][1]],
    "G3": lambda c: [c["p2"] * c["b"][2]],
    "UB": lambda c: [c["u"].sum(axis=0) + c["b"].sum(axis=0)],
}


def _field_mag2(state: MhdState) -> dict:
    """Component-wise |coeff|^2 for u, b and the Elsasser composites,
    plus p(t_frame)^2 for lap_L-derived quantities."""
    u, b = state.u.coeffs, state.b.coeffs
    grid = state.u.grid
    kk, ll = grid.k3, grid.l3
    shifted = grid.eta3 - kk * state.u.t_frame
    p = kk * kk + shifted * shifted + ll * ll
    zp = u + b
    zm = u - b
    return {
        "u": u.real**2 + u.imag**2,
        "b": b.real**2 + b.imag**2,
        "zp": zp.real**2 + zp.imag**2,
        "zm": zm.real**2 + zm.imag**2,
        "p2": p * p,
    }


# ---------------------------------------------------------------------------
# streaming accumulation of composite members

@dataclass(frozen=True)
class _MemberDef:
    """One normed quantity tracked along a trajectory.

    kind selects the time composite: "A" and "B" are the four- and
    three-term composites, "linf" and "l2" bare aggregates.  inv_t
    multiplies the integrand by <t>^{-1} = (1+t^2)^{-1/2}.
    """

    field: str
    track: int
    n: float
    prefix: tuple[str, ...]
    weight: str
    mode_class: str
    kind: str
    inv_t: bool = False


class _MemberAccumulator:
    __slots__ = ("vmax", "iv", "ig", "ix", "prev")

    def __init__(self) -> None:
        self.vmax = 0.0
        self.iv = 0.0
        self.ig = 0.0
        self.ix = 0.0
        self.prev: tuple[float, float, float] | None = None

    def push(self, dt: float, v2: float, g2: float, x2: float) -> None:
        if self.prev is not None:
            pv, pg, px = self.prev
            self.iv += 0.5 * dt * (pv + v2)
            self.ig += 0.5 * dt * (pg + g2)
            self.ix += 0.5 * dt * (px + x2)
        self.prev = (v2, g2, x2)
        self.vmax = max(self.vmax, v2)

    def value(self, kind: str, nu: float) -> float:
        if kind == "A":
            return (
                math.sqrt(self.vmax)
                + math.sqrt(nu) * math.sqrt(self.ig)
                + math.sqrt(self.ix)
                + nu ** (1.0 / 6.0) * math.sqrt(self.iv)
            )
        if kind == "B":
            return math.sqrt(self.vmax) + math.sqrt(nu) * math.sqrt(self.ig) + math.sqrt(self.ix)
        if kind == "linf":
            return math.sqrt(self.vmax)
        return math.sqrt(self.iv)


class _NormEngine:
    """Evaluates a fixed set of members over streamed states.

    Shared per-sample work (multiplier lattice, Sobolev brackets, class
    masks) is computed once per push and reused across members.
    """

    def __init__(self, params: PhysParams, members: Sequence[_MemberDef], k_max: int):
        self.params = params
        self.members = tuple(members)
        self.k_max = k_max
        self.accs = [_MemberAccumulator() for _ in members]
        self.grid: GridSpec | None = None
        self.prev_t: float | None = None
        self.samples = 0
        self._masks: dict[str, np.ndarray] = {}

    def push(self, state: MhdState) -> None:
        grid = state.u.grid
        if self.grid is None:
            self.grid = grid
            masks = mode_class_masks(grid, self.params.sigma)
            masks["all_nonzero"] = masks["homogeneous"] | masks["nonhomogeneous"]
            self._masks = {cls: m.astype(np.float64) for cls, m in masks.items()}
        elif grid != self.grid:
            raise ValueError("streamed states changed grids")
        t = float(state.t)
        if self.prev_t is not None and t < self.prev_t:
            raise ValueError("streamed states must arrive in time order")
        dt = 0.0 if self.prev_t is None else t - self.prev_t

        age = state.u.t_frame
        kk, ll = grid.k3, grid.l3
        eta_abs = grid.eta3 + kk * (t - age)
        shifted = grid.eta3 - kk * age
        p = kk * kk + shifted * shifted + ll * ll
        jap2 = 1.0 + kk * kk + eta_abs * eta_abs + ll * ll
        mags = _field_mag2(state)

        jap_pow: dict[float, np.ndarray] = {}
        weights: dict[str, np.ndarray | float] = {"none": 1.0}
        xfac = _prefix_factor("dX_inv_grad", kk, ll, shifted, p)
        ups: np.ndarray | None = None
        inv_t2 = 1.0 / (1.0 + t * t)

        for mem, acc in zip(self.members, self.accs):
            if mem.n not in jap_pow:
                jap_pow[mem.n] = jap2**mem.n
            if mem.weight not in weights:
                if mem.weight == "M":
                    weights["M"] = (
                        m_combined_array(t, kk, eta_abs, ll, self.params, self.k_max) ** 2
                    )
                elif mem.weight == "exp_ed":
                    weights["exp_ed"] = math.exp(
                        2.0 * self.params.delta0 * self.params.nu ** (1.0 / 3.0) * t
                    )
                else:
                    raise ValueError(f"weight {mem.weight!r} not streamable")
            w2 = jap_pow[mem.n] * self._masks[mem.mode_class]
            for sym in mem.prefix:
                w2 = w2 * _prefix_factor(sym, kk, ll, shifted, p)
            w2 = w2 * weights[mem.weight]
            mag2 = _FIELD_BUILDERS[mem.field](mags)[mem.track]
            v2 = float(np.sum(w2 * mag2)) / grid.m
            g2 = float(np.sum(w2 * p * mag2)) / grid.m
            if mem.kind == "B":
                if ups is None:
                    ups = upsilon_array(t, 0, grid.eta3, self.k_max)
                x2 = float(np.sum(w2 * ups * mag2)) / grid.m
            elif mem.kind == "A":
                x2 = float(np.sum(w2 * xfac * mag2)) / grid.m
            else:
                x2 = 0.0
            if mem.inv_t:
                v2 *= inv_t2
                g2 *= inv_t2
                x2 *= inv_t2
            acc.push(dt, v2, g2, x2)

        self.prev_t = t
        self.samples += 1

    def values(self) -> list[float]:
        if self.samples < 2:
            raise ValueError("need at least two samples to aggregate in time")
        return [
            acc.value(mem.kind, self.params.nu)
            for mem, acc in zip(self.members, self.accs)
        ]


def _track_count(fld: str) -> int:
    return 2 if fld in ("W2", "W3", "W0", "F1", "F2", "F3") else 1


# ---------------------------------------------------------------------------
# bound reports

@dataclass(frozen=True)
class BoundRow:
    """One measured inequality: lhs against scale * epsilon, with the
    implied constant lhs / rhs.  For rows carrying a C0 power the
    per-row fit (lhs / (8 nu^a eps))^{1/pow} is kept alongside."""

    bound_id: str
    statement: str
    mode_class: str
    n_used: float
    lhs: float
    rhs_scale: str
    rhs: float
    measured_constant: float
    implied_c0: float | None = None


@dataclass
class BoundReport:
    """Rows plus the shared normalization they were measured against."""

    rows: list[BoundRow]
    epsilon: float
    n: float
    nu: float
    c0: float | None = None

    def row(self, bound_id: str) -> BoundRow:
        for r in self.rows:
            if r.bound_id == bound_id:
                return r
        raise KeyError(bound_id)

    @property
    def max_constant(self) -> float:
        return max(r.measured_constant for r in self.rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["bound_id", "statement", "lhs", "rhs_scale", "measured_constant", "mode_class", "n_used"]
            )
            for r in self.rows:
                w.writerow(
                    [r.bound_id, r.statement, repr(r.lhs), r.rhs_scale, repr(r.measured_constant), r.mode_class, repr(r.n_used)]
                )


def constant_ratios(a: BoundReport, b: BoundReport) -> dict[str, float]:
    """Per-row measured-constant ratios b/a, for refinement and cross-nu
    comparisons; a blow-up shows as a ratio well above 1."""
    out = {}
    for ra in a.rows:
        rb = b.row(ra.bound_id)
        out[ra.bound_id] = math.inf if ra.measured_constant == 0 else rb.measured_constant / ra.measured_constant
    return out


def _joint_hn2_norm(state: MhdState, n: float) -> float:
    """|(u, b)|_{H^{n+2}} with absolute eta labels, the smallness input
    the bounds are normalized by."""
    grid = state.u.grid
    kk = grid.k3
    eta_abs = grid.eta3 + kk * (state.t - state.u.t_frame)
    jap2 = (1.0 + kk * kk + eta_abs * eta_abs + grid.l3**2) ** (n + 2.0)
    tot = np.sum(jap2 * (_mag2(state.u.coeffs) + _mag2(state.b.coeffs)))
    return float(np.sqrt(tot / grid.m))


# ---------------------------------------------------------------------------
# the bootstrap panel

@dataclass(frozen=True)
class _PanelMember:
    field: str
    prefix: tuple[str, ...] = ()
    coef_nu_pow: float = 0.0
    n_shift: int = 0
    inv_t: bool = False
    own_nu_pow: float = 0.0  # grouped rows: per-member rhs power


@dataclass(frozen=True)
class _PanelRowDef:
    row_id: str
    statement: str
    mode_class: str
    kind: str  # composite applied to every member: "A" or "B"
    members: tuple[_PanelMember, ...]
    c0_pow: int
    nu_pow: float
    rhs_scale: str
    combine: str = "sum"
    n_report: int = 0  # shift of the row's headline Sobolev index


_M = _PanelMember

#: The fourteen bootstrap rows.  Quantities with a +- pair (W, F based)
#: are measured for both signs and reported as the maximum.
_PANEL_ROWS: tuple[_PanelRowDef, ...] = (
    _PanelRowDef(
        "nh-symv2",
        "A^N[ (dX,dZ)|grad| M W2_NH ] <= 8 eps",
        "nonhomogeneous", "A", (_M("W2", ("dXZ", "absgrad")),), 0, 0.0, "8*eps",
    ),
    _PanelRowDef(
        "nh-f2",
        "A^N[ M F2_NH ] <= 8 C0 nu^-1/3 eps",
        "nonhomogeneous", "A", (_M("F2"),), 1, -1.0 / 3.0, "8*C0*nu^-1/3*eps",
    ),
    _PanelRowDef(
        "nh-w3",
        "A^N[ (dX,dZ)^2 M W3_NH ] <= 8 C0 eps",
        "nonhomogeneous", "A", (_M("W3", ("dXZ", "dXZ")),), 1, 0.0, "8*C0*eps",
    ),
    _PanelRowDef(
        "nh-f3",
        "A^N[ M F3_NH ] <= 8 C0^2 nu^-2/3 eps",
        "nonhomogeneous", "A", (_M("F3"),), 2, -2.0 / 3.0, "8*C0^2*nu^-2/3*eps",
    ),
    _PanelRowDef(
        "vh-q2",
        "A^N[ M Q2_H ] <= 8 nu^-1/3 eps",
        "homogeneous", "A", (_M("Q2"),), 0, -1.0 / 3.0, "8*nu^-1/3*eps",
    ),
    _PanelRowDef(
        "vh-q2-lo",
        "A^{N-1}[ <t>^-1 M Q2_H ] <= 8 eps",
        "homogeneous", "A", (_M("Q2", n_shift=-1, inv_t=True),), 0, 0.0, "8*eps",
        n_report=-1,
    ),
    _PanelRowDef(
        "vh-u3",
        "nu^1/3 A^N[ dXX M U3_H ] + A^{N-2}[ dXX M U3_H ] <= 8 C0 eps",
        "homogeneous", "A",
        (
            _M("U3", ("dX", "dX"), coef_nu_pow=1.0 / 3.0),
            _M("U3", ("dX", "dX"), n_shift=-2),
        ),
        1, 0.0, "8*C0*eps",
    ),
    _PanelRowDef(
        "vh-q3",
        "nu^1/3 A^N[ M Q3_H ] + A^{N-2}[ M Q3_H ] <= 8 C0^2 nu^-2/3 eps",
        "homogeneous", "A",
        (_M("Q3", coef_nu_pow=1.0 / 3.0), _M("Q3", n_shift=-2)),
        2, -2.0 / 3.0, "8*C0^2*nu^-2/3*eps",
    ),
    _PanelRowDef(
        "mh-b2",
        "A^N[ dX M B2_H ] + nu^1/6 A^N[ dXX M B2_H ] <= 8 eps",
        "homogeneous", "A",
        (_M("B2", ("dX",)), _M("B2", ("dX", "dX"), coef_nu_pow=1.0 / 6.0)),
        0, 0.0, "8*eps",
    ),
    _PanelRowDef(
        "mh-h2",
        "nu^1/3 A^N[ dYL M B2_H ] + nu^1/2 A^N[ dXYL M B2_H ] + nu^2/3 A^N[ M G2_H ] <= 8 C0 eps",
        "homogeneous", "A",
        (
            _M("B2", ("dYL",), coef_nu_pow=1.0 / 3.0),
            _M("B2", ("dX", "dYL"), coef_nu_pow=0.5),
            _M("G2", coef_nu_pow=2.0 / 3.0),
        ),
        1, 0.0, "8*C0*eps",
    ),
    _PanelRowDef(
        "mh-b3",
        "nu^1/3 A^N[ dXX M B3_H ] + A^N[ dX M B3_H ] <= 8 C0 eps",
        "homogeneous", "A",
        (_M("B3", ("dX", "dX"), coef_nu_pow=1.0 / 3.0), _M("B3", ("dX",))),
        1, 0.0, "8*C0*eps",
    ),
    _PanelRowDef(
        "mh-h3",
        "nu^1/3 A^N[ M G3_H ] + A^{N-2}[ M G3_H ] <= 8 C0^2 nu^-2/3 eps",
        "homogeneous", "A",
        (_M("G3", coef_nu_pow=1.0 / 3.0), _M("G3", n_shift=-2)),
        2, -2.0 / 3.0, "8*C0^2*nu^-2/3*eps",
    ),
    _PanelRowDef(
        "z-f0",
        "B[ M F1_0 ] <= 8 nu^-2/3 eps; B[ M F2_0 ] <= 8 nu^-1/3 eps; B[ M F3_0 ] <= 8 nu^-2/3 eps",
        "zero", "B",
        (
            _M("F1", own_nu_pow=-2.0 / 3.0),
            _M("F2", own_nu_pow=-1.0 / 3.0),
            _M("F3", own_nu_pow=-2.0 / 3.0),
        ),
        0, 0.0, "8*eps (members pre-divided by their nu powers)",
        combine="max",
    ),
    _PanelRowDef(
        "z-w0",
        "B[ (1,dZ)^2 M W_0 ] <= 8 eps",
        "zero", "B", (_M("W0", ("one_dZ2",)),), 0, 0.0, "8*eps",
    ),
)

BOOTSTRAP_ROW_IDS = tuple(r.row_id for r in _PANEL_ROWS)


class BootstrapAccumulator:
    """Streaming bootstrap panel: push(state) at each sample (usable as
    a run observer), finalize() once for the fourteen-row report.

    epsilon defaults to the joint H^{N+2} size of the first pushed
    state; c0 defaults to the smallest value >= 1 making every
    C0-carrying row close (the fit the panel is normalized with).
    """

    def __init__(
        self,
        params: PhysParams,
        n: float = 5.0,
        epsilon: float | None = None,
        c0: float | None = None,
        k_max: int = DEFAULT_K_MAX,
    ):
        self.params = params
        self.n = float(n)
        self.epsilon = epsilon
        self.c0 = c0
        members = []
        self._spans: list[tuple[int, int]] = []  # member -> engine index range
        for row in _PANEL_ROWS:
            for mem in row.members:
                start = len(members)
                for track in range(_track_count(mem.field)):
                    members.append(
                        _MemberDef(
                            field=mem.field,
                            track=track,
                            n=self.n + mem.n_shift,
                            prefix=mem.prefix,
                            weight="M",
                            mode_class=row.mode_class,
                            kind=row.kind,
                            inv_t=mem.inv_t,
                        )
                    )
                self._spans.append((start, len(members)))
        self._engine = _NormEngine(params, members, k_max)

    def push(self, state: MhdState) -> None:
        if self.epsilon is None:
            self.epsilon = _joint_hn2_norm(state, self.n)
        self._engine.push(state)

    def finalize(self) -> BoundReport:
        vals = self._engine.values()
        nu = self.params.nu
        eps = float(self.epsilon if self.epsilon is not None else 0.0)

        member_vals: list[float] = [
            max(vals[a:b]) for a, b in self._spans
        ]
        idx = 0
        lhs_list: list[float] = []
        implied: list[float | None] = []
        for row in _PANEL_ROWS:
            mv = member_vals[idx : idx + len(row.members)]
            idx += len(row.members)
            if row.combine == "max":
                lhs = max(v * nu ** (-m.own_nu_pow) for v, m in zip(mv, row.members))
            else:
                lhs = sum(v * nu**m.coef_nu_pow for v, m in zip(mv, row.members))
            lhs_list.append(lhs)
            if row.c0_pow > 0 and eps > 0:
                implied.append((lhs / (8.0 * nu**row.nu_pow * eps)) ** (1.0 / row.c0_pow))
            else:
                implied.append(None)

        c0 = self.c0
        if c0 is None:
            c0 = max([1.0] + [v for v in implied if v is not None])

        rows = []
        for row, lhs, imp in zip(_PANEL_ROWS, lhs_list, implied):
            rhs = 8.0 * c0**row.c0_pow * nu**row.nu_pow * eps
            const = lhs / rhs if rhs > 0 else (0.0 if lhs == 0.0 else math.inf)
            rows.append(
                BoundRow(
                    bound_id=row.row_id,
                    statement=row.statement,
                    mode_class=row.mode_class,
                    n_used=self.n + row.n_report,
                    lhs=lhs,
                    rhs_scale=row.rhs_scale,
                    rhs=rhs,
                    measured_constant=const,
                    implied_c0=imp,
                )
            )
        return BoundReport(rows=rows, epsilon=eps, n=self.n, nu=nu, c0=float(c0))


def bootstrap_panel(
    traj,
    params: PhysParams | None = None,
    n: float = 5.0,
    epsilon: float | None = None,
    c0: float | None = None,
    k_max: int = DEFAULT_K_MAX,
) -> BoundReport:
    """Evaluate the fourteen bootstrap rows over a trajectory's stored
    snapshots.  Long runs should stream a BootstrapAccumulator through
    run(..., observers=...) instead of retaining snapshots."""
    snaps = getattr(traj, "snapshots", traj)
    if len(snaps) < 2:
        raise ValueError(
            "bootstrap panel needs at least two snapshots; rerun with snapshot_stride"
        )
    if params is None:
        params = snaps[0][1].params
    acc = BootstrapAccumulator(params, n=n, epsilon=epsilon, c0=c0, k_max=k_max)
    for _, st in snaps:
        acc.push(st)
    return acc.finalize()


# ---------------------------------------------------------------------------
# end-state stability bounds

@dataclass(frozen=True)
class _StabilityMember:
    field: str
    prefix: tuple[str, ...]
    kind: str  # "linf" (with the slow exponential weight) or "l2"
    coef_nu_pow: float = 0.0


@dataclass(frozen=True)
class _StabilityRowDef:
    row_id: str
    statement: str
    mode_class: str
    n_shift: int
    members: tuple[_StabilityMember, ...]
    nu_pow: float
    rhs_scale: str


_S = _StabilityMember

#: The six end-state bounds.  Linf members carry exp(delta0 nu^{1/3} t)
#: inside the norm; L2 members are unweighted and enter with nu^{1/6}.
_STABILITY_ROWS: tuple[_StabilityRowDef, ...] = (
    _StabilityRowDef(
        "thm-u1",
        "Linf[ e^{d0 nu^1/3 t} (dX,dZ) dX U1_neq ]_{H^{N-2}}"
        " + nu^1/6 L2[ (dX,dZ) dX U1_neq ]_{H^{N-2}} <= C eps",
        "all_nonzero", -2,
        (
            _S("U1", ("dXZ", "dX"), "linf"),
            _S("U1", ("dXZ", "dX"), "l2", 1.0 / 6.0),
        ),
        0.0, "eps",
    ),
    _StabilityRowDef(
        "thm-u2",
        "Linf[ e^{d0 nu^1/3 t} (dX,dZ) grad_L U2_neq ]_{H^{N-2}} + L2[ U2_neq ]_{H^{N-2}}"
        " + nu^1/6 L2[ (dX,dZ) grad_L U2_neq ]_{H^{N-2}} <= C eps",
        "all_nonzero", -2,
        (
            _S("U2", ("dXZ", "grad"), "linf"),
            _S("U2", (), "l2"),
            _S("U2", ("dXZ", "grad"), "l2", 1.0 / 6.0),
        ),
        0.0, "eps",
    ),
    _StabilityRowDef(
        "thm-u3",
        "Linf[ e^{d0 nu^1/3 t} (dX,dZ)^2 U3_neq ]_{H^{N-2}}"
        " + nu^1/6 L2[ (dX,dZ)^2 U3_neq ]_{H^{N-2}} <= C eps",
        "all_nonzero", -2,
        (
            _S("U3", ("dXZ", "dXZ"), "linf"),
            _S("U3", ("dXZ", "dXZ"), "l2", 1.0 / 6.0),
        ),
        0.0, "eps",
    ),
    _StabilityRowDef(
        "thm-b1",
        "Linf[ e^{d0 nu^1/3 t} dX B1_neq ]_{H^N}"
        " + nu^1/6 L2[ (dX,dZ) dX B1_neq ]_{H^N} <= C nu^-1/3 eps",
        "all_nonzero", 0,
        (
            _S("B1", ("dX",), "linf"),
            _S("B1", ("dXZ", "dX"), "l2", 1.0 / 6.0),
        ),
        -1.0 / 3.0, "nu^-1/3*eps",
    ),
    _StabilityRowDef(
        "thm-b23",
        "Linf[ e^{d0 nu^1/3 t} (dX,dZ) (B2,B3)_neq ]_{H^N}"
        " + nu^1/6 L2[ (dX,dZ) (B2,B3)_neq ]_{H^N} <= C eps",
        "all_nonzero", 0,
        (
            _S("B23", ("dXZ",), "linf"),
            _S("B23", ("dXZ",), "l2", 1.0 / 6.0),
        ),
        0.0, "eps",
    ),
    _StabilityRowDef(
        "thm-ub0",
        "Linf[ (1,dZ)^2 (U_0, B_0) ]_{H^N} <= C eps",
        "zero", 0,
        (_S("UB", ("one_dZ2",), "linf"),),
        0.0, "eps",
    ),
)

THEOREM_ROW_IDS = tuple(r.row_id for r in _STABILITY_ROWS)


class TheoremAccumulator:
    """Streaming end-state bound check; same push/finalize protocol as
    the bootstrap accumulator."""

    def __init__(
        self,
        params: PhysParams,
        n: float = 5.0,
        epsilon: float | None = None,
        k_max: int = DEFAULT_K_MAX,
    ):
        self.params = params
        self.n = float(n)
        self.epsilon = epsilon
        members = []
        for row in _STABILITY_ROWS:
            for mem in row.members:
                # The slow exponential rides only inside Linf members;
                # the zero-mode row is unweighted.
                weight = "exp_ed" if mem.kind == "linf" and row.mode_class != "zero" else "none"
                members.append(
                    _MemberDef(
                        field=mem.field,
                        track=0,
                        n=self.n + row.n_shift,
                        prefix=mem.prefix,
                        weight=weight,
                        mode_class=row.mode_class,
                        kind=mem.kind,
                    )
                )
        self._engine = _NormEngine(params, members, k_max)

    def push(self, state: MhdState) -> None:
        if self.epsilon is None:
            self.epsilon = _joint_hn2_norm(state, self.n)
        self._engine.push(state)

    def finalize(self) -> BoundReport:
        vals = self._engine.values()
        nu = self.params.nu
        eps = float(self.epsilon if self.epsilon is not None else 0.0)
        rows = []
        idx = 0
        for row in _STABILITY_ROWS:
            mv = vals[idx : idx + len(row.members)]
            idx += len(row.members)
            lhs = sum(v * nu**m.coef_nu_pow for v, m in zip(mv, row.members))
            rhs = nu**row.nu_pow * eps
            const = lhs / rhs if rhs > 0 else (0.0 if lhs == 0.0 else math.inf)
            rows.append(
                BoundRow(
                    bound_id=row.row_id,
                    statement=row.statement,
                    mode_class=row.mode_class,
                    n_used=self.n + row.n_shift,
                    lhs=lhs,
                    rhs_scale=row.rhs_scale,
                    rhs=rhs,
                    measured_constant=const,
                )
            )
        return BoundReport(rows=rows, epsilon=eps, n=self.n, nu=nu, c0=None)


def theorem_bound_check(
    traj,
    params: PhysParams | None = None,
    epsilon: float | None = None,
    n: float = 5.0,
    k_max: int = DEFAULT_K_MAX,
) -> BoundReport:
    """Measure the implied constant of each of the six end-state bounds
    over a trajectory's snapshots.  Blow-up shows as constants growing
    under time-horizon or resolution refinement (compare reports with
    constant_ratios); nothing is asserted here."""
    snaps = getattr(traj, "snapshots", traj)
    if len(snaps) < 2:
        raise ValueError(
            "bound check needs at least two snapshots; rerun with snapshot_stride"
        )
    if params is None:
        params = snaps[0][1].params
    acc = TheoremAccumulator(params, n=n, epsilon=epsilon, k_max=k_max)
    for _, st in snaps:
        acc.push(st)
    return acc.finalize()
