"""
Spectral representation of fields on the sheared torus.

The domain is T_X x (R_Y approximated by a torus of length 2 pi m) x T_Z,
carried in the moving frame X = x - y t.  A coefficient c at lattice site
(k, j, l) represents c * exp(i (k X + eta Y + l Z)) with eta = j / m, so X
and Z wavenumbers are integers while the Y wavenumber lives on the lattice
Z / m.  All in-frame differential operators act diagonally with the
time-dependent symbols

    grad_L  -> (i k, i (eta - k t), i l)
    lap_L   -> -(k^2 + (eta - k t)^2 + l^2)

where t is the shear age of the frame the coefficients refer to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.fft as _fft

__all__ = [
    "RationalShearAngle",
    "PhysParams",
    "GridSpec",
    "ModeIndex",
    "SpectralScalarField",
    "SpectralVectorField",
    "MhdState",
    "MODE_CLASSES",
    "mode_class_masks",
    "project_modes",
    "apply_oscillation",
    "good_unknowns_forward",
    "good_unknowns_inverse",
    "grad_L",
    "div_L",
    "laplace_L",
    "inv_laplace_L",
    "leray_project_moving",
    "fft_forward",
    "fft_inverse",
    "sobolev_norm",
    "shear_symbols",
    "shear_laplacian",
    "hermitian_symmetrize",
    "hermitian_defect",
    "theorem_regime_violations",
]

MODE_CLASSES = ("zero", "homogeneous", "nonhomogeneous")


@dataclass(frozen=True)
class RationalShearAngle:
    """
    Rational field angle sigma = q / p in lowest terms.

    The background magnetic field direction is (sigma, 0, 1).  Resonances
    are governed by the integer q k + p l: a nonzero mode (k, l) is
    magnetically silent ("homogeneous") exactly when q k + p l = 0, which
    requires p | k.  Keeping (q, p) as reduced integers makes that test
    exact; no float sigma enters mode classification.
    """

    q: int
    p: int

    def __post_init__(self) -> None:
        q, p = int(self.q), int(self.p)
        if p == 0:
            raise ValueError("sigma denominator p must be nonzero")
        if p < 0:
            q, p = -q, -p
        g = math.gcd(abs(q), p)
        if g > 1:
            q, p = q // g, p // g
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def value(self) -> float:
        return self.q / self.p

    def resonance_integer(self, k, l):
        """q k + p l; zero iff sigma k + l = 0."""
        return self.q * k + self.p * l

    def sigma_k_plus_l(self, k, l):
        """sigma k + l as a float (exact multiple of 1/p)."""
        return (self.q * k + self.p * l) / self.p


@dataclass(frozen=True)
class PhysParams:
    """
    Physical parameters: viscosity/resistivity nu, field strength alpha,
    field angle sigma, and the slow-growth rate delta0 used in the
    combined multiplier weight.

    Both dissipation coefficients are equal by assumption (nu = mu).
    delta0 defaults to 1/(100 |alpha|), degenerating to 0 at alpha = 0 so
    that out-of-regime comparison runs remain expressible.  The uniform
    stabilization results require 0 < nu <= 1 and |alpha| > 8 p; that is
    deliberately not a constructor invariant (comparison studies set
    alpha = 0 or nu = 0) and is instead surfaced via
    ``in_theorem_regime`` and checked at run entry points.
    """

    nu: float
    alpha: float
    sigma: RationalShearAngle
    delta0: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.nu <= 1.0:
            raise ValueError(f"nu must lie in [0, 1], got {self.nu}")
        if self.delta0 is None:
            d0 = 1.0 / (100.0 * abs(self.alpha)) if self.alpha != 0.0 else 0.0
            object.__setattr__(self, "delta0", d0)
        elif self.delta0 < 0.0:
            raise ValueError("delta0 must be nonnegative")

    @property
    def in_theorem_regime(self) -> bool:
        return 0.0 < self.nu <= 1.0 and abs(self.alpha) > 8.0 * self.sigma.p


def theorem_regime_violations(params: PhysParams) -> list[str]:
    """Human-readable reasons a parameter set sits outside the uniform
    stabilization regime (empty list means in regime)."""
    out = []
    if not params.nu > 0.0:
        out.append(f"nu={params.nu} is not positive")
    if params.nu > 1.0:
        out.append(f"nu={params.nu} exceeds 1")
    if not abs(params.alpha) > 8.0 * params.sigma.p:
        out.append(
            f"|alpha|={abs(params.alpha)} does not exceed 8*p={8 * params.sigma.p} "
            f"(field angle {params.sigma.q}/{params.sigma.p})"
        )
    return out


@dataclass(frozen=True)
class GridSpec:
    """
    Spectral truncation of the sheared torus.

    Parameters
    ----------
    nx, ny, nz : int
        Number of retained lattice points per direction (all even).  The
        X and Z tori have length 2 pi; the Y torus has length 2 pi m, so
        eta = j / m with j integer, |j| <= ny / 2.
    m : int
        Y-torus aspect ratio (eta lattice spacing 1/m).
    dealias_fraction : float
        Fraction of the Nyquist index retained by the dealias mask.  The
        cutoff is strict (|index| < fraction * n / 2) so that quadratic
        products never alias back onto retained modes, including the
        corner case 3 | n.
    """

    nx: int
    ny: int
    nz: int
    m: int = 1
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self) -> None:
        for name in ("nx", "ny", "nz"):
            n = getattr(self, name)
            if n < 2 or n % 2 != 0:
                raise ValueError(f"{name} must be even and >= 2, got {n}")
        if self.m < 1 or int(self.m) != self.m:
            raise ValueError(f"m must be a positive integer, got {self.m}")
        if not 0.0 < self.dealias_fraction <= 1.0:
            raise ValueError("dealias_fraction must lie in (0, 1]")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def n_points(self) -> int:
        return self.nx * self.ny * self.nz

    def _int_freq(self, n: int) -> np.ndarray:
        return np.fft.fftfreq(n, d=1.0 / n).astype(np.int64)

    @property
    def k_int(self) -> np.ndarray:
        return self._int_freq(self.nx)

    @property
    def j_int(self) -> np.ndarray:
        return self._int_freq(self.ny)

    @property
    def l_int(self) -> np.ndarray:
        return self._int_freq(self.nz)

    @property
    def k3(self) -> np.ndarray:
        """X wavenumber, broadcastable to the coefficient shape."""
        return self.k_int.reshape(-1, 1, 1).astype(np.float64)

    @property
    def eta3(self) -> np.ndarray:
        """Y wavenumber eta = j / m, broadcastable."""
        return (self.j_int / self.m).reshape(1, -1, 1)

    @property
    def l3(self) -> np.ndarray:
        """Z wavenumber, broadcastable."""
        return self.l_int.reshape(1, 1, -1).astype(np.float64)

    def _cut(self, n: int) -> float:
        if self.dealias_fraction >= 1.0:
            return np.inf
        return self.dealias_fraction * (n / 2.0) - 1e-12

    @property
    def dealias_mask(self) -> np.ndarray:
        """Boolean mask of retained (non-dealiased) lattice sites."""
        mk = np.abs(self.k_int) < self._cut(self.nx)
        mj = np.abs(self.j_int) < self._cut(self.ny)
        ml = np.abs(self.l_int) < self._cut(self.nz)
        return mk.reshape(-1, 1, 1) & mj.reshape(1, -1, 1) & ml.reshape(1, 1, -1)

    @property
    def reverse_index(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Index arrays mapping site (k, j, l) -> (-k, -j, -l) mod n."""
        rx = (-np.arange(self.nx)) % self.nx
        ry = (-np.arange(self.ny)) % self.ny
        rz = (-np.arange(self.nz)) % self.nz
        return (rx.reshape(-1, 1, 1), ry.reshape(1, -1, 1), rz.reshape(1, 1, -1))

    def index_of(self, k: int, j: int, l: int) -> tuple[int, int, int]:
        """Array index of the lattice site (k, j, l)."""
        if not (-self.nx // 2 <= k < self.nx // 2):
            raise IndexError(f"k={k} outside the grid")
        if not (-self.ny // 2 <= j < self.ny // 2):
            raise IndexError(f"j={j} outside the grid")
        if not (-self.nz // 2 <= l < self.nz // 2):
            raise IndexError(f"l={l} outside the grid")
        return (k % self.nx, j % self.ny, l % self.nz)


@dataclass(frozen=True)
class ModeIndex:
    """Single lattice mode (k, j, l) with eta = j / m."""

    k: int
    j: int
    l: int
    m: int = 1

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError("m must be a positive integer")

    @property
    def eta(self) -> float:
        return self.j / self.m

    def classify(self, sigma: RationalShearAngle) -> str:
        if self.k == 0:
            return "zero"
        if sigma.resonance_integer(self.k, self.l) == 0:
            return "homogeneous"
        return "nonhomogeneous"


@dataclass
class SpectralScalarField:
    """
    Scalar field as complex coefficients on the (k, j, l) lattice.

    ``coeffs`` uses fftfreq ordering on every axis.  ``t_frame`` is the
    shear age of the frame the coefficients refer to: all moving-frame
    symbols are evaluated at t_frame, and a remap resets it to zero while
    relabeling j.  Fields representing real data satisfy
    coeffs(-k, -j, -l) = conj(coeffs(k, j, l)).
    """

    grid: GridSpec
    coeffs: np.ndarray
    t_frame: float = 0.0

    def __post_init__(self) -> None:
        if self.coeffs.shape != self.grid.shape:
            raise ValueError(
                f"coefficient shape {self.coeffs.shape} does not match grid {self.grid.shape}"
            )
        if self.coeffs.dtype != np.complex128:
            self.coeffs = self.coeffs.astype(np.complex128)

    @classmethod
    def zeros(cls, grid: GridSpec, t_frame: float = 0.0) -> "SpectralScalarField":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128), t_frame)

    @classmethod
    def from_modes(
        cls,
        grid: GridSpec,
        modes: Mapping[tuple[int, int, int], complex],
        t_frame: float = 0.0,
        conjugate_pair: bool = True,
    ) -> "SpectralScalarField":
        """Place coefficients at given (k, j, l) sites; with
        ``conjugate_pair`` also set the mirror site to the conjugate so the
        field is real in physical space."""
        f = cls.zeros(grid, t_frame)
        for (k, j, l), v in modes.items():
            f.coeffs[grid.index_of(k, j, l)] += v
            if conjugate_pair:
                f.coeffs[grid.index_of(-k, -j, -l)] += np.conj(v)
        return f

    def copy(self) -> "SpectralScalarField":
        return SpectralScalarField(self.grid, self.coeffs.copy(), self.t_frame)

    def at(self, k: int, j: int, l: int) -> complex:
        return complex(self.coeffs[self.grid.index_of(k, j, l)])


@dataclass
class SpectralVectorField:
    """Three-component field sharing one grid and frame; ``coeffs`` has
    shape (3, nx, ny, nz)."""

    grid: GridSpec
    coeffs: np.ndarray
    t_frame: float = 0.0

    def __post_init__(self) -> None:
        if self.coeffs.shape != (3, *self.grid.shape):
            raise ValueError(f"vector coefficient shape {self.coeffs.shape} invalid")
        if self.coeffs.dtype != np.complex128:
            self.coeffs = self.coeffs.astype(np.complex128)

    @classmethod
    def zeros(cls, grid: GridSpec, t_frame: float = 0.0) -> "SpectralVectorField":
        return cls(grid, np.zeros((3, *grid.shape), dtype=np.complex128), t_frame)

    @classmethod
    def from_components(cls, comps: Sequence[SpectralScalarField]) -> "SpectralVectorField":
        if len(comps) != 3:
            raise ValueError("need exactly 3 components")
        g, tf = comps[0].grid, comps[0].t_frame
        if any(c.grid != g or c.t_frame != tf for c in comps[1:]):
            raise ValueError("components disagree on grid or frame")
        return cls(g, np.stack([c.coeffs for c in comps]), tf)

    def component(self, i: int) -> SpectralScalarField:
        return SpectralScalarField(self.grid, self.coeffs[i], self.t_frame)

    def copy(self) -> "SpectralVectorField":
        return SpectralVectorField(self.grid, self.coeffs.copy(), self.t_frame)


@dataclass
class MhdState:
    """Velocity and magnetic perturbation at absolute time ``t``.

    The fields' ``t_frame`` is the shear age of their coefficient frame;
    it equals ``t`` until a remap resets it.  ``t - u.t_frame`` recovers
    the lab-lattice offset needed to reconstruct absolute eta labels."""

    u: SpectralVectorField
    b: SpectralVectorField
    t: float
    params: PhysParams

    def __post_init__(self) -> None:
        if self.u.grid != self.b.grid:
            raise ValueError("u and b live on different grids")
        if self.u.t_frame != self.b.t_frame:
            raise ValueError("u and b frames disagree")

    @property
    def grid(self) -> GridSpec:
        return self.u.grid

    @property
    def t_frame(self) -> float:
        return self.u.t_frame

    @property
    def t_origin(self) -> float:
        """Absolute time at which the coefficient frame was (re)based."""
        return self.t - self.u.t_frame


# ---------------------------------------------------------------------------
# symbols

def shear_symbols(grid: GridSpec, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-mode (i-less) symbols of grad_L at shear age t."""
    return grid.k3, grid.eta3 - grid.k3 * t, grid.l3


def shear_laplacian(grid: GridSpec, t: float) -> np.ndarray:
    """p(t) = k^2 + (eta - k t)^2 + l^2 >= 0, zero only at the origin."""
    sx, sy, sz = shear_symbols(grid, t)
    return sx**2 + sy**2 + sz**2


# ---------------------------------------------------------------------------
# transforms

def fft_forward(grid: GridSpec, physical: np.ndarray, t_frame: float = 0.0) -> SpectralScalarField:
    """Sample values on the (X, Y, Z) grid -> series coefficients.

    Normalization is such that a constant field c maps to a single
    (0, 0, 0) coefficient c and exp(i X) to a unit (1, 0, 0) coefficient.
    """
    if physical.shape != grid.shape:
        raise ValueError(f"physical shape {physical.shape} does not match grid")
    return SpectralScalarField(grid, _fft.fftn(physical, norm="forward"), t_frame)


def fft_inverse(f: SpectralScalarField) -> np.ndarray:
    """Series coefficients -> complex physical samples (real up to
    roundoff for Hermitian-symmetric input)."""
    return _fft.ifftn(f.coeffs, norm="forward")


def hermitian_defect(f: SpectralScalarField) -> float:
    """Max |c(k,j,l) - conj(c(-k,-j,-l))|."""
    rev = f.grid.reverse_index
    return float(np.max(np.abs(f.coeffs - np.conj(f.coeffs[rev]))))


def hermitian_symmetrize(f: SpectralScalarField) -> SpectralScalarField:
    rev = f.grid.reverse_index
    return SpectralScalarField(f.grid, 0.5 * (f.coeffs + np.conj(f.coeffs[rev])), f.t_frame)


# ---------------------------------------------------------------------------
# mode classes

def mode_class_masks(grid: GridSpec, sigma: RationalShearAngle) -> dict[str, np.ndarray]:
    """Boolean masks for the zero / homogeneous / nonhomogeneous partition."""
    return {cls: _class_mask_3d(grid, sigma, cls) for cls in MODE_CLASSES}


def _class_mask_3d(grid: GridSpec, sigma: RationalShearAngle, cls: str) -> np.ndarray:
    k = grid.k_int.reshape(-1, 1, 1)
    l = grid.l_int.reshape(1, 1, -1)
    res = sigma.q * k + sigma.p * l
    if cls == "zero":
        mask2 = np.broadcast_to(k == 0, (grid.nx, 1, grid.nz))
    elif cls == "homogeneous":
        mask2 = (k != 0) & (res == 0)
    elif cls == "nonhomogeneous":
        mask2 = (k != 0) & (res != 0)
    else:
        raise ValueError(f"unknown mode class {cls!r}; expected one of {MODE_CLASSES}")
    return np.broadcast_to(mask2, grid.shape)


def project_modes(
    f: SpectralScalarField,
    classes: str | Iterable[str],
    sigma: RationalShearAngle,
) -> SpectralScalarField:
    """Keep only the listed mode classes (zeroing the others).

    The three classes partition the lattice, so projections onto disjoint
    class sets annihilate each other and the three single-class
    projections sum back to f exactly.
    """
    if isinstance(classes, str):
        classes = (classes,)
    mask = np.zeros(f.grid.shape, dtype=bool)
    for cls in classes:
        mask |= _class_mask_3d(f.grid, sigma, cls)
    return SpectralScalarField(f.grid, np.where(mask, f.coeffs, 0.0), f.t_frame)


# ---------------------------------------------------------------------------
# oscillation conjugation and good unknowns

def _oscillation_phase(grid: GridSpec, sigma: RationalShearAngle, a: float, t: float) -> np.ndarray:
    k = grid.k_int.reshape(-1, 1, 1)
    l = grid.l_int.reshape(1, 1, -1)
    phi = (sigma.q * k + sigma.p * l) / sigma.p
    return np.exp(1j * a * phi * t)


def apply_oscillation(
    f: SpectralScalarField, a: float, t: float, sigma: RationalShearAngle
) -> SpectralScalarField:
    """Multiply by exp(i a (sigma k + l) t) per mode.

    This is the (unitary, Hermitian-preserving) conjugation that moves
    fields in and out of the frame oscillating along the background
    field; a = 0 or t = 0 is the identity, and phases compose additively
    in a * t.
    """
    return SpectralScalarField(
        f.grid, f.coeffs * _oscillation_phase(f.grid, sigma, a, t), f.t_frame
    )


def _apply_oscillation_vec(
    v: SpectralVectorField, a: float, t: float, sigma: RationalShearAngle
) -> SpectralVectorField:
    return SpectralVectorField(
        v.grid, v.coeffs * _oscillation_phase(v.grid, sigma, a, t)[None], v.t_frame
    )


def good_unknowns_forward(
    u: SpectralVectorField, b: SpectralVectorField, params: PhysParams, t: float
) -> tuple[SpectralVectorField, SpectralVectorField]:
    """(U, B) -> (W+, W-) with W+- the oscillation-conjugated Elsasser
    fields: W+- = exp(-+ i alpha (sigma k + l) t) (U +- B)."""
    zp = SpectralVectorField(u.grid, u.coeffs + b.coeffs, u.t_frame)
    zm = SpectralVectorField(u.grid, u.coeffs - b.coeffs, u.t_frame)
    wp = _apply_oscillation_vec(zp, -params.alpha, t, params.sigma)
    wm = _apply_oscillation_vec(zm, +params.alpha, t, params.sigma)
    return wp, wm


def good_unknowns_inverse(
    wp: SpectralVectorField, wm: SpectralVectorField, params: PhysParams, t: float
) -> tuple[SpectralVectorField, SpectralVectorField]:
    """Inverse of good_unknowns_forward; exact round trip."""
    zp = _apply_oscillation_vec(wp, +params.alpha, t, params.sigma)
    zm = _apply_oscillation_vec(wm, -params.alpha, t, params.sigma)
    u = SpectralVectorField(wp.grid, 0.5 * (zp.coeffs + zm.coeffs), wp.t_frame)
    b = SpectralVectorField(wp.grid, 0.5 * (zp.coeffs - zm.coeffs), wp.t_frame)
    return u, b


# ---------------------------------------------------------------------------
# moving-frame calculus

def grad_L(f: SpectralScalarField, t: float) -> SpectralVectorField:
    """In-frame gradient (d_X, d_Y - t d_X, d_Z) at shear age t."""
    sx, sy, sz = shear_symbols(f.grid, t)
    out = np.empty((3, *f.grid.shape), dtype=np.complex128)
    out[0] = 1j * sx * f.coeffs
    out[1] = 1j * sy * f.coeffs
    out[2] = 1j * sz * f.coeffs
    return SpectralVectorField(f.grid, out, f.t_frame)


def div_L(v: SpectralVectorField, t: float) -> SpectralScalarField:
    sx, sy, sz = shear_symbols(v.grid, t)
    c = 1j * (sx * v.coeffs[0] + sy * v.coeffs[1] + sz * v.coeffs[2])
    return SpectralScalarField(v.grid, c, v.t_frame)


def laplace_L(f: SpectralScalarField, t: float) -> SpectralScalarField:
    return SpectralScalarField(f.grid, -shear_laplacian(f.grid, t) * f.coeffs, f.t_frame)


def inv_laplace_L(
    f: SpectralScalarField, t: float, mean_free: bool = False
) -> SpectralScalarField:
    """Invert lap_L; the (0,0,0) mode is outside the range.

    With ``mean_free`` the mean coefficient is silently sent to zero;
    otherwise a nonzero mean (relative to the field's magnitude) is an
    error.
    """
    p = shear_laplacian(f.grid, t)
    mean = f.coeffs[0, 0, 0]
    scale = float(np.max(np.abs(f.coeffs))) if f.coeffs.size else 0.0
    if not mean_free and scale > 0.0 and abs(mean) > 1e-13 * scale:
        raise ValueError("mean mode not invertible: pass mean_free=True to drop it")
    p_safe = p.copy()
    p_safe[0, 0, 0] = 1.0
    out = f.coeffs / (-p_safe)
    out[0, 0, 0] = 0.0
    return SpectralScalarField(f.grid, out, f.t_frame)


def leray_project_moving(v: SpectralVectorField, t: float) -> SpectralVectorField:
    """Remove the in-frame gradient part: v - grad_L lap_L^{-1} div_L v.

    Idempotent; the mean mode passes through unchanged (div_L kills it).
    """
    sx, sy, sz = shear_symbols(v.grid, t)
    p = sx**2 + sy**2 + sz**2
    p_safe = p.copy()
    p_safe[0, 0, 0] = 1.0
    d = sx * v.coeffs[0] + sy * v.coeffs[1] + sz * v.coeffs[2]  # div / i
    q = d / p_safe
    q[0, 0, 0] = 0.0
    out = v.coeffs.copy()
    out[0] -= sx * q
    out[1] -= sy * q
    out[2] -= sz * q
    return SpectralVectorField(v.grid, out, v.t_frame)


# ---------------------------------------------------------------------------
# norms

def sobolev_weight(grid: GridSpec, n: int | float) -> np.ndarray:
    """<k, eta, l>^{2n} = (1 + k^2 + eta^2 + l^2)^n on the lattice."""
    jap2 = 1.0 + grid.k3**2 + grid.eta3**2 + grid.l3**2
    return jap2**n


def sobolev_norm(f: SpectralScalarField, n: int | float) -> float:
    """Weighted l2 norm sqrt(sum <mode>^{2n} |c|^2 / m).

    The 1/m factor is the eta lattice measure, making values stable under
    Y-torus refinement at fixed data.
    """
    w = sobolev_weight(f.grid, n)
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2) / f.grid.m))


def sobolev_norm_vec(v: SpectralVectorField, n: int | float) -> float:
    w = sobolev_weight(v.grid, n)
    return float(np.sqrt(np.sum(w * np.abs(v.coeffs) ** 2) / v.grid.m))
