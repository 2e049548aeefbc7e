"""Potential and mollifier catalog, lattice restriction and Poisson summation.

Every catalog potential carries a closed-form (or tabulated) Fourier transform
in the unitary convention ``V^(xi) = (2 pi)^{-d/2} int V(x) exp(-i x.xi) dx``
plus the analyticity data ``(R0, c0, mu, delta0, p)`` describing where that
transform may be continued.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Callable

import numpy as np
from numpy.typing import NDArray
from scipy import special
from scipy.interpolate import CubicSpline

from latres.distortion import DistortionSpec, jacobian, phi
from latres.grid import LatticeGrid, reduce_to_torus, shift_offsets

Array = NDArray[np.complex128]

TABLE_NAME = "singular_quarter.tab"
TABLE_VERSION = 1
TABLE_TOLERANCE = 1e-10


class PoissonConvergenceError(RuntimeError):
    """Shell sums failed to settle within the shell budget."""

    def __init__(self, message: str, tail_bound: float):
        super().__init__(message)
        self.tail_bound = tail_bound


class QuadratureBudgetError(RuntimeError):
    def __init__(self, message: str, tail_bound: float):
        super().__init__(message)
        self.tail_bound = tail_bound


class OutsideStripError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """A potential ``V = V1 + V2`` described through its Fourier transform.

    ``v_hat`` and ``v_x`` take arrays whose trailing axis is the ``d`` components.
    ``tail`` lists ``(coef, power)`` pairs of the large-``|xi|`` expansion
    ``V^(xi) ~ sum coef * xi**(-power)`` (1D only), used to sum Poisson tails of
    algebraically decaying transforms.  Singular potentials have ``v_x = None``
    and expose ``|x|**(-singular_exponent) * v_x_regular(x)`` instead.
    """

    label: str
    d: int
    v_hat: Callable[[Array], Array]
    v_x: Callable[[NDArray], NDArray] | None = None
    R0: float = 0.0
    c0: float = 1.0
    mu: float = 1.0
    delta0: float = math.inf
    p: float = 1.0
    sigma: float = math.inf
    split_tag: str = "V2"
    analytic: bool = True
    tail: tuple[tuple[float, int], ...] = ()
    tail_radius: float = 1.0
    x_extent: float = 10.0
    singular_exponent: float = 0.0
    v_x_regular: Callable[[NDArray], NDArray] | None = None
    params: dict = field(default_factory=dict)

    def evaluate_hat(self, zeta: NDArray) -> Array:
        zeta = np.asarray(zeta, dtype=complex)
        if not self.analytic and np.any(np.abs(zeta.imag) > 1e-14):
            raise OutsideStripError(f"{self.label}: transform only available on the real axis")
        return self.v_hat(zeta)

    def in_strip(self, zeta: NDArray, torus_period: float | None = None) -> NDArray[np.bool_]:
        """Membership in the analyticity region of the (periodised) transform."""
        zeta = np.asarray(zeta, dtype=complex)
        im = np.linalg.norm(zeta.imag, axis=-1)
        ok = im < self.delta0 if math.isfinite(self.delta0) else np.ones(im.shape, bool)
        if "V1" in self.split_tag:
            re = zeta.real
            if torus_period is not None:
                re = np.mod(re + torus_period / 2, torus_period) - torus_period / 2
            ok &= (im <= self.c0 * np.linalg.norm(re, axis=-1)) | (im == 0)
        if not self.analytic:
            ok &= im <= 1e-14
        return ok

    def describe(self) -> dict:
        return {"label": self.label, "d": self.d, **self.params}


def _dot(zeta: Array) -> Array:
    return np.sum(zeta * zeta, axis=-1)


def gaussian(c: float = 1.0, d: int = 1) -> PotentialSpec:
    """``c exp(-|x|^2/2)``; entire transform ``c exp(-zeta.zeta/2)``."""
    extent = math.sqrt(2 * math.log(max(abs(c), 1e-300) * 1e14)) if c else 1.0
    return PotentialSpec(
        label="gaussian",
        d=d,
        v_hat=lambda z: c * np.exp(-_dot(z) / 2),
        v_x=lambda x: c * np.exp(-np.sum(np.asarray(x) ** 2, axis=-1) / 2),
        mu=float(d),
        x_extent=extent,
        params={"c": c},
    )


def exponential(c: float = 1.0) -> PotentialSpec:
    """``c exp(-|x|)`` in 1D with ``V^ = c (2/pi)^{1/2} / (1 + zeta^2)``; strip width 1."""
    amp = c * math.sqrt(2 / math.pi)
    # 1/(1+u^2) = u^-2 - u^-4 + u^-6 - ...
    tail = tuple((amp * (-1) ** (k + 1), 2 * k) for k in range(1, 8))
    return PotentialSpec(
        label="exponential",
        d=1,
        v_hat=lambda z: amp / (1.0 + _dot(z)),
        v_x=lambda x: c * np.exp(-np.abs(np.asarray(x)[..., 0])),
        mu=1.0,
        delta0=1.0,
        sigma=2.0,
        tail=tail,
        tail_radius=1.0,
        x_extent=32.0 + math.log(max(abs(c), 1.0)),
        params={"c": c},
    )


def yukawa(c: float = 1.0, delta: float = 1.0) -> PotentialSpec:
    """``c exp(-delta |x|)/|x|`` in 3D; ``V^ = c (2/pi)^{1/2} / (zeta.zeta + delta^2)``."""
    amp = c * math.sqrt(2 / math.pi)
    return PotentialSpec(
        label="yukawa",
        d=3,
        v_hat=lambda z: amp / (_dot(z) + delta**2),
        R0=1.0,
        c0=0.99,
        mu=2.0,
        delta0=delta,
        p=2.0,
        sigma=2.0,
        split_tag="V1",
        x_extent=34.0 / delta,
        singular_exponent=1.0,
        v_x_regular=lambda x: c * np.exp(-delta * np.linalg.norm(np.asarray(x), axis=-1)),
        params={"c": c, "delta": delta},
    )


SINGULAR_NU = 0.75  # |x|^{-1/4} = |x|^{nu - 1}


def singular_hat_series(xi: NDArray, terms: int = 14) -> NDArray:
    """Large-``|xi|`` expansion of the transform of ``|x|^{-1/4} e^{-x^2}`` (c = 1)."""
    xi = np.abs(np.asarray(xi, dtype=float))
    out = np.zeros_like(xi)
    nu = SINGULAR_NU
    for k in range(terms):
        s = nu + 2 * k
        out += (-1) ** k / math.factorial(k) * math.gamma(s) * math.cos(math.pi * s / 2) * xi ** (-s)
    return 2 * out / math.sqrt(2 * math.pi)


def singular_hat_quadrature(xi: float) -> float:
    """Oracle quadrature for the table: ``(2/pi)^{1/2} int_0^inf x^{-1/4} e^{-x^2} cos(x xi) dx``."""
    from scipy.integrate import quad

    # x = t^4 removes the endpoint singularity
    val, err = quad(
        lambda t: 4 * t * t * math.exp(-(t**8)) * math.cos(t**4 * xi),
        0.0,
        2.4,
        limit=800,
        epsabs=1e-13,
        epsrel=1e-13,
    )
    return math.sqrt(2 / math.pi) * val


TABLE_XI_MAX = 24.0
TABLE_STEP = 0.01


def build_singular_table(path) -> None:
    """Regenerate the tabulated transform (build-time artifact)."""
    xi = np.arange(0.0, TABLE_XI_MAX + TABLE_STEP / 2, TABLE_STEP)
    vals = np.array([singular_hat_quadrature(float(x)) for x in xi])
    header = "\n".join(
        [
            "latres singular-transform table",
            f"version: {TABLE_VERSION}",
            "potential: |x|^(-1/4) exp(-x^2), d=1, unit coefficient",
            "convention: (2 pi)^(-1/2) int V(x) exp(-i x xi) dx",
            f"tolerance: {TABLE_TOLERANCE:g}",
            "columns: xi vhat",
        ]
    )
    np.savetxt(path, np.column_stack([xi, vals]), fmt="%.17e", header=header)


def read_singular_table(path) -> tuple[NDArray, NDArray, dict]:
    meta: dict = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if ":" in body:
                key, val = body.split(":", 1)
                meta[key.strip()] = val.strip()
    if int(meta.get("version", -1)) != TABLE_VERSION:
        raise ValueError(f"unsupported singular table version {meta.get('version')}")
    data = np.loadtxt(path)
    xi, vals = data[:, 0], data[:, 1]
    if np.any(np.diff(xi) <= 0):
        raise ValueError("singular table abscissae must be increasing")
    return xi, vals, meta


@lru_cache(maxsize=1)
def _singular_spline() -> CubicSpline:
    ref = resources.files("latres") / "data" / TABLE_NAME
    with resources.as_file(ref) as path:
        xi, vals, _ = read_singular_table(path)
    return CubicSpline(xi, vals, bc_type=((1, 0.0), "not-a-knot"))


def singular_hat(xi: NDArray) -> NDArray:
    """Tabulated transform (cubic interpolation) with the asymptotic series beyond the table."""
    a = np.abs(np.asarray(xi, dtype=float))
    out = np.empty_like(a)
    inside = a <= TABLE_XI_MAX
    out[inside] = _singular_spline()(a[inside])
    out[~inside] = singular_hat_series(a[~inside])
    return out


def singular(c: float = -1.0) -> PotentialSpec:
    """``c |x|^{-1/4} e^{-x^2}`` in 1D (locally singular, handled via mollification)."""

    def v_hat(z: Array) -> Array:
        return c * singular_hat(np.real(z[..., 0])).astype(complex)

    return PotentialSpec(
        label="singular",
        d=1,
        v_hat=v_hat,
        v_x=None,
        mu=0.75,
        p=2.0,
        sigma=0.75,
        analytic=False,
        x_extent=6.0,
        singular_exponent=0.25,
        v_x_regular=lambda x: c * np.exp(-np.asarray(x)[..., 0] ** 2),
        params={"c": c},
    )


def zero(d: int = 1) -> PotentialSpec:
    return PotentialSpec(
        label="zero",
        d=d,
        v_hat=lambda z: np.zeros(np.shape(z)[:-1], dtype=complex),
        v_x=lambda x: np.zeros(np.shape(x)[:-1]),
        x_extent=0.0,
    )


POTENTIALS = {
    "gaussian": gaussian,
    "exponential": exponential,
    "singular": singular,
    "yukawa": yukawa,
    "zero": zero,
}


def make_potential(label: str, **params) -> PotentialSpec:
    try:
        factory = POTENTIALS[label]
    except KeyError:
        raise ValueError(f"unknown potential {label!r}; known: {sorted(POTENTIALS)}") from None
    return factory(**params)


@dataclass(frozen=True, eq=False)
class MollifierSpec:
    """Integral-one smoothing kernel given by its transform ``phi_hat``."""

    label: str
    d: int
    phi_hat: Callable[[Array], Array]
    phi_x: Callable[[NDArray], NDArray] | None = None
    analytic: bool = True
    extent: float = 10.0

    def __post_init__(self) -> None:
        zero = np.zeros((1, self.d), dtype=complex)
        norm = complex(self.phi_hat(zero)[0]) * (2 * math.pi) ** (self.d / 2)
        if abs(norm - 1) > 1e-14:
            raise ValueError(f"mollifier {self.label!r} does not integrate to one ({norm})")
        probe = np.zeros((2, self.d), dtype=complex)
        probe[:, 0] = [40.0, 80.0]
        tail = np.abs(self.phi_hat(probe)) * (2 * math.pi) ** (self.d / 2)
        if np.any(tail > 1e-12):
            raise ValueError(f"mollifier {self.label!r} transform is not rapidly decreasing")


def gaussian_mollifier(d: int = 1) -> MollifierSpec:
    norm = (2 * math.pi) ** (-d / 2)
    return MollifierSpec(
        label="gaussian",
        d=d,
        phi_hat=lambda z: norm * np.exp(-_dot(np.asarray(z, dtype=complex)) / 2),
        phi_x=lambda x: norm * np.exp(-np.sum(np.asarray(x) ** 2, axis=-1) / 2),
        extent=9.0,
    )


def bump_mollifier(d: int = 1, width: float = 2.0) -> MollifierSpec:
    """Mollifier whose transform is a smooth cutoff supported in ``|xi_j| < width``."""
    from latres.distortion import smooth_step

    norm = (2 * math.pi) ** (-d / 2)

    def phi_hat(z: Array) -> Array:
        z = np.asarray(z)
        return norm * np.prod(smooth_step(2 * np.real(z) / width), axis=-1).astype(complex)

    return MollifierSpec(label="bump", d=d, phi_hat=phi_hat, analytic=False, extent=30.0)


def constant_mollifier(d: int = 1) -> MollifierSpec:
    """Delta-function surrogate; construction fails by design."""
    norm = (2 * math.pi) ** (-d / 2)
    return MollifierSpec(
        label="delta",
        d=d,
        phi_hat=lambda z: norm * np.ones(np.shape(z)[:-1], dtype=complex),
    )


MOLLIFIERS = {"gaussian": gaussian_mollifier, "bump": bump_mollifier, "delta": constant_mollifier}


def make_mollifier(label: str, **params) -> MollifierSpec:
    try:
        factory = MOLLIFIERS[label]
    except KeyError:
        raise ValueError(f"unknown mollifier {label!r}; known: {sorted(MOLLIFIERS)}") from None
    return factory(**params)


def restrict_to_lattice(spec: PotentialSpec, grid: LatticeGrid) -> NDArray[np.float64]:
    """``V_h(hn) = V(hn)`` on every grid site."""
    if spec.v_x is None:
        raise ValueError(f"{spec.label} is singular; use mollified_restrict")
    return np.asarray(spec.v_x(grid.positions()), dtype=float)


def _integrand_tail(g: Callable[[NDArray], NDArray], K: float, d: int) -> float:
    """Estimate of ``int_{|xi|_inf > K} |g|`` (radial sampling out to 16 K)."""
    r = np.linspace(K, 16 * K, 4001)
    if d == 1:
        pts = np.concatenate([r, -r])[:, None]
        vals = np.abs(g(pts))
        return float(np.trapezoid(vals[: r.size], r) + np.trapezoid(vals[r.size :], r))
    # crude but conservative: |g| along the axes times the shell measure
    pts = np.zeros((r.size, d))
    pts[:, 0] = r
    vals = np.abs(g(pts))
    shell = 2 * d * (2 * r) ** (d - 1)
    return float(np.trapezoid(vals * shell, r))


def mollified_restrict(
    spec: PotentialSpec,
    moll: MollifierSpec,
    grid: LatticeGrid,
    points: NDArray | None = None,
    tail_tol: float = 1e-10,
    node_budget: int = 2**22,
) -> NDArray[np.float64]:
    """``(phi_h * V)(x)`` at lattice sites (or at ``points``) by momentum quadrature.

    ``(phi_h * V)(x) = int phi_hat(h xi) V^(xi) exp(i x.xi) dxi`` on a box whose
    truncated tail is below ``tail_tol``; the trapezoid spacing keeps the
    implied spatial period clear of the evaluation points.
    """
    d, h = spec.d, grid.h
    x = grid.positions() if points is None else np.asarray(points, dtype=float).reshape(-1, d)

    def g(xi: NDArray) -> NDArray:
        return moll.phi_hat(h * xi.astype(complex)) * spec.evaluate_hat(xi.astype(complex))

    K = 8.0
    while True:
        tail = _integrand_tail(g, K, d)
        if tail < tail_tol:
            break
        K *= 2
        if (2 * K) ** d > node_budget * 1e3:
            raise QuadratureBudgetError(
                f"momentum tail {tail:.3e} above {tail_tol:g} at cutoff {K}", tail
            )
    reach = np.max(np.abs(x)) if x.size else 0.0
    span = 2 * (reach + spec.x_extent + h * moll.extent) + 10.0
    step = min(2 * math.pi / span, 0.25)
    n = int(math.ceil(K / step))
    if (2 * n + 1) ** d > node_budget:
        raise QuadratureBudgetError(f"quadrature needs {(2 * n + 1) ** d} nodes", tail)
    axis = step * np.arange(-n, n + 1)
    mesh = np.stack([m.ravel() for m in np.meshgrid(*([axis] * d), indexing="ij")], axis=-1)
    weights = g(mesh) * step**d
    out = np.empty(len(x))
    chunk = max(1, 2**24 // len(mesh))
    for start in range(0, len(x), chunk):
        xs = x[start : start + chunk]
        phase = np.exp(1j * xs @ mesh.T)
        out[start : start + chunk] = np.real(phase @ weights)
    return out


def _hurwitz_zeta(s: int, a: NDArray) -> NDArray:
    """``sum_{k>=0} (a + k)^{-s}`` for integer ``s >= 2`` and complex ``a`` with ``Re a > 0``."""
    a = np.asarray(a, dtype=complex)
    shift = int(max(0, math.ceil(14.0 - float(np.min(a.real))))) if a.size else 0
    acc = np.zeros_like(a)
    for k in range(shift):
        acc += (a + k) ** (-s)
    b = a + shift
    out = b ** (1 - s) / (s - 1) + 0.5 * b ** (-s)
    bern = special.bernoulli(20)
    poch = float(s)  # s (s+1) ... (s + 2j - 2)
    for j in range(1, 10):
        out += bern[2 * j] / math.factorial(2 * j) * poch * b ** (-s - 2 * j + 1)
        poch *= (s + 2 * j - 1) * (s + 2 * j)
    return acc + out


@dataclass
class PoissonResult:
    values: Array
    shells: int
    tail_bound: float


def poisson_sum(
    spec: PotentialSpec,
    h: float,
    zeta: NDArray,
    moll: MollifierSpec | None = None,
    rel_tol: float = 1e-12,
    max_shell: int = 16,
    check_strip: bool = True,
) -> PoissonResult:
    """Periodised transform ``sum_m w_m(zeta) V^(zeta + 2 pi m / h)`` summed in shells.

    ``w_m = 1`` for plain restriction and ``(2 pi)^{d/2} phi_hat(h zeta + 2 pi m)``
    for mollified restriction.  Shells ``|m|_inf = s`` are added until the last
    one is below ``rel_tol`` times the largest partial sum.  For 1D potentials
    with a declared algebraic tail the remainder beyond the current shell is
    added in closed form (Hurwitz zeta) before the convergence test.
    """
    d = spec.d
    zeta = np.asarray(zeta, dtype=complex)
    if d == 1 and (zeta.ndim == 0 or zeta.shape[-1] != 1):
        zeta = zeta[..., None]
    period = 2 * math.pi / h
    zeta = reduce_to_torus(zeta, h)
    if check_strip:
        bad = ~spec.in_strip(zeta, torus_period=period)
        if np.any(bad):
            worst = zeta[bad][0]
            raise OutsideStripError(f"{spec.label}: argument {worst} outside the analyticity strip")

    def term(m: NDArray) -> Array:
        arg = zeta + period * m
        val = spec.evaluate_hat(arg)
        if moll is not None:
            val = val * (2 * math.pi) ** (d / 2) * moll.phi_hat(h * zeta + 2 * math.pi * m)
        return val

    use_tail = moll is None and bool(spec.tail) and d == 1
    total = term(np.zeros(d))
    prev = total.copy()
    last = math.inf
    for s in range(1, max_shell + 1):
        ring = shift_offsets(d, s)
        ring = ring[np.max(np.abs(ring), axis=1) == s]
        for m in ring:
            total = total + term(m.astype(float))
        current = total
        if use_tail and s * period - period / 2 > 2 * spec.tail_radius:
            current = total + _algebraic_tail(spec, zeta[..., 0], period, s)
        scale = float(np.max(np.abs(current))) if current.size else 0.0
        last = float(np.max(np.abs(current - prev))) if current.size else 0.0
        prev = current
        if last <= rel_tol * max(scale, 1e-300) or scale == 0.0:
            return PoissonResult(current, s, last)
    raise PoissonConvergenceError(
        f"{spec.label}: Poisson shells not converged by |m|={max_shell} (last shell {last:.3e})",
        last,
    )


def _algebraic_tail(spec: PotentialSpec, zeta: Array, period: float, M: int) -> Array:
    out = np.zeros_like(zeta)
    for coef, power in spec.tail:
        plus = _hurwitz_zeta(power, M + 1 + zeta / period)
        minus = _hurwitz_zeta(power, M + 1 - zeta / period)
        out += coef * period ** (-power) * (plus + (-1) ** power * minus)
    return out


def torus_fourier_of_restriction(
    spec: PotentialSpec,
    h: float,
    zeta: NDArray,
    moll: MollifierSpec | None = None,
    rel_tol: float = 1e-12,
    max_shell: int = 16,
) -> Array:
    """``(F_h V_h)(zeta) = (2 pi)^{-d/2} h^d sum_n V_h(hn) exp(-i h n . zeta)`` via Poisson summation."""
    return poisson_sum(spec, h, zeta, moll, rel_tol, max_shell).values


@dataclass
class MajorantProfile:
    edges: NDArray
    envelope: NDArray
    l1_norm: float
    near_diagonal_ratio: float
    passed: bool
    samples: int


def majorant_check(
    spec: PotentialSpec,
    dist: DistortionSpec,
    sample_budget: int = 20000,
    radius: float | None = None,
    bins: int = 96,
    seed: int = 0,
) -> MajorantProfile:
    """Empirical dominator ``Psi(|xi - eta|)`` of the distorted kernel.

    Samples pairs, bins ``|V^(Phi(xi) - Phi(eta))|`` by ``|xi - eta|`` and takes
    the per-bin maximum as the profile.  Passes when the profile has a finite
    L1 norm (decays to ``1e-8`` of its peak inside the sampled range) and the
    near-diagonal growth stays within the ``|xi - eta|^{mu - d}`` envelope.
    """
    dist.require_admissible(spec.c0, spec.delta0)
    d = spec.d
    if radius is None:
        radius = max(3 * dist.field.support_radius if math.isfinite(dist.field.support_radius) else 0, 16.0)
    rng = np.random.default_rng(seed)
    xi = rng.uniform(-radius, radius, size=(sample_budget, d))
    # half the pairs are near-diagonal so small separations are populated
    offs = rng.normal(scale=rng.choice([0.05, 1.0, radius], size=(sample_budget, 1)), size=(sample_budget, d))
    eta = np.where(np.arange(sample_budget)[:, None] % 2 == 0, xi + offs, rng.uniform(-radius, radius, (sample_budget, d)))
    zeta = phi(dist, xi) - phi(dist, eta)
    vals = np.abs(spec.evaluate_hat(zeta))
    sep = np.linalg.norm(xi - eta, axis=-1)
    edges = np.linspace(0.0, float(np.max(sep)) * (1 + 1e-9), bins + 1)
    which = np.clip(np.searchsorted(edges, sep, side="right") - 1, 0, bins - 1)
    env = np.zeros(bins)
    np.maximum.at(env, which, vals)
    # radial measure of a shell of width dt at radius t in R^d
    mids = 0.5 * (edges[1:] + edges[:-1])
    shell = {1: 2.0, 2: 2 * math.pi * mids, 3: 4 * math.pi * mids**2}[d]
    l1 = float(np.sum(env * np.diff(edges) * shell))
    peak = float(env.max()) if env.size else 0.0
    decays = peak == 0.0 or env[-max(1, bins // 8) :].max() <= 1e-8 * peak
    small = sep < 0.5
    mid = (sep >= 0.5) & (sep <= 1.0)
    power = max(d - spec.mu, 0.0)
    near = float(np.max(vals[small] * sep[small] ** power)) if np.any(small) else 0.0
    ref = float(np.max(vals[mid])) if np.any(mid) else peak
    ratio = near / ref if ref > 0 else 0.0
    passed = bool(decays and math.isfinite(l1) and ratio < 10.0)
    return MajorantProfile(edges, env, l1, ratio, passed, int(sample_budget))


if __name__ == "__main__":  # pragma: no cover
    import sys

    target = sys.argv[1] if len(sys.argv) > 1 else "src/latres/data/" + TABLE_NAME
    build_singular_table(target)
    print(f"wrote {target}")
