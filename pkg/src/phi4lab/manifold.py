"""Two-parameter soliton manifold on the torus and its tubular geometry.

The manifold is the set of cutoff sech profiles e^{i theta} Q^eta(x - x0).
This module builds charts (profile, tangent frame, surface density), projects
arbitrary fields onto the manifold, splits a field into chart + normal
remainder, and evaluates the curvature determinant and the mass-direction
decomposition used by the conditional-density machinery.

Conventions: the projection threshold `delta` is an absolute L^2 distance on
the grid's own torus; callers working in rescaled frames scale it themselves.
Remainders are stored unrotated (field == chart.soliton + h exactly); the
rotated frame e^{-i theta} h is available from the result when the
decomposition needs it.
"""

from dataclasses import dataclass

import numpy as np

from .lattice import (
    ComplexField,
    TorusGrid,
    _smooth_step,
    mass_functional,
    real_inner,
    spectral_derivative,
    translate,
)
from .schrodinger import ou_operator, ou_sector_projectors, projected_covariance


class AmbiguousProjectionError(RuntimeError):
    """Two well-separated correlation peaks tie; carries both candidates."""

    def __init__(self, candidates):
        self.candidates = candidates
        super().__init__(
            "projection is ambiguous between centers "
            + ", ".join("x0=%.6g (|c|=%.6g)" % c for c in candidates)
        )


class OutOfTubeError(RuntimeError):
    def __init__(self, distance, threshold):
        self.distance = distance
        self.threshold = threshold
        super().__init__(
            "field lies at distance %.6g from the manifold, outside the "
            "tube of radius %.6g" % (distance, threshold)
        )


def torus_cutoff(grid, x0=0.0):
    """C^inf bump in the scaled variable u = wrap(x - x0)/half_length.

    Identically 1 for |u| <= 1/8 and 0 for |u| >= 1/4, so the cutoff never
    touches the soliton core once the torus holds a few widths.
    """
    u = np.abs(grid.wrap(grid.points - x0)) / grid.half_length
    return _smooth_step((0.25 - u) / 0.125)


def approximate_soliton(profile, x0=0.0, theta=0.0):
    """Cutoff soliton e^{i theta} eta(x - x0) Q(x - x0) as a field.

    The stored profile is moved by a spectral shift (exact for grid-aligned
    x0, band-limited otherwise) and localized by the torus cutoff.
    """
    grid = profile.grid
    lam = profile.multiplier_lambda
    if grid.spacing * np.sqrt(lam) > 0.5 + 1e-12:
        raise ValueError(
            "grid spacing %g too coarse for soliton width %g"
            % (grid.spacing, 1.0 / np.sqrt(lam))
        )
    shifted = translate(ComplexField(grid, profile.values.astype(complex)), x0)
    vals = np.exp(1j * theta) * torus_cutoff(grid, x0) * shifted.values
    return ComplexField(grid, vals)


def _h1_inner(u, v):
    du = spectral_derivative(u)
    dv = spectral_derivative(v)
    return real_inner(u, v) + real_inner(du, dv)


@dataclass(frozen=True)
class ManifoldChart:
    """A point on the soliton manifold with its orthonormal tangent frame.

    tangent_x and tangent_theta are H^1-orthonormal; density is the surface
    measure factor |tau_1|_{H^1} |tau_2 - proj tau_2|_{H^1} built from the
    raw coordinate tangents, invariant under (x0, theta) by equivariance.
    """

    grid: TorusGrid
    x0: float
    theta: float
    lam: float
    soliton: ComplexField
    tangent_x: ComplexField
    tangent_theta: ComplexField
    density: float


def _raw_tangents(soliton):
    # d/dx0 of a pure shift is minus the spatial derivative; d/dtheta is i s
    tau1 = ComplexField(soliton.grid, -spectral_derivative(soliton).values)
    tau2 = ComplexField(soliton.grid, 1j * soliton.values)
    return tau1, tau2


def tangent_frame_and_density(profile, x0=0.0, theta=0.0):
    """H^1 Gram-Schmidt frame (t1, t2) and the chart's surface density."""
    s = approximate_soliton(profile, x0, theta)
    tau1, tau2 = _raw_tangents(s)
    n1 = np.sqrt(_h1_inner(tau1, tau1))
    t1 = tau1 * (1.0 / n1)
    cross = _h1_inner(tau2, t1)  # zero by parity, kept for exactness
    perp = ComplexField(s.grid, tau2.values - cross * t1.values)
    n2 = np.sqrt(_h1_inner(perp, perp))
    t2 = perp * (1.0 / n2)
    return t1, t2, float(n1 * n2)


def make_chart(profile, x0=0.0, theta=0.0):
    s = approximate_soliton(profile, x0, theta)
    t1, t2, density = tangent_frame_and_density(profile, x0, theta)
    return ManifoldChart(
        grid=profile.grid,
        x0=float(x0),
        theta=float(theta),
        lam=float(profile.multiplier_lambda),
        soliton=s,
        tangent_x=t1,
        tangent_theta=t2,
        density=density,
    )


@dataclass(frozen=True)
class ProjectionResult:
    """Nearest chart and remainder; chart is None outside the threshold.

    h is unrotated: field == chart.soliton + h holds exactly on the grid.
    """

    chart: object
    h: object
    distance: float
    converged: bool

    def rotated_remainder(self):
        """Remainder in the chart frame, e^{-i theta} h."""
        if self.chart is None or self.h is None:
            raise ValueError("no chart: the field was not inside the tube")
        vals = np.exp(-1j * self.chart.theta) * self.h.values
        return ComplexField(self.h.grid, vals)


def _correlation_peak(field, s0):
    """Torus-wide matched filter: c(sigma) = <field, s0(. - sigma)> / dx."""
    fhat = np.fft.fft(field.values)
    shat = np.fft.fft(s0.values)
    coeff = fhat * np.conj(shat)
    c = np.fft.ifft(coeff)
    return c, coeff


def _c_of_sigma(coeff, k, sigma, n):
    phase = np.exp(1j * k * sigma)
    c = np.sum(coeff * phase) / n
    cp = np.sum(coeff * (1j * k) * phase) / n
    cpp = np.sum(coeff * (-(k ** 2)) * phase) / n
    return c, cp, cpp


def _refine_peak(coeff, grid, m_star):
    """Parabolic seed then Newton on |c(sigma)|^2 for the sub-grid center."""
    n = grid.n_points
    amp2 = np.abs(np.fft.ifft(coeff)) ** 2
    a0 = amp2[m_star]
    am = amp2[(m_star - 1) % n]
    ap = amp2[(m_star + 1) % n]
    denom = am - 2.0 * a0 + ap
    off = 0.5 * (am - ap) / denom if denom < 0 else 0.0
    sigma = (m_star + off) * grid.spacing
    k = grid.wavenumbers
    for _ in range(8):
        c, cp, cpp = _c_of_sigma(coeff, k, sigma, n)
        f1 = 2.0 * np.real(np.conj(c) * cp)
        f2 = 2.0 * (np.real(np.conj(c) * cpp) + np.abs(cp) ** 2)
        if f2 >= 0:
            break
        step = -f1 / f2
        sigma += step
        if abs(step) < 1e-13 * grid.half_length:
            break
    c, _, _ = _c_of_sigma(coeff, k, sigma, n)
    return sigma, c


def _ambiguity_check(c, grid, width, rel_tol=1e-6):
    amp = np.abs(c)
    n = grid.n_points
    is_max = (amp > np.roll(amp, 1)) & (amp >= np.roll(amp, -1))
    idx = np.nonzero(is_max)[0]
    if idx.size < 2:
        return
    order = idx[np.argsort(amp[idx])[::-1]]
    top, second = order[0], order[1]
    sep = abs(grid.wrap((top - second) * grid.spacing))
    if sep > 4.0 * width and amp[top] - amp[second] <= rel_tol * amp[top]:
        cands = [
            (float(grid.wrap(top * grid.spacing)), float(amp[top])),
            (float(grid.wrap(second * grid.spacing)), float(amp[second])),
        ]
        raise AmbiguousProjectionError(cands)


def _orthogonality_residual(field, profile, x0, theta):
    """Weighted pairings <field - s, (1 - d^2) tau> for both tangents."""
    s = approximate_soliton(profile, x0, theta)
    h = ComplexField(s.grid, field.values - s.values)
    tau1, tau2 = _raw_tangents(s)
    out = []
    for tau in (tau1, tau2):
        a = ComplexField(
            s.grid, tau.values - spectral_derivative(tau, 2).values
        )
        out.append(real_inner(h, a))
    hn = np.sqrt(mass_functional(h))
    return np.array(out), h, hn


def project_manifold(field, profile, delta=None):
    """Nearest-chart projection: FFT matched filter, then weighted Newton.

    The scan maximizes |<field, s(. - sigma)>| over all centers with the
    optimal phase closed-form; a 2x2 Newton iteration then polishes (x0,
    theta) to make the remainder (1 - d^2)-orthogonal to the tangents,
    which is H^1-orthogonality of the remainder to the manifold.

    delta is an absolute L^2 threshold (default 0.2 sqrt(D)); at or beyond
    it the result carries no chart.  Ties between separated correlation
    peaks raise AmbiguousProjectionError.
    """
    grid = field.grid
    if delta is None:
        delta = 0.2 * np.sqrt(profile.mass_d)
    lam = profile.multiplier_lambda
    width = 1.0 / np.sqrt(lam)
    s0 = approximate_soliton(profile, 0.0, 0.0)
    c, coeff = _correlation_peak(field, s0)
    _ambiguity_check(c, grid, width)
    m_star = int(np.argmax(np.abs(c)))
    sigma, c_star = _refine_peak(coeff, grid, m_star)
    x0 = float(grid.wrap(sigma))
    theta = float(np.angle(c_star)) if np.abs(c_star) > 0 else 0.0

    # metric distance at the scan optimum decides tube membership
    dist_sq = (
        mass_functional(field)
        + mass_functional(s0)
        - 2.0 * grid.spacing * np.abs(c_star)
    )
    distance = float(np.sqrt(max(dist_sq, 0.0)))
    if distance >= delta:
        return ProjectionResult(None, None, distance, True)

    converged = False
    hx = 1e-5 * width
    ht = 1e-5
    pair_scale = np.sqrt(mass_functional(s0)) * (1.0 + 1.0 / width)
    # the absolute floor keeps an exact manifold point convergent: there
    # the remainder norm is pure roundoff and a purely relative test on it
    # could never be met
    floor = 5e-14 * np.sqrt(mass_functional(field)) * pair_scale
    for _ in range(12):
        res, h, hn = _orthogonality_residual(field, profile, x0, theta)
        scale = hn * pair_scale
        if np.max(np.abs(res)) <= max(1e-11 * scale, floor):
            converged = True
            break
        cols = []
        for dp, axis in ((hx, 0), (ht, 1)):
            shift = np.array([dp, 0.0]) if axis == 0 else np.array([0.0, dp])
            rp, _, _ = _orthogonality_residual(
                field, profile, x0 + shift[0], theta + shift[1]
            )
            rm, _, _ = _orthogonality_residual(
                field, profile, x0 - shift[0], theta - shift[1]
            )
            cols.append((rp - rm) / (2.0 * dp))
        jac = np.column_stack(cols)
        det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
        if abs(det) < 1e-30:
            break
        step = np.linalg.solve(jac, -res)
        x0 = float(grid.wrap(x0 + step[0]))
        theta = float(np.angle(np.exp(1j * (theta + step[1]))))

    chart = make_chart(profile, x0, theta)
    h = ComplexField(grid, field.values - chart.soliton.values)
    distance = float(np.sqrt(mass_functional(h)))
    return ProjectionResult(chart, h, distance, converged)


def normal_coordinates(field, profile, delta=None):
    """Chart and unrotated remainder; raises OutOfTubeError past delta."""
    if delta is None:
        delta = 0.2 * np.sqrt(profile.mass_d)
    result = project_manifold(field, profile, delta)
    if result.chart is None:
        raise OutOfTubeError(result.distance, delta)
    return result.chart, result.h


def weingarten_det(chart, h, step_x=None, step_theta=1e-4):
    """det(Id - W) for the normal field h, W the shape operator at the chart.

    The normal field over displaced chart parameters is realized by group
    transport, e^{i(theta'-theta)} h(. - (x0'-x0)); its parameter derivatives
    are taken by central differences and paired in H^1 against the raw
    tangents, then corrected by the tangent Gram matrix.  At h = 0 the
    matrix vanishes identically and the determinant is exactly 1.
    """
    grid = chart.grid
    if step_x is None:
        step_x = 1e-4 / np.sqrt(chart.lam)
    hf = h if isinstance(h, ComplexField) else ComplexField(grid, h)
    # transported-normal parameter derivatives at the base point
    dx_n = ComplexField(
        grid,
        (translate(hf, step_x).values - translate(hf, -step_x).values)
        / (2.0 * step_x),
    )
    dth_n = ComplexField(
        grid,
        (np.exp(1j * step_theta) - np.exp(-1j * step_theta))
        / (2.0 * step_theta)
        * hf.values,
    )
    tau1, tau2 = _raw_tangents(chart.soliton)
    rows = (dth_n, dx_n)
    cols = (tau1, tau2)
    m = np.array(
        [[-_h1_inner(r, t) for t in cols] for r in rows]
    )
    gram = np.array(
        [
            [_h1_inner(tau1, tau1), _h1_inner(tau1, tau2)],
            [_h1_inner(tau2, tau1), _h1_inner(tau2, tau2)],
        ]
    )
    w = m @ np.linalg.inv(gram)
    return float(np.linalg.det(np.eye(2) - w))


@dataclass(frozen=True)
class NormalDecomposition:
    """Mass-direction split of a rotated remainder: Re h = t gamma + Re h_perp.

    gamma = C1 Q / sigma^2 with sigma^2 = <C1 Q, Q>, so <Q, gamma> = 1 and
    the perp part has exactly zero Q-pairing.  The imaginary part passes
    through untouched; its own sector constraint lives in the covariance.
    """

    t: float
    gamma: np.ndarray
    h_perp: ComplexField
    sigma_sq: float
    gamma_norm_sq: float
    covariance: object


def mass_direction_covariance(chart):
    """Mass-sector covariance handle: OU operator on the shift-free sector."""
    op = ou_operator(chart.grid, chart.lam)
    sector_re, _ = ou_sector_projectors(chart, chart.lam)
    return projected_covariance(op, sector_re)


def decompose_normal_field(chart, h_rotated, covariance=None):
    """Split the rotated remainder along the soliton mass direction.

    h_rotated must be in the chart frame (e^{-i theta} h); pass the handle
    back in when decomposing many remainders at a fixed chart.
    """
    grid = chart.grid
    dx = grid.spacing
    if covariance is None:
        covariance = mass_direction_covariance(chart)
    q = np.real(np.exp(-1j * chart.theta) * chart.soliton.values)
    c1q = dx * (covariance.green @ q)
    sigma_sq = float(dx * np.dot(q, c1q))
    if sigma_sq <= 0:
        raise ValueError("degenerate mass direction: <C1 Q, Q> = %g" % sigma_sq)
    gamma = c1q / sigma_sq
    re_h = np.real(h_rotated.values)
    t = float(dx * np.dot(q, re_h))
    re_perp = re_h - t * gamma
    h_perp = ComplexField(grid, re_perp + 1j * np.imag(h_rotated.values))
    return NormalDecomposition(
        t=t,
        gamma=gamma,
        h_perp=h_perp,
        sigma_sq=sigma_sq,
        gamma_norm_sq=float(dx * np.sum(gamma ** 2)),
        covariance=covariance,
    )


@dataclass(frozen=True)
class TPlusResult:
    t_plus: float
    solvable: bool
    residual: float


def tplus_solve(gamma_norm_sq, gaussian_pair, h_perp_norm_sq, big_l):
    """Larger root of (1/2)|gamma|^2 t^2 + (L^{3/2} + g) t + (1/2)|h_perp|^2.

    Uses the cancellation-free root formula, so the defining quadratic
    vanishes at the returned root to roundoff.  A negative discriminant
    means the mass constraint cannot be met along gamma; the root is then
    reported as 0 with solvable False.
    """
    if gamma_norm_sq <= 0:
        raise ValueError("gamma norm must be positive")
    a = 0.5 * gamma_norm_sq
    b = big_l ** 1.5 + gaussian_pair
    c = 0.5 * h_perp_norm_sq
    disc = b * b - 4.0 * a * c
    if disc < 0:
        return TPlusResult(0.0, False, float("nan"))
    root = np.sqrt(disc)
    if b >= 0:
        t_plus = -2.0 * c / (b + root)
    else:
        t_plus = (-b + root) / (2.0 * a)
    residual = a * t_plus ** 2 + b * t_plus + c
    return TPlusResult(float(t_plus), True, float(residual))


@dataclass(frozen=True)
class MassWeightReport:
    t_plus: float
    solvable: bool
    c0: float
    b_coeff: float
    gaussian_pair: float
    log_weight: float
    quadratic_residual: float


def conditional_mass_weight(decomp, chart, big_l):
    """Gaussian-sector weight of the mass-constrained slice at this chart.

    Log-weight c0 t+^2 + b t+ - log(sqrt(2 pi) sigma) - (3/2) log L, with
    c0 = (3/2) int (Q gamma)^2 - 1/(2 sigma^2) and b = 3 int Q^2 gamma
    Re h_perp; unsolvable slices carry t+ = 0 and keep the flag.
    """
    dx = chart.grid.spacing
    q = np.real(np.exp(-1j * chart.theta) * chart.soliton.values)
    gamma = decomp.gamma
    re_perp = np.real(decomp.h_perp.values)
    gaussian_pair = float(dx * np.dot(gamma, re_perp))
    perp_norm_sq = float(dx * np.sum(re_perp ** 2))
    sol = tplus_solve(
        decomp.gamma_norm_sq, gaussian_pair, perp_norm_sq, big_l
    )
    c0 = float(1.5 * dx * np.sum((q * gamma) ** 2) - 0.5 / decomp.sigma_sq)
    b_coeff = float(3.0 * dx * np.sum(q * q * gamma * re_perp))
    log_weight = (
        c0 * sol.t_plus ** 2
        + b_coeff * sol.t_plus
        - np.log(np.sqrt(2.0 * np.pi) * np.sqrt(decomp.sigma_sq))
        - 1.5 * np.log(big_l)
    )
    return MassWeightReport(
        t_plus=sol.t_plus,
        solvable=sol.solvable,
        c0=c0,
        b_coeff=b_coeff,
        gaussian_pair=gaussian_pair,
        log_weight=float(log_weight),
        quadratic_residual=sol.residual,
    )


def error_functional(chart, h_rotated, big_l):
    """Cubic-plus-quartic remainder of the expanded energy, L^3-scaled frame.

    L^3 E = L^{-3/2} int Q^eta |h|^2 Re h + L^{-3} int |h|^4 with the chart
    profile as Q^eta and h in the rotated frame.
    """
    dx = chart.grid.spacing
    q = np.real(np.exp(-1j * chart.theta) * chart.soliton.values)
    hv = h_rotated.values
    habs2 = hv.real ** 2 + hv.imag ** 2
    cubic = float(dx * np.sum(q * habs2 * hv.real))
    quartic = float(dx * np.sum(habs2 ** 2))
    return big_l ** -1.5 * cubic + big_l ** -3.0 * quartic
