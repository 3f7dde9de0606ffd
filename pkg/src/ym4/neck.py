"""Annulus weights and the weighted-inequality measurement harness.

The weight with two matched envelopes on an annulus, the bubble-adapted
piecewise weight with its two interface spheres, and both of its limits
live here, together with the machinery that measures (not certifies)
the constants of the Hardy, Poincare, Gaffney and combined inequalities
over a structured trial family, demonstrates the dilation family that
defeats compact embedding, measures coercivity of the second variation
over a neck region, and checks the pointwise curvature-decay envelope.
"""

from dataclasses import dataclass

import numpy as np

from . import connection, instanton, lattice, secondvar, spectral

TRIAL_SEED = 0x594D4E4B


@dataclass(eq=False)
class WeightField:
    """Positive per-node weight plus the formula that produced it.

    `extended` marks nodes where the defining formula was evaluated
    outside its home region (monotone extension), None when the formula
    is global.
    """

    values: np.ndarray
    provenance: str
    extended: np.ndarray = None

    def check_positive(self, grid):
        if np.any(self.values[grid.interior_mask] <= 0.0):
            raise ValueError(f"{self.provenance}: nonpositive on interior nodes")


def _radial2(grid, center):
    p = grid.center if center is None else np.asarray(center, dtype=float)
    if np.any(np.abs(p - grid.center) > grid.half_width):
        raise ValueError("center lies outside the grid")
    return np.sum((grid.coords - p) ** 2, axis=-1)


def omega_Rr(grid, R, r, center=None):
    """Two-envelope annulus weight 1/R^2 + r^2/|x|^4.

    Exact on r <= |x| <= R; the same formula extends it outside, with
    those nodes flagged through `extended` (the origin included: the
    inner envelope diverges there).
    """
    if not 0.0 < r < R:
        raise ValueError("need 0 < r < R")
    r2 = _radial2(grid, center)
    with np.errstate(divide="ignore"):
        vals = 1.0 / R**2 + r**2 / np.maximum(r2, 1e-300) ** 2
    vals = np.where(r2 > 0.0, vals, np.inf)
    rho = np.sqrt(r2)
    out = WeightField(
        values=vals,
        provenance=f"omega_Rr(R={R}, r={r})",
        extended=(rho < r) | (rho > R),
    )
    return out


def _eta_k_branches(eta, lam):
    """The three radial formulas as callables of rho (vectorized)."""
    outer_val = (1.0 + (lam / eta**2) ** 2) / eta**2

    def middle(rho):
        with np.errstate(divide="ignore"):
            return 1.0 / eta**2 + lam**2 / (eta**2 * np.maximum(rho, 1e-300) ** 4)

    def inner(rho):
        return (eta**2 / lam**2) * (
            (1.0 + 1.0 / eta**2) ** 2 / (1.0 + rho**2 / lam**2) ** 2
            + (lam / eta**2) ** 2
        )

    return (lambda rho: np.full_like(np.asarray(rho, dtype=float), outer_val)), middle, inner


def interface_gaps(eta, lam):
    """Relative branch jumps at the two interface radii (closed forms)."""
    outer, middle, inner = _eta_k_branches(eta, lam)
    gap1 = abs(middle(eta) - outer(eta)) / abs(outer(eta))
    r_in = lam / eta
    gap2 = abs(inner(r_in) - middle(r_in)) / abs(middle(r_in))
    return float(gap1), float(gap2)


def eta_k_values(eta, lam, rho):
    """Bubble-adapted weight as a function of radius (vectorized).

    Validates the parameter ordering and the algebraic interface
    continuity, then stitches the three branches with ties going to the
    middle one.
    """
    if eta <= 0.0 or lam <= 0.0 or not lam / eta < eta:
        raise ValueError("need 0 < lambda/eta < eta")
    gap1, gap2 = interface_gaps(eta, lam)
    if max(gap1, gap2) > 1e-10:
        raise ValueError(
            f"branch formulas disagree at an interface ({gap1:.2e}, {gap2:.2e})"
        )
    rho = np.asarray(rho, dtype=float)
    outer, middle, inner = _eta_k_branches(eta, lam)
    vals = middle(rho)
    vals = np.where(rho > eta, outer(rho), vals)
    vals = np.where(rho < lam / eta, inner(rho), vals)
    return vals


def omega_eta_k(grid, eta, lam, center=None):
    """Bubble-adapted weight: constant outside radius eta, two-envelope
    in the neck, round-profile inside radius lam/eta.

    Interface ties go to the middle branch.  The round inner branch is
    chosen so the blown-up weight becomes the chart form of the round
    weight, not merely a constant.
    """
    vals = eta_k_values(eta, lam, np.sqrt(_radial2(grid, center)))
    return WeightField(
        values=vals,
        provenance=f"omega_eta_k(eta={eta}, lambda={lam})",
    )


def omega_limits(grid, eta, center=None):
    """Both limit weights: the constant one outside the bubble and the
    chart form of the round one inside (vanishing-scale limit of
    scale^2 times the blown-up bubble weight)."""
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    flat = WeightField(
        values=np.full(grid.shape, 1.0 / eta**2),
        provenance=f"omega_eta_inf(eta={eta})",
    )
    hat = WeightField(
        values=instanton.stereographic_weight(grid, eta, center=center),
        provenance=f"omega_hat_eta_inf(eta={eta})",
    )
    return flat, hat


@dataclass(eq=False)
class InequalityReport:
    inequality: str
    lhs: np.ndarray
    rhs: np.ndarray
    ratios: np.ndarray
    constant: float
    params: dict

    @property
    def trial_count(self):
        return int(self.ratios.size)

    def summary(self):
        return (
            f"{self.inequality}: C = {self.constant:.6g} over "
            f"{self.trial_count} trials, ratios in "
            f"[{self.ratios.min():.3g}, {self.ratios.max():.3g}]"
        )


def annulus_trials(grid, R, r, center=None, bumps=40, superpositions=50, seed=TRIAL_SEED):
    """Standard trial family for the inequality harness.

    Bumps sit on a log-radial lattice of centers rotating through the
    four axes, crossed with the four coordinate slots and random
    algebra directions; then random five-term superpositions with
    log-uniform radii and random center directions.  Every support ball
    stays inside the annulus, so trials are Dirichlet-compatible by
    construction.  Deterministic for a fixed seed.
    """
    if not 0.0 < r < R:
        raise ValueError("need 0 < r < R")
    rng = np.random.default_rng(seed)
    p = grid.center if center is None else np.asarray(center, dtype=float)
    margin = grid.half_width - grid.boundary_depth * grid.h
    lo = max(1.25 * r, r + 1.6 * grid.h)
    hi = 0.85 * R
    if lo >= hi:
        raise ValueError("annulus too thin for the trial family on this grid")

    def bump(center_pt, s, slot, alg):
        width = min(0.7 * min(s - r, R - s), 0.95 * (margin - s))
        if width <= 0.0:
            return None
        return lattice.make_bump_oneform(grid, center_pt, width, slot, alg)

    out = []
    for i, s in enumerate(np.geomspace(lo, hi, max(1, bumps // 4))):
        c = np.array(p, dtype=float)
        c[i % 4] += s
        for slot in range(1, 5):
            alg = rng.normal(size=3)
            alg /= np.linalg.norm(alg)
            a = bump(c, s, slot, alg)
            if a is not None and lattice.l2_norm_sq(grid, a) > 0.0:
                out.append(a)
    for _ in range(superpositions):
        acc = grid.zeros("oneform")
        for _ in range(5):
            s = np.exp(rng.uniform(np.log(lo), np.log(hi)))
            u = rng.normal(size=4)
            u /= np.linalg.norm(u)
            slot = int(rng.integers(1, 5))
            alg = rng.normal(size=3)
            alg /= np.linalg.norm(alg)
            coeff = rng.uniform(0.4, 1.0)
            a = bump(p + s * u, s, slot, alg)
            if a is not None:
                acc += coeff * a
        if lattice.l2_norm_sq(grid, acc) > 0.0:
            out.append(acc)
    if not out:
        raise ValueError("no resolvable trial forms on this grid")
    return out


def _check_dirichlet(grid, trials):
    for i, a in enumerate(trials):
        if np.any(a[~grid.interior_mask] != 0.0):
            raise ValueError(f"trial form {i} is not Dirichlet-compatible")


def _safe_inverse_power(grid, center, power):
    """1/|x|^power with the (measure-zero) origin node zeroed, so that
    integrals of compactly-in-annulus supported fields are unaffected."""
    r2 = _radial2(grid, center)
    with np.errstate(divide="ignore"):
        vals = 1.0 / np.maximum(r2, 1e-300) ** (power / 2.0)
    return np.where(r2 > 0.0, vals, 0.0)


def _report(name, pairs, params):
    lhs = np.array([p[0] for p in pairs])
    rhs = np.array([p[1] for p in pairs])
    ratios = lhs / rhs
    if not np.all(np.isfinite(ratios)):
        raise FloatingPointError(f"{name}: non-finite trial ratio")
    return InequalityReport(
        inequality=name,
        lhs=lhs,
        rhs=rhs,
        ratios=ratios,
        constant=float(ratios.max()),
        params=params,
    )


def hardy_ratio(grid, R, r, trials=None, center=None):
    """Measured constant of  int |a|^2/|x|^2  <=  C ||grad a||^2."""
    trials = annulus_trials(grid, R, r, center=center) if trials is None else trials
    _check_dirichlet(grid, trials)
    w = _safe_inverse_power(grid, center, 2)
    pairs = [
        (lattice.l2_norm_sq(grid, a, weight=w), lattice.grad_norm_sq(grid, a))
        for a in trials
    ]
    return _report("hardy", pairs, {"R": R, "r": r, "n": grid.n, "L": grid.half_width})


def poincare_ratios(grid, R, r, trials=None, center=None):
    """Measured constants of the two annulus Poincare forms:
    int |a|^2 <= C R^2 ||grad a||^2   and
    int |a|^2/|x|^4 <= (C/r^2) ||grad a||^2."""
    trials = annulus_trials(grid, R, r, center=center) if trials is None else trials
    _check_dirichlet(grid, trials)
    w4 = _safe_inverse_power(grid, center, 4)
    params = {"R": R, "r": r, "n": grid.n, "L": grid.half_width}
    plain, quartic = [], []
    for a in trials:
        grad = lattice.grad_norm_sq(grid, a)
        plain.append((lattice.l2_norm_sq(grid, a), R**2 * grad))
        quartic.append((lattice.l2_norm_sq(grid, a, weight=w4), grad / r**2))
    return _report("poincare", plain, params), _report("poincare_quartic", quartic, params)


def gaffney_ratio(grid, p=2, trials=None, R=None, r=None, center=None):
    """Measured constant of  ||grad a||^2 <= C (||da||^2 + ||d* a||^2)
    for compactly supported forms.  Only the L^2 case is testable here;
    the Lorentz-exponent versions are out of scope."""
    if p != 2:
        raise ValueError("only p = 2 is supported")
    margin = grid.half_width - grid.boundary_depth * grid.h
    R = 0.85 * margin if R is None else R
    r = 0.12 * margin if r is None else r
    trials = annulus_trials(grid, R, r, center=center) if trials is None else trials
    _check_dirichlet(grid, trials)
    pairs = []
    for a in trials:
        da = lattice.d(grid, a)
        dsa = lattice.dstar(grid, a)
        pairs.append(
            (
                lattice.grad_norm_sq(grid, a),
                lattice.l2_norm_sq(grid, da) + lattice.l2_norm_sq(grid, dsa),
            )
        )
    return _report("gaffney_p2", pairs, {"R": R, "r": r, "n": grid.n, "L": grid.half_width})


def combined_ratio(grid, R, r, trials=None, center=None):
    """Measured constant of  int |a|^2 omega_{R,r} <= C (||da||^2 + ||d* a||^2),
    the weighted estimate whose constant is independent of both radii."""
    trials = annulus_trials(grid, R, r, center=center) if trials is None else trials
    _check_dirichlet(grid, trials)
    wf = omega_Rr(grid, R, r, center=center)
    w = np.where(np.isfinite(wf.values), wf.values, 0.0)
    pairs = []
    for a in trials:
        da = lattice.d(grid, a)
        dsa = lattice.dstar(grid, a)
        pairs.append(
            (
                lattice.l2_norm_sq(grid, a, weight=w),
                lattice.l2_norm_sq(grid, da) + lattice.l2_norm_sq(grid, dsa),
            )
        )
    return _report("combined", pairs, {"R": R, "r": r, "n": grid.n, "L": grid.half_width})


@dataclass(eq=False)
class ScalingReport:
    eps: np.ndarray
    dirichlet: np.ndarray
    l2: np.ndarray
    weighted: np.ndarray
    tolerance: float

    @property
    def dirichlet_constant(self):
        return bool(self.dirichlet.max() <= (1.0 + self.tolerance) * self.dirichlet.min())

    @property
    def l2_scales_quadratically(self):
        ref = self.l2 / (self.l2[0] / self.eps[0] ** 2 * self.eps**2)
        return bool(np.all(np.abs(ref - 1.0) <= self.tolerance))

    @property
    def weighted_constant(self):
        return bool(self.weighted.max() <= (1.0 + self.tolerance) * self.weighted.min())

    def summary(self):
        return (
            f"dilation family over eps={list(self.eps)}: "
            f"dirichlet constant={self.dirichlet_constant}, "
            f"l2 ~ eps^2: {self.l2_scales_quadratically}, "
            f"weighted constant={self.weighted_constant}"
        )


def scaling_noncompactness_demo(grid, a, eps_list, tolerance=0.02):
    """Tabulate the three integrals along the dilation family a_eps.

    The Dirichlet energy and the |x|^-2-weighted mass are dilation
    invariants while the plain mass decays quadratically, which is
    exactly why the embedding fails to be compact.  Each scale runs on
    a proportionally shrunk grid, so the bump always spans the same
    number of cells; a bump narrower than 8 cells is refused.
    """
    a = np.asarray(a, dtype=float)
    amax = np.abs(a).max()
    if amax == 0.0:
        raise ValueError("trial form is identically zero")
    rho = np.sqrt(_radial2(grid, None))
    support = np.abs(a).max(axis=(-2, -1)) > 1e-13 * amax
    span = 2.0 * rho[support].max() / grid.h
    if span < 8.0:
        raise ValueError(f"bump spans {span:.1f} cells, need at least 8")

    eps = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    dirichlet, l2, weighted = [], [], []
    for e in eps:
        if e == 1.0:
            g, ae = grid, a
        else:
            g = lattice.Grid(grid.half_width * e, grid.n, center=grid.center * e)
            ae = instanton.pullback_dilation(grid, a, 1.0 / e, np.zeros(4), target_grid=g)
        da = lattice.d(g, ae)
        dsa = lattice.dstar(g, ae)
        dirichlet.append(lattice.l2_norm_sq(g, da) + lattice.l2_norm_sq(g, dsa))
        l2.append(lattice.l2_norm_sq(g, ae))
        weighted.append(lattice.l2_norm_sq(g, ae, weight=_safe_inverse_power(g, None, 2)))
    return ScalingReport(
        eps=eps,
        dirichlet=np.array(dirichlet),
        l2=np.array(l2),
        weighted=np.array(weighted),
        tolerance=tolerance,
    )


@dataclass(eq=False)
class NeckReport:
    c0: float
    trial_min: float
    spectral: spectral.SpectralReport
    annulus_energy: float
    energy_budget: float
    hypothesis_ok: bool
    ym_residual: float
    violating_trial: np.ndarray
    params: dict

    def summary(self):
        note = "" if self.hypothesis_ok else ", EXCEEDED"
        return (
            f"neck coercivity c0 = {self.c0:.6g} (trial min {self.trial_min:.6g}), "
            f"annulus energy {self.annulus_energy:.4g} "
            f"(budget {self.energy_budget:.3g}{note}), "
            f"residual {self.ym_residual:.3g}"
        )


def neck_coercivity(grid, A, R, r, trials=None, center=None, energy_budget=1.0, k=4):
    """Coercivity constant of the augmented second variation against
    the annulus weight: the smallest eigenvalue of the weighted pencil
    restricted to the annulus, cross-checked by trial quotients.

    The small-energy hypothesis is reported, not asserted: exceeding
    the budget flags the report and the measurement still runs.
    """
    mask = lattice.annulus_mask(grid, r, R, center=center)
    trials = (
        annulus_trials(grid, R, r, center=center) if trials is None else trials
    )
    _check_dirichlet(grid, trials)

    wf = omega_Rr(grid, R, r, center=center)
    w = np.where(np.isfinite(wf.values), wf.values, 0.0)

    quotients = []
    for a in trials:
        denom = lattice.l2_norm_sq(grid, a, weight=w)
        quotients.append(secondvar.calq_form(grid, A, a) / denom)
    quotients = np.array(quotients)
    worst = int(np.argmin(quotients))
    trial_min = float(quotients[worst])

    P = secondvar.assemble(grid, A, weight=wf, region_mask=mask)
    rep = spectral.smallest_eigs(P, min(k, P.dof_map.size))
    c0 = float(rep.eigenvalues[0]) if rep.eigenvalues.size else float("nan")

    F = connection.curvature(grid, A)
    resid = connection.cov_dstar(grid, A, F)
    region = (mask & grid.interior_mask).astype(float)
    residual = float(np.sqrt(lattice.l2_inner(grid, resid, resid, weight=region)))
    energy = connection.ym_energy(grid, A, region_mask=mask)

    return NeckReport(
        c0=c0,
        trial_min=trial_min,
        spectral=rep,
        annulus_energy=energy,
        energy_budget=energy_budget,
        hypothesis_ok=bool(energy <= energy_budget),
        ym_residual=residual,
        violating_trial=trials[worst] if trial_min <= 0.0 else None,
        params={"R": R, "r": r, "n": grid.n, "L": grid.half_width},
    )


@dataclass(eq=False)
class DecayReport:
    constant_weighted: float
    constant_plain: float
    energy: float
    midpoint_weighted: float
    midpoint_plain: float
    tighter_at_midpoint: bool
    params: dict

    def summary(self):
        return (
            f"decay envelopes: C_weighted = {self.constant_weighted:.6g}, "
            f"C_plain = {self.constant_plain:.6g}, E = {self.energy:.6g}, "
            f"midpoint {self.midpoint_weighted:.4g} vs {self.midpoint_plain:.4g} "
            f"(tighter={self.tighter_at_midpoint})"
        )


def sharp_decay_check(grid, A, R, r, center=None):
    """Measure the curvature-decay constants against both envelopes.

    C_weighted bounds |F| by E * omega_{R,r} over the annulus, C_plain
    by E/|x|^2; both envelopes are then compared at the geometric-mean
    radius, where the weighted one should be strictly tighter.  E is
    the curvature L^2 norm over the doubled annulus.
    """
    if not 0.0 < r < R:
        raise ValueError("need 0 < r < R")
    if 2.0 * R > grid.half_width:
        raise ValueError("doubled annulus exceeds the grid")
    rho2 = _radial2(grid, center)
    rho = np.sqrt(rho2)

    F = connection.curvature(grid, A)
    Fmag = np.sqrt(lattice.pointwise_inner(F, F))
    wide = (rho >= 0.5 * r) & (rho <= 2.0 * R)
    energy = float(
        np.sqrt(np.sum(grid.quad_weights * np.where(wide, Fmag**2, 0.0)))
    )
    params = {"R": R, "r": r, "n": grid.n, "L": grid.half_width}

    s = np.sqrt(r * R)
    omega_mid = 1.0 / R**2 + r**2 / s**4
    if energy == 0.0:
        return DecayReport(
            constant_weighted=0.0,
            constant_plain=0.0,
            energy=0.0,
            midpoint_weighted=0.0,
            midpoint_plain=0.0,
            tighter_at_midpoint=False,
            params=params,
        )

    annulus = (rho >= r) & (rho <= R)
    wf = omega_Rr(grid, R, r, center=center)
    cw = float(np.max(np.where(annulus, Fmag / (energy * wf.values), 0.0)))
    cp = float(np.max(np.where(annulus, Fmag * rho2 / energy, 0.0)))
    mid_w = cw * energy * omega_mid
    mid_p = cp * energy / s**2
    return DecayReport(
        constant_weighted=cw,
        constant_plain=cp,
        energy=energy,
        midpoint_weighted=mid_w,
        midpoint_plain=mid_p,
        tighter_at_midpoint=bool(mid_w < mid_p),
        params=params,
    )
