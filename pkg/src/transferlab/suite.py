"""The verification suite: one function per acceptance criterion.

Every criterion returns a list of :class:`Check` records; the suite
aggregates them into one row per (criterion, quantity) holding the worst
value, runs criteria in isolation (numeric or input failures mark the
criterion failed and the rest still run), and sorts rows by id.
"""
from __future__ import annotations

import multiprocessing as mp
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl

from . import assembly, catalog, curvecoords, markov, nspace, transfer
from .errors import ConfigurationError, TransferLabError
from .experiments import DECOUPLE_SLACK, MARKOV_TOL, NORM_TOL, RATE_SLACK, RUNNERS, Check
from .lattice import MetricSpec, build_lattice, sample_metric
from .spectral import weighted_norm

ISO_TOL = 1e-8
IDENTITY_TOL = 1e-10
ORACLE_TOL = 1e-7
SANITY_TOL = 0.02
GENERATOR_CONSISTENCY = 0.05

FLAT = MetricSpec("flat")
SLOPE1 = MetricSpec("curve-induced", {"slope": 1.0})


def _dense_projector(G, sites):
    P = np.zeros_like(G)
    P[sites, :] = np.linalg.inv(G[np.ix_(sites, sites)]) @ G[sites, :]
    return P


def _rel(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))) / max(np.max(np.abs(b)), 1e-300))


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def c1_markov(tier: str, seed: int) -> list[Check]:
    cid = "C1-markov"
    out = []
    lat = build_lattice([24, 24], [0.5, 0.5], [0.0, 0.0])
    cases = [("flat", FLAT), ("slope1", SLOPE1)]
    for mname, spec in cases:
        space = catalog.nspace_for(lat, spec, 1.0)
        graph = assembly.adjacency_graph(space.operator)
        for tname, (A, C, B) in catalog.markov_triples(lat).items():
            label = f"{mname}/{tname}"
            sep = markov.separation_check(A, B, C, graph)
            out.append(Check(cid, "separated", float(sep), ">=", 1.0, label))
            res = markov.markov_residual(A, C, B, space, seed=seed)
            out.append(Check(cid, "markov_residual", res, "<=", MARKOV_TOL, label))
    if tier == "full":
        lat3 = build_lattice([9, 7, 7], [0.5, 0.5, 0.5])
        space = catalog.nspace_for(lat3, FLAT, 1.0)
        t = lat3.time_of(np.arange(lat3.count))
        A = markov.region_from_mask(lat3, t <= 2, "A")
        C = markov.region_from_mask(lat3, t == 4, "C")
        B = markov.region_from_mask(lat3, t >= 6, "B")
        res = markov.markov_residual(A, C, B, space, seed=seed)
        out.append(Check(cid, "markov_residual", res, "<=", MARKOV_TOL, "flat3d/slabs-cut"))
    return out


def _isometry_checks(cid, label, space, sigmas):
    out = []
    n = space.size
    G = space.gram(np.arange(n), np.arange(n))
    for sigma in sigmas:
        s = nspace.slice_space(sigma, space)
        eye = np.eye(s.size)
        R = np.column_stack([nspace.restrict(nspace.embed(nspace.SliceVector(s, e)), sigma, space).values for e in eye])
        r1 = weighted_norm(R - eye, s.gram, s.gram)
        J = np.column_stack([nspace.embed(nspace.restrict(f, sigma, space)) for f in np.eye(n)])
        P = markov.projector(markov.slice_region(space.lattice, sigma), space).matrix
        r2 = weighted_norm(J - P, G, G)
        tag = f"{label}/slice{sigma}"
        out.append(Check(cid, "restrict_embed_identity", r1, "<=", ISO_TOL, tag))
        out.append(Check(cid, "embed_restrict_projector", r2, "<=", ISO_TOL, tag))
        for k, v in nspace.sqrt_identity_residuals(s).items():
            out.append(Check(cid, f"sqrt_{k}", v, "<=", ISO_TOL, tag))
    return out


def c2_isometries(tier: str, seed: int) -> list[Check]:
    cid = "C2-isometry"
    lat = build_lattice([17, 17], [0.5, 0.5], [-4.0, -4.0])
    out = []
    for mname, spec in (("flat", FLAT), ("slope1", SLOPE1)):
        out += _isometry_checks(cid, mname, catalog.nspace_for(lat, spec, 1.0), (4, 8, 12))
    if tier == "full":
        lat3 = build_lattice([9, 5, 5], [0.5, 0.5, 0.5])
        out += _isometry_checks(cid, "flat3d", catalog.nspace_for(lat3, FLAT, 1.0), (2, 4, 6))
    return out


def c3_algebra(tier: str, seed: int) -> list[Check]:
    cid = "C3-algebra"
    lat = build_lattice([17, 17], [0.5, 0.5], [-4.0, -4.0])
    out = []
    for mname, spec in (("flat", FLAT), ("slope1", SLOPE1)):
        space = catalog.nspace_for(lat, spec, 1.0)
        for s1, s2, s3 in ((4, 8, 12), (3, 6, 13), (13, 9, 2)):
            tag = f"{mname}/{s1}-{s2}-{s3}"
            comp = transfer.composition_residual(s1, s2, s3, space, seed=seed)
            out.append(Check(cid, "composition_residual", comp["residual"], "<=", NORM_TOL, tag))
            # unordered composition is recorded, not asserted
            un = transfer.composition_residual(s2, s1, s3, space, seed=seed)
            out.append(Check(cid, "unordered_composition", un["residual"], "info", 0.0, tag))
            for s in (s1, s2, s3):
                p = transfer.propagator(s, s, space)
                r = weighted_norm(p.matrix - np.eye(p.source.size), p.source.gram, p.source.gram)
                out.append(Check(cid, "identity_residual", r, "<=", IDENTITY_TOL, f"{mname}/slice{s}"))
            for a, b in ((s2, s1), (s3, s2), (s3, s1)):
                nrm = transfer.operator_norm(transfer.propagator(a, b, space), seed=seed)
                out.append(Check(cid, "propagator_norm", nrm, "<=", 1 + NORM_TOL, f"{mname}/{b}<-{a}"))
    return out


def c4_exponential_bound(tier: str, seed: int) -> list[Check]:
    cid = "C4-exp-bound"
    out = []
    boxes = [(catalog.rate_box(2), "")] + ([(catalog.rate_box(3), "3d/")] if tier == "full" else [])
    for lat, prefix in boxes:
        entries = catalog.rate_metrics(lat) if lat.dim == 2 else catalog.reflection_metrics(lat)
        for e in entries:
            space = catalog.nspace_for(lat, e.spec, e.mass)
            for r in transfer.decay_rate((0.5, 1.0, 2.0), space, with_spectrum=False):
                tag = f"{prefix}{e.name}/tau{r.tau:g}"
                out.append(Check(cid, "rate_over_omega", r.rate / r.omega_max, ">=", RATE_SLACK, tag))
                out.append(Check(cid, "norm", r.norm, "<=", 1 + NORM_TOL, tag))
    return out


def c5_generator(tier: str, seed: int) -> list[Check]:
    cid = "C5-generator"
    out = []
    taus = (0.5, 1.0, 2.0)
    boxes = [(catalog.rate_box(2), "")] + ([(catalog.rate_box(3), "3d/")] if tier == "full" else [])
    for lat, prefix in boxes:
        for e in catalog.reflection_metrics(lat):
            space = catalog.nspace_for(lat, e.spec, e.mass)
            tau = transfer.generator_tau(taus, space)
            s, t = transfer.centered_pair(transfer.steps_for(tau, space), space)
            p = transfer.propagator(s, t, space)
            rep = transfer.generator_spectrum(p, tau)
            adj = transfer.self_adjointness_check(space.metric, p)
            tag = f"{prefix}{e.name}/tau{tau:g}"
            out.append(Check(cid, "reflection_invariant", float(adj["symmetric"]), ">=", 1.0, tag))
            out.append(Check(cid, "symmetry_residual", rep.symmetry_residual, "<=", 1e-8, tag))
            out.append(Check(cid, "max_imag", rep.max_imag, "<=", 1e-8, tag))
            out.append(Check(cid, "min_re_over_omega", rep.min_re_spectrum / rep.omega_max, ">=", RATE_SLACK, tag))
            if e.name == "flat-m1":
                far = transfer.decay_rate([max(taus)], space, with_spectrum=False)[0]
                dev = abs(rep.min_re_spectrum / far.rate - 1)
                out.append(Check(cid, "generator_vs_rate", dev, "<=", GENERATOR_CONSISTENCY, tag))
    return out


def _decouple_checks(cid, inst, lower=None):
    chart = curvecoords.build_chart(inst.polyline)
    setup = curvecoords.chart_space(chart, inst.chart_lattice, inst.mass)
    rep = curvecoords.decoupling_experiment(inst.L1, inst.L2, setup)
    ratio = rep.direct / rep.bound
    out = [
        Check(cid, "direct_over_bound", ratio, "<=", DECOUPLE_SLACK, inst.name),
        Check(cid, "chain_residual", rep.chain_residual, "<=", 1e-8, inst.name),
        Check(cid, "bound", rep.bound, "info", 0.0, inst.name),
        Check(cid, "direct", rep.direct, "info", 0.0, inst.name),
    ]
    if lower is not None:
        out.append(Check(cid, "direct_over_bound_min", ratio, ">=", lower, inst.name))
    return out


def c6_decoupling(tier: str, seed: int) -> list[Check]:
    cid = "C6-decoupling"
    out = _decouple_checks(cid, catalog.slabs_instance(), lower=0.5)
    spacings = (0.5, 0.25) if tier == "full" else (0.5,)
    for h in spacings:
        inst = catalog.lshape_instance(h)
        P1, P2 = catalog.lshape_points(h)
        sep = catalog.straight_line_separable(P1, P2)
        out.append(Check(cid, "straight_line_separable", float(sep), "<=", 0.0, inst.name))
        out += _decouple_checks(cid, inst)
    return out


def _oracle_checks(cid, label, lat, spec, m, seed):
    rng = np.random.default_rng(seed)
    metric = sample_metric(spec, lat)
    op = assembly.assemble_helmholtz(lat, metric, m)
    space = nspace.NSpace(assembly.green_kernel(op))
    n = lat.count
    mu = op.weights
    Einv = np.linalg.inv(op.stiffness.toarray())
    G = mu[:, None] * Einv * mu[None, :]
    out = [Check(cid, "green_kernel", _rel(space.kernel.matrix, Einv), "<=", ORACLE_TOL, label)]

    f, h = rng.standard_normal(n), rng.standard_normal(n)
    out.append(Check(cid, "n_inner", _rel(nspace.n_inner(f, h, space), f @ G @ h), "<=", ORACLE_TOL, label))

    i = lat.time_of(np.arange(n))
    regions = {
        "half": np.nonzero(i <= lat.shape[0] // 2 - 1)[0],
        "random60": np.sort(rng.choice(n, 60, replace=False)),
        "single": np.array([n // 2 + 3]),
    }
    for rname, sites in regions.items():
        P = markov.projector(markov.Region(sites, rname), space).matrix
        out.append(Check(cid, "projector", _rel(P, _dense_projector(G, sites)), "<=", ORACLE_TOL, f"{label}/{rname}"))

    nt = lat.shape[0]
    for s, t in ((2, nt - 3), (nt - 3, 3)):
        p = transfer.propagator(s, t, space)
        S = [nspace.slice_space(k, space) for k in (s, t)]
        nu_s, nu_t = S[0].nu, S[1].nu
        ss, tt = lat.slice_sites(s), lat.slice_sites(t)
        Ss = nu_s[:, None] * Einv[np.ix_(ss, ss)] * nu_s[None, :]
        St = nu_t[:, None] * Einv[np.ix_(tt, tt)] * nu_t[None, :]
        Cts = nu_t[:, None] * Einv[np.ix_(tt, ss)] * nu_s[None, :]
        U = np.linalg.inv(St) @ Cts
        out.append(Check(cid, "propagator", _rel(p.matrix, U), "<=", ORACLE_TOL, f"{label}/{t}<-{s}"))
        nrm = transfer.operator_norm(p, seed=seed)
        out.append(Check(cid, "propagator_norm", _rel(nrm, weighted_norm(U, Ss, St)), "<=", ORACLE_TOL, f"{label}/{t}<-{s}"))
        F = S[0].sqrt_matrix
        Ehat = Einv[np.ix_(ss, ss)] * nu_s[None, :]
        out.append(Check(cid, "slice_sqrt", _rel(F, np.real(sl.sqrtm(Ehat))), "<=", ORACLE_TOL, f"{label}/slice{s}"))

    A1 = np.nonzero(i <= 3)[0]
    A2 = np.nonzero(i >= nt - 4)[0]
    c = markov.cross_norm(markov.Region(A1, "L1"), markov.Region(A2, "L2"), space, rtol=1e-14, seed=seed)
    L1 = np.linalg.cholesky(G[np.ix_(A1, A1)])
    L2 = np.linalg.cholesky(G[np.ix_(A2, A2)])
    X = sl.solve_triangular(L1, G[np.ix_(A1, A2)], lower=True)
    oracle = np.linalg.norm(sl.solve_triangular(L2, X.T, lower=True).T, 2)
    out.append(Check(cid, "cross_norm", _rel(c, oracle), "<=", ORACLE_TOL, label))

    # non-separating C: a partial slice
    j = np.arange(n) % lat.slice_size
    A = np.nonzero(i <= 2)[0]
    B = np.nonzero(i >= nt - 3)[0]
    C = np.nonzero((i == nt // 2) & (j < lat.slice_size // 2))[0]
    res = markov.markov_residual(markov.Region(A, "A"), markov.Region(C, "C"), markov.Region(B, "B"), space, seed=seed)
    PA, PB, PC = (_dense_projector(G, x) for x in (A, B, C))
    dense = weighted_norm((PA @ PC @ PB - PA @ PB) @ PB, G, G)
    out.append(Check(cid, "markov_residual", _rel(res, dense), "<=", ORACLE_TOL, label))

    if metric.spec.family != "curve-induced":
        s, t = transfer.centered_pair(2, space)
        p = transfer.propagator(s, t, space)
        tau = p.tau
        rep = transfer.generator_spectrum(p, tau)
        L = sl.logm(transfer.symmetrized_transfer(p))
        oracle = np.sort(np.real(np.linalg.eigvals(-L / tau)))
        out.append(Check(cid, "generator_spectrum", _rel(rep.eigenvalues.real, oracle), "<=", ORACLE_TOL, label))
    return out


def c7_oracle(tier: str, seed: int) -> list[Check]:
    cid = "C7-oracle"
    lat = build_lattice([10, 10], [0.5, 0.5], [0.0, 0.0])
    prof = catalog.x_profile(10, 0.5, 0.0)
    cases = [
        ("flat", FLAT),
        ("slope1", SLOPE1),
        ("diag-xdep", MetricSpec("diagonal-stationary", {"diag": [prof, prof]})),
    ]
    out = []
    for label, spec in cases:
        out += _oracle_checks(cid, label, lat, spec, 1.0, seed)
    if tier == "full":
        lat3 = build_lattice([4, 5, 5], [0.5, 0.5, 0.5])
        out += _oracle_checks(cid, "flat3d", lat3, FLAT, 1.0, seed)
    return out


def c8_flat_sanity(tier: str, seed: int) -> list[Check]:
    cid = "C8-flat-sanity"
    lat = catalog.sanity_lattice()
    space = catalog.nspace_for(lat, FLAT, 1.0)
    src = lat.index([24, 64])
    rate = assembly.kernel_decay_rate(space.kernel, src, [16, 24, 32, 40, 48])
    out = [Check(cid, "kernel_rate_error", abs(rate - 1.0), "<=", SANITY_TOL, "source(3,8)")]
    kappa = catalog.transverse_gap(lat.shape[1], lat.spacing[1], lat.spacing[0], 1.0)
    for r in transfer.decay_rate((0.5, 1.0), space, with_spectrum=False):
        out.append(Check(cid, "transfer_rate_error", abs(r.rate / kappa - 1), "<=", SANITY_TOL, f"tau{r.tau:g}"))
    return out


CRITERIA = {
    "C1-markov": c1_markov,
    "C2-isometry": c2_isometries,
    "C3-algebra": c3_algebra,
    "C4-exp-bound": c4_exponential_bound,
    "C5-generator": c5_generator,
    "C6-decoupling": c6_decoupling,
    "C7-oracle": c7_oracle,
    "C8-flat-sanity": c8_flat_sanity,
}


# ---------------------------------------------------------------------------
# suite driver
# ---------------------------------------------------------------------------

@dataclass
class SuiteResult:
    rows: list = field(default_factory=list)
    details: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.rows)


def _error_check(cid, exc) -> Check:
    return Check(cid, "error", float("nan"), "<=", 0.0, f"{type(exc).__name__}: {exc}")


def _run_criterion(name: str, tier: str, seed: int):
    t0 = time.perf_counter()
    try:
        checks = CRITERIA[name](tier, seed)
    except ConfigurationError:
        raise
    except (TransferLabError, np.linalg.LinAlgError) as exc:
        checks = [_error_check(name, exc)]
    return name, checks, time.perf_counter() - t0


def _run_instance(cfg):
    t0 = time.perf_counter()
    cid = f"X-{cfg.id}"
    try:
        outcome = RUNNERS[cfg.kind](cfg)
        checks = [Check(cid, c.quantity, c.value, c.comparison, c.tolerance, c.note) for c in outcome.checks]
    except ConfigurationError:
        raise
    except (TransferLabError, np.linalg.LinAlgError) as exc:
        checks = [_error_check(cid, exc)]
    return cid, checks, time.perf_counter() - t0


def aggregate(checks: list[Check]) -> list[dict]:
    """One row per (id, quantity): the worst value and whether every check passed."""
    groups: dict = {}
    for c in checks:
        if c.comparison == "info":
            continue
        groups.setdefault((c.id, c.quantity), []).append(c)
    rows = []
    for (cid, q), cs in sorted(groups.items()):
        finite = [c for c in cs if c.value is not None and np.isfinite(c.value)]
        if len(finite) < len(cs):
            worst = next(c for c in cs if c not in finite)
        elif cs[0].comparison == "<=":
            worst = max(cs, key=lambda c: c.value)
        else:
            worst = min(cs, key=lambda c: c.value)
        rows.append(
            {
                "id": cid,
                "quantity": q,
                "value": worst.value,
                "comparison": worst.comparison,
                "tolerance": worst.tolerance,
                "pass": all(c.passed for c in cs),
                "checks": len(cs),
                "worst": worst.note,
            }
        )
    return rows


def run_criteria(names, tier="small", seed=0, workers=1, instances=()) -> SuiteResult:
    jobs = [("criterion", n) for n in names] + [("instance", c) for c in instances]
    results = []
    if workers > 1 and len(jobs) > 1:
        ctx = mp.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            futs = [
                pool.submit(_run_criterion, j, tier, seed) if k == "criterion" else pool.submit(_run_instance, j)
                for k, j in jobs
            ]
            results = [f.result() for f in futs]
    else:
        for k, j in jobs:
            results.append(_run_criterion(j, tier, seed) if k == "criterion" else _run_instance(j))
    res = SuiteResult()
    for cid, checks, wall in sorted(results, key=lambda r: r[0]):
        res.details += [c.row() for c in checks]
        res.timings[cid] = wall
    checks = [Check(**{k: v for k, v in d.items() if k != "pass"}) for d in res.details]
    res.rows = aggregate(checks)
    return res


TIER_WALL_LIMIT = 300.0


def suite_csv(res: SuiteResult) -> str:
    from .report import csv_text

    return csv_text(res.rows) + csv_text(res.details)


def verify_suite(tier="small", seed=0, workers=1, instances=(), repeat=True) -> SuiteResult:
    """Run every criterion; with ``repeat`` the suite runs twice and the CSV text must match byte for byte."""
    t0 = time.perf_counter()
    res = run_criteria(list(CRITERIA), tier, seed, workers, instances)
    wall = time.perf_counter() - t0
    if repeat:
        t1 = time.perf_counter()
        again = run_criteria(list(CRITERIA), tier, seed, workers, instances)
        a, b = suite_csv(res).splitlines(), suite_csv(again).splitlines()
        mismatch = sum(x != y for x, y in zip(a, b)) + abs(len(a) - len(b))
        cid = "C9-reproducibility"
        res.timings[cid] = time.perf_counter() - t1
        within = float(wall <= TIER_WALL_LIMIT) if tier == "small" else 1.0
        res.rows.append(
            {"id": cid, "quantity": "csv_mismatch_lines", "value": mismatch, "comparison": "<=", "tolerance": 0,
             "pass": mismatch == 0, "checks": 1, "worst": ""}
        )
        res.rows.append(
            {"id": cid, "quantity": "tier_wall_time_within_limit", "value": within, "comparison": ">=", "tolerance": 1.0,
             "pass": within >= 1.0, "checks": 1, "worst": ""}
        )
    res.timings["total"] = time.perf_counter() - t0
    res.timings["first_pass"] = wall
    return res
