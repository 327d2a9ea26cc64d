"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Criteria 1-5 and 16 run at h = 1/40; the iteration-count criteria run at
h = 1/200 (and 1/400 for the generous-overlap check) and take a few minutes.
"""

import functools
import time

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from geneo_dd.assembly import Assembler, assemble_mass
from geneo_dd.coeffs import ProblemCoefficients, constant, zero_vector
from geneo_dd.decomp import decompose
from geneo_dd.geneo import coarse_projection_error, coarse_space, local_projection, stable_decomposition, beta0
from geneo_dd.grid import build_uniform_mesh
from geneo_dd.harness import ExperimentConfig, build_pipeline, run, run_theory, timestep_demo
from geneo_dd.krylov import elman_rate_check, gmres
from geneo_dd.linalg import dense_generalized_eig, shift_invert_smallest
from geneo_dd.precond import build
from geneo_dd.theory import compute_constants, estimate_cstab_star, probe_field_of_values

from conftest import helmholtz_like, record_criterion

H200 = ExperimentConfig(nx=200)


@functools.lru_cache(maxsize=None)
def iterations(cfg: ExperimentConfig):
    rep = run(cfg)
    assert rep.converged, f"{cfg} did not converge"
    return rep.iterations, rep.coarse_size


@pytest.fixture(scope="module")
def mesh40():
    return build_uniform_mesh((0, 1, 0, 1), 40, 40)


@functools.lru_cache(maxsize=None)
def bounds_setup(N):
    mesh = build_uniform_mesh((0, 1, 0, 1), 40, 40)
    asm = Assembler(mesh, helmholtz_like(50.0, 0.0))
    d = decompose(mesh, N)
    return asm, d, coarse_space(d, asm, "delta_geneo", 0.5)


def test_criterion_01_pou_and_restriction(mesh40):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    exact, total = 0, 0
    for N in (4, 16, 36):
        modes = [("minimal", dict(layers=1)), ("minimal", dict(layers=2)),
                 ("generous", dict(delta=2 / 40)), ("generous", dict(delta=4 / 40))]
        for overlap, kw in modes:
            d = decompose(mesh40, N, overlap, **kw)
            for _ in range(5):
                v = rng.standard_normal(mesh40.n_dofs)
                recon = np.zeros_like(v)
                for s in d:
                    recon += s.extend(s.weights * s.restrict(v), mesh40.n_dofs)
                    w = rng.standard_normal(len(s.internal))
                    lhs, rhs = s.restrict(v) @ w, v @ s.extend(w, mesh40.n_dofs)
                    worst = max(worst, abs(lhs - rhs) / (np.abs(v[s.internal]) @ np.abs(w)))
                err = np.abs(recon - v).max() / np.abs(v).max()
                worst = max(worst, err)
                exact += int(np.sum(recon == v))
                total += v.size
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 5
    record_criterion(1, ok, f"max relative defect {worst:.1e} (bitwise exact at {exact / total:.1%} of dofs), "
                            f"{elapsed:.1f}s")
    assert ok


def test_criterion_02_eigensolver_oracle(mesh40):
    t0 = time.perf_counter()
    asm = Assembler(mesh40, helmholtz_like(50.0, 1000.0))
    d = decompose(mesh40, 16)
    worst, counts_ok, sizes = 0.0, True, []
    for s in d:
        K = asm.A(s.elements, s.dofs)
        X = np.diag(s.pou_diagonal)
        for lhs in (K, asm.B(s.elements, s.dofs)):
            Mx = X @ K.toarray() @ X
            dense = dense_generalized_eig(lhs, Mx)
            want = dense.values[dense.values < 0.5]
            got = shift_invert_smallest(lhs, Mx, 0.5)
            sizes.append(len(s.dofs))
            if len(got) != len(want):
                counts_ok = False
                continue
            if want.size:
                rel = np.abs(got.values - want) / np.maximum(np.abs(want), 1.0)
                worst = max(worst, rel.max())
    elapsed = time.perf_counter() - t0
    ok = counts_ok and worst <= 1e-8 and elapsed < 30
    record_criterion(2, ok, f"{len(sizes)} pencils of {min(sizes)}-{max(sizes)} dofs, counts equal={counts_ok}, "
                            f"max rel error {worst:.1e}, {elapsed:.1f}s")
    assert ok


def test_criterion_03_projection_bound():
    t0 = time.perf_counter()
    violations, ratios = 0, []
    for N in (4, 16):
        asm, d, cs = bounds_setup(N)
        A = asm.A()
        bound = d.k0 ** 2 * cs.theta
        rng = np.random.default_rng(N)
        for _ in range(200):
            v = rng.standard_normal(asm.mesh.n_dofs)
            Av = v @ (A @ v)
            err = coarse_projection_error(v, cs, A)
            ratios.append(err / (bound * Av))
            violations += err > bound * Av
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 60
    record_criterion(3, ok, f"400 samples, {violations} violations, max error/bound {max(ratios):.3f}, {elapsed:.1f}s")
    assert ok


def test_criterion_04_local_projection_bounds():
    violations, worst = 0, 0.0
    for N in (4, 16):
        asm, d, cs = bounds_setup(N)
        rng = np.random.default_rng(40 + N)
        for j, (s, loc) in enumerate(zip(d, cs.local)):
            theta_j = 1.0 / loc.next_value
            for _ in range(100):
                v = rng.standard_normal(len(s.dofs))
                Av = v @ (loc.A @ v)
                r = v - local_projection(v, cs, j)
                Xr = loc.xdiag * r
                first = r @ (loc.A @ r)
                second = Xr @ (loc.A @ Xr)
                violations += first > Av * (1 + 1e-10)
                violations += second > theta_j * Av * (1 + 1e-10)
                worst = max(worst, second / (theta_j * Av))
    ok = violations == 0
    record_criterion(4, ok, f"{violations} violations over 2 x 100 x 20 local samples, "
                            f"max ratio to Theta_j bound {worst:.3f}")
    assert ok


def test_criterion_05_stable_decomposition():
    violations, worst = 0, 0.0
    for N in (4, 16):
        asm, d, cs = bounds_setup(N)
        A = asm.A()
        b2 = beta0(d.k0 * np.sqrt(cs.theta)) ** 2
        rng = np.random.default_rng(50 + N)
        for _ in range(100):
            v = rng.standard_normal(asm.mesh.n_dofs)
            z0, parts = stable_decomposition(v, cs, d)
            energy = z0 @ (A @ z0) + sum(z @ (loc.A @ z) for z, loc in zip(parts, cs.local))
            total = z0.copy()
            for s, z in zip(d, parts):
                total[s.dofs] += z
            ratio = energy / (b2 * (v @ (A @ v)))
            worst = max(worst, ratio)
            violations += ratio > 1 or np.abs(total - v).max() > 1e-12 * np.abs(v).max()
    ok = violations == 0
    record_criterion(5, ok, f"{violations} violations over 200 samples, max energy/bound {worst:.3f}")
    assert ok


def test_criterion_06_spd_robustness():
    its = {(N, a): iterations(H200.replace(subdomains=N, a_max=a, kappa=0.0)) [0]
           for N in (4, 16, 36) for a in (5.0, 50.0)}
    across_a = max(max(its[N, 5.0], its[N, 50.0]) / min(its[N, 5.0], its[N, 50.0]) for N in (4, 16, 36))
    across_N = max(max(its[N, a] for N in (4, 16, 36)) / min(its[N, a] for N in (4, 16, 36)) for a in (5.0, 50.0))
    ok = across_a <= 1.25 and across_N <= 1.30
    record_criterion(6, ok, f"iterations {its}; a_max spread {across_a:.2f}, N spread {across_N:.2f}")
    assert ok


def test_criterion_07_indefinite_minimal_overlap():
    ref = {16: (87, 185), 36: (115, 318), 100: (90, 598)}
    got = {N: iterations(H200.replace(kappa=1000.0, a_max=50.0, subdomains=N)) for N in ref}
    ok = all(abs(got[N][0] - ref[N][0]) <= 0.25 * ref[N][0] and abs(got[N][1] - ref[N][1]) <= 0.20 * ref[N][1]
             for N in ref)
    record_criterion(7, ok, "N: iterations (coarse size) " +
                     ", ".join(f"{N}: {got[N][0]} ({got[N][1]}) vs {ref[N][0]} ({ref[N][1]})" for N in ref))
    assert ok


def test_criterion_08_generous_overlap_bounded():
    cfg = H200.replace(kappa=1000.0, a_max=50.0, subdomains=16, overlap="generous", delta=0.01)
    it200, n200 = iterations(cfg)
    it400, n400 = iterations(cfg.replace(nx=400))
    change = abs(n400 - n200) / n200
    ok = change <= 0.25
    record_criterion(8, ok, f"coarse size {n200} at h=1/200, {n400} at h=1/400 (change {change:.1%}); "
                            f"iterations {it200}, {it400}")
    assert ok


def test_criterion_09_convection_trends():
    cv = H200.replace(problem="convection", convection="zero_div", diffusion="homogeneous")
    bs = (1.0, 10.0, 100.0, 1000.0)
    its16 = [iterations(cv.replace(subdomains=16, b=b))[0] for b in bs]
    its100 = [iterations(cv.replace(subdomains=100, b=b))[0] for b in bs]
    monotone = all(x <= y for x, y in zip(its16, its16[1:]))
    ratio = max(a / b for a, b in zip(its100, its16))
    ok = monotone and ratio <= 1.5
    record_criterion(9, ok, f"N=16 {its16}, N=100 {its100}, max N=100/N=16 ratio {ratio:.2f}")
    assert ok


def test_criterion_10_divergence_sensitivity():
    osc = H200.replace(problem="convection", convection="unidirectional_oscillating", b=1000.0, a_max=50.0,
                       subdomains=16)
    m0, m4 = (iterations(osc.replace(m=m))[0] for m in (0, 4))
    ok = m4 >= 1.3 * m0
    record_criterion(10, ok, f"m=0: {m0}, m=4: {m4} (+{m4 / m0 - 1:.0%})")
    assert ok


def test_criterion_11_timestep_robustness():
    ts = H200.replace(convection="zero_div", b=1000.0, a_max=50.0, subdomains=16)
    table = {}
    for dt0 in (10.0, 0.1, 0.001):
        reps = timestep_demo(ts, [1000.0, 0.1, 0.001], dt0)
        assert all(r.converged for r in reps)
        table[dt0] = [r.iterations for r in reps]
    flat = [v for row in table.values() for v in row]
    ratio = max(flat) / min(flat)
    ok = ratio <= 1.3
    record_criterion(11, ok, f"dt0 -> iterations for dt=1000/0.1/0.001: {table}, max/min {ratio:.2f}")
    assert ok


def test_criterion_12_ras_deflation():
    ind = H200.replace(kappa=1000.0, a_max=50.0, subdomains=16)
    as2 = iterations(ind)[0]
    ras = iterations(ind.replace(preconditioner="RAS_deflation"))[0]
    ok = ras <= 0.7 * as2
    record_criterion(12, ok, f"AS2 {as2}, RAS_deflation {ras} (ratio {ras / as2:.2f})")
    assert ok


def test_criterion_13_hgeneo():
    ind = H200.replace(kappa=1000.0, a_max=50.0, subdomains=16)
    delta = iterations(ind)[0]
    h = iterations(ind.replace(coarse="h_geneo"))[0]
    ok = h <= delta
    record_criterion(13, ok, f"Delta-GenEO AS2 {delta}, H-GenEO AS2 {h}")
    assert ok


# Setting in which the computed s and t both fall below one: a tiny domain
# (small H and a small discrete C*), a single subdomain (k0 = 1) and a
# threshold above the whole local spectrum, so that every local mode is kept
# and Theta = 0.
STRONG = ExperimentConfig(rect=(0.0, 0.01, 0.0, 0.01), nx=16, subdomains=1, lambda_max=2.0, kappa=0.01,
                          diffusion="homogeneous", eigensolver="dense")


@functools.lru_cache(maxsize=None)
def strong_theory():
    return run_theory(STRONG, n_samples=200)


def test_criterion_14_field_of_values():
    rep = strong_theory()
    th, probe = rep.theory, rep.probe
    strong = th.conditions_met and probe.min_ratio >= th.c1 and probe.max_norm_ratio <= np.sqrt(th.c2)
    # the unconditional upper bound and positivity on realistic settings
    degraded = []
    for cfg in (ExperimentConfig(nx=40, subdomains=16, kappa=100.0),
                ExperimentConfig(nx=40, subdomains=16, kappa=0.0, a_max=5.0),
                ExperimentConfig(nx=40, subdomains=4, problem="convection", b=10.0)):
        pipe = build_pipeline(cfg)
        A = pipe.assembler.A()
        p = probe_field_of_values(pipe.B, pipe.preconditioner, A, n_samples=200)
        c2 = 12 + 32 * pipe.decomposition.k0 ** 2
        degraded.append((p.min_ratio, p.max_norm_ratio, c2))
    degraded_ok = all(lo > 0 and hi <= np.sqrt(c2) for lo, hi, c2 in degraded)
    ok = strong and degraded_ok
    record_criterion(14, ok, f"strong form: s={th.s:.3g}, t={th.t:.3g}, c1={th.c1:.4g} <= min_ratio "
                             f"{probe.min_ratio:.4g}, max_norm_ratio {probe.max_norm_ratio:.4g} <= sqrt(c2)="
                             f"{np.sqrt(th.c2):.3g}; realistic settings (min, max, c2): "
                             + ", ".join(f"({lo:.3g}, {hi:.3g}, {c2})" for lo, hi, c2 in degraded))
    assert ok


def test_criterion_15_elman_bound():
    rep = strong_theory()
    th = rep.theory
    assert th.conditions_met
    # weighted GMRES in the A inner product on a random right-hand side as well
    pipe = build_pipeline(STRONG.replace(preconditioner="AS2"))
    A = pipe.assembler.A()
    f = np.random.default_rng(15).standard_normal(pipe.B.shape[0])
    extra = gmres(pipe.B, pipe.preconditioner.apply, f, tol=1e-10, inner=A, side="left")
    ok = bool(rep.elman_ok) and elman_rate_check(extra, th.c1, th.c2)
    record_criterion(15, ok, f"contraction factor 1 - c1^2/c2^2 = {th.elman_factor:.8g}; histories "
                             f"{np.round(rep.gmres.relative_history, 12).tolist()} and "
                             f"{np.round(extra.relative_history, 12).tolist()} within the bound")
    assert ok


H40_CONFIGS = [
    ExperimentConfig(nx=40, kappa=0.0),
    ExperimentConfig(nx=40, kappa=100.0, diffusion="homogeneous"),
    ExperimentConfig(nx=40, kappa=1000.0, preconditioner="RAS_deflation"),
    ExperimentConfig(nx=40, kappa=1000.0, coarse="h_geneo"),
    ExperimentConfig(nx=40, kappa=50.0, preconditioner="AS1", subdomains=4),
    ExperimentConfig(nx=40, kappa=200.0, overlap="generous", delta=0.1),
    ExperimentConfig(nx=40, problem="convection", convection="zero_div", b=100.0),
    ExperimentConfig(nx=40, problem="convection", convection="nonzero_div", b=10.0),
    ExperimentConfig(nx=40, problem="convection", convection="circulating", b=100.0),
    ExperimentConfig(nx=40, problem="convection", convection="circulating_radial", b=100.0, n=2),
    ExperimentConfig(nx=40, problem="convection", convection="unidirectional_oscillating", b=100.0, m=4),
    ExperimentConfig(nx=40, problem="timestep", convection="zero_div", b=100.0, dt=0.01, dt0=0.1),
]


def test_criterion_16_gmres_correctness():
    worst = 0.0
    for cfg in H40_CONFIGS:
        pipe = build_pipeline(cfg)
        res = gmres(pipe.B, pipe.preconditioner.apply, pipe.rhs, tol=cfg.tol, maxit=cfg.maxit)
        exact = spla.spsolve(pipe.B.tocsc(), pipe.rhs)
        A = pipe.assembler.A()
        e = res.solution - exact
        err = np.sqrt((e @ (A @ e)) / (exact @ (A @ exact)))
        worst = max(worst, err if res.converged else np.inf)
    ok = worst <= 1e-5
    record_criterion(16, ok, f"{len(H40_CONFIGS)} configurations, max relative A-norm error {worst:.2e}")
    assert ok
