"""Self-check suite run by ``dqdsim validate``.

Every check is a named callable returning ``(passed, detail)``. Checks use a
fixed seed so repeated runs give identical verdicts.
"""

from __future__ import annotations

import time
from contextlib import contextmanager, nullcontext
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import core
from .analytic import (
    driven_steady_oracle,
    driven_steady_printed,
    eigenvalues,
    eval_populations,
    undriven_solution,
    undriven_steady,
)
from .core import DensityMatrix, Generator, generator_apply, stack, unstack
from .model import (
    FIGURE_RATIOS,
    PRESETS,
    REFERENCE_RATES,
    PhysicalParams,
    RateParams,
    build_driven,
    build_undriven,
    population_rate_matrix,
    rates_from_physical,
)
from .propagator import (
    IntegratorConfig,
    count_oscillations,
    integrate,
    integrate_rk4,
    relaxation_time,
    steady_state,
)

SEED = 20240611
DRIVE_SEQUENCE = (0.0, 0.4, 0.8, 1.6, 8.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {}


def check(name: str):
    def register(fn):
        CHECKS[name] = fn
        return fn

    return register


FAULTS = ("dissipator-sign",)


@contextmanager
def inject_fault(name: str):
    """Deliberately break the library for mutation testing of this suite."""
    if name != "dissipator-sign":
        raise ValueError(f"unknown fault {name!r}; choose from {FAULTS}")
    saved = core._DISSIPATOR_SIGN
    core._DISSIPATOR_SIGN = -saved
    try:
        yield
    finally:
        core._DISSIPATOR_SIGN = saved


def random_density(rng: np.random.Generator, dim: int = 3) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_rates(rng: np.random.Generator, high: float = 2.0, driven: bool = False) -> RateParams:
    """Uniform on ``(0, high]`` for each rate, ordered so that ``l >= m``."""
    a, b, n, p = high * (1.0 - rng.random(4))
    return RateParams(l=max(a, b), m=min(a, b), n=n, p=p if driven else 0.0)


def shipped_generators() -> list[Generator]:
    gens = [build_undriven(REFERENCE_RATES)]
    gens += [build_driven(REFERENCE_RATES.with_ratio(r)) for r in FIGURE_RATIOS]
    gens.append(build_undriven(RateParams(l=1.0, m=0.0, n=0.5)))
    return gens


def _max_over_states(fn, n_states: int = 100) -> float:
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for gen in shipped_generators():
        for _ in range(n_states):
            worst = max(worst, fn(gen, random_density(rng), rng))
    return worst


@check("core.trace-preservation")
def _trace_preservation():
    worst = _max_over_states(lambda g, r, _: abs(np.trace(generator_apply(g, r))))
    return worst <= 1e-12, f"max |tr L(rho)| = {worst:.2e}"


@check("core.hermiticity-preservation")
def _hermiticity():
    worst = _max_over_states(lambda g, r, _: core.hermiticity_defect(generator_apply(g, r)))
    return worst <= 1e-12, f"max |L(rho) - L(rho)^+| = {worst:.2e}"


@check("core.vectorized-consistency")
def _vectorized():
    def dev(gen, rho, _):
        via_matrix = unstack(gen.liouvillian @ stack(rho))
        return float(np.max(np.abs(via_matrix - generator_apply(gen, rho))))

    worst = _max_over_states(dev)
    return worst <= 1e-12, f"max |unstack(L stack rho) - L(rho)| = {worst:.2e}"


@check("core.ground-state-flow")
def _ground_flow():
    # from |0><0| only absorption acts: d(rho00, rho11, rho22)/dt = (-m, m, 0)
    rho = DensityMatrix.ground().mat
    expected = [-REFERENCE_RATES.m, REFERENCE_RATES.m, 0.0]
    worst = 0.0
    for gen in (build_undriven(REFERENCE_RATES), build_driven(REFERENCE_RATES.with_p(0.4))):
        for out in (generator_apply(gen, rho), unstack(gen.liouvillian @ stack(rho))):
            worst = max(worst, float(np.max(np.abs(np.real(np.diag(out)) - expected))))
    return worst <= 1e-14, f"max |population flow - (-m, m, 0)| = {worst:.2e}"


@check("core.linearity")
def _linearity():
    def dev(gen, rho, rng):
        other = random_density(rng)
        a, b = rng.normal(size=2)
        lhs = generator_apply(gen, a * rho + b * other)
        rhs = a * generator_apply(gen, rho) + b * generator_apply(gen, other)
        return float(np.max(np.abs(lhs - rhs)))

    worst = _max_over_states(dev, n_states=20)
    return worst <= 1e-12, f"max linearity defect = {worst:.2e}"


@check("core.null-vector-psd")
def _null_psd():
    worst = min(float(np.min(np.linalg.eigvalsh(steady_state(g).mat))) for g in shipped_generators())
    return worst >= -1e-10, f"min eigenvalue of steady states = {worst:.2e}"


@check("model.rate-identity")
def _rate_identity():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(1000):
        gamma, occ = 10 * rng.random(2)
        rates = rates_from_physical(PhysicalParams(gamma, occ))
        worst = max(worst, abs((rates.l - rates.m) - gamma) / max(gamma, 1e-300))
    return worst <= 1e-12, f"max relative |l - m - gamma01| = {worst:.2e}"


@check("model.driven-p0-reduction")
def _p0_reduction():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(100):
        rates = random_rates(rng)
        rho = random_density(rng)
        diff = generator_apply(build_driven(rates), rho) - generator_apply(build_undriven(rates), rho)
        worst = max(worst, float(np.max(np.abs(diff))))
    return worst <= 1e-14, f"max |driven(p=0) - undriven| = {worst:.2e}"


@check("model.detailed-balance")
def _detailed_balance():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(20):
        rates = random_rates(rng)
        pops = steady_state(build_undriven(rates)).populations
        worst = max(worst, abs(rates.l * pops[1] - rates.m * pops[0]), abs(pops[1] - pops[2]))
    return worst <= 1e-10, f"max balance defect = {worst:.2e}"


@check("model.population-closure")
def _closure():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(5):
        pops = rng.random(3)
        rho0 = DensityMatrix.diagonal(pops / pops.sum())
        traj = integrate(build_undriven(random_rates(rng)), rho0, 10.0)
        off = traj.states.copy()
        off[:, np.arange(3), np.arange(3)] = 0
        worst = max(worst, float(np.max(np.abs(off))))
    return worst <= 1e-12, f"max off-diagonal along trajectories = {worst:.2e}"


@check("model.monotone-drive-effect")
def _monotone_drive():
    rho00 = [steady_state(build_driven(REFERENCE_RATES.with_p(p))).populations[0] for p in DRIVE_SEQUENCE]
    ok = all(b <= a for a, b in zip(rho00, rho00[1:]))
    return ok, "rho00 over p=" + ",".join(f"{p:g}" for p in DRIVE_SEQUENCE) + ": " + ", ".join(f"{v:.6f}" for v in rho00)


@check("analytic.vieta")
def _vieta():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(1000):
        r = random_rates(rng, high=10.0)
        e = eigenvalues(r)
        worst = max(
            worst,
            abs(e.lambda0 + e.lambda1 + (r.l + r.m + 2 * r.n)),
            abs(e.lambda0 * e.lambda1 - (r.l * r.n + 2 * r.m * r.n)),
        )
    return worst <= 1e-12, f"max Vieta defect = {worst:.2e}"


def _rate_matrix_propagation(rates: RateParams, times: np.ndarray) -> np.ndarray:
    """Populations from ``|0>`` via eigendecomposition of the rate matrix."""
    w, v = np.linalg.eig(population_rate_matrix(rates))
    coeff = np.linalg.solve(v, np.array([1.0, 0.0, 0.0]))
    return np.real((v * coeff) @ np.exp(np.outer(w, times)))


@check("analytic.closed-form-vs-ode")
def _closed_vs_ode():
    rng = np.random.default_rng(SEED)
    cases = [REFERENCE_RATES] + [random_rates(rng) for _ in range(20)]
    times = np.linspace(0.0, 30.0, 50)
    worst = 0.0
    for rates in cases:
        closed = np.array(eval_populations(undriven_solution(rates), times))
        eig_prop = _rate_matrix_propagation(rates, times)
        cfg = IntegratorConfig(dense_output_dt=float(times[1]))
        traj = integrate(build_undriven(rates), DensityMatrix.ground(), 30.0, cfg)
        worst = max(
            worst,
            float(np.max(np.abs(closed - eig_prop))),
            float(np.max(np.abs(closed - traj.populations.T))),
        )
    return worst <= 1e-8, f"max |closed form - numeric| = {worst:.2e}"


@check("analytic.finite-difference-ode")
def _finite_difference():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    h = 1e-5
    for rates in [REFERENCE_RATES] + [random_rates(rng) for _ in range(5)]:
        sol = undriven_solution(rates)
        mat = population_rate_matrix(rates)
        for t in np.linspace(0.1, 20.0, 40):
            deriv = (np.array(eval_populations(sol, t + h)) - np.array(eval_populations(sol, t - h))) / (2 * h)
            worst = max(worst, float(np.max(np.abs(deriv - mat @ np.array(eval_populations(sol, t))))))
    return worst <= 1e-6, f"max |d/dt closed form - M rho| = {worst:.2e}"


@check("analytic.fixed-point")
def _fixed_point():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for rates in [REFERENCE_RATES] + [random_rates(rng, high=10.0) for _ in range(100)]:
        worst = max(worst, float(np.max(np.abs(population_rate_matrix(rates) @ np.array(undriven_steady(rates))))))
    return worst <= 1e-12, f"max |M rho_ss| = {worst:.2e}"


@check("analytic.oracle-p0-reduction")
def _oracle_p0():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for rates in [REFERENCE_RATES] + [random_rates(rng) for _ in range(20)]:
        worst = max(worst, float(np.max(np.abs(np.array(driven_steady_oracle(rates)) - np.array(undriven_steady(rates))))))
    return worst <= 1e-10, f"max |oracle(p=0) - undriven| = {worst:.2e}"


@check("analytic.argmax-stability")
def _argmax():
    ps = (0.1, 0.4, 0.8, 1.6, 8.0, 80.0, 800.0)
    rho00 = min(driven_steady_oracle(REFERENCE_RATES.with_p(p)).rho00 for p in ps)
    return rho00 >= 1 / 3 - 1e-9, f"min stationary rho00 over p>0 = {rho00:.12f}"


@check("analytic.printed-limit")
def _printed_limit():
    rep0 = driven_steady_printed(REFERENCE_RATES)
    big = driven_steady_printed(REFERENCE_RATES.with_p(1e4))
    dev = max(abs(v - 1 / 3) for v in big.values)
    ok = "p0-inconsistent" in rep0.flags and dev <= 1e-6
    return ok, f"p=0 flags={list(rep0.flags)}; max |printed - 1/3| at p=1e4 = {dev:.2e}"


def _preset_trajectories():
    out = {}
    for name, preset in PRESETS.items():
        gen = build_driven(preset.rates) if preset.driven else build_undriven(preset.rates)
        cfg = IntegratorConfig(dense_output_dt=preset.dt)
        out[name] = integrate(gen, DensityMatrix.ground(), preset.t_end, cfg)
    return out


@check("propagator.physicality")
def _physicality():
    trajs = _preset_trajectories()
    trace = max(t.stats.max_trace_drift for t in trajs.values())
    herm = max(t.stats.max_hermiticity_drift for t in trajs.values())
    eig = min(t.min_eigenvalue() for t in trajs.values())
    ok = trace <= 1e-9 and herm <= 1e-9 and eig >= -1e-8
    return ok, f"trace drift {trace:.2e}, hermiticity drift {herm:.2e}, min eigenvalue {eig:.2e}"


def convergence_errors(step_counts=(20, 40, 80), t_end: float = 10.0) -> list[float]:
    sol = undriven_solution(REFERENCE_RATES)
    exact = np.array(eval_populations(sol, t_end))
    gen = build_undriven(REFERENCE_RATES)
    errs = []
    for n_steps in step_counts:
        final = integrate_rk4(gen, DensityMatrix.ground(), t_end, n_steps)
        errs.append(float(np.max(np.abs(np.real(np.diag(final)) - exact))))
    return errs


@check("propagator.convergence-order")
def _convergence():
    errs = convergence_errors()
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    return all(r >= 8 for r in ratios), "error ratios " + ", ".join(f"{r:.2f}" for r in ratios)


@check("propagator.oracle-triangle")
def _triangle():
    trajs = _preset_trajectories()
    undriven = trajs["fig2-4"]
    closed = np.array(eval_populations(undriven_solution(REFERENCE_RATES), undriven.times)).T
    worst_closed = float(np.max(np.abs(closed - undriven.populations)))
    worst_ss = 0.0
    for name, traj in trajs.items():
        preset = PRESETS[name]
        gen = build_driven(preset.rates) if preset.driven else build_undriven(preset.rates)
        worst_ss = max(worst_ss, float(np.max(np.abs(traj.final - steady_state(gen).mat))))
    ss_closed = float(np.max(np.abs(steady_state(build_undriven(REFERENCE_RATES)).populations - np.array(undriven_steady(REFERENCE_RATES)))))
    ok = worst_closed <= 1e-8 and worst_ss <= 1e-6 and ss_closed <= 1e-10
    return ok, f"closed/integrate {worst_closed:.2e}, integrate/steady {worst_ss:.2e}, steady/closed {ss_closed:.2e}"


def sweep_observables(ratios=FIGURE_RATIOS, base: RateParams = REFERENCE_RATES, t_end: float = 40.0, dt: float = 0.01):
    """Oscillation count of rho00 and relaxation time for each l/p ratio."""
    rows = []
    for ratio in ratios:
        gen = build_driven(base.with_ratio(ratio))
        traj = integrate(gen, DensityMatrix.ground(), t_end, IntegratorConfig(dense_output_dt=dt))
        rows.append((ratio, count_oscillations(traj, 0), relaxation_time(traj, steady_state(gen))))
    return rows


@check("propagator.oscillation-trend")
def _oscillation_trend():
    rows = sweep_observables()
    counts = [r[1] for r in rows]
    traj = integrate(build_undriven(REFERENCE_RATES), DensityMatrix.ground(), 40.0, IntegratorConfig(dense_output_dt=0.01))
    undriven = count_oscillations(traj, 0)
    ok = undriven == 0 and all(b >= a for a, b in zip(counts, counts[1:]))
    return ok, f"undriven {undriven}; l/p={list(FIGURE_RATIOS)} -> {counts}"


@check("propagator.relaxation-trend")
def _relaxation_trend():
    times = [r[2] for r in sweep_observables()]
    ok = all(b >= a for a, b in zip(times, times[1:]))
    return ok, f"l/p={list(FIGURE_RATIOS)} -> relaxation times " + ", ".join(f"{t:.2f}" for t in times)


@check("cli.csv-deterministic")
def _csv_deterministic():
    from .cli import RunConfig, simulate_csv

    cfg = RunConfig.from_preset("fig5-7")
    first, second = simulate_csv(cfg), simulate_csv(cfg)
    return first == second, f"{len(first)} bytes, identical={first == second}"


@check("cli.presets-fast")
def _presets_fast():
    from .cli import RunConfig, simulate_csv

    slowest = 0.0
    for name in PRESETS:
        start = time.perf_counter()
        simulate_csv(RunConfig.from_preset(name))
        slowest = max(slowest, time.perf_counter() - start)
    return slowest < 10.0, f"slowest preset {slowest:.2f} s"


@check("cli.steady-printed-flags")
def _steady_flags():
    p0 = driven_steady_printed(REFERENCE_RATES)
    strong = REFERENCE_RATES.with_p(10 * REFERENCE_RATES.l)
    printed = np.array(driven_steady_printed(strong).values)
    oracle = np.array(driven_steady_oracle(strong))
    dev = float(np.max(np.abs(printed - oracle)))
    ok = "p0-inconsistent" in p0.flags and dev <= 0.05
    return ok, f"p=0 flagged={'p0-inconsistent' in p0.flags}; |printed - oracle| at p=10l = {dev:.2e}"


def run_checks(names=None, fault: str | None = None) -> list[CheckResult]:
    selected = list(CHECKS) if names is None else list(names)
    results = []
    with inject_fault(fault) if fault else nullcontext():
        for name in selected:
            start = time.perf_counter()
            try:
                passed, detail = CHECKS[name]()
            except Exception as exc:  # a crashing check is a failing check
                passed, detail = False, f"{type(exc).__name__}: {exc}"
            results.append(CheckResult(name, bool(passed), detail, time.perf_counter() - start))
    return results

