"""Reproducible Monte Carlo experiments over the opinion dynamics.

Trial ``i`` of a batch draws all of its randomness from a generator seeded
with ``trial_seed(root_seed, i)``, derived through numpy's SeedSequence spawn
keys. Trials therefore never share a stream, and a batch gives the same
records under any worker count or schedule; aggregation always runs over
trial index order.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import theory
from .dynamics import (
    AdversaryMode,
    BiasParams,
    OpinionState,
    Rule,
    adversary_shuffle,
    advance,
    exact_expected_drift,
    is_consensus,
    replay_deltas,
    squared_imbalance,
)
from .errors import ParameterError, SpectralError
from .graph import Graph, SpectralProfile, build_graph, cut_edges, second_eigenvalue

SCHEMA_VERSION = "1"
FALLBACK_MAX_STEPS = 10_000
STEP_CAP_FACTOR = 50


class ConfigError(ParameterError):
    """Configuration failed validation; ``fields`` names every violation."""

    def __init__(self, problems: dict[str, str]):
        self.fields = problems
        listing = "; ".join(f"{k}: {v}" for k, v in problems.items())
        super().__init__(f"invalid configuration ({listing})")


@dataclass
class GraphSpec:
    kind: str = "random-regular"
    n: int = 1024
    d: int | None = 8
    seed: int = 0


@dataclass
class InitialCondition:
    """``mode`` is ``count`` (exact A0), ``fraction`` or ``clog`` (ceil(kappa ln n))."""

    mode: str = "count"
    value: float = 1

    def resolve(self, n: int) -> int:
        if self.mode == "count":
            return int(self.value)
        if self.mode == "fraction":
            return int(round(self.value * n))
        if self.mode == "clog":
            return min(n, math.ceil(self.value * math.log(n)))
        raise ParameterError(f"unknown initial mode {self.mode!r}")


@dataclass
class ExperimentConfig:
    graph: GraphSpec = field(default_factory=GraphSpec)
    rule: str = "voter"
    q0: float = 0.8
    q1: float = 0.2
    initial: InitialCondition = field(default_factory=InitialCondition)
    adversary: str = "none"
    placement: str = "uniform"
    trials: int = 100
    max_steps: int | None = None
    root_seed: int = 0
    record_trajectory: bool = False
    trajectory_stride: int = 1
    spectral_tol: float = 1e-8
    c: float | None = None
    gamma: float | None = None

    def problems(self) -> dict[str, str]:
        bad: dict[str, str] = {}
        g = self.graph
        if g.kind not in ("complete", "cycle", "random-regular"):
            bad["graph.kind"] = f"unknown kind {g.kind!r}"
        if not isinstance(g.n, int) or g.n < 2:
            bad["graph.n"] = "must be an integer >= 2"
        if g.kind == "random-regular" and (g.d is None or g.d < 1):
            bad["graph.d"] = "random-regular graphs need d >= 1"
        try:
            Rule.parse(self.rule)
        except ParameterError:
            bad["rule"] = f"unknown rule {self.rule!r}"
        if not 0.0 <= self.q0 <= 1.0:
            bad["q0"] = "must lie in [0, 1]"
        if not 0.0 <= self.q1 <= 1.0:
            bad["q1"] = "must lie in [0, 1]"
        elif "q0" not in bad and self.q1 > self.q0:
            bad["q1"] = "must not exceed q0"
        if self.initial.mode not in ("count", "fraction", "clog"):
            bad["initial.mode"] = "must be count, fraction or clog"
        elif "graph.n" not in bad:
            if self.initial.mode == "fraction" and not 0.0 <= self.initial.value <= 1.0:
                bad["initial.value"] = "fraction must lie in [0, 1]"
            elif not 0 <= self.initial.resolve(g.n) <= g.n:
                bad["initial.value"] = f"initial count must lie in [0, {g.n}]"
        try:
            AdversaryMode.parse(self.adversary)
        except ParameterError:
            bad["adversary"] = f"unknown mode {self.adversary!r}"
        if self.placement not in ("uniform", "fixed"):
            bad["placement"] = "must be uniform or fixed"
        if not isinstance(self.trials, int) or self.trials < 1:
            bad["trials"] = "must be an integer >= 1"
        if self.max_steps is not None and (not isinstance(self.max_steps, int) or self.max_steps < 1):
            bad["max_steps"] = "must be an integer >= 1"
        if not isinstance(self.trajectory_stride, int) or self.trajectory_stride < 1:
            bad["trajectory_stride"] = "must be an integer >= 1"
        if self.spectral_tol <= 0:
            bad["spectral_tol"] = "must be positive"
        return bad

    def validate(self) -> "ExperimentConfig":
        bad = self.problems()
        if bad:
            raise ConfigError(bad)
        return self

    @property
    def bias(self) -> BiasParams:
        return BiasParams(self.q0, self.q1)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError({k: "unknown field" for k in sorted(unknown)})
        if "graph" in data:
            data["graph"] = GraphSpec(**data["graph"])
        if "initial" in data:
            data["initial"] = InitialCondition(**data["initial"])
        return cls(**data)


def trial_seed(root_seed: int, trial_index: int) -> int:
    ss = np.random.SeedSequence(root_seed, spawn_key=(trial_index,))
    return int(ss.generate_state(1, np.uint64)[0])


def trial_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def derived_graph_seed(seed: int, index: int) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=(1 << 20, index))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def make_graph(spec: GraphSpec) -> Graph:
    return build_graph(spec.kind, spec.n, spec.d, spec.seed)


# --- planning -------------------------------------------------------------


@dataclass(frozen=True)
class Plan:
    """Everything a trial needs that is shared across the batch."""

    a0: int
    max_steps: int
    spectral: SpectralProfile | None
    spectral_converged: bool
    prediction: dict | None


def spectral_profile(g: Graph, tol: float = 1e-8) -> tuple[SpectralProfile, bool]:
    try:
        return second_eigenvalue(g, tol), True
    except SpectralError as err:
        return SpectralProfile.from_lambda(err.estimate, err.residual, err.iterations), False


def predict(rule, n: int, a0: int, lam: float, q0: float, q1: float,
            c: float | None = None, gamma: float | None = None) -> dict | None:
    """Theory phase-time prediction for a start, or None where inapplicable."""
    rule = Rule.parse(rule)
    if not q1 < q0 or not 1 <= a0 <= n:
        return None
    if rule is Rule.VOTER:
        phi = (1.0 - lam) / 2.0
        if phi <= 0.0:
            return None
        out = theory.voter_phase_times(n, a0, phi, q0, q1).to_dict()
        out["phi"] = phi
        return out
    pred = theory.two_choices_prediction(n, a0, lam, q0, q1, c, gamma)
    return None if pred is None else pred.to_dict()


def make_plan(g: Graph, config: ExperimentConfig, spectral=None) -> Plan:
    a0 = config.initial.resolve(g.n)
    if spectral is None:
        spectral, converged = spectral_profile(g, config.spectral_tol)
    else:
        spectral, converged = spectral
    prediction = predict(config.rule, g.n, a0, spectral.lam, config.q0, config.q1,
                         config.c, config.gamma)
    if config.max_steps is not None:
        max_steps = config.max_steps
    elif prediction is not None:
        max_steps = STEP_CAP_FACTOR * max(1, prediction["total"])
    else:
        max_steps = FALLBACK_MAX_STEPS
    return Plan(a0, max_steps, spectral, converged, prediction)


# --- trials ---------------------------------------------------------------


@dataclass
class RunRecord:
    trial_index: int
    trial_seed: int
    winner: int | None  # None means timeout
    consensus_step: int
    trajectory: list[tuple[int, int]]
    total_gained: int
    total_lost: int
    min_delta: int
    max_delta: int

    @property
    def winner_label(self) -> str:
        return "timeout" if self.winner is None else str(self.winner)

    @property
    def mean_delta(self) -> float:
        if self.consensus_step == 0:
            return 0.0
        return (self.total_gained - self.total_lost) / self.consensus_step


def _initial_state(g, config, a0, rng) -> OpinionState:
    if config.placement == "fixed":
        return OpinionState.uniform(g.n, a0)
    return OpinionState.random_placement(g.n, a0, rng)


def run_trial(g: Graph, config: ExperimentConfig, trial_index: int,
              plan: Plan | None = None) -> RunRecord:
    """Run one trial to consensus or to the step cap."""
    if plan is None:
        config.validate()
        plan = make_plan(g, config)
    seed = trial_seed(config.root_seed, trial_index)
    rng = trial_rng(seed)
    rule = Rule.parse(config.rule)
    mode = AdversaryMode.parse(config.adversary)
    bias = config.bias

    if not g.connected:
        raise ParameterError("dynamics require a connected graph")
    s = _initial_state(g, config, plan.a0, rng)
    if mode is not AdversaryMode.NONE:
        s = adversary_shuffle(g, s, mode, rng)
    stride = config.trajectory_stride
    bits, ones = s.bits, s.count_one
    trajectory = [(0, ones)] if config.record_trajectory else []
    gained = lost = 0
    lo, hi = 0, 0
    t = 0
    while 0 < ones < g.n and t < plan.max_steps:
        new = advance(g, bits, bias, rule, rng)
        t += 1
        up = int(np.count_nonzero(new > bits))
        down = int(np.count_nonzero(bits > new))
        if mode is not AdversaryMode.NONE:
            new = adversary_shuffle(g, OpinionState(new), mode, rng).bits
        bits = new
        ones += up - down
        gained += up
        lost += down
        lo = up - down if t == 1 else min(lo, up - down)
        hi = up - down if t == 1 else max(hi, up - down)
        if config.record_trajectory and t % stride == 0:
            trajectory.append((t, ones))
    if config.record_trajectory and trajectory[-1][0] != t:
        trajectory.append((t, ones))
    s = OpinionState(bits)
    return RunRecord(trial_index, seed, is_consensus(s), t, trajectory, gained, lost, lo, hi)


_WORKER: dict = {}


def _worker_init(g, config, plan):
    _WORKER.update(graph=g, config=config, plan=plan)


def _worker_run(indices):
    return [run_trial(_WORKER["graph"], _WORKER["config"], i, _WORKER["plan"]) for i in indices]


def run_trials(g: Graph, config: ExperimentConfig, plan: Plan, workers: int = 1) -> list[RunRecord]:
    indices = list(range(config.trials))
    if workers <= 1 or config.trials == 1:
        return [run_trial(g, config, i, plan) for i in indices]
    chunks = [indices[k::workers] for k in range(workers) if indices[k::workers]]
    with ProcessPoolExecutor(len(chunks), initializer=_worker_init,
                             initargs=(g, config, plan)) as pool:
        records = [r for part in pool.map(_worker_run, chunks) for r in part]
    return sorted(records, key=lambda r: r.trial_index)


# --- aggregation --------------------------------------------------------------


def wilson_halfwidth(successes: int, trials: int, z: float = 1.959963984540054) -> float:
    p = successes / trials
    denom = 1.0 + z * z / trials
    return z * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials)) / denom


def _finite(x: float) -> float | None:
    return float(x) if math.isfinite(x) else None


def summarize(records: list[RunRecord]) -> dict:
    """Order-independent aggregate over a batch of records."""
    records = sorted(records, key=lambda r: r.trial_index)
    trials = len(records)
    ones = sum(r.winner == 1 for r in records)
    zeros = sum(r.winner == 0 for r in records)
    timeouts = trials - ones - zeros
    steps = np.array([r.consensus_step for r in records if r.winner is not None], dtype=float)
    out = {
        "trials": trials,
        "wins_one": ones,
        "wins_zero": zeros,
        "timeouts": timeouts,
        "win1_frequency": ones / trials,
        "win1_ci_halfwidth": wilson_halfwidth(ones, trials),
    }
    if steps.size:
        q = np.quantile(steps, [0.1, 0.25, 0.5, 0.75, 0.9])
        se = steps.std(ddof=1) / math.sqrt(steps.size) if steps.size > 1 else 0.0
        out.update(
            consensus_mean=float(steps.mean()),
            consensus_se=_finite(se),
            consensus_q10=float(q[0]),
            consensus_q25=float(q[1]),
            consensus_median=float(q[2]),
            consensus_q75=float(q[3]),
            consensus_q90=float(q[4]),
            consensus_max=float(steps.max()),
        )
    else:
        for key in ("mean", "se", "q10", "q25", "median", "q75", "q90", "max"):
            out[f"consensus_{key}"] = None
    return out


@dataclass
class BatchResult:
    config: ExperimentConfig
    n: int
    d: int
    plan: Plan
    records: list[RunRecord]
    summary: dict

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "graph": {"n": self.n, "d": self.d},
            "a0": self.plan.a0,
            "max_steps": self.plan.max_steps,
            "aggregates": self.summary,
            "theory": self.plan.prediction,
            "spectral": None if self.plan.spectral is None else
            self.plan.spectral.to_dict() | {"converged": self.plan.spectral_converged},
        }


def run_batch(g: Graph, config: ExperimentConfig, workers: int = 1,
              plan: Plan | None = None) -> BatchResult:
    config.validate()
    if plan is None:
        plan = make_plan(g, config)
    records = run_trials(g, config, plan, workers)
    return BatchResult(config, g.n, g.d, plan, records, summarize(records))


# --- sweeps and scaling ---------------------------------------------------------


@dataclass
class SweepResult:
    config: ExperimentConfig
    fractions: list[float]
    points: list[dict]
    spectral: SpectralProfile
    threshold: float | None

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "fractions": self.fractions,
            "threshold": self.threshold,
            "spectral": self.spectral.to_dict(),
            "points": self.points,
        }


def sweep_initial_fraction(config: ExperimentConfig, fractions, workers: int = 1,
                           graph: Graph | None = None) -> SweepResult:
    """One batch per initial fraction on a single graph."""
    fractions = [float(f) for f in fractions]
    if any(not 0.0 <= f <= 1.0 for f in fractions):
        raise ConfigError({"fractions": "every fraction must lie in [0, 1]"})
    config.validate()
    g = graph if graph is not None else make_graph(config.graph)
    spectral = spectral_profile(g, config.spectral_tol)
    threshold = None
    if config.q0 + config.q1 > 0:
        threshold = theory.two_choices_threshold(g.n, spectral[0].lam, config.q0, config.q1)
    points = []
    for f in fractions:
        cfg = replace(config, initial=InitialCondition("fraction", f))
        plan = make_plan(g, cfg, spectral)
        batch = run_batch(g, cfg, workers, plan)
        points.append({"fraction": f, "a0": plan.a0, "max_steps": plan.max_steps,
                       "theory": plan.prediction} | batch.summary)
    return SweepResult(config, fractions, points, spectral[0], threshold)


@dataclass
class ScalingResult:
    config: ExperimentConfig
    rows: list[dict]
    slope: float | None
    intercept: float | None

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "rows": self.rows,
            "fit": {"slope": self.slope, "intercept": self.intercept,
                    "x": "ln n", "y": "median consensus step"},
        }


def fit_line(x, y) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm, ym = x.mean(), y.mean()
    slope = float(((x - xm) * (y - ym)).sum() / ((x - xm) ** 2).sum())
    return slope, float(ym - slope * xm)


def scaling_study(config: ExperimentConfig, sizes, workers: int = 1) -> ScalingResult:
    """Fresh graph and batch per size; medians against ln n with a fitted line."""
    sizes = [int(n) for n in sizes]
    if any(b < a for a, b in zip(sizes, sizes[1:])):
        raise ConfigError({"sizes": "must be nondecreasing"})
    rows = []
    for i, n in enumerate(sizes):
        spec = replace(config.graph, n=n, seed=derived_graph_seed(config.graph.seed, i))
        cfg = replace(config, graph=spec).validate()
        g = make_graph(spec)
        batch = run_batch(g, cfg, workers)
        rows.append({"n": n, "ln_n": math.log(n), "graph_seed": spec.seed, "a0": batch.plan.a0,
                     "max_steps": batch.plan.max_steps, "theory": batch.plan.prediction}
                    | batch.summary)
    slope = intercept = None
    usable = [r for r in rows if r["consensus_median"] is not None]
    if len({r["n"] for r in usable}) >= 2:
        slope, intercept = fit_line([r["ln_n"] for r in usable],
                                    [r["consensus_median"] for r in usable])
    return ScalingResult(config, rows, slope, intercept)


def median_ci(values, level: float = 0.95) -> tuple[float, float]:
    """Distribution-free confidence interval for the median from order statistics."""
    from scipy.stats import binom

    x = np.sort(np.asarray(values, dtype=float))
    m = x.size
    lo = int(binom.ppf((1 - level) / 2, m, 0.5))
    hi = int(binom.isf((1 - level) / 2, m, 0.5))
    return float(x[max(lo - 1, 0)]), float(x[min(hi, m - 1)])


# --- drift audit ---------------------------------------------------------------


@dataclass
class DriftRow:
    state_index: int
    a: int
    b: int
    exact: float
    empirical_mean: float
    empirical_se: float
    z: float | None
    lower_bound: float | None
    refined_bound: float | None
    eps_prime: float | None
    imbalance: float | None
    imbalance_lb: float | None
    empirical_ok: bool
    bounds_ok: bool


@dataclass
class DriftAudit:
    rule: str
    lam: float
    c: float | None
    sigma: float
    rows: list[DriftRow]

    @property
    def empirical_failures(self) -> int:
        return sum(not r.empirical_ok for r in self.rows)

    @property
    def bound_failures(self) -> int:
        return sum(not r.bounds_ok for r in self.rows)

    @property
    def refined_skipped(self) -> int:
        return sum(r.refined_bound is None for r in self.rows)

    @property
    def ok(self) -> bool:
        return self.empirical_failures == 0 and self.bound_failures == 0

    def to_csv(self) -> str:
        cols = list(DriftRow.__dataclass_fields__)
        lines = [",".join(cols)]
        for r in self.rows:
            lines.append(",".join("" if v is None else str(int(v)) if isinstance(v, bool)
                                  else repr(v) if isinstance(v, float) else str(v)
                                  for v in (getattr(r, c) for c in cols)))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {"rule": self.rule, "lambda": self.lam, "c": self.c, "sigma": self.sigma,
                "states": len(self.rows), "empirical_failures": self.empirical_failures,
                "bound_failures": self.bound_failures, "refined_skipped": self.refined_skipped,
                "ok": self.ok}


def _le(lhs: float, rhs: float) -> bool:
    return lhs <= rhs + 1e-9 * max(1.0, abs(lhs), abs(rhs))


def drift_audit(g: Graph, bias: BiasParams, rule, states: int, replays: int, seed: int,
                sigma: float = 4.0, lam: float | None = None, c: float | None = None) -> DriftAudit:
    """Compare exact, empirical and bounded one-step drift on random states.

    State ``i`` has a uniform count in [1, n-1] placed uniformly; its replays
    use the stream ``trial_seed(seed, i)``. Bounds that need a strict bias are
    skipped when q0 = q1; the refined 2-choices bound is checked only where
    eps' >= 2 lam^2.
    """
    rule = Rule.parse(rule)
    if lam is None:
        lam = spectral_profile(g)[0].lam
    strict = bias.q1 < bias.q0
    if c is None and rule is Rule.TWO_CHOICES and bias.q0 + bias.q1 > 0:
        c = theory.default_margin(lam, bias.q0, bias.q1)
    if c is not None and c <= 0:
        c = None
    picker = trial_rng(trial_seed(seed, 1 << 30))
    rows = []
    for i in range(states):
        a = int(picker.integers(1, g.n))
        s = OpinionState.random_placement(g.n, a, picker)
        b = g.n - a
        exact = exact_expected_drift(g, s, bias, rule)
        deltas = replay_deltas(g, s, bias, rule, replays, trial_rng(trial_seed(seed, i)))
        mean = float(deltas.mean())
        se = float(deltas.std(ddof=1) / math.sqrt(replays)) if replays > 1 else 0.0
        z = (mean - exact) / se if se > 0 else None
        empirical_ok = abs(mean - exact) <= sigma * se if se > 0 else abs(mean - exact) < 1e-9
        lower = refined = eps = imb = imb_lb = None
        bounds_ok = True
        if rule is Rule.VOTER:
            phi = (1.0 - lam) / 2.0
            if strict and phi > 0:
                lower = theory.voter_drift_lb(min(a, b), phi, bias.q0, bias.q1)
                bounds_ok = _le(lower, exact)
        else:
            lower = theory.two_choices_drift_lb(a, b, g.n, lam, bias.q0, bias.q1)
            imb = squared_imbalance(g, s)
            imb_lb = theory.squared_imbalance_lb(a, b, g.n, lam, cut_edges(g, s), g.d)
            bounds_ok = _le(lower, exact) and _le(imb_lb, imb)
            eps = theory.epsilon_prime(a, b, g.n, bias.q0, bias.q1)
            if c is not None and eps >= 2.0 * lam**2:
                refined = theory.refined_drift_lb(b, bias.q1, c, eps)
                bounds_ok = bounds_ok and _le(refined, exact)
        rows.append(DriftRow(i, a, b, exact, mean, se, z, lower, refined, eps, imb, imb_lb,
                             bool(empirical_ok), bool(bounds_ok)))
    return DriftAudit(rule.value, lam, c, sigma, rows)


# --- export -------------------------------------------------------------------


def records_csv(records: list[RunRecord]) -> str:
    lines = ["trial_index,seed,winner,consensus_step"]
    for r in sorted(records, key=lambda r: r.trial_index):
        lines.append(f"{r.trial_index},{r.trial_seed},{r.winner_label},{r.consensus_step}")
    return "\n".join(lines) + "\n"


def dumps(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_outputs(out_dir, stem: str, payload: dict, csv_text: str | None = None,
                  fmt: str = "both") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("json", "both"):
        path = out / f"{stem}.json"
        path.write_text(dumps(payload))
        written.append(path)
    if csv_text is not None and fmt in ("csv", "both"):
        path = out / f"{stem}.csv"
        path.write_text(csv_text)
        written.append(path)
    return written
