"""Sequential filtering experiments, the toy example, and the oracle battery."""

from __future__ import annotations

import csv
import io
import json
import logging
import multiprocessing
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import oracle
from .chain import BinaryMarkovChain, GaussianNodeLikelihood, fmt17, marginals, posterior_chain
from .ensemble import Ensemble, EstimationPrior, estimate_chain, resample_assumed, update_members
from .metrics import contact_length_cdf, contact_profile, fmt_na, frobenius_diff, quantile_interval
from .optimizer import build_optimal_q
from .truth import ProcessConfig, TrueModelTable, matrix_to_csv, simulate_step, simulate_truth

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
METHODS = ("proposed", "assumed", "exact")
CODES = {"exact": "c", "proposed": "q", "assumed": "a"}

# purpose tags for RNG stream keys
TRUTH, INIT, FORECAST_Q, FORECAST_A, UPDATE_Q, UPDATE_A, ORACLE = range(7)

TOY_Y = (-0.681, -1.585, 0.007, 3.103)
TOY_SIGMA = 2.0
TOY_P00 = 0.7
TOY_P11 = 0.8


class ConfigError(ValueError):
    pass


def stream(seed: int, rep: int, t: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng([seed, rep, t, purpose])


# -- configuration --------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 400
    T: int = 100
    sigma: float = 2.0
    M: int = 20
    B: int = 1000
    seed: int = 0
    methods: tuple[str, ...] | None = None  # None: exact only when n permits it
    alpha: float = 2.0
    beta: float = 2.0
    eval_t: tuple[int, ...] | None = None
    probes: tuple[int, ...] | None = None
    level: float = 0.90
    snapshots: bool = False
    out: str = "out"

    def __post_init__(self):
        if self.methods is None:
            keep = METHODS if self.n <= oracle.MAX_FILTER_N else ("proposed", "assumed")
            object.__setattr__(self, "methods", keep)
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if self.T < 1 or self.M < 1 or self.B < 1:
            raise ConfigError("T, M and B must be at least 1")
        if not self.sigma > 0.0:
            raise ConfigError("sigma must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise ConfigError(f"unknown methods {sorted(bad)}")
        if "exact" in self.methods and self.n > oracle.MAX_FILTER_N:
            raise ConfigError(f"exact method requires n <= {oracle.MAX_FILTER_N}")
        if not 0.0 < self.level < 1.0:
            raise ConfigError("level must lie in (0,1)")
        if not (self.alpha > 0.0 and self.beta > 0.0):
            raise ConfigError("alpha and beta must be positive")
        for t in self.eval_times():
            if not 1 <= t <= self.T:
                raise ConfigError(f"eval time {t} outside 1..{self.T}")
        for i in self.probe_nodes():
            if not 1 <= i <= self.n:
                raise ConfigError(f"probe node {i} outside 1..{self.n}")

    def eval_times(self) -> tuple[int, ...]:
        """Explicit eval times, or 60/70/80 rescaled to the horizon T."""
        if self.eval_t is not None:
            return tuple(self.eval_t)
        return tuple(sorted({min(max(round(t * self.T / 100), 1), self.T) for t in (60, 70, 80)}))

    def probe_nodes(self) -> tuple[int, ...]:
        """Explicit probes, or 115/210/290 rescaled to the width n."""
        if self.probes is not None:
            return tuple(self.probes)
        return tuple(sorted({min(max(round(i * self.n / 400), 1), self.n) for i in (115, 210, 290)}))

    @property
    def process(self) -> ProcessConfig:
        return ProcessConfig(self.n, self.T, self.sigma)

    def echo(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        d["eval_t"] = list(self.eval_times())
        d["probes"] = list(self.probe_nodes())
        return d


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    try:
        if name in ("n", "T", "M", "B", "seed"):
            return int(raw)
        if name in ("sigma", "alpha", "beta", "level"):
            return float(raw)
        if name == "methods":
            return tuple(v.strip() for v in raw.split(",") if v.strip())
        if name in ("eval_t", "probes"):
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if name == "snapshots":
            if raw.lower() in ("1", "true", "yes"):
                return True
            if raw.lower() in ("0", "false", "no"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_assignments(pairs, base: dict | None = None) -> dict:
    """Fold ``key=value`` strings into a dict of typed config values."""
    out = dict(base or {})
    names = {f.name for f in fields(ExperimentConfig)}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        if key not in names:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _parse_value(key, raw)
    return out


def read_config_file(text: str) -> list[str]:
    lines = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    return lines


def load_config(path=None, overrides=(), **extra) -> ExperimentConfig:
    values = {}
    if path is not None:
        values = parse_assignments(read_config_file(Path(path).read_text()))
    values = parse_assignments(overrides, values)
    values.update({k: v for k, v in extra.items() if v is not None})
    return ExperimentConfig(**values)


# -- shared data -------------------------------------------------------------------


@dataclass
class SharedData:
    truth: np.ndarray
    obs: np.ndarray
    exact: np.ndarray | None = None  # T x n marginals P(x_i = 1)
    exact_states: dict = field(default_factory=dict)  # eval t -> 2^n probabilities


def make_shared_data(cfg: ExperimentConfig, table: TrueModelTable | None = None) -> SharedData:
    table = table or TrueModelTable()
    truth, obs = simulate_truth(table, cfg.process, stream(cfg.seed, 0, 0, TRUTH))
    data = SharedData(truth, obs)
    if "exact" in cfg.methods:
        states = oracle.exact_filter(table, obs, cfg.sigma, cfg.n, cfg.T)
        data.exact = oracle.filter_marginals(states, cfg.n)
        data.exact_states = {t: states[t - 1] for t in cfg.eval_times()}
    return data


# -- one replication -----------------------------------------------------------------


@dataclass
class FilterRun:
    rep: int
    marginals: dict  # method -> T x n posterior ensemble means
    snapshots: dict  # (method, t) -> M x n members
    diagnostics: list  # (t, max_pieces, mean_pieces, agree, disagree, edge_ties)


def run_filter_replication(cfg: ExperimentConfig, data: SharedData, rep: int, table=None) -> FilterRun:
    table = table or TrueModelTable()
    lik = GaussianNodeLikelihood(cfg.sigma)
    eprior = EstimationPrior(cfg.alpha, cfg.beta)
    methods = [m for m in ("proposed", "assumed") if m in cfg.methods]
    evals = set(cfg.eval_times())
    marg = {m: np.empty((cfg.T, cfg.n)) for m in methods}
    snaps = {}
    diags = []
    current = {}
    for t in range(1, cfg.T + 1):
        if t == 1:
            zero = np.zeros((cfg.M, cfg.n), dtype=np.uint8)
            init = simulate_step(table, zero, stream(cfg.seed, rep, t, INIT))
        for m in methods:
            if t == 1:
                forecast = init
            else:
                tag = FORECAST_Q if m == "proposed" else FORECAST_A
                forecast = simulate_step(table, current[m], stream(cfg.seed, rep, t, tag))
            est = estimate_chain(Ensemble(forecast), eprior)
            post = posterior_chain(est, lik, data.obs[t - 1])
            if m == "proposed":
                try:
                    q = build_optimal_q(est, post, keep_value_functions=False)
                except Exception as exc:
                    raise RuntimeError(f"coupling failed at rep={rep} t={t}: {exc}") from exc
                d = q.diagnostics
                diags.append(
                    (t, d["max_pieces"], d["mean_pieces"], d["upper_corner_agree"],
                     d["upper_corner_disagree"], d["edge_ties"])
                )
                new = update_members(forecast, q, stream(cfg.seed, rep, t, UPDATE_Q))
            else:
                new = resample_assumed(post, cfg.M, stream(cfg.seed, rep, t, UPDATE_A)).members
            current[m] = new
            marg[m][t - 1] = new.mean(axis=0)
            if t in evals:
                snaps[(m, t)] = new
    return FilterRun(rep, marg, snaps, diags)


def _replicate(args):
    cfg, data, rep = args
    return run_filter_replication(cfg, data, rep)


# -- aggregation and output ---------------------------------------------------------


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _write(out: Path, name: str, text: str, files: list) -> None:
    (out / name).write_text(text, encoding="utf-8", newline="\n")
    files.append(name)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> dict:
    """Run all replications and write CSV outputs under ``cfg.out``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    data = make_shared_data(cfg)
    tasks = [(cfg, data, rep) for rep in range(cfg.B)]
    if jobs > 1:
        with multiprocessing.get_context("spawn").Pool(jobs) as pool:
            runs = pool.map(_replicate, tasks, chunksize=1)
    else:
        runs = [_replicate(a) for a in tasks]
    return write_outputs(cfg, data, runs, out)


def write_outputs(cfg: ExperimentConfig, data: SharedData, runs: list, out: Path) -> dict:
    files: list[str] = []
    methods = [m for m in ("proposed", "assumed") if m in cfg.methods]
    _write(out, "truth.csv", matrix_to_csv(data.truth, integer=True), files)
    _write(out, "observations.csv", matrix_to_csv(data.obs), files)

    est = {m: np.mean([r.marginals[m] for r in runs], axis=0) for m in methods}
    if data.exact is not None:
        est["exact"] = data.exact
    for m, mat in est.items():
        _write(out, f"marginals_{CODES[m]}.csv", matrix_to_csv(mat), files)

    frob = {}
    if data.exact is not None:
        frob = {m: frobenius_diff(est[m], data.exact) for m in methods}
    _write(out, "frobenius.csv", _csv([[CODES[m], fmt17(v)] for m, v in frob.items()], ["method", "value"]), files)

    order = [m for m in ("exact", "proposed", "assumed") if m in est]
    bits = oracle.state_bits(cfg.n) if data.exact is not None else None
    for t in cfg.eval_times():
        pooled = {m: np.concatenate([r.snapshots[(m, t)] for r in runs]) for m in methods}
        weights = data.exact_states.get(t)

        # the exact reference weighs every lattice state by its filtering probability
        sources = [(bits, weights) if m == "exact" else (pooled[m], None) for m in order]

        for i in cfg.probe_nodes():
            cols = [contact_profile(x, i, weights=w) for x, w in sources]
            rows = [[j, *(fmt_na(c[j - 1]) for c in cols)] for j in range(1, cfg.n + 1)]
            _write(out, f"contact_t{t}_i{i}.csv", _csv(rows, ["j", *(f"p_{CODES[m]}" for m in order)]), files)

        cdfs = [contact_length_cdf(x, weights=w) for x, w in sources]
        rows = [[l, *(fmt_na(c[l - 1]) for c in cdfs)] for l in range(1, cfg.n + 1)]
        _write(out, f"contact_cdf_t{t}.csv", _csv(rows, ["l", *(f"F_{CODES[m]}" for m in order)]), files)

        rows = []
        for m in order:
            for i in range(1, cfg.n + 1):
                if m == "exact":
                    rows.append([CODES[m], i, fmt17(data.exact[t - 1, i - 1]), "NA", "NA"])
                    continue
                per_rep = [r.marginals[m][t - 1, i - 1] for r in runs]
                lo, hi = quantile_interval(per_rep, cfg.level) if len(runs) >= 2 else (np.nan, np.nan)
                rows.append([CODES[m], i, fmt17(est[m][t - 1, i - 1]), fmt_na(lo), fmt_na(hi)])
        _write(out, f"quantiles_t{t}.csv", _csv(rows, ["method", "i", "est", "lo", "hi"]), files)

    diag_rows = []
    for r in runs:
        for t, mx, mean, agree, dis, ties in r.diagnostics:
            diag_rows.append([r.rep, t, mx, fmt17(mean), agree, dis, ties])
    _write(
        out,
        "diagnostics.csv",
        _csv(diag_rows, ["rep", "t", "max_pieces", "mean_pieces", "upper_corner_agree",
                         "upper_corner_disagree", "edge_ties"]),
        files,
    )

    if cfg.snapshots:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        for r in runs:
            for (m, t), members in sorted(r.snapshots.items()):
                name = f"snapshots/{CODES[m]}_t{t}_r{r.rep}.csv.gz"
                Ensemble(members).save(out / name)
                files.append(name)

    summary = {"frobenius": {CODES[m]: v for m, v in frob.items()}}
    if diag_rows:
        summary["max_pieces"] = max(row[2] for row in diag_rows)
        summary["mean_pieces"] = float(np.mean([d[2] for r in runs for d in r.diagnostics]))
        summary["upper_corner_disagree"] = int(sum(row[5] for row in diag_rows))
    manifest = {
        "format_version": FORMAT_VERSION,
        "command": "run",
        "seed": cfg.seed,
        "config": cfg.echo(),
        "files": files,
        "summary": summary,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if summary.get("max_pieces", 0) >= 64 or summary.get("mean_pieces", 0) >= 10:
        log.warning("value-function piece counts unusually large: %s", summary)
    return manifest


# -- toy example -----------------------------------------------------------------------


def toy_chains(y=TOY_Y, sigma: float = TOY_SIGMA) -> tuple[BinaryMarkovChain, BinaryMarkovChain]:
    prior = BinaryMarkovChain.homogeneous(len(y), TOY_P00, TOY_P11)
    return prior, posterior_chain(prior, GaussianNodeLikelihood(sigma), y)


def run_toy(out=None, y=TOY_Y, sigma: float = TOY_SIGMA, dump_value_functions: bool = False) -> dict:
    """Four-node example: posterior chain, optimal rule, and exact checks."""
    prior, post = toy_chains(y, sigma)
    q = build_optimal_q(prior, post)
    dist, expected = oracle.enumerate_pushforward(q, prior)
    target = oracle.chain_joint(post)
    n = prior.n
    pair_err = float(np.abs(oracle.pair_marginals(dist, n) - oracle.pair_marginals(target, n)).max())
    report = {
        "y": list(map(float, y)),
        "sigma": sigma,
        "posterior_init0": post.init0,
        "posterior_p0given": post.p0given.tolist(),
        "posterior_marginals0": marginals(post).tolist(),
        "t_star": list(q.t_star),
        "value": q.value,
        "enumerated_value": expected,
        "pair_marginal_error": pair_err,
        "joint_deviation": float(np.abs(dist - target).max()),
        "pieces": {k: f.n_pieces for k, f in sorted(q.value_functions.items())},
    }
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        files: list[str] = []
        _write(out, "prior_chain.csv", prior.to_csv(), files)
        _write(out, "posterior_chain.csv", post.to_csv(), files)
        _write(out, "transition_rule.csv", q.to_csv(), files)
        rows = [[i, fmt17(v)] for i, v in enumerate(marginals(post), start=1)]
        _write(out, "posterior_marginals.csv", _csv(rows, ["k", "p0"]), files)
        if dump_value_functions:
            files += dump_rule_functions(q, out)
        manifest = {"format_version": FORMAT_VERSION, "command": "toy", "files": files, "report": report}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    report["rule"] = q
    report["prior"] = prior
    report["posterior"] = post
    return report


def dump_rule_functions(q, out: Path) -> list[str]:
    files: list[str] = []
    rows = [[k, fmt17(t)] for k, t in enumerate(q.t_star, start=1)]
    _write(out, "t_star.csv", _csv(rows, ["k", "t_star"]), files)
    for k, f in sorted(q.value_functions.items()):
        _write(out, f"E_{k}.csv", f.to_csv(), files)
    return files


# -- oracle battery ------------------------------------------------------------------


def random_chain(rng: np.random.Generator, n: int, lo: float = 0.02, hi: float = 0.98) -> BinaryMarkovChain:
    return BinaryMarkovChain(float(rng.uniform(lo, hi)), rng.uniform(lo, hi, (n - 1, 2)))


def oracle_instances(seed: int, count: int, ns) -> list[tuple[BinaryMarkovChain, BinaryMarkovChain]]:
    """Random (prior, posterior) pairs; the second half uses Gaussian data on the prior."""
    out = []
    for idx in range(count):
        rng = stream(seed, idx, len(ns), ORACLE)
        n = int(ns[idx % len(ns)])
        prior = random_chain(rng, n)
        if idx % 2 == 0:
            post = random_chain(rng, n)
        else:
            post = posterior_chain(prior, GaussianNodeLikelihood(float(rng.uniform(0.5, 3.0))),
                                   rng.normal(0.5, 1.5, n))
        out.append((prior, post))
    return out


PAIR_TOL = 1e-10
VALUE_TOL = 1e-9
GRID_GAP = 5e-3


def run_oracle_suite(seed: int = 0, instances: int = 200, grid_instances: int = 50,
                     identity_instances: int = 20, grid_steps: int = 2000, out=None) -> tuple[bool, list]:
    """Constraint, grid-DP and identity batteries; returns (all_passed, rows)."""
    rows = []

    def add(battery, idx, n, metric, value, tol, ok):
        rows.append([battery, idx, n, metric, fmt17(value), fmt_na(tol), "pass" if ok else "fail"])

    for idx, (prior, post) in enumerate(oracle_instances(seed, instances, range(2, 9))):
        q = build_optimal_q(prior, post, keep_value_functions=False)
        dist, expected = oracle.enumerate_pushforward(q, prior)
        target = oracle.chain_joint(post.clamped())
        n = prior.n
        err = float(np.abs(oracle.pair_marginals(dist, n) - oracle.pair_marginals(target, n)).max())
        add("constraint", idx, n, "pair_marginal_error", err, PAIR_TOL, err <= PAIR_TOL)
        gap = abs(expected - q.value)
        add("constraint", idx, n, "value_vs_enumeration", gap, VALUE_TOL, gap <= VALUE_TOL)
        # the factorized rule matches pairs, not the whole joint: informational only
        add("constraint", idx, n, "joint_deviation_info", float(np.abs(dist - target).max()), float("nan"), True)

    for idx, (prior, post) in enumerate(oracle_instances(seed + 1, grid_instances, (2, 3, 4))):
        q = build_optimal_q(prior, post, keep_value_functions=False)
        g = oracle.grid_dp_optimum(prior.clamped(), post.clamped(), grid_steps)
        add("grid", idx, prior.n, "oracle_minus_solver", g - q.value, VALUE_TOL, g <= q.value + VALUE_TOL)
        add("grid", idx, prior.n, "solver_minus_oracle", q.value - g, GRID_GAP, q.value - g <= GRID_GAP)

    for idx in range(identity_instances):
        rng = stream(seed + 2, idx, 0, ORACLE)
        chain = random_chain(rng, int(rng.integers(2, 11)))
        q = build_optimal_q(chain, chain, keep_value_functions=False)
        _, expected = oracle.enumerate_pushforward(q, chain)
        add("identity", idx, chain.n, "unchanged_minus_n", expected - chain.n, 1e-12, abs(expected - chain.n) <= 1e-12)
        add("identity", idx, chain.n, "value_minus_n", q.value - chain.n, VALUE_TOL, abs(q.value - chain.n) <= VALUE_TOL)
        add("identity", idx, chain.n, "is_identity", float(not q.is_identity(1e-12)), 0.0, q.is_identity(1e-12))

    ok = all(r[-1] == "pass" for r in rows)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        header = ["battery", "instance", "n", "metric", "value", "tolerance", "result"]
        (out / "oracle_suite.csv").write_text(_csv(rows, header), encoding="utf-8", newline="\n")
    return ok, rows
