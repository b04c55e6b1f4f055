"""Sequential hyperparameter search: uniform/choice spaces, TPE, trial store.

The suggester models good and bad configurations separately (split at the
gamma quantile of the objective, higher is better) and proposes the
candidate with the largest log-density ratio. Every stochastic draw comes
from a per-trial substream keyed on (seed, trial_id), so a search resumed
from its store replays the remaining trials bit-exactly.
"""

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, SearchError
from .numerics.rng import new_rng

N_STARTUP = 10
GAMMA = 0.25
N_CANDIDATES = 24


@dataclass(frozen=True)
class ParamSpec:
    """One search dimension: an unordered value set or a uniform interval."""

    name: str
    kind: str
    values: tuple = ()
    low: float = 0.0
    high: float = 0.0

    def __post_init__(self):
        if self.kind not in ("choice", "uniform"):
            raise ConfigError(f"param {self.name!r}: kind must be choice or uniform, got {self.kind!r}")
        if self.kind == "choice" and len(self.values) < 2:
            raise ConfigError(f"param {self.name!r}: choice needs >= 2 values, got {len(self.values)}")
        if self.kind == "uniform" and not self.low < self.high:
            raise ConfigError(f"param {self.name!r}: uniform needs low < high, got [{self.low}, {self.high}]")

    def contains(self, value) -> bool:
        if self.kind == "choice":
            return value in self.values
        return self.low <= value <= self.high


@dataclass(frozen=True)
class SearchSpace:
    specs: tuple

    def __post_init__(self):
        if not self.specs:
            raise SearchError("search space has no parameters")
        names = [s.name for s in self.specs]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate parameter names in search space: {names}")

    def contains(self, config: dict) -> bool:
        return set(config) == {s.name for s in self.specs} and all(
            s.contains(config[s.name]) for s in self.specs
        )


@dataclass
class Trial:
    trial_id: int
    seed: int
    config: dict
    objective: float | None = None
    status: str = "pending"
    wall_time_s: float = 0.0

    def __post_init__(self):
        if self.status not in ("pending", "complete", "failed"):
            raise SearchError(f"trial {self.trial_id}: bad status {self.status!r}")
        if self.status == "complete" and (self.objective is None or not math.isfinite(self.objective)):
            raise SearchError(f"trial {self.trial_id}: complete but objective is {self.objective}")


class TrialStore:
    """Append-only JSON-lines history, one trial per line."""

    def __init__(self, path):
        self.path = Path(path)

    def load(self) -> list:
        if not self.path.exists():
            return []
        trials = []
        with open(self.path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    trials.append(Trial(rec["trial_id"], rec["seed"], rec["config"],
                                        rec["objective"], rec["status"], rec["wall_time_s"]))
                except (json.JSONDecodeError, KeyError, TypeError) as e:
                    raise SearchError(f"{self.path}:{lineno}: malformed trial record ({e})") from e
        return trials

    def append(self, trial: Trial) -> None:
        rec = {"trial_id": trial.trial_id, "seed": trial.seed, "config": trial.config,
               "objective": trial.objective, "status": trial.status,
               "wall_time_s": trial.wall_time_s}
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def sample_prior(space: SearchSpace, rng) -> dict:
    """Uniform draw: each choice over its members, each interval over [low, high]."""
    config = {}
    for spec in space.specs:
        if spec.kind == "choice":
            config[spec.name] = spec.values[int(rng.integers(len(spec.values)))]
        else:
            config[spec.name] = float(rng.uniform(spec.low, spec.high))
    return config


def _split_history(trials, gamma):
    """Stable split: sort by objective descending (ties keep insertion order),
    first ceil(gamma*n) go to the good set."""
    order = sorted(range(len(trials)), key=lambda i: -trials[i].objective)
    n_good = math.ceil(gamma * len(trials))
    good = [trials[i].config for i in order[:n_good]]
    bad = [trials[i].config for i in order[n_good:]]
    return good, bad


class _UniformDensity:
    """Gaussian KDE on [low, high] with a caller-supplied bandwidth.

    The bandwidth comes from Scott's rule over the dimension's full
    history (good and bad pooled), so both densities share it. Fitting it
    per set instead lets the good-set kernel collapse around whatever
    cluster the startup phase happened to find, and the search stalls
    there; the pooled spread anneals gradually as the history concentrates.
    """

    def __init__(self, values, low, high, bw):
        self.low = low
        self.high = high
        self.values = np.asarray(values, dtype=np.float64)
        self.bw = None if len(self.values) == 0 else bw

    def sample(self, rng) -> float:
        center = self.values[int(rng.integers(len(self.values)))]
        x = center + self.bw * rng.standard_normal()
        return float(np.clip(x, self.low, self.high))

    def log_pdf(self, x) -> float:
        if self.bw is None:
            return -math.log(self.high - self.low)
        z = (x - self.values) / self.bw
        kernel = np.exp(-0.5 * z * z) / (self.bw * math.sqrt(2 * math.pi))
        return math.log(float(kernel.mean()) + 1e-300)


class _ChoiceDensity:
    """Categorical frequencies with add-one smoothing; empty set falls back to uniform."""

    def __init__(self, values, members):
        self.members = list(members)
        counts = np.array([sum(1 for v in values if v == m) for m in self.members], dtype=np.float64)
        self.probs = (counts + 1.0) / (counts.sum() + len(self.members))

    def sample(self, rng):
        return self.members[int(rng.choice(len(self.members), p=self.probs))]

    def log_pdf(self, value) -> float:
        return math.log(self.probs[self.members.index(value)])


def _scott_bandwidth(spec: ParamSpec, trials) -> float:
    vals = np.asarray([t.config[spec.name] for t in trials], dtype=np.float64)
    scott = float(np.std(vals)) * len(vals) ** (-1.0 / 5.0)
    return max(scott, 0.01 * (spec.high - spec.low))


def _fit_densities(space, configs, bandwidths):
    models = {}
    for spec in space.specs:
        vals = [c[spec.name] for c in configs]
        if spec.kind == "uniform":
            models[spec.name] = _UniformDensity(vals, spec.low, spec.high,
                                                bandwidths[spec.name])
        else:
            models[spec.name] = _ChoiceDensity(vals, spec.values)
    return models


def tpe_suggest(history, space: SearchSpace, rng, *, gamma: float = GAMMA,
                n_candidates: int = N_CANDIDATES, n_startup: int = N_STARTUP) -> dict:
    """Propose a config: draw n_candidates from the good-set density l and
    return the one maximizing sum(log l - log g) over dimensions.

    Falls back to the uniform prior until n_startup complete trials exist.
    Failed trials never enter either density.
    """
    complete = [t for t in history if t.status == "complete"]
    if len(complete) < n_startup:
        return sample_prior(space, rng)

    good, bad = _split_history(complete, gamma)
    bandwidths = {spec.name: _scott_bandwidth(spec, complete)
                  for spec in space.specs if spec.kind == "uniform"}
    l_model = _fit_densities(space, good, bandwidths)
    g_model = _fit_densities(space, bad, bandwidths)

    candidates = []
    scores = []
    for _ in range(n_candidates):
        config = {spec.name: l_model[spec.name].sample(rng) for spec in space.specs}
        score = sum(
            l_model[spec.name].log_pdf(config[spec.name]) - g_model[spec.name].log_pdf(config[spec.name])
            for spec in space.specs
        )
        candidates.append(config)
        scores.append(score)
    return candidates[int(np.argmax(scores))]


def _trial_seed(seed: int, trial_id: int) -> int:
    return int(np.random.SeedSequence([seed, trial_id, 1]).generate_state(1)[0])


def run_search(space: SearchSpace, evaluate, n_trials: int, store: TrialStore, seed: int, *,
               gamma: float = GAMMA, n_candidates: int = N_CANDIDATES,
               n_startup: int = N_STARTUP, on_trial=None) -> Trial:
    """Run trials sequentially, persisting each to the store on completion.

    evaluate(config, trial_seed) must return a finite objective (higher is
    better) and be deterministic in its arguments. An evaluator exception
    marks that trial failed and the search moves on; the trial history
    already in the store is honored, so rerunning with the same store and
    seed resumes after the last persisted trial.
    """
    history = store.load()
    for i in range(len(history), n_trials):
        rng = new_rng(seed, i, 0)
        config = tpe_suggest(history, space, rng, gamma=gamma,
                             n_candidates=n_candidates, n_startup=n_startup)
        t_seed = _trial_seed(seed, i)
        t0 = time.perf_counter()
        try:
            objective = float(evaluate(config, t_seed))
            trial = Trial(i, t_seed, config, objective, "complete", time.perf_counter() - t0)
        except Exception:
            trial = Trial(i, t_seed, config, None, "failed", time.perf_counter() - t0)
        store.append(trial)
        history.append(trial)
        if on_trial is not None:
            on_trial(trial)

    complete = [t for t in history if t.status == "complete"]
    if not complete:
        raise SearchError(f"all {len(history)} trials failed")
    best = complete[0]
    for t in complete[1:]:
        if t.objective > best.objective:
            best = t
    return best


def model_space() -> SearchSpace:
    """Model hyperparameter space shipped with the package."""
    return SearchSpace((
        ParamSpec("lr", "choice", (0.0001, 0.001, 0.01)),
        ParamSpec("batch_size", "choice", (16, 32, 64, 128, 256)),
        ParamSpec("l_size", "choice", (25, 30, 35, 40, 45, 50)),
        ParamSpec("c_channels", "choice", (30, 40, 50, 60)),
        ParamSpec("p_size", "choice", (9, 11, 13, 15, 17)),
        ParamSpec("dropout", "uniform", low=0.1, high=0.4),
    ))


def gridmask_space() -> SearchSpace:
    """Mask hyperparameter space (apply probability, masked ratio)."""
    return SearchSpace((
        ParamSpec("gridmask_p", "uniform", low=0.5, high=1.0),
        ParamSpec("gridmask_mr", "uniform", low=0.1, high=0.5),
    ))


def load_space(path) -> SearchSpace:
    """Read a search space from TOML: one table per parameter.

    [lr]
    kind = "choice"
    values = [0.0001, 0.001, 0.01]

    [dropout]
    kind = "uniform"
    low = 0.1
    high = 0.4
    """
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as f:
        doc = tomllib.load(f)
    specs = []
    for name, body in doc.items():
        if not isinstance(body, dict) or "kind" not in body:
            raise ConfigError(f"{path}: parameter {name!r} needs a table with a 'kind' key")
        kind = body["kind"]
        known = {"kind", "values", "low", "high"}
        if set(body) - known:
            raise ConfigError(f"{path}: parameter {name!r} has unknown keys {sorted(set(body) - known)}")
        if kind == "choice":
            specs.append(ParamSpec(name, "choice", tuple(body.get("values", ()))))
        elif kind == "uniform":
            specs.append(ParamSpec(name, "uniform", low=float(body.get("low", 0.0)),
                                   high=float(body.get("high", 0.0))))
        else:
            raise ConfigError(f"{path}: parameter {name!r}: unknown kind {kind!r}")
    return SearchSpace(tuple(specs))
