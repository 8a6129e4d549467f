#!/usr/bin/env python3
"""
Experiment sweeps over the harmonic benchmark (or a snapshot file).

- error sweep: place sensors with each method, reconstruct every noisy test
  sample, record mean/std relative error against the noiseless truth
- risk sweep: one seeded random k-subset, Bayes risk terms for every n
- dice grid: Dice(Q-MAP, greedy D-optimal) over (n, sigma)
- optimal study: every method against the brute-force subsets with the
  smallest MAP and DEIM test error, errors and Dice overlap per method

Sweep cells are independent and run through joblib; rows come back in
submission order and are sorted by (method, n, k, seed) before writing.
"""

import csv
import json
import os
import time
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from sensing.datasets import (
    HarmonicConfig, NoiseModel, add_noise, generate_harmonic, load_snapshots, noise_ratio, split,
)
from sensing.estimate import build_posterior, reconstruct_states, relative_errors, smallest_singular_value
from sensing.placement import place, place_random
from sensing.placer_brute_d import check_budget
from sensing.placer_brute_error import place_error_optimal
from sensing.pod import PRIOR_PRESETS, center, pod_basis, prior_from_pod
from sensing.risk import RISK_COLUMNS, monte_carlo_risk, null_space_prior_mass, risk_report
from sensing.selection import dice
from sensing.utils import (
    VERSION, InputError, derive_seed, load_config, load_env_var, parse_float_list, parse_int_list,
    resolve_jobs,
)

KINDS = ("error", "risk", "dice", "optimal")
METHOD_PLAN = {
    # method -> (placement, estimator)
    "qdeim": ("cpqr", "deim"),
    "qmap": ("qmap", "map"),
    "greedy_d_map": ("greedy_d", "map"),
    "d_map": ("brute_d", "map"),
}
SWEEP_COLUMNS = (
    ("method", "n", "k", "sigma", "seed", "mean_rel_error", "std_rel_error")
    + RISK_COLUMNS
    + ("dice_vs_greedy", "sigma_min", "null_space_mass", "indices")
)
OPTIMAL_COLUMNS = (
    "method", "estimator", "n", "k", "sigma", "seed", "mean_rel_error", "std_rel_error",
    "dice_vs_opt_map", "dice_vs_opt_deim", "indices",
)
CONVENTIONS = {
    "ground_truth": "relative errors use the noiseless test samples; estimators see noisy measurements",
    "mean": "training mean subtracted before POD and added back to every reconstruction",
    "split": "first ceil(p * train_fraction) samples train, the rest test, no shuffle",
    "monte_carlo": "antithetic pairs (m, eta) and (-m, eta), standard error over pair means",
    "surplus_sensors": "for k > n, CPQR-based methods take the remaining pivots in ascending index order",
    "qdeim_modes": "k: Q-DEIM uses n = k modes; sweep: Q-DEIM uses the swept n",
    "error_optimal": "brute-force subsets minimize one estimator's mean relative test error, "
                     "ties go to the lexicographically first subset",
}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    kind: str = "error"
    dataset: str = "harmonic"                 # "harmonic" or a snapshot file path
    harmonic: HarmonicConfig = field(default_factory=HarmonicConfig)
    sigma: float = 0.1
    modes: tuple = (20,)
    sensors: tuple = (5,)
    methods: tuple = ("qdeim", "greedy_d_map")
    seeds: tuple = (0,)
    brute_budget: int = 1_000_000
    prior: str = "pod"
    qdeim_modes: str = "k"
    sigmas: tuple = (1e-4,)                   # dice grid only
    mc_draws: int = 0                         # risk sweep only, 0 disables Monte Carlo
    charts: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown experiment kind {self.kind!r}, expected one of {KINDS}")
        if not self.modes or not self.sensors or not self.seeds:
            raise InputError("modes, sensors and seeds must all be non-empty")
        if min(self.modes) < 1 or min(self.sensors) < 0:
            raise InputError(f"modes must be >= 1 and sensors >= 0, got {self.modes} / {self.sensors}")
        unknown = [m for m in self.methods if m not in METHOD_PLAN]
        if unknown:
            raise InputError(f"unknown methods {unknown}, expected a subset of {tuple(METHOD_PLAN)}")
        if self.prior not in PRIOR_PRESETS:
            raise InputError(f"unknown prior preset {self.prior!r}, expected one of {PRIOR_PRESETS}")
        if self.qdeim_modes not in ("k", "sweep"):
            raise InputError(f"qdeim_modes must be 'k' or 'sweep', got {self.qdeim_modes!r}")
        if self.sigma < 0 or any(s <= 0 for s in self.sigmas):
            raise InputError("noise sigma must be >= 0 and every dice sigma > 0")
        if self.mc_draws and self.mc_draws < 100:
            raise InputError(f"mc_draws must be 0 or >= 100, got {self.mc_draws}")

    @property
    def noise(self):
        return NoiseModel(sigma=self.sigma)

    @property
    def sweep_axis(self):
        return "k" if len(self.sensors) > 1 else "n"

    def as_dict(self):
        out = asdict(self)
        out["harmonic"] = asdict(self.harmonic)
        return out

    @classmethod
    def from_file(cls, path, **overrides):
        """Build a config from a sectioned file; keyword overrides win over the file."""
        raw = load_config(path)
        exp = raw.get("experiment", {})
        data = raw.get("dataset", {})
        noise = raw.get("noise", {})

        harmonic_keys = {f.name: f.type for f in fields(HarmonicConfig)}
        harmonic_args = {}
        for key, value in data.items():
            if key == "source":
                continue
            if key not in harmonic_keys:
                raise InputError(f"{path}: unknown [dataset] key {key!r}")
            default = getattr(HarmonicConfig(), key)
            harmonic_args[key] = type(default)(value)

        kwargs = {}
        if "name" in exp:
            kwargs["name"] = exp["name"]
        if "kind" in exp:
            kwargs["kind"] = exp["kind"]
        if "source" in data:
            kwargs["dataset"] = data["source"]
        kwargs["harmonic"] = HarmonicConfig(**harmonic_args)
        if "sigma" in noise:
            kwargs["sigma"] = float(noise["sigma"])
        if "sigmas" in noise:
            kwargs["sigmas"] = tuple(parse_float_list(noise["sigmas"]))
        for key in ("modes", "sensors", "seeds"):
            if key in exp:
                kwargs[key] = tuple(parse_int_list(exp[key]))
        if "methods" in exp:
            kwargs["methods"] = tuple(m.strip() for m in exp["methods"].split(",") if m.strip())
        for key in ("brute_budget", "mc_draws"):
            if key in exp:
                kwargs[key] = int(exp[key])
        for key in ("prior", "qdeim_modes"):
            if key in exp:
                kwargs[key] = exp[key]
        if "charts" in exp:
            kwargs["charts"] = exp["charts"].lower() in ("1", "yes", "true", "on")

        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**kwargs)
        except TypeError as e:
            raise InputError(f"{path}: {e}")


@dataclass(frozen=True)
class PreparedData:
    """Everything one seed needs: basis, clean and noisy test samples."""
    seed: int
    basis: object                # ModalBasis with the largest requested mode count
    test_clean: np.ndarray
    test_noisy: np.ndarray
    noise_ratio: float


@dataclass(frozen=True)
class SweepRow:
    method: str
    n: int
    k: int
    sigma: float
    seed: int
    mean_rel_error: float
    std_rel_error: float
    risk: Optional[dict] = None
    dice_vs_greedy: Optional[float] = None
    sigma_min: Optional[float] = None
    null_space_mass: Optional[float] = None
    indices: tuple = ()

    def as_row(self):
        row = {
            "method": self.method, "n": self.n, "k": self.k, "sigma": self.sigma, "seed": self.seed,
            "mean_rel_error": self.mean_rel_error, "std_rel_error": self.std_rel_error,
            "dice_vs_greedy": self.dice_vs_greedy, "sigma_min": self.sigma_min,
            "null_space_mass": self.null_space_mass,
            "indices": " ".join(str(i) for i in self.indices),
        }
        for col in RISK_COLUMNS:
            row[col] = self.risk.get(col) if self.risk else None
        return row


def load_dataset(config, seed):
    """Snapshot matrix for one seed (the harmonic draw or the configured file)."""
    if config.dataset == "harmonic":
        return generate_harmonic(HarmonicConfig(**{**asdict(config.harmonic), "seed": seed}))
    return load_snapshots(config.dataset)


def prepare_dataset(config, seed, n_modes):
    """Split, center the training part, build an n_modes basis, add noise to the test part."""
    x = load_dataset(config, seed)
    train, test = split(x, config.harmonic.train_fraction)
    basis = pod_basis(center(train), n_modes)
    noisy = add_noise(test, config.noise, derive_seed(seed, "test-noise"))
    ratio = noise_ratio(test, noisy) if config.sigma > 0 else 0.0
    return PreparedData(seed=seed, basis=basis, test_clean=test.data, test_noisy=noisy.data, noise_ratio=ratio)


def _cells(config):
    """Unique (method, n, k, seed) cells, sorted."""
    cells = set()
    for method in config.methods:
        for n in config.modes:
            for k in config.sensors:
                n_used = k if (method == "qdeim" and config.qdeim_modes == "k") else n
                if n_used < 1:
                    continue
                for seed in config.seeds:
                    cells.add((method, n_used, k, seed))
    return sorted(cells)


def check_error_sweep(config, n_locations, n_train):
    """Reject configuration conflicts before any computation."""
    if config.kind != "error":
        raise InputError(f"config {config.name!r} is a {config.kind} experiment, not an error sweep")
    map_methods = [m for m in config.methods if METHOD_PLAN[m][1] == "map"]
    if map_methods and config.sigma <= 0:
        raise InputError(f"methods {map_methods} need noise sigma > 0")
    if max(config.sensors) > n_locations:
        raise InputError(f"cannot place {max(config.sensors)} sensors on {n_locations} locations")
    cells = _cells(config)
    n_max = max(c[1] for c in cells)
    if n_max > min(n_locations, n_train - 1):
        raise InputError(f"{n_max} modes requested but the training data supports at most "
                         f"{min(n_locations, n_train - 1)}")
    if "d_map" in config.methods:
        for k in config.sensors:
            check_budget(n_locations, k, config.brute_budget)
    return cells


def _run_cell(config, prepared, method, n, k):
    placement, estimator = METHOD_PLAN[method]
    basis = prepared.basis.truncate(n)
    prior = prior_from_pod(basis, preset=config.prior)
    noise = config.noise
    result = place(placement, basis, k, prior=prior, noise=noise, budget=config.brute_budget, jobs=1)
    sel = result.selection

    measurements = sel.measure(prepared.test_noisy)
    posterior = build_posterior(basis, sel, prior, noise) if estimator == "map" else None
    states = reconstruct_states(estimator, basis, sel, measurements, posterior=posterior)
    errors = relative_errors(states, prepared.test_clean)

    a = sel.operator(basis.phi)
    risk = risk_report(a, prior, noise).as_row() if config.sigma > 0 else None
    agreement = None
    if config.sigma > 0:
        greedy = sel if placement == "greedy_d" else place("greedy_d", basis, k, prior=prior, noise=noise).selection
        agreement = dice(sel, greedy)
    return SweepRow(
        method=method, n=n, k=k, sigma=config.sigma, seed=prepared.seed,
        mean_rel_error=float(errors.mean()), std_rel_error=float(errors.std()),
        risk=risk, dice_vs_greedy=agreement,
        sigma_min=smallest_singular_value(a) if k else 0.0,
        null_space_mass=null_space_prior_mass(basis, sel, prior),
        indices=sel.indices,
    )


def run_error_sweep(config, jobs=None):
    """One SweepRow per (method, n, k, seed), sorted by that key."""
    first = load_dataset(config, config.seeds[0])
    train, _ = split(first, config.harmonic.train_fraction)
    cells = check_error_sweep(config, first.n_dims, train.n_samples)
    n_max = max(c[1] for c in cells)

    print(f"\nError sweep: {config.name}")
    print("=" * 40)
    print(f"Methods: {', '.join(config.methods)} | cells: {len(cells)} | sigma: {config.sigma}")

    prepared = {seed: prepare_dataset(config, seed, n_max) for seed in config.seeds}
    for seed in config.seeds:
        print(f"  seed {seed}: mean noise ratio {prepared[seed].noise_ratio:.2%}")

    jobs = resolve_jobs(jobs)
    rows = Parallel(n_jobs=jobs)(
        delayed(_run_cell)(config, prepared[seed], method, n, k) for method, n, k, seed in cells
    )
    for i, row in enumerate(rows, 1):
        print(f"[{i}/{len(rows)}] {row.method} n={row.n} k={row.k} seed={row.seed}: "
              f"{row.mean_rel_error:.2%} ± {row.std_rel_error:.2%}")
    return sorted(rows, key=lambda r: (r.method, r.n, r.k, r.seed))


def summarize(rows, key=("method", "n", "k")):
    """Average mean_rel_error over seeds; std column is the seed-averaged per-sample std."""
    groups = {}
    for row in rows:
        r = row.as_row() if isinstance(row, SweepRow) else row
        groups.setdefault(tuple(r[c] for c in key), []).append(r)
    out = []
    for group_key, members in sorted(groups.items()):
        summary = dict(zip(key, group_key))
        summary["mean_rel_error"] = float(np.mean([m["mean_rel_error"] for m in members]))
        summary["std_rel_error"] = float(np.mean([m["std_rel_error"] for m in members]))
        summary["n_seeds"] = len(members)
        out.append(summary)
    return out


def run_risk_sweep(config, k, mode_range, seed, mc_draws=0):
    """Risk terms for one seeded random k-subset as the number of modes grows."""
    if config.sigma <= 0:
        raise InputError("the risk sweep needs noise sigma > 0")
    x = load_dataset(config, seed)
    if not 0 <= k <= x.n_dims:
        raise InputError(f"cannot place {k} sensors on {x.n_dims} locations")
    train, _ = split(x, config.harmonic.train_fraction)
    full = pod_basis(center(train), max(mode_range))
    sel = place_random(x.n_dims, k, derive_seed(seed, "sensors"))
    noise = config.noise

    print(f"\nRisk sweep: {config.name}")
    print("=" * 40)
    print(f"k = {k} random sensors {list(sel.indices)} | sigma = {config.sigma}")

    rows = []
    for i, n in enumerate(mode_range, 1):
        basis = full.truncate(n)
        prior = prior_from_pod(basis, preset=config.prior)
        a = sel.operator(basis.phi)
        row = {"n": n, "k": k, "sigma": config.sigma, "seed": seed}
        row.update(risk_report(a, prior, noise).as_row())
        row["sigma_min"] = smallest_singular_value(a)
        row["null_space_mass"] = null_space_prior_mass(basis, sel, prior)
        if mc_draws:
            mc_seed = derive_seed(seed, "monte-carlo", n)
            row["mc_risk_ls"], row["mc_risk_ls_se"] = monte_carlo_risk("deim", a, prior, noise, mc_draws, mc_seed)
            row["mc_risk_map"], row["mc_risk_map_se"] = monte_carlo_risk("map", a, prior, noise, mc_draws, mc_seed)
        row["indices"] = " ".join(str(j) for j in sel.indices)
        rows.append(row)
        print(f"[{i}/{len(mode_range)}] n={n}: delta_prior={row['delta_prior']:.4e} "
              f"delta_noise={row['delta_noise']:.4e} premium={row['premium']:.4e}")
    return rows


def run_dice_grid(config, k, mode_range, sigma_range, seed):
    """Dice(Q-MAP, greedy D-optimal) for every (n, sigma); n < k cells are flagged."""
    x = load_dataset(config, seed)
    train, _ = split(x, config.harmonic.train_fraction)
    full = pod_basis(center(train), max(mode_range))

    print(f"\nDice grid: {config.name}")
    print("=" * 40)
    print(f"k = {k} | modes {min(mode_range)}..{max(mode_range)} | sigmas {list(sigma_range)}")

    rows = []
    for n in mode_range:
        basis = full.truncate(n)
        prior = prior_from_pod(basis, preset=config.prior)
        for sigma in sigma_range:
            noise = NoiseModel(sigma=sigma)
            qmap = place("qmap", basis, k, prior=prior, noise=noise).selection
            greedy = place("greedy_d", basis, k, prior=prior, noise=noise).selection
            value = dice(qmap, greedy)
            flagged = n < k
            rows.append({"n": n, "k": k, "sigma": sigma, "seed": seed, "dice": value, "flagged": flagged})
            if flagged:
                print(f"    ⚠ n={n} < k={k}: surplus Q-MAP sensors are unranked, dice {value:.3f} not comparable")
            elif value < 1.0:
                print(f"    ⚠ n={n} sigma={sigma:g}: dice {value:.3f}")
    return rows


def _placement_errors(estimator, basis, prior, noise, sel, prepared):
    measurements = sel.measure(prepared.test_noisy)
    posterior = build_posterior(basis, sel, prior, noise) if estimator == "map" else None
    states = reconstruct_states(estimator, basis, sel, measurements, posterior=posterior)
    return relative_errors(states, prepared.test_clean)


def run_optimal_study(config, k, n, seed, jobs=None):
    """Every configured method next to the error-optimal MAP and DEIM subsets.

    MAP methods use n modes; Q-DEIM and the DEIM optimum use k modes
    (qdeim_modes = k) or n (sweep). Dice is taken against both optima.
    """
    if config.sigma <= 0:
        raise InputError("the optimal-placement study needs noise sigma > 0")
    x = load_dataset(config, seed)
    if not 1 <= k <= x.n_dims:
        raise InputError(f"cannot place {k} sensors on {x.n_dims} locations")
    check_budget(x.n_dims, k, config.brute_budget, search="brute-force error-optimal placement")
    n_deim = k if config.qdeim_modes == "k" else n
    prepared = prepare_dataset(config, seed, max(n, n_deim))
    noise = config.noise
    models = {}
    for estimator, modes in (("map", n), ("deim", n_deim)):
        basis = prepared.basis.truncate(modes)
        models[estimator] = (basis, prior_from_pod(basis, preset=config.prior))

    print(f"\nOptimal placement study: {config.name}")
    print("=" * 40)
    print(f"k = {k} | n = {n} (MAP), {n_deim} (DEIM) | sigma = {config.sigma} | seed = {seed}")

    placed = []
    for method in config.methods:
        placement, estimator = METHOD_PLAN[method]
        basis, prior = models[estimator]
        result = place(placement, basis, k, prior=prior, noise=noise, budget=config.brute_budget, jobs=jobs)
        placed.append((method, estimator, result.selection))
    optima = {}
    for estimator, (basis, prior) in models.items():
        result = place_error_optimal(basis, prepared.test_clean, prepared.test_noisy, k, estimator=estimator,
                                     prior=prior, noise=noise, budget=config.brute_budget, jobs=jobs)
        optima[estimator] = result.selection
        placed.append((result.method, estimator, result.selection))

    rows = []
    for method, estimator, sel in placed:
        basis, prior = models[estimator]
        errors = _placement_errors(estimator, basis, prior, noise, sel, prepared)
        rows.append({
            "method": method, "estimator": estimator, "n": basis.n_modes, "k": k, "sigma": config.sigma,
            "seed": seed, "mean_rel_error": float(errors.mean()), "std_rel_error": float(errors.std()),
            "dice_vs_opt_map": dice(sel, optima["map"]), "dice_vs_opt_deim": dice(sel, optima["deim"]),
            "indices": " ".join(str(i) for i in sel.indices),
        })
        print(f"  {method:>13}: {errors.mean():.2%} | sensors {list(sel.indices)} | "
              f"Dice vs optimum {rows[-1]['dice_vs_opt_' + estimator]:.2f}")
    return rows


def dice_matrix(rows):
    """(modes, sigmas, matrix) with matrix[i, j] = Dice at modes[i], sigmas[j]."""
    modes = sorted({r["n"] for r in rows})
    sigmas = sorted({r["sigma"] for r in rows})
    grid = np.full((len(modes), len(sigmas)), np.nan)
    for r in rows:
        grid[modes.index(r["n"]), sigmas.index(r["sigma"])] = r["dice"]
    return modes, sigmas, grid


def write_rows_csv(rows, path, columns=None):
    """Write dict rows (or SweepRows) as CSV; floats written with repr."""
    dict_rows = [r.as_row() if isinstance(r, SweepRow) else r for r in rows]
    if columns is None:
        columns = list(SWEEP_COLUMNS) if rows and isinstance(rows[0], SweepRow) else list(dict_rows[0]) if dict_rows else []
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns))
        writer.writeheader()
        for r in dict_rows:
            writer.writerow({c: _cell(r.get(c)) for c in columns})
    return path


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def write_metadata(path, config, outputs, extra=None):
    """JSON sidecar: config echo, version, seeds and conventions."""
    meta = {
        "experiment": config.name,
        "kind": config.kind,
        "version": VERSION,
        "seeds": list(config.seeds),
        "config": config.as_dict(),
        "conventions": CONVENTIONS,
        "outputs": sorted(os.path.basename(p) for p in outputs),
    }
    if extra:
        meta.update(extra)
    with open(path, "w") as f:
        json.dump(meta, f, indent=2, default=list)
    return path


def default_output_dir():
    return load_env_var("SENSING_OUTPUT_DIR") or "output"


def run_experiment(config, out_dir=None, jobs=None):
    """Run the configured experiment and write CSV, SVG and metadata files. Returns output paths."""
    from sensing.charts import render_svg_lines

    out_dir = out_dir or default_output_dir()
    os.makedirs(out_dir, exist_ok=True)
    started = time.perf_counter()
    outputs = []
    base = os.path.join(out_dir, config.name)

    if config.kind == "error":
        rows = run_error_sweep(config, jobs=jobs)
        outputs.append(write_rows_csv(rows, f"{base}.csv"))
        if config.charts:
            axis = config.sweep_axis
            summary = summarize(rows)
            outputs.append(render_svg_lines(summary, axis, "mean_rel_error", "method", f"{base}.svg",
                                            std_col="std_rel_error", title=config.name))
    elif config.kind == "risk":
        rows = []
        for seed in config.seeds:
            for k in config.sensors:
                rows.extend(run_risk_sweep(config, k, list(config.modes), seed, mc_draws=config.mc_draws))
        outputs.append(write_rows_csv(rows, f"{base}.csv"))
        if config.charts:
            long_rows = [{"n": r["n"], "term": term, "value": r[term]}
                         for r in rows if r["seed"] == config.seeds[0] and r["k"] == config.sensors[0]
                         for term in ("delta_prior", "delta_noise", "zeta_prior", "zeta_noise")]
            outputs.append(render_svg_lines(long_rows, "n", "value", "term", f"{base}.svg",
                                            title=config.name, log_y=True))
    elif config.kind == "optimal":
        rows = []
        for seed in config.seeds:
            for k in config.sensors:
                for n in config.modes:
                    rows.extend(run_optimal_study(config, k, n, seed, jobs=jobs))
        outputs.append(write_rows_csv(rows, f"{base}.csv", columns=OPTIMAL_COLUMNS))
        if config.charts:
            chart_rows = [r for r in rows if r["seed"] == config.seeds[0] and r["k"] == config.sensors[0]]
            outputs.append(render_svg_lines(chart_rows, "n", "dice_vs_opt_map", "method", f"{base}.svg",
                                            title=config.name))
    else:
        rows = []
        for seed in config.seeds:
            for k in config.sensors:
                rows.extend(run_dice_grid(config, k, list(config.modes), config.sigmas, seed))
        outputs.append(write_rows_csv(rows, f"{base}.csv"))
        if config.charts:
            chart_rows = [dict(r, sigma=f"{r['sigma']:g}") for r in rows
                          if r["seed"] == config.seeds[0] and r["k"] == config.sensors[0]]
            outputs.append(render_svg_lines(chart_rows, "n", "dice", "sigma", f"{base}.svg", title=config.name))

    elapsed = time.perf_counter() - started
    meta_path = f"{base}.meta.json"
    write_metadata(meta_path, config, outputs + [meta_path],
                   extra={"finished": datetime.now().isoformat(timespec="seconds"), "elapsed_s": round(elapsed, 2)})
    outputs.append(meta_path)
    print(f"\nSaved {len(outputs)} files to {out_dir} ({elapsed:.1f}s)")
    return outputs
