#!/usr/bin/env python3
"""
Command-line front door for the sensing library.

Subcommands:
    generate     random-harmonic snapshot file
    pod          POD basis + prior from a snapshot file (model directory)
    place        sensor selection with cpqr / qmap / greedy_d / brute_d / random
    reconstruct  DEIM or MAP reconstruction of a snapshot file from a selection
    risk         Bayes risk report for a selection or an explicit A matrix
    experiment   run a sweep config (error / risk / dice / optimal)
    dice         Dice coefficient of two selection files

Settings resolve as flag > environment (SENSING_JOBS, SENSING_OUTPUT_DIR)
> config file section named after the subcommand > default.

Every run writes a <output>.manifest.json and appends to logs/run-report.txt.
Exit codes: 0 ok, 2 usage / input, 3 brute-force budget, 4 numerical failure.

Usage:
    python scripts/sensing_cli.py generate --samples 1000 --out data/harmonic.bin
    python scripts/sensing_cli.py pod --data data/harmonic.bin --modes 20 --out-dir output/model
    python scripts/sensing_cli.py place --model output/model --method greedy_d --k 5 --sigma 0.1
    python scripts/sensing_cli.py experiment --config configs/error-vs-modes.cfg --jobs 4
"""

import argparse
import json
import os
import sys
import time
from datetime import datetime

import numpy as np

_SCRIPT_DIR = os.path.dirname(os.path.abspath(__file__))
_PROJECT_ROOT = os.path.dirname(_SCRIPT_DIR)
sys.path.insert(0, _PROJECT_ROOT)

from sensing.datasets import (  # noqa: E402
    HarmonicConfig, NoiseModel, add_noise, generate_harmonic, load_snapshots, save_snapshots, split,
)
from sensing.estimate import (  # noqa: E402
    build_posterior, deim_error_bound, map_error_bound, noise_norm_ratio, reconstruct_states,
    relative_errors,
)
from sensing.experiments import ExperimentConfig, default_output_dir, run_experiment, write_rows_csv  # noqa: E402
from sensing.numerics import logdet_spd  # noqa: E402
from sensing.placement import METHODS, info_gain, place, theta_d  # noqa: E402
from sensing.pod import center, load_model, modes_for_energy, pod_basis, prior_from_pod, save_model  # noqa: E402
from sensing.risk import RISK_COLUMNS, monte_carlo_risk, risk_report  # noqa: E402
from sensing.selection import dice, load_selection, save_selection  # noqa: E402
from sensing.utils import (  # noqa: E402
    VERSION, BudgetExceeded, InputError, NumericalError, SensingError, derive_seed, load_config,
    parse_int_list, resolve_jobs,
)

REPORT_FILE = os.path.join(_PROJECT_ROOT, "logs", "run-report.txt")
EXIT_USAGE, EXIT_BUDGET, EXIT_NUMERICAL = 2, 3, 4


def as_bool(text):
    return str(text).strip().lower() in ("1", "yes", "true", "on")


class UsageError(InputError):
    """argparse-level problems, reported like any other input error."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class Settings:
    """Flag > environment > config file section > default."""

    def __init__(self, args):
        self.args = args
        self.file = {}
        if getattr(args, "config", None) and args.command != "experiment":
            self.file = load_config(args.config).get(args.command, {})

    def get(self, name, default=None, cast=str):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        if name in self.file:
            try:
                return cast(self.file[name])
            except ValueError:
                raise InputError(f"config key {name} = {self.file[name]!r} is not a valid {cast.__name__}")
        return default


class RunManifest:
    """What one command read, wrote, computed and how long it took."""

    def __init__(self, command, settings):
        self.command = command
        self.settings = settings
        self.inputs = []
        self.outputs = []
        self.seeds = []
        self.results = {}
        self.started = datetime.now()
        self._t0 = time.perf_counter()

    def as_dict(self):
        config = {k: v for k, v in vars(self.settings.args).items() if k != "handler"}
        config.update({f"file:{k}": v for k, v in self.settings.file.items()})
        return {
            "command": self.command,
            "version": VERSION,
            "config": config,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "results": self.results,
            "started": self.started.isoformat(timespec="seconds"),
            "wall_clock_s": round(time.perf_counter() - self._t0, 3),
        }

    def write(self, anchor):
        path = f"{anchor}.manifest.json"
        self.outputs.append(path)
        with open(path, "w") as f:
            json.dump(self.as_dict(), f, indent=2, default=str)
        return path


def append_report(command, argv, status, outputs):
    """Append this run to the report log."""
    os.makedirs(os.path.dirname(REPORT_FILE), exist_ok=True)
    with open(REPORT_FILE, "a") as f:
        f.write(f"\n{'=' * 60}\n")
        f.write(f"sensing {command} — {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n")
        f.write(f"{'=' * 60}\n")
        f.write(f"args: {' '.join(argv)}\n")
        f.write(f"status: {status}\n")
        for path in outputs:
            f.write(f"  {path}\n")


def _noise(settings, default=0.1):
    return NoiseModel(sigma=float(settings.get("sigma", default, float)))


def _ensure_parent(path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    return path


# --- subcommands ---

def cmd_generate(settings, manifest):
    config = HarmonicConfig(
        n_grid=settings.get("grid", 40, int),
        n_terms=settings.get("terms", 20, int),
        n_samples=settings.get("samples", 1000, int),
        seed=settings.get("seed", 0, int),
        amplitude_param=settings.get("amplitude_param", "std"),
    )
    manifest.seeds = [config.seed]
    x = generate_harmonic(config)
    sigma = settings.get("sigma", 0.0, float)
    if sigma:
        x = add_noise(x, NoiseModel(sigma=sigma), derive_seed(config.seed, "generate-noise"))
    out = settings.get("out", os.path.join(default_output_dir(), "harmonic.bin"))
    save_snapshots(x, _ensure_parent(out), fmt=settings.get("format", "binary"))
    manifest.outputs.append(out)
    print(f"Saved {x.n_dims}x{x.n_samples} snapshots to {out}")
    return out


def cmd_pod(settings, manifest):
    data = settings.get("data")
    if not data:
        raise UsageError("pod needs --data")
    manifest.inputs.append(data)
    x = load_snapshots(data)
    fraction = settings.get("train_fraction", 0.75, float)
    train, _ = split(x, fraction)
    xc = center(train)

    energy = settings.get("energy", None, float)
    if energy:
        full = pod_basis(xc, 1)
        n = modes_for_energy(full, energy)
        print(f"{energy:.1%} energy needs {n} modes")
    else:
        n = settings.get("modes", 20, int)
    basis = pod_basis(xc, n)
    prior = prior_from_pod(basis, preset=settings.get("prior", "pod"), scale=settings.get("prior_scale", 1.0, float))

    out_dir = settings.get("out_dir", os.path.join(default_output_dir(), "model"))
    paths = save_model(out_dir, basis, prior, extra={"train_fraction": fraction, "source": data})
    manifest.outputs.extend(paths)
    print(f"POD basis: {basis.n_locations} locations x {basis.n_modes} modes from {basis.n_samples_used} samples")
    print(f"Saved model to {out_dir}")
    return os.path.join(out_dir, "model")


def cmd_place(settings, manifest):
    method = settings.get("method")
    if method not in METHODS:
        raise UsageError(f"unknown placement method {method!r}, expected one of {METHODS}")
    model_dir = settings.get("model")
    if not model_dir:
        raise UsageError("place needs --model")
    k = settings.get("k", None, int)
    if k is None:
        raise UsageError("place needs --k")
    manifest.inputs.append(model_dir)
    basis, prior = load_model(model_dir)
    noise = _noise(settings)
    seed = settings.get("seed", 0, int)
    manifest.seeds = [seed]

    result = place(method, basis, k, prior=prior, noise=noise, seed=seed, verbose=True,
                   use_rank1=not settings.get("naive", False, as_bool),
                   budget=settings.get("budget", None, int), jobs=resolve_jobs(settings.get("jobs", None, int)))

    out = settings.get("out", os.path.join(default_output_dir(), f"selection-{method}-k{k}.csv"))
    save_selection(result.selection, _ensure_parent(out), method, seed)
    manifest.outputs.append(out)

    manifest.results = {"method": method, "k": k, "indices": [int(i) for i in result.selection.indices],
                        "objective_trace": [float(v) for v in result.objective_trace]}
    if noise.sigma > 0:
        theta = theta_d(basis, result.selection, prior, noise)
        gain = info_gain(basis, result.selection, prior, noise)
        empty = logdet_spd(prior.gamma)
        manifest.results.update(theta_d=theta, j_d=gain, theta_d_empty=empty)
        print(f"Theta_D = {theta:.6f} | J_D = {gain:.6f} (Theta_D(empty) = {empty:.6f})")
    for note in result.notes:
        print(f"    ⚠ {note}")
    print(f"Saved selection to {out}")
    return out


def cmd_reconstruct(settings, manifest):
    method = settings.get("method", "deim")
    if method not in ("deim", "map"):
        raise UsageError(f"unknown estimator {method!r}, expected 'deim' or 'map'")
    for name in ("model", "selection", "data"):
        if not settings.get(name):
            raise UsageError(f"reconstruct needs --{name}")
    basis, prior = load_model(settings.get("model"))
    _, seed, sel = load_selection(settings.get("selection"))
    x = load_snapshots(settings.get("data"))
    truth = load_snapshots(settings.get("truth")) if settings.get("truth") else x
    manifest.inputs.extend(p for p in (settings.get("model"), settings.get("selection"),
                                       settings.get("data"), settings.get("truth")) if p)
    manifest.seeds = [seed] if seed is not None else []
    if sel.n_locations != basis.n_locations or x.n_dims != basis.n_locations:
        raise InputError(f"selection ({sel.n_locations}), data ({x.n_dims}) and basis "
                         f"({basis.n_locations}) disagree on the number of locations")

    noise = _noise(settings)
    posterior = build_posterior(basis, sel, prior, noise) if method == "map" else None
    states = reconstruct_states(method, basis, sel, sel.measure(x.data), posterior=posterior)
    errors = relative_errors(states, truth.data)

    out = settings.get("out", os.path.join(default_output_dir(), f"reconstruction-{method}.csv"))
    save_snapshots(states, _ensure_parent(out), fmt="csv", kind=f"estimate-{method}")
    # bounds are stated for the state and noise relative to the training mean
    offset = basis.offset()
    rows = []
    for i, err in enumerate(errors):
        u_c = truth.data[:, i] - offset
        ratio = noise_norm_ratio(u_c, sel.measure(x.data[:, i] - truth.data[:, i]))
        if method == "map":
            bound = map_error_bound(posterior, basis, sel, ratio)
        else:
            bound = deim_error_bound(basis, sel, ratio) if sel.k else None
        centered = float(np.linalg.norm(states[:, i] - truth.data[:, i]) / np.linalg.norm(u_c))
        rows.append({"sample": i, "rel_error": float(err), "centered_rel_error": centered, "bound": bound})
    errors_path = settings.get("errors", out.replace(".csv", "") + "-errors.csv")
    write_rows_csv(rows, errors_path, columns=("sample", "rel_error", "centered_rel_error", "bound"))
    manifest.outputs.extend([out, errors_path])
    print(f"{method.upper()} reconstruction of {x.n_samples} samples: "
          f"mean relative error {errors.mean():.2%} ± {errors.std():.2%}")
    print(f"Saved estimates to {out} and errors to {errors_path}")
    return out


def cmd_risk(settings, manifest):
    noise = _noise(settings)
    explicit = settings.get("explicit_a")
    if explicit:
        a = load_snapshots(explicit).data
        prior_path = settings.get("prior_matrix")
        gamma = load_snapshots(prior_path).data if prior_path else np.eye(a.shape[1])
        manifest.inputs.extend(p for p in (explicit, prior_path) if p)
    else:
        if not settings.get("model") or not settings.get("selection"):
            raise UsageError("risk needs --model and --selection, or --explicit-a")
        basis, prior = load_model(settings.get("model"))
        _, _, sel = load_selection(settings.get("selection"))
        a = sel.operator(basis.phi)
        gamma = prior.gamma
        manifest.inputs.extend([settings.get("model"), settings.get("selection")])

    report = risk_report(a, gamma, noise, check=settings.get("self_check", False, as_bool))
    row = report.as_row()
    problems = report.violations()
    for p in problems:
        print(f"    ⚠ {p}")

    draws = settings.get("mc_draws", 0, int)
    if draws:
        seed = settings.get("seed", 0, int)
        manifest.seeds = [seed]
        row["mc_risk_ls"], row["mc_risk_ls_se"] = monte_carlo_risk("deim", a, gamma, noise, draws, seed)
        row["mc_risk_map"], row["mc_risk_map_se"] = monte_carlo_risk("map", a, gamma, noise, draws, seed)

    out = settings.get("out", os.path.join(default_output_dir(), "risk.csv"))
    write_rows_csv([row], _ensure_parent(out), columns=list(row))
    manifest.outputs.append(out)
    for col in RISK_COLUMNS:
        print(f"  {col:>12}: {row[col]}")
    print(f"Saved risk report to {out}")
    return out


def cmd_experiment(settings, manifest):
    path = settings.get("config")
    if not path:
        raise UsageError("experiment needs --config")
    manifest.inputs.append(path)
    seeds = settings.get("seeds")
    config = ExperimentConfig.from_file(path, seeds=tuple(parse_int_list(seeds)) if seeds else None)
    manifest.seeds = list(config.seeds)
    out_dir = settings.get("out_dir", default_output_dir())
    outputs = run_experiment(config, out_dir=out_dir, jobs=settings.get("jobs", None, int))
    manifest.outputs.extend(outputs)
    return os.path.join(out_dir, config.name)


def cmd_dice(settings, manifest):
    a_path, b_path = settings.get("a"), settings.get("b")
    if not a_path or not b_path:
        raise UsageError("dice needs --a and --b selection files")
    manifest.inputs.extend([a_path, b_path])
    method_a, _, sel_a = load_selection(a_path)
    method_b, _, sel_b = load_selection(b_path)
    value = dice(sel_a, sel_b)
    print(f"Dice({method_a}, {method_b}) = {value:.6f}")
    out = settings.get("out")
    if out:
        write_rows_csv([{"a": method_a, "b": method_b, "dice": value}], _ensure_parent(out))
        manifest.outputs.append(out)
    return out or os.path.join(default_output_dir(), "dice")


def build_parser():
    parser = _Parser(prog="sensing_cli.py", description="Sparse sensing: placement, estimation, Bayes risk")
    parser.add_argument("--version", action="version", version=f"sensing {VERSION}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def command(name, handler, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="config file; the section named after the command is read")
        p.set_defaults(handler=handler)
        return p

    p = command("generate", cmd_generate, "random-harmonic snapshot file")
    p.add_argument("--grid", type=int)
    p.add_argument("--terms", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--amplitude-param", dest="amplitude_param", choices=("variance", "std"))
    p.add_argument("--sigma", type=float, help="add iid noise to every entry")
    p.add_argument("--format", choices=("binary", "csv"))
    p.add_argument("--out")

    p = command("pod", cmd_pod, "POD basis and prior from snapshots")
    p.add_argument("--data")
    p.add_argument("--modes", type=int)
    p.add_argument("--energy", type=float, help="pick the mode count capturing this energy fraction")
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--prior", choices=("pod", "singular_values", "identity"))
    p.add_argument("--prior-scale", dest="prior_scale", type=float)
    p.add_argument("--out-dir", dest="out_dir")

    p = command("place", cmd_place, "sensor placement")
    p.add_argument("--model")
    p.add_argument("--method")
    p.add_argument("--k", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--naive", action="store_true", default=None, help="greedy without rank-1 updates")
    p.add_argument("--out")

    p = command("reconstruct", cmd_reconstruct, "DEIM / MAP reconstruction")
    p.add_argument("--model")
    p.add_argument("--selection")
    p.add_argument("--data")
    p.add_argument("--truth", help="noiseless states for the error table (default: --data)")
    p.add_argument("--method", choices=("deim", "map"))
    p.add_argument("--sigma", type=float)
    p.add_argument("--out")
    p.add_argument("--errors")

    p = command("risk", cmd_risk, "Bayes risk report")
    p.add_argument("--model")
    p.add_argument("--selection")
    p.add_argument("--explicit-a", dest="explicit_a", help="k x n matrix file used as A")
    p.add_argument("--prior-matrix", dest="prior_matrix", help="n x n prior covariance file (default I)")
    p.add_argument("--sigma", type=float)
    p.add_argument("--mc-draws", dest="mc_draws", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--self-check", dest="self_check", action="store_true", default=None)
    p.add_argument("--out")

    p = command("experiment", cmd_experiment, "run a sweep config")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--jobs", type=int)
    p.add_argument("--seeds", help="override the config seeds, e.g. 0..4")

    p = command("dice", cmd_dice, "Dice coefficient of two selections")
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--out")
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    command = argv[0] if argv else "?"
    manifest = None
    try:
        args = build_parser().parse_args(argv)
        if not getattr(args, "handler", None):
            raise UsageError("missing subcommand")
        command = args.command
        settings = Settings(args)
        manifest = RunManifest(command, settings)
        anchor = args.handler(settings, manifest)
        manifest.write(anchor)
    except BudgetExceeded as e:
        print(f"ERROR[budget]: {e}", file=sys.stderr)
        append_report(command, argv, "budget", manifest.outputs if manifest else [])
        return EXIT_BUDGET
    except InputError as e:
        print(f"ERROR[usage]: {e}", file=sys.stderr)
        append_report(command, argv, "usage", manifest.outputs if manifest else [])
        return EXIT_USAGE
    except (NumericalError, SensingError) as e:
        print(f"ERROR[numerical]: {e}", file=sys.stderr)
        append_report(command, argv, "numerical", manifest.outputs if manifest else [])
        return EXIT_NUMERICAL
    append_report(command, argv, "ok", manifest.outputs)
    return 0


if __name__ == "__main__":
    sys.exit(main())
