#!/usr/bin/env python3
"""
Theory Audit

Fuzzes the risk-premium identities and bounds on random small problems
and checks the greedy D-optimal fast path against naive recomputation.
Saves timestamped results to qa/audits/ and appends a summary line to
qa/audit_history.json. Exit code 1 if any check fails.

Usage:
    python qa/audit_theory.py                 # 1000 risk draws, 50 placement draws
    python qa/audit_theory.py --trials 200    # fewer risk draws
    python qa/audit_theory.py --seed 7
"""

import json
import os
import sys
from datetime import datetime

import numpy as np

_SCRIPT_DIR = os.path.dirname(os.path.abspath(__file__))
_PROJECT_ROOT = os.path.dirname(_SCRIPT_DIR)
sys.path.insert(0, _PROJECT_ROOT)

from sensing.datasets import NoiseModel  # noqa: E402
from sensing.placer_greedy_d import place_greedy_d  # noqa: E402
from sensing.pod import ModalBasis, PriorCovariance  # noqa: E402
from sensing.placement import info_gain  # noqa: E402
from sensing.risk import risk_report  # noqa: E402
from sensing.utils import VERSION, NumericalError, SensingError, substreams  # noqa: E402

AUDIT_DIR = os.path.join(_PROJECT_ROOT, "qa", "audits")
HISTORY_FILE = os.path.join(_PROJECT_ROOT, "qa", "audit_history.json")
MAX_DIM = 8


def random_spd(rng, n):
    b = rng.standard_normal((n, n))
    return b @ b.T / n + 0.1 * np.eye(n)


def random_operator(rng, k, n):
    """Gaussian k x n matrix, sometimes with a repeated row to force rank deficiency."""
    a = rng.standard_normal((k, n))
    if k > 1 and rng.random() < 0.2:
        a[-1] = a[0]
    return a


def audit_risk(trial, rng):
    n, k = int(rng.integers(1, MAX_DIM + 1)), int(rng.integers(1, MAX_DIM + 1))
    a = random_operator(rng, k, n)
    gamma = random_spd(rng, n)
    sigma = float(10 ** rng.uniform(-2, 1))
    entry = {"trial": trial, "n": n, "k": k, "sigma": sigma}
    try:
        report = risk_report(a, gamma, NoiseModel(sigma=sigma), check=False)
    except SensingError as e:
        entry.update(status="error", problems=[str(e)])
        return entry

    problems = report.violations()
    bound = report.zeta_prior + report.zeta_noise
    if report.premium > bound + 1e-9 * report.scale:
        problems.append(f"premium {report.premium:.6e} exceeds zeta_prior + zeta_noise {bound:.6e}")
    entry.update(report.as_row())
    entry.update(status="fail" if problems else "ok", problems=problems)
    return entry


def audit_greedy(trial, rng):
    n_loc = int(rng.integers(3, 13))
    n = int(rng.integers(1, min(n_loc, 6) + 1))
    k = int(rng.integers(1, n_loc + 1))
    q, _ = np.linalg.qr(rng.standard_normal((n_loc, n)))
    basis = ModalBasis(phi=q, singular_values=np.ones(n), n_samples_used=2)
    prior = PriorCovariance(gamma=random_spd(rng, n))
    noise = NoiseModel(sigma=float(10 ** rng.uniform(-2, 0)))
    entry = {"trial": trial, "n_locations": n_loc, "n": n, "k": k, "sigma": noise.sigma}
    problems = []
    try:
        fast = place_greedy_d(basis, prior, noise, k, use_rank1=True)
        naive = place_greedy_d(basis, prior, noise, k, use_rank1=False)
        if fast.indices != naive.indices:
            problems.append(f"rank-1 picked {list(fast.indices)}, naive picked {list(naive.indices)}")
        trace_fast, trace_naive = np.array(fast.objective_trace), np.array(naive.objective_trace)
        if not np.allclose(trace_fast, trace_naive, rtol=1e-8, atol=1e-10):
            problems.append("rank-1 and naive Theta_D traces differ")
        if np.any(np.diff(trace_fast) > 1e-9 * max(1.0, np.abs(trace_fast).max())):
            problems.append("Theta_D trace increases")
        info_gain(basis, fast.selection, prior, noise)
    except NumericalError as e:
        problems.append(str(e))
    entry.update(status="fail" if problems else "ok", problems=problems)
    return entry


def summarize(entries):
    return {
        "total": len(entries),
        "ok": sum(1 for e in entries if e["status"] == "ok"),
        "fail": sum(1 for e in entries if e["status"] == "fail"),
        "error": sum(1 for e in entries if e["status"] == "error"),
    }


def append_history(timestamp, stats):
    history = []
    try:
        with open(HISTORY_FILE) as f:
            history = json.load(f)
    except (FileNotFoundError, json.JSONDecodeError):
        pass
    history.append({"timestamp": timestamp, "version": VERSION, **stats})
    with open(HISTORY_FILE, "w") as f:
        json.dump(history, f, indent=2)


def main(argv=None):
    import argparse
    parser = argparse.ArgumentParser(description="Audit the risk identities and greedy placement")
    parser.add_argument("--trials", type=int, default=1000, help="risk draws (default: 1000)")
    parser.add_argument("--placements", type=int, default=50, help="greedy draws (default: 50)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    timestamp = datetime.now().strftime("%Y-%m-%d_%H%M")
    print(f"Theory Audit — {timestamp}")
    print("=" * 60)

    risk_entries = [audit_risk(i, rng) for i, rng in enumerate(substreams(args.seed, args.trials))]
    greedy_entries = [audit_greedy(i, rng)
                      for i, rng in enumerate(substreams(args.seed + 1, args.placements))]

    risk_stats, greedy_stats = summarize(risk_entries), summarize(greedy_entries)
    print(f"\nRisk identities: {risk_stats['ok']}/{risk_stats['total']} ok, "
          f"{risk_stats['fail']} failed, {risk_stats['error']} errors")
    print(f"Greedy placement: {greedy_stats['ok']}/{greedy_stats['total']} ok, {greedy_stats['fail']} failed")
    for entry in risk_entries + greedy_entries:
        if entry["status"] != "ok":
            print(f"  ⚠ trial {entry['trial']}: {'; '.join(entry['problems'])}")

    os.makedirs(AUDIT_DIR, exist_ok=True)
    audit_file = os.path.join(AUDIT_DIR, f"{timestamp}.json")
    with open(audit_file, "w") as f:
        json.dump({
            "timestamp": datetime.now().isoformat(),
            "seed": args.seed,
            "risk": {"stats": risk_stats, "entries": risk_entries},
            "greedy": {"stats": greedy_stats, "entries": greedy_entries},
        }, f, indent=2)
    overall = {
        "risk_fail": risk_stats["fail"] + risk_stats["error"],
        "greedy_fail": greedy_stats["fail"],
    }
    append_history(timestamp, overall)
    print(f"\nAudit saved to {audit_file}")

    if overall["risk_fail"] or overall["greedy_fail"]:
        return 1
    print("All checks passed.")
    return 0


if __name__ == "__main__":
    sys.exit(main())
