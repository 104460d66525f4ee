"""Cross-seed aggregation: learning curves, interquartile mean and optimality gap."""
from __future__ import annotations

import math
from collections import defaultdict
from fractions import Fraction

import numpy as np

from .errors import IncompatibleLogsError
from .runlog import RunLog


def normalize(scores, bounds) -> np.ndarray:
    lo, hi = bounds
    if not hi > lo:
        raise ValueError("normalization bounds must satisfy worst < best")
    return (np.asarray(scores, dtype=np.float64) - lo) / (hi - lo)


def _exact_mean(values) -> float:
    # rational accumulation: the result is the correctly rounded mean
    return float(sum(values, Fraction(0)) / len(values))


def iqm(scores) -> float:
    """Mean of the middle 50%: drop floor(n/4) scores from each end of the sorted sample."""
    x = sorted(float(v) for v in np.ravel(scores))
    if not x:
        raise ValueError("IQM of an empty sample")
    cut = len(x) // 4
    return _exact_mean([Fraction(v) for v in x[cut:len(x) - cut]])


def optimality_gap(normalized_scores) -> float:
    """Mean shortfall from the normalised optimum of 1, ignoring overshoot."""
    x = [float(v) for v in np.ravel(normalized_scores)]
    if not x:
        raise ValueError("optimality gap of an empty sample")
    return _exact_mean([1 - Fraction(v) if v < 1 else Fraction(0) for v in x])


def mean_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def test_curve(log: RunLog) -> list[dict]:
    """One row per test evaluation: (episode, step, mean return, per-env returns)."""
    return [{"episode": e["episode"], "step": e["step"], "mean": e["mean"], "returns": e["returns"]}
            for e in log.of_type("test-eval")]


def final_score(log: RunLog) -> float:
    """Mean test return over the last episode's evaluations after training began (step > 0)."""
    rows = test_curve(log)
    if not rows:
        raise ValueError("run log has no test evaluations")
    last = max(r["episode"] for r in rows)
    pts = [r["mean"] for r in rows if r["episode"] == last and r["step"] > 0]
    if not pts:
        pts = [r["mean"] for r in rows if r["episode"] == last]
    return float(np.mean(pts))


def method_of(log: RunLog) -> str:
    return log.header.get("config", {}).get("teacher", "unknown")


def _test_key(log: RunLog):
    ts = log.header.get("test_set")
    if ts is None:
        raise IncompatibleLogsError("run log has no recorded test set")
    return ts.get("family"), tuple(map(tuple, ts.get("rows", []))), tuple(ts.get("env_seeds", []))


def aggregate(logs, bounds) -> dict:
    """Group logs by teacher kind and summarise each group.

    All logs must share one test set; otherwise the returns are not comparable.
    """
    logs = list(logs)
    if not logs:
        raise ValueError("aggregate needs at least one run log")
    keys = {_test_key(lg) for lg in logs}
    if len(keys) != 1:
        raise IncompatibleLogsError(f"logs were evaluated on {len(keys)} different test sets")
    groups = defaultdict(list)
    for lg in logs:
        groups[method_of(lg)].append(lg)
    report = {"bounds": list(bounds), "methods": {}}
    for method, runs in sorted(groups.items()):
        scores = [final_score(lg) for lg in runs]
        norm = normalize(scores, bounds)
        curves = [test_curve(lg) for lg in runs]
        points = [(r["episode"], r["step"]) for r in curves[0]]
        if any([(r["episode"], r["step"]) for r in c] != points for c in curves):
            raise IncompatibleLogsError(f"{method}: runs evaluated at different budget steps")
        curve, per_env = [], []
        for i, (ep, st) in enumerate(points):
            m, se = mean_stderr([c[i]["mean"] for c in curves])
            curve.append({"episode": ep, "step": st, "mean": m, "stderr": se})
            env_rows = np.array([c[i]["returns"] for c in curves])
            per_env.append({"episode": ep, "step": st,
                            "mean": env_rows.mean(axis=0).tolist(),
                            "stderr": (env_rows.std(axis=0, ddof=1) / math.sqrt(len(runs))).tolist()
                            if len(runs) > 1 else [0.0] * env_rows.shape[1]})
        m, se = mean_stderr(scores)
        report["methods"][method] = {
            "seeds": [lg.header.get("config", {}).get("seed") for lg in runs],
            "final_scores": scores, "final_mean": m, "final_stderr": se,
            "iqm": iqm(norm), "optimality_gap": optimality_gap(norm),
            "curve": curve, "per_env_curves": per_env}
    return report
