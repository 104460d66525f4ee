"""CSV series for learning-curve figures (no rendering)."""
from __future__ import annotations

import csv
import os


def _write(path, header, rows) -> str:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def export_plots(report: dict, out_dir, env_budget: int | None = None) -> list[str]:
    """One CSV per test curve: the mean-over-test-set curve of each method, and
    one curve per test environment with every method side by side.

    ``env_budget`` (environments per episode) adds a cumulative x column.
    """
    os.makedirs(out_dir, exist_ok=True)
    methods = sorted(report["methods"])
    written = []

    def x_cols(pt):
        cols = [pt["episode"], pt["step"]]
        if env_budget is not None:
            cols.append(pt["episode"] * env_budget + pt["step"])
        return cols

    base = ["episode", "step"] + (["environments_generated"] if env_budget is not None else [])
    for m in methods:
        rows = [x_cols(p) + [p["mean"], p["stderr"], p["mean"] - p["stderr"], p["mean"] + p["stderr"]]
                for p in report["methods"][m]["curve"]]
        written.append(_write(os.path.join(out_dir, f"curve_{m}.csv"),
                              base + ["mean_return", "stderr", "lower", "upper"], rows))
    first = report["methods"][methods[0]]["per_env_curves"]
    n_env = len(first[0]["mean"]) if first else 0
    for j in range(n_env):
        header = list(base)
        for m in methods:
            header += [f"{m}_mean", f"{m}_stderr"]
        rows = []
        for i, pt in enumerate(first):
            row = x_cols(pt)
            for m in methods:
                e = report["methods"][m]["per_env_curves"][i]
                row += [e["mean"][j], e["stderr"][j]]
            rows.append(row)
        written.append(_write(os.path.join(out_dir, f"test_env_{j:02d}.csv"), header, rows))
    summary = [[m, report["methods"][m]["final_mean"], report["methods"][m]["final_stderr"],
                report["methods"][m]["iqm"], report["methods"][m]["optimality_gap"]] for m in methods]
    written.append(_write(os.path.join(out_dir, "summary.csv"),
                          ["method", "final_mean", "final_stderr", "iqm", "optimality_gap"], summary))
    return written
