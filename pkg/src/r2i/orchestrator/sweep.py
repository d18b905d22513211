"""Grid sweeps: one independent run per (parameter, seed), CSV results and an SVG plot."""

from __future__ import annotations

import csv
import json
import logging
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .config import RunConfig, load_config
from .trainer import Trainer, evaluate_agent

log = logging.getLogger(__name__)

CSV_COLUMNS = ("env_param", "seed", "final_return", "success")


@dataclass
class SweepGrid:
    family: str
    params: list
    seeds: list[int]
    out_dir: str = "runs/sweep"
    eval_episodes: int = 100
    base: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.params or not self.seeds:
            raise ValueError("sweep grid needs at least one parameter value and one seed")

    def cells(self) -> list[tuple[object, int]]:
        return [(p, s) for p in self.params for s in self.seeds]

    def run_config(self, param, seed: int) -> RunConfig:
        cfg = load_config(None, **self.base)
        return cfg.replace(env=f"{self.family}:{param}", seed=seed, out_dir=str(Path(self.out_dir) / f"{param}_s{seed}"))


def load_grid(path) -> SweepGrid:
    data = yaml.safe_load(Path(path).read_text()) or {}
    return SweepGrid(**data)


def _fmt(x: float) -> str:
    return repr(float(x))


def run_sweep(grid: SweepGrid, runner=None) -> Path:
    """Run every cell; a failing cell is logged to failures.jsonl and the sweep moves on.

    ``runner(cfg, eval_episodes) -> (final_return, success)`` replaces the default
    train-then-evaluate pipeline (useful for dry runs).
    """
    runner = runner or _train_and_eval
    out = Path(grid.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"
    fail_path = out / "failures.jsonl"
    fail_path.write_text("")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for param, seed in grid.cells():
            try:
                final_return, success = runner(grid.run_config(param, seed), grid.eval_episodes)
            except Exception as exc:  # noqa: BLE001 - one bad cell must not sink the sweep
                log.error("sweep cell %s seed %s failed: %s", param, seed, exc)
                with open(fail_path, "a") as ff:
                    ff.write(json.dumps({"env_param": param, "seed": seed, "error": repr(exc),
                                         "traceback": traceback.format_exc()}) + "\n")
                continue
            writer.writerow([param, seed, _fmt(final_return), _fmt(success)])
            fh.flush()
    summary = aggregate(csv_path)
    write_summary(summary, out / "summary.csv")
    plot_csv(out / "summary.csv", out / "success.svg", title=grid.family)
    return csv_path


def _train_and_eval(cfg: RunConfig, episodes: int) -> tuple[float, float]:
    trainer = Trainer(cfg)
    trainer.run()
    res = evaluate_agent(trainer.agent, cfg.env, episodes, cfg.seed)
    return res.mean_return, res.success


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def aggregate(path) -> list[dict]:
    """Median over seeds per parameter value, in first-seen parameter order."""
    groups: dict[str, list[dict]] = {}
    for row in read_results(path):
        groups.setdefault(row["env_param"], []).append(row)
    return [
        {
            "env_param": p,
            "median_return": float(np.median([float(r["final_return"]) for r in rows])),
            "median_success": float(np.median([float(r["success"]) for r in rows])),
            "seeds": len(rows),
        }
        for p, rows in groups.items()
    ]


def write_summary(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("env_param", "median_return", "median_success", "seeds"))
        for r in rows:
            writer.writerow([r["env_param"], _fmt(r["median_return"]), _fmt(r["median_success"]), r["seeds"]])


def plot_csv(summary_csv, svg_path, title: str = "") -> None:
    """Success-vs-parameter line plot drawn only from the summary CSV."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = read_results(summary_csv)
    labels = [r["env_param"] for r in rows]
    try:
        xs = [float(x) for x in labels]
    except ValueError:
        xs = list(range(len(labels)))
    ys = [float(r["median_success"]) for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(xs, ys, marker="o")
    ax.set_xticks(xs, labels)
    ax.set_xlabel("env parameter")
    ax.set_ylabel("median success")
    ax.set_title(title)
    fig.tight_layout()
    # a fixed hash salt keeps the SVG element ids stable between runs
    matplotlib.rcParams["svg.hashsalt"] = "r2i"
    fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)
