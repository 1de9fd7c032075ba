"""Command-line front end: ``run``, ``sweep`` and ``plot``.

Configuration files are flat ``key = value`` text; ``#`` starts a comment.
Command-line options override file values.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .benchmarks import PROBLEMS, get_problem
from .driver import STRATEGY_CHOICES, cumulative_cost, run_goafem
from .fem import ConfigurationError
from .report import (cumulative_table, default_taus, plot_convergence, plot_cumulative,
                     plot_sweep, read_csv, write_csv, write_cumulative_csv)

log = logging.getLogger("goafem")


@dataclass(frozen=True)
class RunConfig:
    problem: str = "weighted_l2"
    p: int = 1
    strategy: str = "A"
    theta: float = 0.5
    n0: int = 8
    extra_uniform: int = 0
    max_dofs: int = 100_000
    max_levels: int = 100
    out: str = "out"
    plot: bool = True

    def validate(self) -> "RunConfig":
        if self.problem not in PROBLEMS:
            raise ConfigurationError(f"unknown problem {self.problem!r}; "
                                     f"choose from {sorted(PROBLEMS)}")
        if self.p not in (1, 2):
            raise ConfigurationError(f"p must be 1 or 2, got {self.p}")
        if self.strategy not in STRATEGY_CHOICES:
            raise ConfigurationError(f"strategy must be one of {STRATEGY_CHOICES}, "
                                     f"got {self.strategy!r}")
        if not 0.0 < self.theta <= 1.0:
            raise ConfigurationError(f"theta must lie in (0, 1], got {self.theta}")
        if self.extra_uniform < 0 or self.max_levels < 0 or self.max_dofs < 1:
            raise ConfigurationError("extra_uniform, max_levels must be >= 0 and max_dofs >= 1")
        return self


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_ALIASES = {"max-dofs": "max_dofs", "max-levels": "max_levels", "n": "n0",
            "extra-uniform": "extra_uniform", "output": "out"}


def _coerce(key: str, text: str):
    kind = _TYPES[key]
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            low = text.lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(text)
            return low in ("1", "true", "yes", "on")
    except ValueError:
        raise ConfigurationError(f"bad value for {key}: {text!r}") from None
    return text


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse ``key = value`` lines on top of ``base`` (defaults if None)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in _TYPES:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return replace(base or RunConfig(), **values)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    cfg = parse_config(text)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    return replace(cfg, **overrides).validate()


def parse_thetas(text: str) -> list[float]:
    """``0.1..1.0:0.1`` (inclusive range) or a comma list."""
    text = text.strip()
    try:
        if ".." in text:
            rng, _, step = text.partition(":")
            lo, hi = (float(s) for s in rng.split(".."))
            step = float(step) if step else 0.1
            if step <= 0:
                raise ValueError
            count = int(np.floor((hi - lo) / step + 1e-9)) + 1
            thetas = [round(lo + k * step, 12) for k in range(count)]
        else:
            thetas = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigurationError(f"cannot parse thetas {text!r}") from None
    if not thetas or any(not 0.0 < t <= 1.0 for t in thetas):
        raise ConfigurationError(f"thetas must be a nonempty subset of (0, 1], got {text!r}")
    return thetas


def execute(cfg: RunConfig):
    problem = get_problem(cfg.problem, cfg.n0)
    return run_goafem(problem, cfg.strategy, cfg.theta, p=cfg.p, max_dofs=cfg.max_dofs,
                      max_levels=cfg.max_levels, extra_uniform=cfg.extra_uniform)


def _label(cfg: RunConfig) -> str:
    return f"{cfg.problem}, p={cfg.p}, {cfg.strategy}, θ={cfg.theta:g}"


def cli_run(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    history = execute(cfg)
    write_csv(history, out / "run.csv")
    if cfg.plot:
        svg = plot_convergence([history], [cfg.strategy], quantity="product",
                               slopes=(-cfg.p / 2, -cfg.p), title=_label(cfg))
        (out / "convergence.svg").write_bytes(svg)
    print(f"{len(history)} levels, final product {history[-1].product:.4e}; wrote {out}")
    if not history.complete:
        print(f"run incomplete: {history.reason}", file=sys.stderr)
        return 3
    return 0


def cli_sweep(cfg: RunConfig, thetas, taus=None, which: str = "product") -> int:
    out = Path(cfg.out)
    histories = {}
    status = 0
    for theta in thetas:
        sub = replace(cfg, theta=theta, out=str(out / f"theta_{theta:g}")).validate()
        history = execute(sub)
        write_csv(history, Path(sub.out) / "run.csv")
        histories[theta] = history
        if not history.complete:
            status = 3
    taus = default_taus(histories.values(), which) if taus is None else np.asarray(taus)
    rows = cumulative_table(histories, taus, which)
    write_cumulative_csv(rows, out / "cumulative.csv")

    # one row per theta: final state and the cost to reach the smallest common threshold
    with (out / "sweep.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["theta", "levels", "n_elements", "n_dofs", which, "cost"])
        tau_min = float(np.min(taus))
        for theta, h in histories.items():
            writer.writerow([repr(float(theta)), len(h), h[-1].n_elements, h[-1].n_dofs,
                             repr(getattr(h[-1], which)), cumulative_cost(h, tau_min, which)])
    if cfg.plot:
        title = f"{cfg.problem}, p={cfg.p}, {cfg.strategy}"
        (out / "sweep.svg").write_bytes(plot_sweep(histories, which, title=title))
        (out / "cumulative.svg").write_bytes(plot_cumulative(rows, title=title))
    print(f"swept {len(thetas)} values of theta; wrote {out}")
    return status


def cli_plot(inputs, quantity: str, out, labels=None) -> int:
    histories = [read_csv(p) for p in inputs]
    labels = labels or [Path(p).parent.name or Path(p).stem for p in inputs]
    svg = plot_convergence(histories, labels, quantity=quantity)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(svg)
    print(f"wrote {out}")
    return 0


def _split(text):
    return [s.strip() for s in text.split(",") if s.strip()] if text else None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="goafem",
                                     description="Goal-oriented adaptive FEM benchmarks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every level")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_options(p):
        p.add_argument("--config", required=True, help="key = value configuration file")
        p.add_argument("--problem", choices=sorted(PROBLEMS))
        p.add_argument("--p", type=int, choices=(1, 2))
        p.add_argument("--strategy", choices=STRATEGY_CHOICES)
        p.add_argument("--n0", type=int, help="initial grid size")
        p.add_argument("--extra-uniform", type=int, dest="extra_uniform")
        p.add_argument("--max-dofs", type=int, dest="max_dofs")
        p.add_argument("--max-levels", type=int, dest="max_levels")
        p.add_argument("--out", help="output directory")
        p.add_argument("--no-plot", dest="plot", action="store_const", const=False)

    run = sub.add_parser("run", help="one adaptive run")
    run_options(run)
    run.add_argument("--theta", type=float)

    sweep = sub.add_parser("sweep", help="theta sweep with cumulative costs")
    run_options(sweep)
    sweep.add_argument("--thetas", default="0.1..1.0:0.1")
    sweep.add_argument("--taus", help="comma separated thresholds (default: geometric grid)")
    sweep.add_argument("--which", choices=("product", "goal_error"), default="product")

    plot = sub.add_parser("plot", help="convergence plot from CSV files")
    plot.add_argument("--inputs", required=True, help="comma separated run.csv paths")
    plot.add_argument("--labels", help="comma separated legend labels")
    plot.add_argument("--quantity", default="product",
                      choices=("product", "goal_error", "combined", "eta", "zeta"))
    plot.add_argument("--out", required=True)
    return parser


_OVERRIDES = ("problem", "p", "strategy", "theta", "n0", "extra_uniform",
              "max_dofs", "max_levels", "out", "plot")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "plot":
            return cli_plot(_split(args.inputs), args.quantity, args.out, _split(args.labels))
        overrides = {k: getattr(args, k, None) for k in _OVERRIDES}
        cfg = load_config(args.config, overrides)
        if args.command == "run":
            return cli_run(cfg)
        taus = [float(t) for t in _split(args.taus)] if args.taus else None
        return cli_sweep(cfg, parse_thetas(args.thetas), taus, args.which)
    except (ConfigurationError, ValueError, OSError) as exc:
        print(f"goafem: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
