"""CSV emission and log-log convergence figures."""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

from .driver import IterationRecord, RunHistory, cumulative_cost

CSV_HEADER = IterationRecord.field_names()
_INT_FIELDS = {"level", "n_elements", "n_dofs", "n_marked"}
_STR_FIELDS = {"strategy"}

# byte-identical SVG output for identical input
_SVG_RC = {"svg.hashsalt": "goafem", "svg.fonttype": "path", "path.simplify": False}
_SVG_META = {"Date": None, "Creator": None}


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))  # shortest round-trip form
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def records_to_csv(records, complete: bool | None = None, reason: str = "") -> str:
    if complete is None:
        complete = getattr(records, "complete", True)
        reason = reason or getattr(records, "reason", "")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow([_fmt(getattr(r, name)) for name in CSV_HEADER])
    if not complete:
        buf.write(f"# incomplete: {reason or 'run aborted'}\n")
    return buf.getvalue()


def write_csv(records, path, **kwargs) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(records_to_csv(records, **kwargs))
    return path


def _parse(name: str, text: str):
    if name in _INT_FIELDS:
        return int(text)
    if name in _STR_FIELDS:
        return text
    if text == "":
        if name == "goal_error":
            return None
        raise ValueError(f"missing value for {name}")
    return float(text)


def read_csv(path) -> RunHistory:
    """Parse a file written by :func:`write_csv` back into records."""
    lines = Path(path).read_text().splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    comments = [ln for ln in lines if ln.startswith("# incomplete")]
    rows = list(csv.reader(body))
    if not rows or rows[0] != CSV_HEADER:
        raise ValueError(f"{path}: unexpected CSV header")
    records = [IterationRecord(**{k: _parse(k, v) for k, v in zip(CSV_HEADER, row)})
               for row in rows[1:] if row]
    reason = comments[0].split(":", 1)[1].strip() if comments else ""
    return RunHistory(records, complete=not comments, reason=reason)


def _svg_bytes(fig: Figure) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata=_SVG_META)
    return buf.getvalue()


def _with_rc(func):
    import matplotlib

    def wrapper(*args, **kwargs):
        with matplotlib.rc_context(_SVG_RC):
            return func(*args, **kwargs)
    wrapper.__doc__ = func.__doc__
    wrapper.__name__ = func.__name__
    return wrapper


QUANTITY_LABELS = {
    "product": r"$\eta\,(\eta^2+\zeta^2)^{1/2}$",
    "goal_error": r"$|G(u)-G(u_\ell)|$",
    "combined": r"$\eta^2+\zeta^2$",
    "eta": r"$\eta$",
    "zeta": r"$\zeta$",
}


@_with_rc
def plot_convergence(record_sets, labels=None, quantity: str = "product",
                     slopes=(-1.0, -2.0), title: str | None = None,
                     colors=None) -> bytes:
    """Log-log plot of ``quantity`` against the element count.

    One polyline per record set; dashed reference lines of the given
    slopes are anchored at the first point of the first series.
    """
    record_sets = list(record_sets)
    if not record_sets or not any(len(rs) for rs in record_sets):
        raise ValueError("nothing to plot")
    labels = list(labels) if labels is not None else [f"run {k}" for k in range(len(record_sets))]
    if len(labels) != len(record_sets):
        raise ValueError("one label per record set required")

    fig = Figure(figsize=(6.0, 4.5))
    ax = fig.add_subplot()
    all_n = []
    anchor = None
    for k, (records, label) in enumerate(zip(record_sets, labels)):
        pts = [(r.n_elements, getattr(r, quantity)) for r in records]
        pts = [(n, q) for n, q in pts if q is not None and q > 0]
        if not pts:
            continue
        n, q = np.array(pts, dtype=float).T
        all_n.extend(n)
        if anchor is None:
            anchor = (n[0], q[0])
        style = {} if colors is None else {"color": colors[k]}
        ax.loglog(n, q, marker="o", markersize=3, linewidth=1.2, label=label, **style)
    if anchor is None:
        raise ValueError("no positive values to plot")
    lo, hi = min(all_n), max(all_n)
    grid = np.array([lo, hi]) if hi > lo else np.array([lo, 10 * lo])
    for s in slopes:
        ax.loglog(grid, anchor[1] * (grid / anchor[0]) ** s, "k--", linewidth=0.8,
                  label=f"slope {s:g}")
    ax.set_xlabel("number of elements")
    ax.set_ylabel(QUANTITY_LABELS.get(quantity, quantity))
    if title:
        ax.set_title(title)
    ax.grid(True, which="major", linewidth=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _svg_bytes(fig)


def default_taus(histories, which: str = "product", count: int = 25) -> np.ndarray:
    """Geometric threshold grid from the largest final error reached by
    every run up to the largest initial error."""
    finals = [getattr(h[-1], which) for h in histories]
    firsts = [getattr(h[0], which) for h in histories]
    lo, hi = max(finals), max(firsts)
    if not lo > 0 or hi <= lo:
        return np.array([lo])
    return np.geomspace(lo, hi, count)


def cumulative_table(histories: dict, taus, which: str = "product") -> list[tuple]:
    """Rows ``(theta, tau, cost)`` for every run and threshold."""
    rows = []
    for theta, records in histories.items():
        for tau in taus:
            rows.append((theta, float(tau), cumulative_cost(records, tau, which)))
    return rows


def write_cumulative_csv(rows, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["theta", "tau", "cost"])
        for theta, tau, cost in rows:
            writer.writerow([repr(float(theta)), repr(float(tau)), cost])
    return path


@_with_rc
def plot_cumulative(rows, title: str | None = None) -> bytes:
    """Cumulative cost against threshold, one line per theta."""
    if not rows:
        raise ValueError("nothing to plot")
    thetas = sorted({r[0] for r in rows})
    cmap = _theta_colors(thetas)
    fig = Figure(figsize=(6.0, 4.5))
    ax = fig.add_subplot()
    for theta in thetas:
        sel = sorted((tau, cost) for t, tau, cost in rows if t == theta and cost > 0)
        if not sel:
            continue
        tau, cost = np.array(sel, dtype=float).T
        ax.loglog(tau, cost, color=cmap[theta], linewidth=1.2, label=f"θ = {theta:g}")
    ax.invert_xaxis()
    ax.set_xlabel(r"threshold $\tau$")
    ax.set_ylabel("cumulative number of elements")
    if title:
        ax.set_title(title)
    ax.grid(True, which="major", linewidth=0.3)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    return _svg_bytes(fig)


def _theta_colors(thetas):
    from matplotlib import colormaps

    cmap = colormaps["Blues"]
    k = len(thetas)
    return {t: cmap(0.3 + 0.7 * (i / max(k - 1, 1))) for i, t in enumerate(thetas)}


def plot_sweep(histories: dict, quantity: str = "product", title: str | None = None) -> bytes:
    """Convergence curves of a theta sweep, light (small theta) to dark."""
    thetas = sorted(histories)
    colors = _theta_colors(thetas)
    return plot_convergence([histories[t] for t in thetas],
                            [f"θ = {t:g}" for t in thetas], quantity=quantity,
                            title=title, colors=[colors[t] for t in thetas])
