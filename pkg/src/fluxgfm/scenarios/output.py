"""
Artifacts written by the CLI: trace CSVs, metrics JSON and gnuplot scripts.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from ..formatting import format_float, parse_float
from .metrics import ScenarioMetrics
from .simulation import CHANNELS, TimeSeries

CSV_HEADER = ("t",) + CHANNELS


def write_timeseries_csv(ts: TimeSeries, path: str | Path, float_format: str = "repr") -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in ts.as_matrix():
            writer.writerow([format_float(v, float_format) for v in row])
    return path


def read_timeseries_csv(path: str | Path) -> TimeSeries:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = [tuple(parse_float(v) for v in row) for row in reader]
    return TimeSeries.from_rows(rows)


def write_metrics_json(metrics: ScenarioMetrics, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(metrics.to_dict(), indent=2) + "\n")
    return path


def scenario_plot_script(csv_name: str, title: str, omega_base: float) -> str:
    """Three stacked panels: active power, PCC voltage, frequencies (Hz)."""
    col = {name: k + 1 for k, name in enumerate(CSV_HEADER)}
    hz = "/(2*pi)"
    return "\n".join([
        "set datafile separator ','",
        "set terminal pngcairo size 900,900",
        f"set output '{Path(csv_name).stem}.png'",
        "set multiplot layout 3,1 title '" + title + "'",
        "set grid",
        "set xlabel 't (s)'",
        "set ylabel 'p (pu)'",
        f"plot '{csv_name}' every ::1 using {col['t']}:{col['p']} with lines title 'p'",
        "set ylabel 'V (pu)'",
        f"plot '{csv_name}' every ::1 using {col['t']}:{col['V']} with lines title 'V', \\",
        f"     '' every ::1 using {col['t']}:{col['V_hat']} with lines title 'V_hat'",
        "set ylabel 'f (Hz)'",
        f"plot '{csv_name}' every ::1 using {col['t']}:(${col['omega_c']}{hz}) with lines title 'controller', \\",
        f"     '' every ::1 using {col['t']}:(${col['omega_g']}{hz}) with lines title 'grid'",
        "unset multiplot",
        f"# base frequency {omega_base:.6g} rad/s",
        "",
    ])


def sweep_plot_script(csv_name: str, omega0: float, n_poles: int = 7) -> str:
    """Root-locus scatter of a pole sweep, axes in units of omega0."""
    plots = []
    for k in range(n_poles):
        re_col, im_col = 2 + 2 * k, 3 + 2 * k
        prefix = f"plot '{csv_name}'" if k == 0 else "     ''"
        plots.append(
            f"{prefix} every ::1 using (${re_col}/{omega0!r}):(${im_col}/{omega0!r}):1 "
            f"with points pt 7 palette notitle"
        )
    body = ", \\\n".join(plots)
    return "\n".join([
        "set datafile separator ','",
        "set terminal pngcairo size 800,600",
        f"set output '{Path(csv_name).stem}.png'",
        "set grid",
        "set xlabel 'Re / omega0'",
        "set ylabel 'Im / omega0'",
        "set cblabel 'L (pu)'",
        body,
        "",
    ])


def write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.write_text(text)
    return path
