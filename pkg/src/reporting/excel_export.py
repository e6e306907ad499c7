import io
from typing import Optional, cast

import pandas as pd
from xlsxwriter.chart import Chart
from xlsxwriter.workbook import Workbook


def _summary_frame(bench_rows: pd.DataFrame, history: Optional[pd.DataFrame]) -> pd.DataFrame:
    metrics, values = [], []

    for method in ("exact", "gnn"):
        rows = bench_rows[bench_rows["method"] == method] if len(bench_rows) else bench_rows
        if len(rows):
            metrics.append(f"Largest team count solved ({method})")
            finished = rows[~rows["timed_out"].astype(bool)]
            values.append(int(finished["teams"].max()) if len(finished) else 0)
            metrics.append(f"Total runtime, all sizes ({method}, s)")
            values.append(float(rows["total_seconds"].sum()))

    if history is not None and len(history):
        best = history.loc[history["exact_acc"].idxmax()]
        metrics += ["Epochs trained", "Best epoch", "Best exact accuracy", "Move/stay accuracy", "Top-3 accuracy"]
        values += [
            int(history["epoch"].max()),
            int(best["epoch"]),
            float(best["exact_acc"]),
            float(best["ms_acc"]),
            float(best["top3"]),
        ]

    return pd.DataFrame({"Key Metric": metrics, "Value": values})


def export_run_report_to_excel(
    bench_rows: pd.DataFrame,
    history: Optional[pd.DataFrame] = None,
) -> io.BytesIO:
    """
    Run report workbook.

    Structure:
    - Summary (largest solved size, total runtimes, best validation metrics)
    - Runtime scaling table with a log-scale chart per method
    - Training history (when a history is given)
    """
    if len(bench_rows):
        bench_rows = bench_rows.sort_values(["method", "teams"], kind="stable").reset_index(drop=True)
    output = io.BytesIO()

    with pd.ExcelWriter(output, engine="xlsxwriter") as writer:
        workbook = cast(Workbook, writer.book)

        # ------------------------------------------------------------------
        # Excel formats
        # ------------------------------------------------------------------
        header_format = workbook.add_format(
            {
                "bold": True,
                "bg_color": "#0E3A5D",
                "font_color": "white",
                "border": 1,
            }
        )
        seconds_format = workbook.add_format({"num_format": "0.000"})
        ratio_format = workbook.add_format({"num_format": "0.00%"})

        # ==============================================================
        # SHEET 1: SUMMARY
        # ==============================================================
        _summary_frame(bench_rows, history).to_excel(writer, sheet_name="Summary", index=False, startrow=1)
        worksheet_sum = writer.sheets["Summary"]
        worksheet_sum.write(0, 0, "ALLOCATION RUN REPORT", header_format)
        worksheet_sum.set_column("A:A", 40)
        worksheet_sum.set_column("B:B", 18)

        # ==============================================================
        # SHEET 2: RUNTIME SCALING (DATA + CHART)
        # ==============================================================
        bench_rows.to_excel(writer, sheet_name="Runtime Scaling", index=False, startrow=1)
        worksheet_bench = writer.sheets["Runtime Scaling"]
        worksheet_bench.write(0, 0, "RUNTIME SCALING (seconds)", header_format)
        worksheet_bench.set_column("A:C", 10)
        worksheet_bench.set_column("D:E", 18, seconds_format)

        if len(bench_rows):
            chart = cast(Chart, workbook.add_chart({"type": "scatter", "subtype": "straight_with_markers"}))
            for k, method in enumerate(sorted(bench_rows["method"].unique())):
                # Data rows start at Excel row 3 (title + header)
                idx = [i + 2 for i, m in enumerate(bench_rows["method"]) if m == method]
                first, last = min(idx), max(idx)
                chart.add_series(
                    {
                        "name": method,
                        "categories": ["Runtime Scaling", first, 0, last, 0],
                        "values": ["Runtime Scaling", first, 3, last, 3],
                        "line": {"color": ["#0E3A5D", "#FF6B00"][k % 2]},
                    }
                )
            chart.set_title({"name": "Total runtime by team count"})
            chart.set_x_axis({"name": "Teams"})
            chart.set_y_axis({"name": "Seconds", "log_base": 10})
            chart.set_size({"width": 720, "height": 400})
            worksheet_bench.insert_chart("J2", chart)

        # ==============================================================
        # SHEET 3: TRAINING HISTORY
        # ==============================================================
        if history is not None and len(history):
            history.to_excel(writer, sheet_name="Training History", index=False, startrow=1)
            worksheet_hist = writer.sheets["Training History"]
            worksheet_hist.write(0, 0, "TRAINING HISTORY (validation split)", header_format)
            worksheet_hist.set_column("A:A", 8)
            worksheet_hist.set_column("B:C", 12)
            worksheet_hist.set_column("D:I", 14, ratio_format)

    output.seek(0)
    return output
