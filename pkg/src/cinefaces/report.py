"""Deterministic report rendering from analysis documents.

Reads the JSON documents `analyze` wrote and renders flat CSV twins,
plot-data files, and PNG figures, without recomputing anything. Every
float is serialized with fixed 6-decimal formatting so report trees are
byte-stable golden files; figures avoid timestamps for the same reason.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .metrics import HISTOGRAM_BIN_WIDTH_PCT  # noqa: E402

REPORT_CSVS = (
    "ffr_by_period.csv", "ffr_histograms.csv", "genre_ffr.csv",
    "bechdel_by_genre.csv", "bechdel_by_period.csv", "covariate_tones.csv",
    "faceism.csv", "combinations.csv", "thirds_matrices.csv", "thirds_tests.csv",
)


def fmt(value) -> str:
    """Fixed 6-decimal formatting for floats; empty string for absent."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def round_floats(obj, places: int = 6):
    if isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            return None
        return round(obj, places)
    if isinstance(obj, dict):
        return {k: round_floats(v, places) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v, places) for v in obj]
    return obj


def dump_json(doc) -> str:
    return json.dumps(round_floats(doc), indent=2, sort_keys=True) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# tabular renderers
# ---------------------------------------------------------------------------

def render_tables(docs: dict) -> dict[str, str]:
    """filename -> file text for every delimited artifact."""
    out: dict[str, str] = {}

    periods = docs["ffr_by_period"]["periods"]
    out["ffr_by_period.csv"] = _csv_text(
        ["period", "n", "mean_ffr", "std_ffr"],
        [[p["period"], p["n"], p["mean_ffr"], p["std_ffr"]] for p in periods],
    )
    hist_rows = []
    for p in periods:
        for b, (count, share) in enumerate(zip(p["counts"], p["shares"])):
            lo = b * HISTOGRAM_BIN_WIDTH_PCT
            hist_rows.append([p["period"], lo, lo + HISTOGRAM_BIN_WIDTH_PCT, count, share])
    out["ffr_histograms.csv"] = _csv_text(
        ["period", "bin_lo_pct", "bin_hi_pct", "count", "share"], hist_rows)

    out["genre_ffr.csv"] = _csv_text(
        ["genre", "n", "mean_ffr", "std_ffr"],
        [[g["genre"], g["n"], g["mean_ffr"], g["std_ffr"]]
         for g in docs["genre_ffr"]["genres"]],
    )

    bechdel = docs["bechdel"]
    out["bechdel_by_genre.csv"] = _csv_text(
        ["genre", "n", "mean_ffr", "covered", "pass_rate"],
        [[g["genre"], g["n"], g["mean_ffr"], g["covered"], g["pass_rate"]]
         for g in bechdel["genres"]],
    )
    out["bechdel_by_period.csv"] = _csv_text(
        ["period", "covered", "pass_rate"],
        [[r["period"], r["covered"], r["pass_rate"]] for r in bechdel["period_rates"]],
    )

    cov = docs["covariates"]
    cov_rows = []
    for name in sorted(cov["tones"]):
        tones = cov["tones"][name]
        if tones is None:
            continue
        for b, tone in enumerate(tones):
            lo = b * cov["bin_width_pct"]
            cov_rows.append([name, cov["period"], lo, lo + cov["bin_width_pct"], tone])
    out["covariate_tones.csv"] = _csv_text(
        ["covariate", "period", "bin_lo_pct", "bin_hi_pct", "tone"], cov_rows)

    face = docs["faceism"]
    if "skipped" in face:
        out["faceism.csv"] = _csv_text(["gender", "faces", "median_area"], [])
    else:
        out["faceism.csv"] = _csv_text(
            ["gender", "faces", "median_area", "p20_threshold", "mw_u", "mw_p", "mw_method"],
            [[g, face["faces"][g], face["median_area"][g], face["tail_threshold_p20"],
              face["mann_whitney"]["statistic"], face["mann_whitney"]["p_value"],
              face["mann_whitney"]["method"]]
             for g in ("female", "male")],
        )

    out["combinations.csv"] = _csv_text(
        ["combination", "n_female", "n_male", "frames", "share", "cumulative_share"],
        [[r["combination"], r["n_female"], r["n_male"], r["frames"], r["share"],
          r["cumulative_share"]] for r in docs["combinations"]["rows"]],
    )

    rows = []
    for entry in docs["thirds"]["matrices"]:
        for gender, payload in sorted(entry["genders"].items()):
            for r in range(3):
                for c in range(3):
                    rows.append([
                        entry["combination"], gender, r, c,
                        payload["counts"][r][c],
                        payload["percent"][r][c] if payload["percent"][r][c] is not None else None,
                    ])
    out["thirds_matrices.csv"] = _csv_text(
        ["combination", "gender", "row", "col", "count", "percent"], rows)
    out["thirds_tests.csv"] = _csv_text(
        ["combination_a", "combination_b", "axis", "statistic", "df", "p_value"],
        [[t["pair"][0], t["pair"][1], t["axis"], t["statistic"], t.get("df"), t["p_value"]]
         for t in docs["thirds"]["tests"]],
    )
    return out


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

_SAVEFIG = dict(dpi=110, format="png", metadata={"Software": "cinefaces"})


def _bins_pct():
    return [b * HISTOGRAM_BIN_WIDTH_PCT for b in range(100 // HISTOGRAM_BIN_WIDTH_PCT)]


def fig_ffr_by_period(docs, path):
    periods = docs["ffr_by_period"]["periods"]
    fig, axes = plt.subplots(1, max(1, len(periods)), figsize=(3.2 * max(1, len(periods)), 3.0),
                             sharey=True)
    if len(periods) == 1:
        axes = [axes]
    for ax, p in zip(axes, periods):
        shares = [s * 100 for s in p["shares"]]
        ax.bar(_bins_pct(), shares, width=HISTOGRAM_BIN_WIDTH_PCT, align="edge",
               color="#4477aa", edgecolor="white")
        label = f"{p['period']}\nmean {p['mean_ffr'] * 100:.1f}%" if p["mean_ffr"] is not None else p["period"]
        ax.set_title(label, fontsize=9)
        ax.set_xlim(0, 100)
        ax.set_xlabel("female face ratio (%)")
    axes[0].set_ylabel("% of movies")
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)


def fig_covariates(docs, path):
    cov = docs["covariates"]
    latest = next(p for p in docs["ffr_by_period"]["periods"] if p["period"] == cov["period"])
    names = [n for n in sorted(cov["tones"]) if cov["tones"][n] is not None]
    if not names:
        names = []
    fig, axes = plt.subplots(1, max(1, len(names)), figsize=(3.0 * max(1, len(names)), 3.0),
                             sharey=True)
    if len(names) <= 1:
        axes = [axes]
    for ax, name in zip(axes, names):
        tones = cov["tones"][name]
        for b, (count, tone) in enumerate(zip(latest["counts"], tones)):
            color = str(min(1.0, max(0.0, tone))) if tone is not None else "0.5"
            ax.bar(b * HISTOGRAM_BIN_WIDTH_PCT, count, width=HISTOGRAM_BIN_WIDTH_PCT,
                   align="edge", color=color, edgecolor="0.3", linewidth=0.4)
        ax.set_title(name, fontsize=9)
        ax.set_xlim(0, 100)
        ax.set_xlabel("ffr (%)")
    if names:
        axes[0].set_ylabel("movies")
    fig.suptitle(f"covariate rank tones, {cov['period']} (lighter = higher)", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)


def fig_combinations(docs, path):
    rows = docs["combinations"]["head_95"]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.7 * len(rows)), 3.0))
    labels = [r["combination"] for r in rows]
    ax.bar(range(len(rows)), [r["share"] * 100 for r in rows], color="#4477aa")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("% of frames with faces")
    ax.set_title(f"gender combinations, {docs['combinations']['period']}", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)


def fig_thirds(docs, path, max_groups: int = 6):
    head = {r["combination"] for r in docs["combinations"]["head_95"][:max_groups]}
    entries = [e for e in docs["thirds"]["matrices"] if e["combination"] in head]
    entries = entries[:max_groups]
    if not entries:
        entries = docs["thirds"]["matrices"][:max_groups]
    n = max(1, len(entries))
    fig, axes = plt.subplots(2, n, figsize=(2.2 * n, 4.6), squeeze=False)
    for col, entry in enumerate(entries):
        for row, gender in enumerate(("female", "male")):
            ax = axes[row][col]
            payload = entry["genders"][gender]
            grid = [[(v if v is not None else 0.0) for v in r] for r in payload["percent"]]
            ax.imshow(grid, cmap="viridis", vmin=0, vmax=100)
            for r in range(3):
                for c in range(3):
                    v = payload["percent"][r][c]
                    ax.text(c, r, "-" if v is None else f"{v:.0f}", ha="center",
                            va="center", color="white", fontsize=7)
            ax.set_xticks([])
            ax.set_yticks([])
            if row == 0:
                ax.set_title(entry["combination"], fontsize=9)
            if col == 0:
                ax.set_ylabel(gender, fontsize=9)
    fig.suptitle(f"rule-of-thirds occupancy (%), {docs['thirds']['period']}", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)


def fig_faceism(docs, path):
    face = docs["faceism"]
    fig, ax = plt.subplots(figsize=(4.5, 3.0))
    if "skipped" not in face and "deciles" in face:
        qs = [q / 10 for q in range(1, 10)]
        for gender, color in (("female", "#cc3366"), ("male", "#4477aa")):
            ax.plot(qs, [v * 100 for v in face["deciles"][gender]], marker="o",
                    label=gender, color=color)
        ax.axhline(face["tail_threshold_p20"] * 100, color="0.6", linestyle="--",
                   linewidth=0.8, label="p20 overall")
        ax.legend(fontsize=8)
    ax.set_xlabel("quantile")
    ax.set_ylabel("face area (% of frame)")
    ax.set_title(f"face area distribution, {face.get('period', '')}", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)


FIGURES = {
    "ffr_by_period.png": fig_ffr_by_period,
    "covariates.png": fig_covariates,
    "combinations.png": fig_combinations,
    "thirds_matrices.png": fig_thirds,
    "faceism.png": fig_faceism,
}


def render_report(docs: dict, out_dir, figures: bool = True) -> list[str]:
    """Write the full report tree; returns the relative paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    for name, text in render_tables(docs).items():
        _atomic_write_text(out_dir / name, text)
        written.append(name)

    # machine-readable twins of the richer documents
    _atomic_write_text(out_dir / "thirds_matrices.json", dump_json(docs["thirds"]))
    written.append("thirds_matrices.json")
    _atomic_write_text(out_dir / "summary.json", dump_json(docs["summary"]))
    written.append("summary.json")
    _atomic_write_text(out_dir / "bechdel.json", dump_json(docs["bechdel"]))
    written.append("bechdel.json")
    _atomic_write_text(out_dir / "faceism.json", dump_json(docs["faceism"]))
    written.append("faceism.json")

    if figures:
        fig_dir = out_dir / "figures"
        fig_dir.mkdir(exist_ok=True)
        for name, renderer in FIGURES.items():
            tmp = fig_dir / (name + ".tmp")
            renderer(docs, tmp)
            tmp.replace(fig_dir / name)
            written.append(f"figures/{name}")
    return written


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)
