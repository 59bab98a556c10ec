"""Plots and tables summarising an experiment record."""

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402
import torch  # noqa: E402
from torchvision.utils import save_image  # noqa: E402

from ._channels import ChannelFamily  # noqa: E402
from ._experiment import BOB, ExperimentRecord, GridCell  # noqa: E402

logger = logging.getLogger(__name__)

CURVE_METRICS = {
    "psnr_mean": "PSNR (dB)",
    "ms_ssim_mean": "MS-SSIM",
    "perceptual_mean": "Perceptual distance",
    "fpesr": "FPESR",
}
TABLE_METRICS = {"psnr_mean": "PSNR", "ms_ssim_mean": "MS-SSIM", "perceptual_mean": "LPIPS"}
HOST_GROUP = "Similarity with Host Images"
PRIVATE_GROUP = "Similarity with Private Images"


def _curves(df: pd.DataFrame, out_dir: Path) -> list[Path]:
    written = []
    for family, group in df.groupby("family"):
        for metric, label in CURVE_METRICS.items():
            if metric not in group or group[metric].isna().all():
                continue
            fig, ax = plt.subplots(figsize=(5, 3.5))
            for strategy, series in group.groupby("strategy"):
                series = series.sort_values("snr_db")
                ax.plot(series["snr_db"], series[metric], marker="o", label=strategy)
            ax.set_xlabel("SNR (dB)")
            ax.set_ylabel(label)
            ax.set_title(f"{family}: {label}")
            ax.grid(alpha=0.3)
            ax.legend(fontsize="small")
            path = out_dir / f"curves_{family}_{metric.removesuffix('_mean')}.png"
            fig.tight_layout()
            fig.savefig(path, dpi=120)
            plt.close(fig)
            written.append(path)
    return written


def _fpesr_bars(df: pd.DataFrame, snr_db: float, out_dir: Path) -> list[Path]:
    at_snr = df[(df["snr_db"] == snr_db) & (df["strategy"] != BOB)]
    if at_snr.empty or "fpesr" not in at_snr or at_snr["fpesr"].isna().all():
        return []
    table = at_snr.pivot_table(index="strategy", columns="family", values="fpesr")
    fig, ax = plt.subplots(figsize=(6, 3.5))
    table.plot.bar(ax=ax, rot=0)
    ax.set_ylim(0, 1)
    ax.set_ylabel("FPESR")
    ax.set_title(f"Eavesdropping success at {snr_db:g} dB")
    path = out_dir / f"fpesr_{snr_db:g}dB.png"
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]


def defense_table(df: pd.DataFrame) -> pd.DataFrame:
    """Attacks against the defended link: similarity to host, to private, and FPESR.

    FPESR is measured against the private identities.
    """
    defended = df[df["defended"]]
    if defended.empty:
        return pd.DataFrame()
    rows = {}
    for (family, strategy), group in defended.groupby(["family", "strategy"], sort=False):
        row = {}
        by_target = {t: g.iloc[0] for t, g in group.groupby("target")}
        for target, title in (("host", HOST_GROUP), ("private", PRIVATE_GROUP)):
            summary = by_target.get(target)
            for metric, label in TABLE_METRICS.items():
                value = None if summary is None else summary.get(metric)
                row[(title, label)] = value
        private = by_target.get("private")
        row[("FPESR", "")] = None if private is None else private.get("fpesr")
        rows[(family, strategy)] = row
    table = pd.DataFrame.from_dict(rows, orient="index")
    table.columns = pd.MultiIndex.from_tuples(table.columns)
    table.index = pd.MultiIndex.from_tuples(table.index, names=["family", "strategy"])
    return table


def _write_table(table: pd.DataFrame, out_dir: Path) -> list[Path]:
    flat = table.copy()
    flat.columns = [" | ".join(c for c in col if c) for col in table.columns]
    flat = flat.reset_index()
    csv_path = out_dir / "defense_table.csv"
    md_path = out_dir / "defense_table.md"
    flat.to_csv(csv_path, index=False)
    md_path.write_text(flat.to_markdown(index=False, floatfmt=".3f") + "\n")
    return [csv_path, md_path]


def _utility_curves(utility: list[dict], out_dir: Path) -> list[Path]:
    if not utility:
        return []
    df = pd.DataFrame(utility)
    written = []
    for family, group in df.groupby("family"):
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
        for system, series in group.groupby("system"):
            series = series.sort_values("snr_db")
            axes[0].plot(series["snr_db"], series["psnr"], marker="o", label=system)
            axes[1].plot(series["snr_db"], series["ms_ssim"], marker="o", label=system)
        axes[0].set_ylabel("PSNR (dB)")
        axes[1].set_ylabel("MS-SSIM")
        for ax in axes:
            ax.set_xlabel("SNR (dB)")
            ax.grid(alpha=0.3)
        axes[0].legend(fontsize="small")
        fig.suptitle(f"Receiver quality, {family}")
        path = out_dir / f"utility_{family}.png"
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def _previews(record: ExperimentRecord, snr_db: float, out_dir: Path) -> list[Path]:
    run_dir = Path(record.output_dir)
    samples = run_dir / "eval_samples.pt"
    if not samples.exists():
        return []
    originals = torch.load(samples, weights_only=True)
    written = []
    configured = record.config.get("attacks", {})
    grids = [
        (family, snr_db, False, "original")
        for family in configured.get("families", [])
    ]
    grids += [
        (family, record.config["defense"]["snr_db"], True, "host")
        for family in record.config.get("defense", {}).get("families", [])
        if record.utility
    ]
    strategies = [BOB, *configured.get("strategies", [])]
    for family, snr, defended, _ in grids:
        rows = [originals["original"]]
        if defended:
            rows.append(originals["host"])
        for strategy in strategies:
            cell = GridCell(strategy, ChannelFamily(family), snr, defended)
            path = cell.directory(run_dir) / "samples.pt"
            if path.exists():
                rows.append(torch.load(path, weights_only=True))
        if len(rows) < 2:
            continue
        n = min(len(r) for r in rows)
        grid = torch.cat([r[:n] for r in rows])
        prefix = "defended_" if defended else ""
        target = out_dir / f"preview_{prefix}{family}_{snr:g}dB.png"
        save_image(grid, target, nrow=n, padding=2)
        written.append(target)
    return written


def emit_report(record: ExperimentRecord, out_dir: Path | None = None) -> list[Path]:
    """Renders metric-vs-SNR curves, FPESR bars, the defence table, receiver utility
    curves and reconstruction previews.

    Rows of each preview are: original, (host,) Bob, then every eavesdropper.
    """
    out_dir = Path(out_dir or Path(record.output_dir) / "report")
    out_dir.mkdir(parents=True, exist_ok=True)
    df = record.reports_frame()
    written: list[Path] = []
    preview_snr = float(record.config.get("preview_snr_db", 5.0))

    if not df.empty:
        plain = df[~df["defended"]]
        written += _curves(plain, out_dir)
        written += _fpesr_bars(plain, preview_snr, out_dir)
        table = defense_table(df)
        if not table.empty:
            written += _write_table(table, out_dir)
    written += _utility_curves(record.utility, out_dir)
    written += _previews(record, preview_snr, out_dir)

    summary = out_dir / "summary.csv"
    df.drop(columns=["rows_path"], errors="ignore").to_csv(summary, index=False)
    written.append(summary)

    record.plots = [str(p) for p in written]
    record.save()
    logger.info("Report with %d files in %s", len(written), out_dir)
    return written
