import os
import json
import logging
from typing import List, Sequence, Tuple, Union

import pandas as pd
from pydantic import ValidationError

from agents.evaluation_agent import Report
from pipeline.ablation import REPORT_COLUMNS, ablation_table
from utils.errors import DecodeError, IoError

logger = logging.getLogger(__name__)

Rows = Union[pd.DataFrame, Sequence[Tuple[str, Report]]]


def _ensure_parent(path: str):
    parent = os.path.dirname(path)
    if parent:
        try:
            os.makedirs(parent, exist_ok=True)
        except OSError as e:
            raise IoError(f"Cannot create {parent}: {e}") from e


def emit_report(report: Union[Report, Rows], path: str):
    """Single Report -> JSON document; table of (config id, Report) rows -> CSV"""
    _ensure_parent(path)
    try:
        if isinstance(report, Report):
            with open(path, "w", encoding="utf-8") as handle:
                json.dump(report.model_dump(), handle, indent=2)
        else:
            table = report if isinstance(report, pd.DataFrame) else ablation_table(report)
            table.to_csv(path, index=False, columns=REPORT_COLUMNS)
    except OSError as e:
        raise IoError(f"Error writing report {path}: {e}") from e
    logger.info(f"✅ Report written to {path}")


def load_report(path: str) -> Report:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return Report.model_validate(json.load(handle))
    except OSError as e:
        raise IoError(f"Error reading report {path}: {e}") from e
    except (json.JSONDecodeError, ValidationError) as e:
        raise DecodeError(f"Error parsing report {path}: {e}") from e


class ReportGenerator:
    """Plain-text summaries of ablation tables for the console"""

    def create_summary(self, rows: Sequence[Tuple[str, Report]]) -> str:
        if not rows:
            return "No ablation rows."
        summary = "Ablation Summary\n"
        summary += f"Configurations: {len(rows)}\n\n"
        for config_id, report in rows:
            psnr = "n/a" if report.psnr is None else f"{report.psnr:.2f} dB"
            ssim = "n/a" if report.ssim is None else f"{report.ssim:.4f}"
            summary += f"{config_id:>5}  PSNR {psnr}  SSIM {ssim}  "
            summary += f"E_warp {report.e_warp_x1e3:.4f}  TF {report.tf:.2f}  seam {report.seam:.5f}\n"
        best = self.best_rows(rows)
        if best:
            summary += f"\nBest PSNR: {', '.join(best)}\n"
        return summary

    def best_rows(self, rows: Sequence[Tuple[str, Report]]) -> List[str]:
        """Config ids sharing the highest PSNR"""
        scored = [(cid, r.psnr) for cid, r in rows if r.psnr is not None]
        if not scored:
            return []
        top = max(p for _, p in scored)
        return [cid for cid, p in scored if p == top]
