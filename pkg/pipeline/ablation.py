"""
Stage ablation: rerun the pipeline with the flow-completion (OP) and
reference-frame (R) stages switched on and off under one shared seed.
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from agents.evaluation_agent import Report
from pipeline.inpaint_run import run_inpaint
from utils.errors import InvalidArgument
from utils.settings import PipelineConfig
from utils.video_io import MaskSeq, VideoClip

logger = logging.getLogger(__name__)

DEFAULT_TOGGLES: List[Dict[str, bool]] = [
    {"op_completion": False, "ref_frame": False},
    {"op_completion": True, "ref_frame": False},
    {"op_completion": False, "ref_frame": True},
    {"op_completion": True, "ref_frame": True},
]

REPORT_COLUMNS = ["config_id", "psnr", "ssim", "e_warp_x1e3", "tf", "seam", "fusion_ops", "runtime_ms"]


def config_id(toggle: Dict[str, bool]) -> str:
    """'-/-', 'OP/-', '-/R' or 'OP/R'"""
    op = "OP" if toggle.get("op_completion") else "-"
    ref = "R" if toggle.get("ref_frame") else "-"
    return f"{op}/{ref}"


def run_ablation(
    base_cfg: Optional[PipelineConfig] = None,
    toggles: Optional[Sequence[Dict[str, bool]]] = None,
    inputs: Optional[Sequence[Tuple[VideoClip, MaskSeq, Optional[VideoClip]]]] = None,
) -> List[Tuple[str, Report]]:
    """
    One row per toggle combination. With several input scenes the numeric
    report fields are averaged per combination (psnr / ssim over the scenes
    that have a plate).
    """
    base_cfg = base_cfg or PipelineConfig()
    toggles = list(toggles) if toggles is not None else DEFAULT_TOGGLES
    if not toggles:
        raise InvalidArgument("at least one stage combination is required")
    scenes = list(inputs) if inputs is not None else [(None, None, None)]

    rows = []
    for toggle in toggles:
        stages = base_cfg.stages.model_copy(update=toggle)
        cfg = base_cfg.model_copy(update={"stages": stages})
        reports = [run_inpaint(cfg, clip, holes, plate).report for clip, holes, plate in scenes]
        rows.append((config_id(toggle), _mean_report(reports)))
        logger.info(f"✅ Ablation row {config_id(toggle)} done over {len(reports)} scenes")
    return rows


def _mean_report(reports: List[Report]) -> Report:
    if len(reports) == 1:
        return reports[0]
    table = pd.DataFrame([r.model_dump(exclude={"per_frame"}) for r in reports])
    means = table.mean(numeric_only=True, skipna=True)
    return Report(
        psnr=None if pd.isna(means.get("psnr")) else float(means["psnr"]),
        ssim=None if pd.isna(means.get("ssim")) else float(means["ssim"]),
        e_warp_x1e3=float(means["e_warp_x1e3"]),
        tf=float(means["tf"]),
        seam=float(means["seam"]),
        fusion_ops=int(round(means["fusion_ops"])),
        runtime_ms=float(means["runtime_ms"]),
    )


def ablation_table(rows: Sequence[Tuple[str, Report]]) -> pd.DataFrame:
    """Rows as a DataFrame with the report columns in a fixed order"""
    records = [{"config_id": cid, **report.model_dump(exclude={"per_frame"})} for cid, report in rows]
    return pd.DataFrame(records, columns=REPORT_COLUMNS)
