#
#   Copyright (c) 2024 The selfpower authors. All rights reserved.
#
#   Distributed under the Affero GPL license
#
import logging
from pathlib import Path
from typing import List, Optional, Union

from mdutils.mdutils import MdUtils

from .energy import cycle_energy, threshold_distance, transmit_branch
from .lti import StepMetrics
from .pid import GAIN_EFFECT_COLUMNS, GAIN_EFFECTS, PidGains, UltimateParams
from .stability import StabilityVerdict

logger = logging.getLogger(__name__)


def _number(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _table(md: MdUtils, header: List[str], rows: List[List]):
    cells = list(header)
    for row in rows:
        cells.extend(_number(v) for v in row)
    md.new_table(columns=len(header), rows=len(rows) + 1, text=cells, text_align="left")


def add_metrics_section(md: MdUtils, title: str, metrics: Optional[StepMetrics], failure: Optional[str] = None):
    md.new_header(level=2, title=title)
    if metrics is None:
        md.new_paragraph(f"Not available: {failure}")
        return
    _table(md, ["metric", "value"], [[key, value] for key, value in metrics.to_dict().items()])


def add_routh_section(md: MdUtils, title: str, verdict: StabilityVerdict):
    md.new_header(level=2, title=title)
    table = verdict.table
    width = max(len(row) for row in table.rows)
    _table(md, ["row"] + [f"c{i + 1}" for i in range(width)],
           [[label] + list(row) for label, row in zip(table.row_labels(), table.rows)])
    md.new_paragraph(f"Verdict: **{verdict.status}**, {verdict.sign_changes} sign changes in the first column.")
    for note in table.special_case_notes:
        md.new_line(f"- {note}")


def add_tuning_section(md: MdUtils, ultimate: UltimateParams, gains: PidGains):
    md.new_header(level=2, title="Ziegler-Nichols tuning")
    _table(md, ["Ku", "Tu [s]", "kp", "ki", "kd"], [[ultimate.ku, ultimate.tu_s, gains.kp, gains.ki, gains.kd]])
    md.new_header(level=3, title="Effect of raising each gain")
    _table(md, GAIN_EFFECT_COLUMNS, [list(row) for row in GAIN_EFFECTS])


def add_energy_section(md: MdUtils, scenario, distance_m: float):
    md.new_header(level=2, title=f"Energy per activity cycle at {distance_m:g} m")
    breakdown = cycle_energy(scenario.energy, distance_m)
    _table(md, ["component", "energy [J]"], [[key, value] for key, value in breakdown.to_dict().items()])
    md.new_paragraph(f"Crossover distance d0 = {threshold_distance(scenario.energy):.6g} m, "
                     f"{transmit_branch(scenario.energy, distance_m)} amplifier branch in use.")


def add_simulation_section(md: MdUtils, title: str, summary: Optional[dict], failure: Optional[str] = None):
    md.new_header(level=2, title=title)
    if summary is None:
        md.new_paragraph(f"Not simulated: {failure}")
        return
    rows = [[key, value] for key, value in summary.items() if key != "recharge_times_s"]
    rows.append(["recharge phases", len(summary["recharge_times_s"])])
    if summary["recharge_times_s"]:
        rows.append(["first recharge [s]", summary["recharge_times_s"][0]])
    _table(md, ["quantity", "value"], rows)


def write_report(path: Union[str, Path], scenario, open_metrics, closed_metrics, ultimate, gains, verdict,
                 distance_m, controlled, passive, failures: dict) -> Path:
    """Write the analysis results of one scenario as a Markdown document. Returns the file written."""
    path = Path(path)
    md = MdUtils(file_name=str(path.with_suffix("")), title=f"Self-powered sensor node: {scenario.name}")
    md.new_paragraph("Step response, tuning, stability, energy budget and duty-cycle simulation of one scenario.")
    add_metrics_section(md, "Open-loop step response", open_metrics, failures.get("open_loop"))
    add_metrics_section(md, "Closed-loop step response", closed_metrics, failures.get("closed_loop"))
    add_tuning_section(md, ultimate, gains)
    add_routh_section(md, "Closed-loop Routh table", verdict)
    add_energy_section(md, scenario, distance_m)
    add_simulation_section(md, "Duty cycle with PID harvesting", controlled, failures.get("controlled"))
    add_simulation_section(md, "Duty cycle with passive harvesting", passive, failures.get("passive"))
    md.create_md_file()
    logger.info("Report written to %s", path)
    return path.with_suffix(".md")
