from contact_fusion.evaluation.grid import ExperimentGrid, GridResult, run_grid, summary_table, write_report
from contact_fusion.evaluation.inputs import AlgorithmConfigs, run_algorithm
from contact_fusion.evaluation.scoring import PatchScore, align_for_scoring, mask_scores, node_mask, score_patch

__all__ = [
    "AlgorithmConfigs",
    "ExperimentGrid",
    "GridResult",
    "PatchScore",
    "align_for_scoring",
    "mask_scores",
    "node_mask",
    "run_algorithm",
    "run_grid",
    "score_patch",
    "summary_table",
    "write_report",
]
