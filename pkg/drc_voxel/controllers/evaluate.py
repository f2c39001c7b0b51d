import logging
from pathlib import Path

from drc_voxel.controllers.options import load_ground_truth, write_lines
from drc_voxel.services.evaluation import best_threshold
from drc_voxel.utils.grid_io import read_grid
from drc_voxel.utils.manifest import write_json
from drc_voxel.utils.settings import DEFAULTS

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("eval", help="best-threshold IoU of a predicted grid against ground truth")
    parser.add_argument("--pred", required=True, help="occupancy grid file (emptiness convention)")
    parser.add_argument("--gt", required=True, help="binary grid file or shape output directory")
    parser.add_argument("--step", type=float, default=DEFAULTS["threshold_step"])
    parser.add_argument("--out", default=None, help="TSV report path (default stdout)")
    parser.add_argument("--json", default=None, help="also write a JSON report here")
    parser.set_defaults(handler=evaluate_controller)


def evaluate_controller(args) -> int:
    pred, _, _ = read_grid(args.pred)
    gt, _ = load_ground_truth(args.gt)
    result = best_threshold(pred, gt, args.step)
    write_lines(result.tsv_lines(), args.out)
    if args.json:
        write_json(Path(args.json), {
            "pred": str(args.pred),
            "gt": str(args.gt),
            "best_iou": result.best_iou,
            "best_threshold": result.best_threshold,
            "curve": [{"threshold": t, "iou": iou} for t, iou in result.curve],
        })
    logger.info("[eval] best_iou=%.4f best_threshold=%.2f", result.best_iou, result.best_threshold)
    return 0
