"""Fine-grained camp population estimation from census polygons and structure footprints.

Chips are labeled by disaggregating block populations, the structure-area
Huber baseline predicts chip populations, and chip predictions are summed to
camp totals for MAE/MAPE scoring.
"""

__version__ = "0.1.0"

from .baseline import FitConfig, HuberModel, fit_huber, huber_loss, predict
from .chipping import Chip, sample_train_boxes, tile_test_boxes
from .errors import (
    CampdensError,
    ConfigError,
    EvaluationError,
    FitError,
    GeometryError,
    IngestError,
    LabelingError,
)
from .evaluation import EvalReport, SceneResult, build_report, camp_total, mae, mape
from .geometry import (
    BinaryGrid,
    Point2,
    Polygon,
    Rect,
    clip_polygon_rect,
    intersection_area,
    latlon_to_local,
    point_in_polygon,
    polygon_area,
    rasterize,
)
from .ingest import CampScene, MajheeBlock, PredictionRecord, load_blocks, load_footprints, load_manifest, load_predictions
from .labeling import (
    DisaggregationMode,
    LabeledChip,
    chip_structure_area,
    density_to_population,
    disaggregate,
    filter_test_chips,
    population_to_density,
)
