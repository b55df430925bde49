from .colocation import ColocationEvent, detect_colocations
from .dbscan import NOISE, DbscanParams, dbscan
from .inference import (
    DEFAULT_SCHEDULE,
    SCHEDULES,
    TIGHT_PRESETS,
    AttackResult,
    Cluster,
    infer_areas,
    rounding_adversary_areas,
    split_subclusters,
    temporal_filter,
)
from .poi import OfflinePoiProvider, OverpassPoiProvider, PoiNetworkError, PoiProviderError, PoiRecord, query_pois
from .raster import AreaEstimate, AreaGrid, GridMismatchError, disk_union, square_union

__all__ = [
    "ColocationEvent", "detect_colocations", "NOISE", "DbscanParams", "dbscan",
    "DEFAULT_SCHEDULE", "SCHEDULES", "TIGHT_PRESETS", "AttackResult", "Cluster", "infer_areas",
    "rounding_adversary_areas", "split_subclusters", "temporal_filter",
    "OfflinePoiProvider", "OverpassPoiProvider", "PoiNetworkError", "PoiProviderError", "PoiRecord", "query_pois",
    "AreaEstimate", "AreaGrid", "GridMismatchError", "disk_union", "square_union",
]
