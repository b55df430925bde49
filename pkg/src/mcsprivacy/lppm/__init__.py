from .mechanisms import (
    PRESETS,
    GeoIndConfig,
    HidingConfig,
    LppmSpec,
    ReleaseGeoIndConfig,
    RoundingConfig,
    apply_geoind,
    apply_geoind_or,
    apply_random_hiding,
    apply_release_geoind,
    apply_release_hiding,
    apply_rounding,
    protect,
    resolve_lppm,
)
from .noise import lambertw_m1, radial_cdf, radial_quantile, sample_planar_laplace
from .remap import Prior, build_prior, geometric_median, remap_optimal, remap_radius

__all__ = [
    "PRESETS", "GeoIndConfig", "HidingConfig", "LppmSpec", "ReleaseGeoIndConfig", "RoundingConfig",
    "apply_geoind", "apply_geoind_or", "apply_random_hiding", "apply_release_geoind",
    "apply_release_hiding", "apply_rounding", "protect", "resolve_lppm",
    "lambertw_m1", "radial_cdf", "radial_quantile", "sample_planar_laplace",
    "Prior", "build_prior", "geometric_median", "remap_optimal", "remap_radius",
]
