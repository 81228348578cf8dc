//! Aggregate axon/myelin morphometry: axon objects, equivalent diameters,
//! density, volume fractions, g-ratio, and normalized distribution maps.

mod components;
mod maps;
mod metrics;

pub use components::{label_components, Components};
pub use maps::{
    distribution_map, normalize_map, parse_raw_csv, raw_csv, render_maps, DistributionMap,
    MapMetric, RAW_FILE, RAW_HEADER, SUMMARY_FILE,
};
pub use metrics::{
    cell_metrics, equivalent_diameter, g_ratio, patch_metrics, patch_metrics_with,
    slide_morphometry, MetricGridSpec, MorphometryRecord, SlideMorphometry,
    DEFAULT_MIN_COMPONENT_AREA,
};
