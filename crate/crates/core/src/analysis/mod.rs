//! Hidden-state geometry: PCA, can-end probes, state labels and plot export.

mod export;
mod geometry;
mod labels;
mod pca;
mod probe;

pub use export::{export_plot_data, read_plot_data, render_scatter, PlotRow, PLOT_COLUMNS};
pub use geometry::{
    can_end_probe, geometry_report, pearson, ClusterCorrelation, GeometryReport, ProbeReport,
};
pub use labels::{eos_plurality, label_states, Labeling, OutputHead};
pub use pca::{covariance, jacobi_eigen, pca_top2, PcaProjection};
pub use probe::{eval_probe, train_probe, Probe, ProbeConfig};
