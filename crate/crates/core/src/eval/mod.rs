//! Classification metrics, the analytic cost model, and the grid summary.

mod cost;
mod grid;
mod report;

pub use cost::{cost_estimate, CostEstimate, CostInputs};
pub use grid::{
    grid_cells, grid_report, CellResult, GridCell, GridReport, GridRow, NEIGHBOR_SETTINGS,
};
pub use report::{
    classification_report, classification_report_named, Averages, ClassificationReport,
};
