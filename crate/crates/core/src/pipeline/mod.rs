//! Emergency-department records to per-station Coxian fits and reports.

mod ingest;
mod report;
mod stations;
mod workflow;

pub use ingest::{
    ingest, ingest_str, minutes_between, parse_datetime, ArrivalMode, Ingested, PatientRecord, Reject, Sex,
    CSV_HEADER, MAX_REJECT_FRACTION,
};
pub use report::{
    covariate_label, covariate_table_csv, covariate_table_text, plot_csv, rejects_csv, render, significance_stars,
    sweep_table_csv, sweep_table_text, text_report, write_atomic, write_report, COVARIATE_FILE, FITS_FILE, PLOT_FILE,
    REJECTS_FILE, REPORT_FILE, SWEEP_FILE,
};
pub use stations::{
    classify, derive_stations, derive_stations_with, encode, DestinationMap, StationDataset, StationSample,
    DEFAULT_ZERO_SHIFT_MINUTES, STATION_COUNT, STATION_NAMES,
};
pub use workflow::{run_workflow, PlotRow, StationOutcome, StationStatus, WorkflowConfig, WorkflowOutput};
