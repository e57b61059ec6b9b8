//! Link-level simulation harness: frame generation, metrics, datasets,
//! parameter sweeps and file formats.

pub mod dataset;
pub mod files;
pub mod link;
pub mod metrics;
pub mod sweeps;

pub use dataset::{gen_dataset, Dataset, DatasetRecord, SnrPolicy, TRAINING_SNRS_DB};
pub use link::{
    eval_frames, extract_pilots, mean_mse, run_link, simulate_frame, DlEstimator, DlKind, Estimator, Lmmse,
    LsBilinear, MetricsRecord, Observation, PerfectCsi, RunConfig,
};
pub use metrics::{ber, equalize_and_demap, mse, nmse};
pub use sweeps::{sweep_dataset_size, sweep_doppler, sweep_snr, sweep_wordlength, WordlengthSweep};
