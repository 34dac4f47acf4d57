//! Planar synthetic aperture simulation, range migration imaging and range
//! profile analysis.

mod aperture;
mod capture;
mod profile;
mod rma;
mod volume;

pub use aperture::{simulate_aperture, ApertureConfig, ApertureData, SampleMode, SceneXYZ, ScattererXYZ};
pub use capture::Capture;
pub use profile::{dominant_peaks, local_maxima, pslr_db, range_axis, range_profile, upsampled_range_profile};
pub use rma::{rma_reconstruct, rma_reconstruct_complex, Interpolation, RmaOptions};
pub use volume::{write_csv_image, write_pgm, ComplexVolume, Grid, Volume};
