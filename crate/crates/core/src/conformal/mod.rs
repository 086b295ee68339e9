//! Split conformal prediction for classification and quantile regression.

pub mod cls;
pub mod reg;

pub use cls::{
    calibrate, fit_temperature, mc_cp_classify, naive_score, naive_set, raps_score, raps_set,
    temperature_nll, ClsCalibration, ClsMethod, ClsPrediction, RapsParams, TemperatureMode,
    TEMPERATURE_BOUNDS,
};
pub use reg::{
    calibrate_reg, cqr_interval, cqr_score, crossing_count, mc_cp_regress, RegCalibration,
    RegPrediction,
};
