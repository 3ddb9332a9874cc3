//! Image-to-world calibration, great-circle distance and per-track speed.

mod geo;
mod homography;
mod speed;

pub use geo::{haversine_km, GeoPoint, EARTH_RADIUS_KM};
pub use homography::{Calibration, CalibrationFit, CalibrationPoint, Homography};
pub use speed::{
    estimate_speed, estimate_speed_from_history, speed_from_distance, MotionConfig, SpeedEstimate,
};
