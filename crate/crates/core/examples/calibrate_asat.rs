//! Fits the growth model and prints the constants to pin in `GrowthModel::CALIBRATED`.

use agora_core::asat::{calibrate, CalibrationTargets};

fn main() {
    let cal = calibrate(&CalibrationTargets::default(), 0..256);
    println!("{}", serde_json::to_string_pretty(&cal).unwrap());
    println!("gain_rate: {:?}", cal.growth.gain_rate);
    println!("cold_start_penalty: {:?}", cal.growth.cold_start_penalty);
}
