//! Run configuration: key=value files with section headers, `**.`
//! wildcard prefixes and simple arithmetic values (`1/2000`, `0.46*0.49`,
//! `10 s`). Unknown keys and out-of-range values are rejected by name;
//! absent keys fall back to the default hardware parameter set.

use thiserror::Error;

use crate::errmodel::{ChannelRates, CnotGateError, GateErrors, MemoryRates, SingleGateError};
use crate::link::{LinkArchitecture, LinkConfig};
use crate::ruleset::{PurificationSchedule, PurifyMethod, RulesetError};
use crate::simcore::event::SimTime;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown configuration key: {0}")]
    UnknownKey(String),
    #[error("invalid value for {key}: {value}")]
    InvalidValue { key: String, value: String },
    #[error("{key} = {value} is out of range")]
    OutOfRange { key: String, value: f64 },
    #[error("purification type: {0}")]
    Purification(#[from] RulesetError),
}

/// Everything a run needs, resolved to concrete values.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub architecture: LinkArchitecture,
    pub total_length_km: f64,
    pub refractive_index: f64,

    pub channel: ChannelRates,
    pub memory: MemoryRates,

    pub h_gate: SingleGateError,
    pub x_gate: SingleGateError,
    pub z_gate: SingleGateError,
    /// Measurement gate table; flips reported tomography outcomes.
    pub measurement_gate: SingleGateError,
    /// Readout errors of the Pauli-frame measurements that decide
    /// purification verdicts; ideal by default, since corrupted verdicts
    /// drown the selection gain of the double-selection circuits.
    pub purification_measurement_gate: SingleGateError,
    /// Pauli landing on each memory at the heralding detector click;
    /// ideal by default.
    pub detection_readout_gate: SingleGateError,
    pub cnot_gate: CnotGateError,

    pub emission_success_probability: f64,
    pub detector_efficiency: f64,
    /// Detection rate of the stand-alone analyzer (MeetInTheMiddle).
    pub detection_rate_per_sec: f64,
    /// Detection rate of the QNIC-internal analyzer (SenderReceiver).
    pub internal_detection_rate_per_sec: f64,
    pub darkcount_probability: f64,
    pub internal_darkcount_probability: f64,
    pub bsa_success_ceiling: f64,

    pub buffers: usize,
    pub num_measure: u64,
    pub link_tomography: bool,
    pub initial_purification: u32,
    pub purification_type: i64,
    pub purification_switch_round: Option<u32>,
    pub purification_switch_type: Option<i64>,
    pub notification_buffer: SimTime,
    pub ruleset_timeout: SimTime,
    pub tomography_output_filename: String,

    pub seed: u64,
    pub trials: u32,
    pub network: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        // Default hardware parameter set: 0.2 dB/km fibre with 1% X/Y/Z
        // error each per km, 1/3 Pauli errors per second in memory with a
        // 50 ms lifetime split 100:1 excitation:relaxation, 0.46 * 0.49
        // photon emission, 0.8 detectors at 1 GHz with 10/s dark counts.
        let memory = MemoryRates::from_physical(1.0 / 3.0, [1.0, 1.0, 1.0], 0.05, 100.0).unwrap();
        Self {
            architecture: LinkArchitecture::MeetInTheMiddle,
            total_length_km: 10.0,
            refractive_index: 1.44,
            channel: ChannelRates {
                x_per_km: 0.01,
                y_per_km: 0.01,
                z_per_km: 0.01,
                loss_per_km: 0.04501,
            },
            memory,
            h_gate: SingleGateError::new(0.0005, [1.0, 1.0, 1.0]).unwrap(),
            x_gate: SingleGateError::new(0.0005, [1.0, 1.0, 1.0]).unwrap(),
            z_gate: SingleGateError::new(0.0005, [1.0, 1.0, 1.0]).unwrap(),
            measurement_gate: SingleGateError::new(0.05, [1.0, 1.0, 1.0]).unwrap(),
            purification_measurement_gate: SingleGateError::IDEAL,
            detection_readout_gate: SingleGateError::IDEAL,
            cnot_gate: CnotGateError::new(0.02, [1.0; 9]).unwrap(),
            emission_success_probability: 0.46 * 0.49,
            detector_efficiency: 0.8,
            detection_rate_per_sec: 1e9,
            internal_detection_rate_per_sec: 1e9,
            darkcount_probability: 1e-8,
            internal_darkcount_probability: 1e-8,
            bsa_success_ceiling: 1.0,
            buffers: 100,
            num_measure: 7000,
            link_tomography: true,
            initial_purification: 0,
            purification_type: PurifyMethod::SsSp.type_id(),
            purification_switch_round: None,
            purification_switch_type: None,
            notification_buffer: SimTime::ZERO,
            ruleset_timeout: SimTime::from_secs_f64(120.0),
            tomography_output_filename: "tomography_output".to_string(),
            seed: 0,
            trials: 1,
            network: None,
        }
    }
}

impl ExperimentConfig {
    pub fn link_config(&self) -> LinkConfig {
        let (sides, rate, darkcount) = match self.architecture {
            LinkArchitecture::MeetInTheMiddle => (
                [self.total_length_km / 2.0, self.total_length_km / 2.0],
                self.detection_rate_per_sec,
                self.darkcount_probability,
            ),
            LinkArchitecture::SenderReceiver => (
                [self.total_length_km, 0.0],
                self.internal_detection_rate_per_sec,
                self.internal_darkcount_probability,
            ),
        };
        LinkConfig {
            architecture: self.architecture,
            side_lengths_km: sides,
            refractive_index: self.refractive_index,
            emission_prob: self.emission_success_probability,
            detector_efficiency: self.detector_efficiency,
            detection_rate_per_sec: rate,
            darkcount_prob: darkcount,
            bsa_success_ceiling: self.bsa_success_ceiling,
            detection_readout: self.detection_readout_gate,
            buffer_size: self.buffers,
        }
    }

    pub fn gate_errors(&self) -> GateErrors {
        GateErrors {
            h: self.h_gate,
            x: self.x_gate,
            z: self.z_gate,
            measurement: self.measurement_gate,
            tomography_readout: self.measurement_gate,
            purification_measurement: self.purification_measurement_gate,
            cnot: self.cnot_gate,
        }
    }

    pub fn purification_schedule(&self) -> Result<PurificationSchedule, ConfigError> {
        let base = PurifyMethod::from_type_id(self.purification_type)?;
        let switch = match (self.purification_switch_round, self.purification_switch_type) {
            (Some(round), Some(ty)) => Some((round, PurifyMethod::from_type_id(ty)?)),
            _ => None,
        };
        Ok(PurificationSchedule { base, switch })
    }
}

/// Numeric value grammar: a float, a single `a/b` or `a*b` expression, or
/// a `${n}` placeholder.
fn parse_number(key: &str, value: &str) -> Result<f64, ConfigError> {
    let bad = || ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
    };
    let v = value.trim();
    if let Some(inner) = v.strip_prefix("${").and_then(|s| s.strip_suffix('}')) {
        return inner.trim().parse().map_err(|_| bad());
    }
    if let Ok(x) = v.parse::<f64>() {
        return Ok(x);
    }
    for (op, divide) in [('/', true), ('*', false)] {
        if let Some((a, b)) = v.split_once(op) {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            return Ok(if divide { a / b } else { a * b });
        }
    }
    Err(bad())
}

/// Durations accept an optional unit suffix: s, ms, us, ns (seconds when
/// absent).
fn parse_duration(key: &str, value: &str) -> Result<SimTime, ConfigError> {
    let v = value.trim();
    let (num, scale) = if let Some(n) = v.strip_suffix("ms") {
        (n, 1e-3)
    } else if let Some(n) = v.strip_suffix("us") {
        (n, 1e-6)
    } else if let Some(n) = v.strip_suffix("ns") {
        (n, 1e-9)
    } else if let Some(n) = v.strip_suffix('s') {
        (n, 1.0)
    } else {
        (v, 1.0)
    };
    Ok(SimTime::from_secs_f64(parse_number(key, num)? * scale))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(ConfigError::InvalidValue {
            key: key.to_string(),
            value: other.to_string(),
        }),
    }
}

fn parse_string(value: &str) -> String {
    value.trim().trim_matches('"').to_string()
}

fn probability(key: &str, value: f64) -> Result<f64, ConfigError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(ConfigError::OutOfRange {
            key: key.to_string(),
            value,
        })
    }
}

fn nonnegative(key: &str, value: f64) -> Result<f64, ConfigError> {
    if value >= 0.0 {
        Ok(value)
    } else {
        Err(ConfigError::OutOfRange {
            key: key.to_string(),
            value,
        })
    }
}

/// Parses a configuration text over the defaults. Section headers
/// (`[General]`, `[Config ...]`) separate blocks but carry no meaning;
/// later assignments win. A leading `**.` wildcard prefix is stripped
/// from every key.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    for raw in text.lines() {
        let line = match raw.find('#') {
            Some(idx) => &raw[..idx],
            None => raw,
        }
        .trim();
        if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some(kv) => kv,
            None => {
                return Err(ConfigError::InvalidValue {
                    key: line.to_string(),
                    value: "missing '='".to_string(),
                })
            }
        };
        let key = key.trim().trim_start_matches("**.").trim();
        let value = value.trim();
        apply_key(&mut cfg, key, value)?;
    }
    Ok(cfg)
}

fn apply_key(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<(), ConfigError> {
    let num = |v: &str| parse_number(key, v);
    match key {
        // Single-qubit gate error tables.
        "Hgate_error_rate" => cfg.h_gate.rate = probability(key, num(value)?)?,
        "Hgate_X_error_ratio" => cfg.h_gate.ratios[0] = nonnegative(key, num(value)?)?,
        "Hgate_Y_error_ratio" => cfg.h_gate.ratios[1] = nonnegative(key, num(value)?)?,
        "Hgate_Z_error_ratio" => cfg.h_gate.ratios[2] = nonnegative(key, num(value)?)?,
        "Xgate_error_rate" => cfg.x_gate.rate = probability(key, num(value)?)?,
        "Xgate_X_error_ratio" => cfg.x_gate.ratios[0] = nonnegative(key, num(value)?)?,
        "Xgate_Y_error_ratio" => cfg.x_gate.ratios[1] = nonnegative(key, num(value)?)?,
        "Xgate_Z_error_ratio" => cfg.x_gate.ratios[2] = nonnegative(key, num(value)?)?,
        "Zgate_error_rate" => cfg.z_gate.rate = probability(key, num(value)?)?,
        "Zgate_X_error_ratio" => cfg.z_gate.ratios[0] = nonnegative(key, num(value)?)?,
        "Zgate_Y_error_ratio" => cfg.z_gate.ratios[1] = nonnegative(key, num(value)?)?,
        "Zgate_Z_error_ratio" => cfg.z_gate.ratios[2] = nonnegative(key, num(value)?)?,
        "Measurement_error_rate" => cfg.measurement_gate.rate = probability(key, num(value)?)?,
        "Measurement_X_error_ratio" => {
            cfg.measurement_gate.ratios[0] = nonnegative(key, num(value)?)?
        }
        "Measurement_Y_error_ratio" => {
            cfg.measurement_gate.ratios[1] = nonnegative(key, num(value)?)?
        }
        "Measurement_Z_error_ratio" => {
            cfg.measurement_gate.ratios[2] = nonnegative(key, num(value)?)?
        }
        "detection_readout_error_rate" => {
            cfg.detection_readout_gate.rate = probability(key, num(value)?)?
        }
        "detection_readout_X_error_ratio" => {
            cfg.detection_readout_gate.ratios[0] = nonnegative(key, num(value)?)?
        }
        "detection_readout_Y_error_ratio" => {
            cfg.detection_readout_gate.ratios[1] = nonnegative(key, num(value)?)?
        }
        "detection_readout_Z_error_ratio" => {
            cfg.detection_readout_gate.ratios[2] = nonnegative(key, num(value)?)?
        }
        "purification_measurement_error_rate" => {
            cfg.purification_measurement_gate.rate = probability(key, num(value)?)?
        }
        "purification_measurement_X_error_ratio" => {
            cfg.purification_measurement_gate.ratios[0] = nonnegative(key, num(value)?)?
        }
        "purification_measurement_Y_error_ratio" => {
            cfg.purification_measurement_gate.ratios[1] = nonnegative(key, num(value)?)?
        }
        "purification_measurement_Z_error_ratio" => {
            cfg.purification_measurement_gate.ratios[2] = nonnegative(key, num(value)?)?
        }
        "CNOTgate_error_rate" => cfg.cnot_gate.rate = probability(key, num(value)?)?,
        "CNOTgate_IZ_error_ratio" => cfg.cnot_gate.ratios[0] = nonnegative(key, num(value)?)?,
        "CNOTgate_ZI_error_ratio" => cfg.cnot_gate.ratios[1] = nonnegative(key, num(value)?)?,
        "CNOTgate_ZZ_error_ratio" => cfg.cnot_gate.ratios[2] = nonnegative(key, num(value)?)?,
        "CNOTgate_IX_error_ratio" => cfg.cnot_gate.ratios[3] = nonnegative(key, num(value)?)?,
        "CNOTgate_XI_error_ratio" => cfg.cnot_gate.ratios[4] = nonnegative(key, num(value)?)?,
        "CNOTgate_XX_error_ratio" => cfg.cnot_gate.ratios[5] = nonnegative(key, num(value)?)?,
        "CNOTgate_IY_error_ratio" => cfg.cnot_gate.ratios[6] = nonnegative(key, num(value)?)?,
        "CNOTgate_YI_error_ratio" => cfg.cnot_gate.ratios[7] = nonnegative(key, num(value)?)?,
        "CNOTgate_YY_error_ratio" => cfg.cnot_gate.ratios[8] = nonnegative(key, num(value)?)?,

        // Memory chain rates, per microsecond.
        "memory_X_error_rate" => cfg.memory.x_per_us = probability(key, num(value)?)?,
        "memory_Y_error_rate" => cfg.memory.y_per_us = probability(key, num(value)?)?,
        "memory_Z_error_rate" => cfg.memory.z_per_us = probability(key, num(value)?)?,
        "memory_energy_excitation_rate" => {
            cfg.memory.excite_per_us = probability(key, num(value)?)?
        }
        "memory_energy_relaxation_rate" => {
            cfg.memory.relax_per_us = probability(key, num(value)?)?
        }
        "memory_completely_mixed_rate" => cfg.memory.mixed_per_us = probability(key, num(value)?)?,

        // Channel rates, per kilometre.
        "channel_Loss_error_rate" => cfg.channel.loss_per_km = probability(key, num(value)?)?,
        "channel_X_error_rate" => cfg.channel.x_per_km = probability(key, num(value)?)?,
        "channel_Z_error_rate" => cfg.channel.z_per_km = probability(key, num(value)?)?,
        "channel_Y_error_rate" => cfg.channel.y_per_km = probability(key, num(value)?)?,

        // Analyzer hardware.
        "hom_photon_detection_per_sec" => {
            cfg.detection_rate_per_sec = nonnegative(key, num(value)?)?
        }
        "hom_darkcount_probability" => cfg.darkcount_probability = probability(key, num(value)?)?,
        "internal_hom_photon_detection_per_sec" => {
            cfg.internal_detection_rate_per_sec = nonnegative(key, num(value)?)?
        }
        "internal_hom_darkcount_probability" => {
            cfg.internal_darkcount_probability = probability(key, num(value)?)?
        }
        "bsa_success_ceiling" => cfg.bsa_success_ceiling = probability(key, num(value)?)?,

        // Link, protocol and run controls.
        "emission_success_probability" => {
            cfg.emission_success_probability = probability(key, num(value)?)?
        }
        "detector_efficiency" => cfg.detector_efficiency = probability(key, num(value)?)?,
        "buffers" => cfg.buffers = num(value)? as usize,
        "num_measure" => cfg.num_measure = num(value)? as u64,
        "link_tomography" => cfg.link_tomography = parse_bool(key, value)?,
        "initial_purification" => cfg.initial_purification = num(value)? as u32,
        "Purification_type" => {
            let id = num(value)? as i64;
            PurifyMethod::from_type_id(id)?;
            cfg.purification_type = id;
        }
        "purification_switch_round" => cfg.purification_switch_round = Some(num(value)? as u32),
        "purification_switch_type" => {
            let id = num(value)? as i64;
            PurifyMethod::from_type_id(id)?;
            cfg.purification_switch_type = Some(id);
        }
        "Initial_notification_timing_buffer" => {
            cfg.notification_buffer = parse_duration(key, value)?
        }
        "ruleset_timeout" => cfg.ruleset_timeout = parse_duration(key, value)?,
        "tomography_output_filename" => cfg.tomography_output_filename = parse_string(value),

        // Topology and run shape.
        "architecture" => {
            cfg.architecture = match parse_string(value).as_str() {
                "MIM" | "MeetInTheMiddle" => LinkArchitecture::MeetInTheMiddle,
                "SR" | "SenderReceiver" => LinkArchitecture::SenderReceiver,
                other => {
                    return Err(ConfigError::InvalidValue {
                        key: key.to_string(),
                        value: other.to_string(),
                    })
                }
            }
        }
        "channel_length_km" => cfg.total_length_km = nonnegative(key, num(value)?)?,
        "refractive_index" => cfg.refractive_index = nonnegative(key, num(value)?)?,
        "network" => cfg.network = Some(parse_string(value)),
        "seed-set" | "seed" => cfg.seed = num(value)? as u64,
        "num_trials" => cfg.trials = num(value)? as u32,

        other => return Err(ConfigError::UnknownKey(other.to_string())),
    }
    Ok(())
}
