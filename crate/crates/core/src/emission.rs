//! Average-speed tailpipe emission model.
//!
//! A vehicle class and pollutant select a set of polynomial coefficients
//! `k, a..g`. The per-distance rate at average speed `v` (km/h) is
//!
//! ```text
//! rate(v) = (k / v) * (a + b v + c v^2 + d v^3 + e v^4 + f v^5 + g v^6)   [g/km]
//! ```
//!
//! and the per-minute rate used by the optimizer is `rate(v) * v / 60`.
//!
//! The commonly quoted form of this polynomial lists `c v^3 + d v^3`; it is
//! implemented here as the degree-complete `c v^2 + d v^3`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// The bundled illustrative CO table. Values are not calibrated against
/// measurements; they only respect the class-ordering invariant.
pub const DEFAULT_TABLE_TOML: &str = include_str!("../data/euro_co.toml");

/// Speeds at which a loaded table is checked for finiteness, sign and class ordering.
const CHECK_SPEED_STEP_KMH: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionCoefficients {
    pub k: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub g: f64,
}

impl EmissionCoefficients {
    /// Coefficients with only `k` and `a` set; handy for tests and examples.
    pub fn constant(k: f64, a: f64) -> Self {
        Self {
            k,
            a,
            b: 0.0,
            c: 0.0,
            d: 0.0,
            e: 0.0,
            f: 0.0,
            g: 0.0,
        }
    }

    fn polynomial(&self, v: f64) -> f64 {
        // Horner, highest degree first.
        [self.g, self.f, self.e, self.d, self.c, self.b, self.a]
            .iter()
            .fold(0.0, |acc, &coef| acc * v + coef)
    }

    fn all_finite(&self) -> bool {
        [
            self.k, self.a, self.b, self.c, self.d, self.e, self.f, self.g,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

/// EURO exhaust-emission class, 1 (dirtiest) to 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct VehicleClass(u8);

impl VehicleClass {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 4;

    pub fn new(euro_class: u8) -> Result<Self> {
        if (Self::MIN..=Self::MAX).contains(&euro_class) {
            Ok(Self(euro_class))
        } else {
            Err(Error::Domain(format!(
                "euro class must be in [{}, {}], got {euro_class}",
                Self::MIN,
                Self::MAX
            )))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = VehicleClass> {
        (Self::MIN..=Self::MAX).map(VehicleClass)
    }
}

impl TryFrom<u8> for VehicleClass {
    type Error = Error;
    fn try_from(value: u8) -> Result<Self> {
        Self::new(value)
    }
}

impl From<VehicleClass> for u8 {
    fn from(c: VehicleClass) -> u8 {
        c.0
    }
}

impl fmt::Display for VehicleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EURO{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PollutantKind {
    #[serde(rename = "CO")]
    Co,
}

impl PollutantKind {
    pub fn all() -> impl Iterator<Item = PollutantKind> {
        [PollutantKind::Co].into_iter()
    }
}

impl fmt::Display for PollutantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PollutantKind::Co => f.write_str("CO"),
        }
    }
}

/// Emission rate in g/km at average speed `v_kmh`.
///
/// Negative polynomial values are clamped to zero.
pub fn emission_rate_g_per_km(coeffs: &EmissionCoefficients, v_kmh: f64) -> Result<f64> {
    if !(v_kmh > 0.0) {
        return Err(Error::Domain(format!(
            "speed must be positive, got {v_kmh} km/h"
        )));
    }
    let rate = coeffs.k / v_kmh * coeffs.polynomial(v_kmh);
    if !rate.is_finite() {
        return Err(Error::Model(format!(
            "emission rate is not finite at {v_kmh} km/h"
        )));
    }
    if rate < 0.0 {
        log::warn!("negative emission rate {rate} g/km at {v_kmh} km/h clamped to 0");
        return Ok(0.0);
    }
    Ok(rate)
}

/// Converts g/km at speed `v_kmh` to g/min.
pub fn to_g_per_min(rate_g_per_km: f64, v_kmh: f64) -> Result<f64> {
    if !(rate_g_per_km >= 0.0) {
        return Err(Error::Domain(format!(
            "rate must be non-negative, got {rate_g_per_km} g/km"
        )));
    }
    if !(v_kmh >= 0.0) {
        return Err(Error::Domain(format!(
            "speed must be non-negative, got {v_kmh} km/h"
        )));
    }
    Ok(rate_g_per_km * v_kmh / 60.0)
}

/// Per-minute emission rate of a vehicle of `class` travelling at `v_kmh`.
/// A stationary vehicle emits nothing in this model.
pub fn vehicle_emission_rate(
    class: VehicleClass,
    pollutant: PollutantKind,
    v_kmh: f64,
    table: &CoefficientTable,
) -> Result<f64> {
    let coeffs = table.get(class, pollutant)?;
    if !(v_kmh >= 0.0) {
        return Err(Error::Domain(format!(
            "speed must be non-negative, got {v_kmh} km/h"
        )));
    }
    if v_kmh == 0.0 {
        return Ok(0.0);
    }
    to_g_per_min(emission_rate_g_per_km(coeffs, v_kmh)?, v_kmh)
}

/// Validated lookup from (class, pollutant) to coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    entries: BTreeMap<(VehicleClass, PollutantKind), EmissionCoefficients>,
    v_min: f64,
    v_max: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableFile {
    meta: TableMeta,
    #[serde(rename = "entry", default)]
    entries: Vec<TableEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableMeta {
    rate_unit: String,
    speed_unit: String,
    v_min_kmh: f64,
    v_max_kmh: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableEntry {
    euro_class: u8,
    pollutant: PollutantKind,
    #[serde(flatten)]
    coefficients: EmissionCoefficients,
}

impl CoefficientTable {
    /// The bundled CO table.
    pub fn bundled() -> Self {
        Self::from_toml_str(DEFAULT_TABLE_TOML, "bundled table")
            .expect("bundled coefficient table is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self> {
        let file: TableFile = toml::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })?;
        let mut violations = Vec::new();
        if file.meta.rate_unit != "g/km" {
            violations.push(Violation::new("meta.rate_unit", "must be \"g/km\""));
        }
        if file.meta.speed_unit != "km/h" {
            violations.push(Violation::new("meta.speed_unit", "must be \"km/h\""));
        }
        let (v_min, v_max) = (file.meta.v_min_kmh, file.meta.v_max_kmh);
        if !(v_min > 0.0 && v_max >= v_min && v_max.is_finite()) {
            violations.push(Violation::new(
                "meta",
                format!("speed domain must satisfy 0 < v_min <= v_max, got [{v_min}, {v_max}]"),
            ));
        }
        let mut entries = BTreeMap::new();
        for (i, entry) in file.entries.iter().enumerate() {
            let path = format!("entry[{i}]");
            let class = match VehicleClass::new(entry.euro_class) {
                Ok(c) => c,
                Err(e) => {
                    violations.push(Violation::new(format!("{path}.euro_class"), e.to_string()));
                    continue;
                }
            };
            if !entry.coefficients.all_finite() {
                violations.push(Violation::new(path.clone(), "coefficients must be finite"));
                continue;
            }
            if entries
                .insert((class, entry.pollutant), entry.coefficients)
                .is_some()
            {
                violations.push(Violation::new(
                    path,
                    format!("duplicate entry for ({class}, {})", entry.pollutant),
                ));
            }
        }
        for class in VehicleClass::all() {
            for pollutant in PollutantKind::all() {
                if !entries.contains_key(&(class, pollutant)) {
                    violations.push(Violation::new(
                        "entry",
                        format!("missing entry for ({class}, {pollutant})"),
                    ));
                }
            }
        }
        if !violations.is_empty() {
            return Err(Error::Validation {
                source_name: source_name.to_string(),
                violations,
            });
        }
        let table = Self {
            entries,
            v_min,
            v_max,
        };
        table.check_invariants(source_name)?;
        Ok(table)
    }

    /// Serializes back to the documented file format.
    pub fn to_toml_string(&self) -> String {
        let file = TableFile {
            meta: TableMeta {
                rate_unit: "g/km".into(),
                speed_unit: "km/h".into(),
                v_min_kmh: self.v_min,
                v_max_kmh: self.v_max,
            },
            entries: self
                .entries
                .iter()
                .map(|(&(class, pollutant), &coefficients)| TableEntry {
                    euro_class: class.get(),
                    pollutant,
                    coefficients,
                })
                .collect(),
        };
        toml::to_string(&file).expect("coefficient table serializes")
    }

    pub fn get(
        &self,
        class: VehicleClass,
        pollutant: PollutantKind,
    ) -> Result<&EmissionCoefficients> {
        self.entries
            .get(&(class, pollutant))
            .ok_or_else(|| Error::Config(format!("no coefficients for ({class}, {pollutant})")))
    }

    pub fn speed_domain(&self) -> (f64, f64) {
        (self.v_min, self.v_max)
    }

    fn check_speeds(&self) -> Vec<f64> {
        let n = ((self.v_max - self.v_min) / CHECK_SPEED_STEP_KMH).floor() as usize;
        let mut speeds: Vec<f64> = (0..=n)
            .map(|i| self.v_min + i as f64 * CHECK_SPEED_STEP_KMH)
            .collect();
        if speeds.last().is_none_or(|&v| v < self.v_max) {
            speeds.push(self.v_max);
        }
        speeds
    }

    // Finite and non-negative on the speed domain; dirtier (lower) classes
    // never emit less than cleaner ones at the same speed.
    fn check_invariants(&self, source_name: &str) -> Result<()> {
        let mut violations = Vec::new();
        for pollutant in PollutantKind::all() {
            for v in self.check_speeds() {
                let mut previous: Option<(VehicleClass, f64)> = None;
                for class in VehicleClass::all() {
                    let coeffs = &self.entries[&(class, pollutant)];
                    let raw = coeffs.k / v * coeffs.polynomial(v);
                    if !raw.is_finite() || raw < 0.0 {
                        violations.push(Violation::new(
                            format!("{class}/{pollutant}"),
                            format!("rate {raw} g/km at {v} km/h is not finite and non-negative"),
                        ));
                        continue;
                    }
                    if let Some((prev_class, prev_rate)) = previous {
                        if raw > prev_rate {
                            violations.push(Violation::new(
                                format!("{class}/{pollutant}"),
                                format!(
                                    "rate {raw} g/km exceeds {prev_class} rate {prev_rate} g/km at {v} km/h"
                                ),
                            ));
                        }
                    }
                    previous = Some((class, raw));
                }
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation {
                source_name: source_name.to_string(),
                violations,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class(c: u8) -> VehicleClass {
        VehicleClass::new(c).unwrap()
    }

    #[test]
    fn constant_term_reduces_to_k_a_over_v() {
        let c = EmissionCoefficients::constant(1.0, 60.0);
        assert_eq!(emission_rate_g_per_km(&c, 30.0).unwrap(), 2.0);
    }

    #[test]
    fn linear_term_is_speed_independent() {
        let c = EmissionCoefficients {
            b: 1.0,
            ..EmissionCoefficients::constant(1.0, 0.0)
        };
        for v in [0.5, 7.0, 30.0, 129.0] {
            assert!((emission_rate_g_per_km(&c, v).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_polynomial_matches_hand_evaluation() {
        // (0.5 / 50) * (10 + 0.2*50 + 0.001*50^2) = 0.01 * 22.5
        let c = EmissionCoefficients {
            b: 0.2,
            c: 0.001,
            ..EmissionCoefficients::constant(0.5, 10.0)
        };
        assert!((emission_rate_g_per_km(&c, 50.0).unwrap() - 0.225).abs() < 1e-12);
    }

    #[test]
    fn high_degree_terms_use_their_own_power() {
        // Only g: (1/v) * v^6 = v^5
        let c = EmissionCoefficients {
            g: 1.0,
            ..EmissionCoefficients::constant(1.0, 0.0)
        };
        assert!((emission_rate_g_per_km(&c, 2.0).unwrap() - 32.0).abs() < 1e-12);
        // Only c: (1/v) * v^2 = v
        let c = EmissionCoefficients {
            c: 1.0,
            ..EmissionCoefficients::constant(1.0, 0.0)
        };
        assert!((emission_rate_g_per_km(&c, 3.0).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn non_positive_speed_is_a_domain_error() {
        let c = EmissionCoefficients::constant(1.0, 60.0);
        assert!(matches!(
            emission_rate_g_per_km(&c, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            emission_rate_g_per_km(&c, -3.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            emission_rate_g_per_km(&c, f64::NAN),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn non_finite_result_is_a_model_error() {
        let c = EmissionCoefficients::constant(f64::MAX, f64::MAX);
        assert!(matches!(
            emission_rate_g_per_km(&c, 1.0),
            Err(Error::Model(_))
        ));
    }

    #[test]
    fn negative_polynomial_is_clamped() {
        let c = EmissionCoefficients::constant(1.0, -5.0);
        assert_eq!(emission_rate_g_per_km(&c, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn per_minute_conversion() {
        assert_eq!(to_g_per_min(2.0, 30.0).unwrap(), 1.0);
        assert_eq!(to_g_per_min(1.5, 40.0).unwrap(), 1.0);
        assert_eq!(to_g_per_min(123.0, 0.0).unwrap(), 0.0);
        assert!(to_g_per_min(-1.0, 10.0).is_err());
        assert!(to_g_per_min(1.0, -10.0).is_err());
    }

    #[test]
    fn composed_rate_at_vanishing_speed_tends_to_k_a_over_60() {
        let c = EmissionCoefficients::constant(1.7, 42.0);
        let limit = 1.7 * 42.0 / 60.0;
        let v = 0.001;
        let got = to_g_per_min(emission_rate_g_per_km(&c, v).unwrap(), v).unwrap();
        assert!((got - limit).abs() <= 1e-6 * limit.abs());
    }

    #[test]
    fn vehicle_rate_composes_and_handles_standstill() {
        let mut text = String::from(
            "[meta]\nrate_unit = \"g/km\"\nspeed_unit = \"km/h\"\nv_min_kmh = 1.0\nv_max_kmh = 130.0\n",
        );
        for c in 1..=4 {
            text.push_str(&format!(
                "[[entry]]\neuro_class = {c}\npollutant = \"CO\"\nk = 1.0\na = {}\nb = 0.0\nc = 0.0\nd = 0.0\ne = 0.0\nf = 0.0\ng = 0.0\n",
                60.0 * (5 - c) as f64
            ));
        }
        let table = CoefficientTable::from_toml_str(&text, "inline").unwrap();
        // class 4 has a = 60
        let r = vehicle_emission_rate(class(4), PollutantKind::Co, 30.0, &table).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert_eq!(
            vehicle_emission_rate(class(4), PollutantKind::Co, 0.0, &table).unwrap(),
            0.0
        );
        assert!(vehicle_emission_rate(class(4), PollutantKind::Co, -1.0, &table).is_err());
    }

    #[test]
    fn bundled_table_orders_classes() {
        let table = CoefficientTable::bundled();
        let dirty = vehicle_emission_rate(class(1), PollutantKind::Co, 40.0, &table).unwrap();
        let clean = vehicle_emission_rate(class(4), PollutantKind::Co, 40.0, &table).unwrap();
        assert!(dirty >= clean);
        assert!(clean > 0.0);
    }

    #[test]
    fn table_round_trips_through_text() {
        let table = CoefficientTable::bundled();
        let again = CoefficientTable::from_toml_str(&table.to_toml_string(), "rt").unwrap();
        assert_eq!(table, again);
    }

    #[test]
    fn table_rejects_missing_and_misordered_entries() {
        let base = CoefficientTable::bundled().to_toml_string();
        // Drop the last entry.
        let cut = base.rfind("[[entry]]").unwrap();
        let err = CoefficientTable::from_toml_str(&base[..cut], "cut").unwrap_err();
        assert!(err.to_string().contains("missing entry"), "{err}");

        // Make class 4 dirtier than class 1 by scaling k.
        let mut file: TableFile = toml::from_str(&base).unwrap();
        for e in &mut file.entries {
            if e.euro_class == 4 {
                e.coefficients.k *= 100.0;
            }
        }
        let err =
            CoefficientTable::from_toml_str(&toml::to_string(&file).unwrap(), "swap").unwrap_err();
        assert!(err.to_string().contains("exceeds"), "{err}");
    }

    #[test]
    fn invalid_class_is_rejected() {
        assert!(VehicleClass::new(0).is_err());
        assert!(VehicleClass::new(5).is_err());
        assert_eq!(VehicleClass::new(3).unwrap().get(), 3);
    }
}
