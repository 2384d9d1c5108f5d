//! Population data model: households, neighborhoods, synthetic generation,
//! CSV ingestion and the emergency-day calendar.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use ndarray::Array2;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{IlbError, Result};
use crate::rng::seeded;

pub type HouseholdId = String;

pub const HOURS_PER_DAY: usize = 24;

/// Open bounds applied to every sampled elasticity.
pub const ELASTICITY_FLOOR: f64 = -5.0;
pub const ELASTICITY_CEILING: f64 = -0.01;

/// Column order of [`normalize_features`].
pub const FEATURE_COLUMNS: [&str; 7] = [
    "median_income",
    "unemployment_pct",
    "act_score",
    "college_pct",
    "avg_temperature",
    "precipitation",
    "dwelling_size",
];

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocioEconomicProfile {
    pub median_income: f64,
    pub unemployment_pct: f64,
    pub act_score: f64,
    pub college_pct: f64,
    pub avg_temperature: f64,
    pub precipitation: f64,
    /// Synthetic field; the public datasets carry no dwelling column.
    pub dwelling_size: f64,
}

impl SocioEconomicProfile {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let pct = |name: &str, v: f64| {
            if (0.0..=100.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} = {v} outside [0, 100]"))
            }
        };
        pct("unemployment_pct", self.unemployment_pct)?;
        pct("college_pct", self.college_pct)?;
        if !(1.0..=36.0).contains(&self.act_score) {
            return Err(format!("act_score = {} outside [1, 36]", self.act_score));
        }
        if !(self.dwelling_size > 0.0) {
            return Err(format!("dwelling_size = {} must be > 0", self.dwelling_size));
        }
        let all = [
            self.median_income,
            self.avg_temperature,
            self.precipitation,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err("non-finite profile value".into());
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 7] {
        [
            self.median_income,
            self.unemployment_pct,
            self.act_score,
            self.college_pct,
            self.avg_temperature,
            self.precipitation,
            self.dwelling_size,
        ]
    }
}

/// Hourly kWh readings starting at `start`, whole days only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSeries {
    pub start: NaiveDateTime,
    values: Vec<f64>,
}

impl LoadSeries {
    pub fn new(start: NaiveDateTime, values: Vec<f64>) -> std::result::Result<Self, String> {
        if values.is_empty() || values.len() % HOURS_PER_DAY != 0 {
            return Err(format!(
                "load length {} is not a positive multiple of 24",
                values.len()
            ));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(format!("hour {pos} has invalid kWh {}", values[pos]));
        }
        Ok(Self { start, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn days(&self) -> usize {
        self.values.len() / HOURS_PER_DAY
    }

    pub fn day(&self, d: usize) -> &[f64] {
        &self.values[d * HOURS_PER_DAY..(d + 1) * HOURS_PER_DAY]
    }

    /// X_d: total kWh on day `d`.
    pub fn daily_total(&self, d: usize) -> f64 {
        self.day(d).iter().sum()
    }

    pub(crate) fn from_parts_unchecked(start: NaiveDateTime, values: Vec<f64>) -> Self {
        Self { start, values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Household {
    pub id: HouseholdId,
    pub neighborhood_id: String,
    pub county: String,
    pub load: LoadSeries,
    /// Price elasticity of demand, strictly negative.
    pub elasticity: f64,
    /// $/kWh
    pub baseline_rate: f64,
    pub profile: SocioEconomicProfile,
}

impl Household {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.elasticity < 0.0) {
            return Err(format!("elasticity {} must be negative", self.elasticity));
        }
        if !(self.baseline_rate > 0.0) {
            return Err(format!("baseline_rate {} must be positive", self.baseline_rate));
        }
        self.profile.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub id: String,
    pub county: String,
    pub members: Vec<HouseholdId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Community {
    pub households: Vec<Household>,
    pub neighborhoods: Vec<Neighborhood>,
    pub counties: Vec<String>,
}

impl Community {
    /// Builds a community, deriving the neighborhood partition from each
    /// household's `neighborhood_id` in order of first appearance.
    pub fn from_households(households: Vec<Household>) -> Result<Self> {
        let mut neighborhoods: Vec<Neighborhood> = Vec::new();
        let mut slot: HashMap<String, usize> = HashMap::new();
        let mut counties: Vec<String> = Vec::new();
        for h in &households {
            let idx = *slot.entry(h.neighborhood_id.clone()).or_insert_with(|| {
                neighborhoods.push(Neighborhood {
                    id: h.neighborhood_id.clone(),
                    county: h.county.clone(),
                    members: Vec::new(),
                });
                neighborhoods.len() - 1
            });
            neighborhoods[idx].members.push(h.id.clone());
            if !counties.contains(&h.county) {
                counties.push(h.county.clone());
            }
        }
        let community = Self {
            households,
            neighborhoods,
            counties,
        };
        community.validate()?;
        Ok(community)
    }

    pub fn len(&self) -> usize {
        self.households.len()
    }

    pub fn is_empty(&self) -> bool {
        self.households.is_empty()
    }

    pub fn ids(&self) -> Vec<HouseholdId> {
        self.households.iter().map(|h| h.id.clone()).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.households.iter().position(|h| h.id == id)
    }

    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.households
            .iter()
            .enumerate()
            .map(|(i, h)| (h.id.as_str(), i))
            .collect()
    }

    /// Hours covered by every household (shortest series).
    pub fn common_hours(&self) -> usize {
        self.households.iter().map(|h| h.load.len()).min().unwrap_or(0)
    }

    /// Checks the partition invariant and per-household invariants.
    pub fn validate(&self) -> Result<()> {
        let mut seen: HashSet<&str> = HashSet::new();
        for (row, h) in self.households.iter().enumerate() {
            if !seen.insert(h.id.as_str()) {
                return Err(IlbError::ReferentialIntegrity(format!(
                    "duplicate household id {}",
                    h.id
                )));
            }
            h.validate()
                .map_err(|message| IlbError::Validation { row: row + 1, message })?;
        }
        let mut covered: HashSet<&str> = HashSet::new();
        let mut total = 0;
        for nb in &self.neighborhoods {
            for m in &nb.members {
                if !seen.contains(m.as_str()) {
                    return Err(IlbError::ReferentialIntegrity(format!(
                        "neighborhood {} lists unknown household {m}",
                        nb.id
                    )));
                }
                if !covered.insert(m.as_str()) {
                    return Err(IlbError::ReferentialIntegrity(format!(
                        "household {m} belongs to more than one neighborhood"
                    )));
                }
                total += 1;
            }
        }
        if total != self.households.len() {
            return Err(IlbError::ReferentialIntegrity(format!(
                "neighborhoods cover {total} of {} households",
                self.households.len()
            )));
        }
        for h in &self.households {
            let nb = self
                .neighborhoods
                .iter()
                .find(|nb| nb.id == h.neighborhood_id)
                .ok_or_else(|| {
                    IlbError::ReferentialIntegrity(format!(
                        "household {} references unknown neighborhood {}",
                        h.id, h.neighborhood_id
                    ))
                })?;
            if !nb.members.contains(&h.id) {
                return Err(IlbError::ReferentialIntegrity(format!(
                    "household {} missing from its neighborhood {}",
                    h.id, h.neighborhood_id
                )));
            }
        }
        Ok(())
    }
}

/// One billing cycle and the scenario knobs of an ILB run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub cycle_days: usize,
    pub emergency_days: Vec<usize>,
    pub target_reduction_pct: f64,
    pub default_incentive: f64,
    pub elasticity_mean: f64,
    pub elasticity_std: f64,
    pub rng_seed: u64,
    pub split_ratios: [f64; 3],
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            cycle_days: 30,
            emergency_days: Vec::new(),
            target_reduction_pct: 10.0,
            default_incentive: 100.0,
            elasticity_mean: -0.25,
            elasticity_std: 0.1,
            rng_seed: 1,
            split_ratios: [0.7, 0.2, 0.1],
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cycle_days == 0 {
            return Err(IlbError::InvalidSpec("cycle_days must be >= 1".into()));
        }
        if let Some(d) = self.emergency_days.iter().find(|d| **d >= self.cycle_days) {
            return Err(IlbError::InvalidSpec(format!(
                "emergency day {d} outside cycle of {} days",
                self.cycle_days
            )));
        }
        if self.emergency_days.windows(2).any(|w| w[0] >= w[1]) {
            return Err(IlbError::InvalidSpec(
                "emergency days must be strictly increasing".into(),
            ));
        }
        if !(self.target_reduction_pct > 0.0 && self.target_reduction_pct < 100.0) {
            return Err(IlbError::InvalidSpec(format!(
                "target_reduction_pct {} outside (0, 100)",
                self.target_reduction_pct
            )));
        }
        if !(self.default_incentive >= 0.0) {
            return Err(IlbError::InvalidSpec("default_incentive must be >= 0".into()));
        }
        if !(self.elasticity_mean < 0.0) || !(self.elasticity_std >= 0.0) {
            return Err(IlbError::InvalidSpec(
                "elasticity mean must be negative and std non-negative".into(),
            ));
        }
        if self.split_ratios.iter().any(|r| !(*r > 0.0))
            || (self.split_ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(IlbError::InvalidSpec(format!(
                "split ratios {:?} must be positive and sum to 1",
                self.split_ratios
            )));
        }
        Ok(())
    }
}

/// Size and behavior parameters for [`generate_community`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommunitySpec {
    pub counties: usize,
    pub neighborhoods_per_county: usize,
    pub households_per_neighborhood: usize,
    /// Length of each generated load series.
    pub days: usize,
    pub elasticity_mean: f64,
    pub elasticity_std: f64,
    /// Two well-separated household regimes instead of one population.
    pub planted: Option<PlantedRegimes>,
}

impl Default for CommunitySpec {
    fn default() -> Self {
        Self {
            counties: 5,
            neighborhoods_per_county: 1,
            households_per_neighborhood: 50,
            days: 30,
            elasticity_mean: -0.25,
            elasticity_std: 0.1,
            planted: None,
        }
    }
}

/// Planted-partition benchmark: half of each neighborhood is flexible
/// (strongly elastic), half is rigid, and the two halves differ in profile
/// and daily load shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRegimes {
    pub flexible_elasticity_mean: f64,
    pub rigid_elasticity_mean: f64,
    pub elasticity_std: f64,
}

impl Default for PlantedRegimes {
    fn default() -> Self {
        Self {
            flexible_elasticity_mean: -0.6,
            rigid_elasticity_mean: -0.03,
            elasticity_std: 0.01,
        }
    }
}

impl CommunitySpec {
    pub fn household_count(&self) -> usize {
        self.counties * self.neighborhoods_per_county * self.households_per_neighborhood
    }

    pub fn validate(&self) -> Result<()> {
        if self.counties == 0
            || self.neighborhoods_per_county == 0
            || self.households_per_neighborhood == 0
            || self.days == 0
        {
            return Err(IlbError::InvalidSpec(
                "county, neighborhood, household and day counts must all be >= 1".into(),
            ));
        }
        if !(self.elasticity_mean < 0.0) || !(self.elasticity_std >= 0.0) {
            return Err(IlbError::InvalidSpec(
                "elasticity mean must be negative and std non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Forces a raw elasticity draw into the bounded negative range.
pub fn clamp_elasticity(raw: f64) -> f64 {
    raw.clamp(ELASTICITY_FLOOR, ELASTICITY_CEILING)
}

/// Gaussian elasticity draw, clamped to `[-5.0, -0.01]`.
pub fn sample_elasticity<R: Rng + ?Sized>(rng: &mut R, mean: f64, std: f64) -> Result<f64> {
    if !(mean < 0.0) {
        return Err(IlbError::InvalidSpec(format!(
            "elasticity mean {mean} must be negative"
        )));
    }
    if !(std >= 0.0) {
        return Err(IlbError::InvalidSpec(format!(
            "elasticity std {std} must be non-negative"
        )));
    }
    let normal = Normal::new(mean, std).map_err(|e| IlbError::InvalidSpec(e.to_string()))?;
    Ok(clamp_elasticity(normal.sample(rng)))
}

/// Sorted, distinct emergency days drawn uniformly from `[0, cycle_days)`.
pub fn emergency_schedule<R: Rng + ?Sized>(
    cycle_days: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if count > cycle_days {
        return Err(IlbError::InvalidSpec(format!(
            "{count} emergency days requested in a {cycle_days}-day cycle"
        )));
    }
    let mut days = index::sample(rng, cycle_days, count).into_vec();
    days.sort_unstable();
    Ok(days)
}

pub fn default_series_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2014, 9, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid constant date")
}

struct CountyDraw {
    name: String,
    income: f64,
    unemployment: f64,
    act: f64,
    college: f64,
    temperature: f64,
    precipitation: f64,
    rate: f64,
    /// Day-level weather multiplier shared by the county.
    weather: Vec<f64>,
}

/// Deterministic synthetic community.
///
/// County-level socio-economic columns mirror the public datasets; income
/// and dwelling size vary per household. Loads are a two-peak daily shape
/// (morning and evening) scaled by dwelling size and income, modulated by a
/// county weather factor, with Gaussian hourly noise truncated at zero.
pub fn generate_community(spec: &CommunitySpec, seed: u64) -> Result<Community> {
    spec.validate()?;
    let mut rng = seeded(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let start = default_series_start();

    let mut counties = Vec::with_capacity(spec.counties);
    for c in 0..spec.counties {
        let temperature = 15.0 + 6.0 * unit.sample(&mut rng);
        let weather = (0..spec.days)
            .map(|d| {
                let seasonal = 0.06 * (std::f64::consts::TAU * d as f64 / 7.0).sin();
                (1.0 + seasonal + 0.05 * unit.sample(&mut rng)).max(0.5)
            })
            .collect();
        counties.push(CountyDraw {
            name: format!("county-{:02}", c + 1),
            income: (60_000.0 + 15_000.0 * unit.sample(&mut rng)).max(20_000.0),
            unemployment: rng.random_range(3.0..10.0),
            act: (21.0 + 2.5 * unit.sample(&mut rng)).clamp(1.0, 36.0),
            college: rng.random_range(40.0..75.0),
            temperature,
            precipitation: rng.random_range(20.0..120.0),
            rate: (rng.random_range(0.12..0.20) * 1000.0_f64).round() / 1000.0,
            weather,
        });
    }

    let mut households = Vec::with_capacity(spec.household_count());
    for county in &counties {
        for nb in 0..spec.neighborhoods_per_county {
            let nb_id = format!("{}-nb{:02}", county.name, nb + 1);
            let size = spec.households_per_neighborhood;
            // Regime per member: rigid for a seeded half of the neighborhood.
            let rigid: Vec<bool> = match spec.planted {
                Some(_) => {
                    let picks = index::sample(&mut rng, size, size / 2).into_vec();
                    let mut flags = vec![false; size];
                    for p in picks {
                        flags[p] = true;
                    }
                    flags
                }
                None => vec![false; size],
            };
            for (k, is_rigid) in rigid.into_iter().enumerate() {
                let id = format!("{nb_id}-h{:03}", k + 1);
                let household = synth_household(
                    &mut rng, spec, county, &nb_id, id, start, is_rigid, &unit,
                )?;
                households.push(household);
            }
        }
    }
    Community::from_households(households)
}

#[allow(clippy::too_many_arguments)]
fn synth_household<R: Rng>(
    rng: &mut R,
    spec: &CommunitySpec,
    county: &CountyDraw,
    nb_id: &str,
    id: String,
    start: NaiveDateTime,
    rigid: bool,
    unit: &Normal<f64>,
) -> Result<Household> {
    let (income_shift, dwelling_shift, evening_peak) = match (&spec.planted, rigid) {
        (Some(_), true) => (1.6, 1.5, 13.0),
        (Some(_), false) => (0.8, 0.85, 20.0),
        (None, _) => (1.0, 1.0, 19.0),
    };
    let income = (county.income * income_shift * (1.0 + 0.15 * unit.sample(rng))).max(10_000.0);
    let dwelling = (150.0 * dwelling_shift * (1.0 + 0.25 * unit.sample(rng))).max(30.0);
    let elasticity = match &spec.planted {
        Some(p) if rigid => sample_elasticity(rng, p.rigid_elasticity_mean, p.elasticity_std)?,
        Some(p) => sample_elasticity(rng, p.flexible_elasticity_mean, p.elasticity_std)?,
        None => sample_elasticity(rng, spec.elasticity_mean, spec.elasticity_std)?,
    };

    let daily_kwh = 28.0 * (dwelling / 150.0).powf(0.6) * (income / 60_000.0).powf(0.25);
    let evening = evening_peak + 0.7 * unit.sample(rng);
    let morning = 8.0 + 0.7 * unit.sample(rng);
    let a_evening = rng.random_range(0.25..0.45);
    let a_morning = rng.random_range(0.10..0.25);
    let tau = std::f64::consts::TAU;
    let mut shape: Vec<f64> = (0..HOURS_PER_DAY)
        .map(|h| {
            let h = h as f64;
            1.0 + a_evening * (tau * (h - evening) / 24.0).cos()
                + a_morning * (2.0 * tau * (h - morning) / 24.0).cos()
        })
        .collect();
    let total: f64 = shape.iter().sum();
    for s in &mut shape {
        *s *= daily_kwh / total;
    }

    let mut values = Vec::with_capacity(spec.days * HOURS_PER_DAY);
    for d in 0..spec.days {
        let day_factor = county.weather[d];
        for mean in &shape {
            let m = mean * day_factor;
            values.push((m + 0.08 * m * unit.sample(rng)).max(0.0));
        }
    }

    Ok(Household {
        neighborhood_id: nb_id.to_string(),
        county: county.name.clone(),
        load: LoadSeries::from_parts_unchecked(start, values),
        elasticity,
        baseline_rate: county.rate,
        profile: SocioEconomicProfile {
            median_income: income,
            unemployment_pct: county.unemployment,
            act_score: county.act,
            college_pct: county.college,
            avg_temperature: county.temperature,
            precipitation: county.precipitation,
            dwelling_size: dwelling,
        },
        id,
    })
}

/// Z-scores each socio-economic column (population standard deviation).
/// Constant columns map to zeros. Columns follow [`FEATURE_COLUMNS`].
pub fn normalize_features(community: &Community) -> Result<Array2<f64>> {
    let n = community.len();
    if n < 2 {
        return Err(IlbError::InsufficientPopulation { needed: 2, got: n });
    }
    let mut out = Array2::zeros((n, FEATURE_COLUMNS.len()));
    for (i, h) in community.households.iter().enumerate() {
        for (j, v) in h.profile.as_array().into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    for mut col in out.columns_mut() {
        zscore_in_place(&mut col);
    }
    Ok(out)
}

fn zscore_in_place(col: &mut ndarray::ArrayViewMut1<'_, f64>) {
    let n = col.len() as f64;
    let mean = col.sum() / n;
    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= 1e-12 * mean.abs().max(1.0) {
        col.fill(0.0);
    } else {
        col.mapv_inplace(|v| (v - mean) / std);
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct HouseholdRow {
    id: String,
    neighborhood_id: String,
    county: String,
    baseline_rate: f64,
    elasticity: f64,
    median_income: f64,
    unemployment_pct: f64,
    act_score: f64,
    college_pct: f64,
    avg_temperature: f64,
    precipitation: f64,
    dwelling_size: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct LoadRow {
    id: String,
    timestamp_iso8601: String,
    kwh: f64,
}

fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let trimmed = raw.trim().trim_end_matches('Z');
    NaiveDateTime::parse_from_str(trimmed, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(trimmed, "%Y-%m-%dT%H:%M"))
        .ok()
}

/// Reads `households.csv` and `loads.csv` into a validated community.
pub fn load_community(households_csv: &Path, loads_csv: &Path) -> Result<Community> {
    let mut reader = csv::Reader::from_path(households_csv)?;
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<HouseholdRow>().enumerate() {
        let row = rec.map_err(|e| IlbError::Validation {
            row: i + 1,
            message: format!("{}: {e}", households_csv.display()),
        })?;
        rows.push(row);
    }

    let mut loads: BTreeMap<String, Vec<(NaiveDateTime, f64)>> = BTreeMap::new();
    let mut reader = csv::Reader::from_path(loads_csv)?;
    for (i, rec) in reader.deserialize::<LoadRow>().enumerate() {
        let row_no = i + 1;
        let row = rec.map_err(|e| IlbError::Validation {
            row: row_no,
            message: format!("{}: {e}", loads_csv.display()),
        })?;
        if !row.kwh.is_finite() || row.kwh < 0.0 {
            return Err(IlbError::Validation {
                row: row_no,
                message: format!(
                    "{}: kwh {} for household {} must be finite and >= 0",
                    loads_csv.display(),
                    row.kwh,
                    row.id
                ),
            });
        }
        let ts = parse_timestamp(&row.timestamp_iso8601).ok_or_else(|| IlbError::Validation {
            row: row_no,
            message: format!("unparseable timestamp {:?}", row.timestamp_iso8601),
        })?;
        loads.entry(row.id).or_default().push((ts, row.kwh));
    }

    let known: HashSet<&str> = rows.iter().map(|r| r.id.as_str()).collect();
    if let Some(orphan) = loads.keys().find(|k| !known.contains(k.as_str())) {
        return Err(IlbError::ReferentialIntegrity(format!(
            "load rows reference unknown household {orphan}"
        )));
    }

    let mut households = Vec::with_capacity(rows.len());
    for (i, row) in rows.into_iter().enumerate() {
        let mut series = loads.remove(&row.id).ok_or_else(|| {
            IlbError::ReferentialIntegrity(format!("household {} has no load rows", row.id))
        })?;
        series.sort_by_key(|(ts, _)| *ts);
        let start = series[0].0;
        for (k, (ts, _)) in series.iter().enumerate() {
            if *ts != start + Duration::hours(k as i64) {
                return Err(IlbError::Validation {
                    row: i + 1,
                    message: format!(
                        "household {} load is not contiguous hourly at {ts}",
                        row.id
                    ),
                });
            }
        }
        let load = LoadSeries::new(start, series.into_iter().map(|(_, v)| v).collect())
            .map_err(|message| IlbError::Validation {
                row: i + 1,
                message: format!("household {}: {message}", row.id),
            })?;
        households.push(Household {
            id: row.id,
            neighborhood_id: row.neighborhood_id,
            county: row.county,
            load,
            elasticity: row.elasticity,
            baseline_rate: row.baseline_rate,
            profile: SocioEconomicProfile {
                median_income: row.median_income,
                unemployment_pct: row.unemployment_pct,
                act_score: row.act_score,
                college_pct: row.college_pct,
                avg_temperature: row.avg_temperature,
                precipitation: row.precipitation,
                dwelling_size: row.dwelling_size,
            },
        });
    }
    Community::from_households(households)
}

/// Writes the two CSV files read by [`load_community`].
pub fn write_community(community: &Community, households_csv: &Path, loads_csv: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(households_csv)?;
    for h in &community.households {
        w.serialize(HouseholdRow {
            id: h.id.clone(),
            neighborhood_id: h.neighborhood_id.clone(),
            county: h.county.clone(),
            baseline_rate: h.baseline_rate,
            elasticity: h.elasticity,
            median_income: h.profile.median_income,
            unemployment_pct: h.profile.unemployment_pct,
            act_score: h.profile.act_score,
            college_pct: h.profile.college_pct,
            avg_temperature: h.profile.avg_temperature,
            precipitation: h.profile.precipitation,
            dwelling_size: h.profile.dwelling_size,
        })?;
    }
    w.flush().map_err(|e| IlbError::io(households_csv, e))?;

    let file = File::create(loads_csv).map_err(|e| IlbError::io(loads_csv, e))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "id,timestamp_iso8601,kwh").map_err(|e| IlbError::io(loads_csv, e))?;
    for h in &community.households {
        for (k, v) in h.load.values().iter().enumerate() {
            let ts = h.load.start + Duration::hours(k as i64);
            writeln!(out, "{},{},{}", h.id, ts.format(TIMESTAMP_FORMAT), v)
                .map_err(|e| IlbError::io(loads_csv, e))?;
        }
    }
    out.flush().map_err(|e| IlbError::io(loads_csv, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> CommunitySpec {
        CommunitySpec {
            counties: 1,
            neighborhoods_per_county: 1,
            households_per_neighborhood: 1,
            days: 2,
            ..Default::default()
        }
    }

    #[test]
    fn minimal_community() {
        let c = generate_community(&tiny_spec(), 7).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.neighborhoods.len(), 1);
        assert_eq!(c.households[0].load.len(), 48);
    }

    #[test]
    fn state_scale_community() {
        let spec = CommunitySpec {
            days: 3,
            ..Default::default()
        };
        let c = generate_community(&spec, 1).unwrap();
        assert_eq!(c.len(), 250);
        assert_eq!(c.neighborhoods.len(), 5);
        assert_eq!(c.counties.len(), 5);
        let covered: usize = c.neighborhoods.iter().map(|n| n.members.len()).sum();
        assert_eq!(covered, 250);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = CommunitySpec {
            counties: 2,
            households_per_neighborhood: 4,
            days: 3,
            ..Default::default()
        };
        let a = generate_community(&spec, 99).unwrap();
        let b = generate_community(&spec, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&b).unwrap()
        );
        let c = generate_community(&spec, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_counts_rejected() {
        let spec = CommunitySpec {
            counties: 0,
            ..tiny_spec()
        };
        assert!(matches!(
            generate_community(&spec, 1),
            Err(IlbError::InvalidSpec(_))
        ));
    }

    #[test]
    fn elasticity_zero_variance() {
        let mut rng = seeded(3);
        assert_eq!(sample_elasticity(&mut rng, -0.25, 0.0).unwrap(), -0.25);
    }

    #[test]
    fn elasticity_sample_mean() {
        let mut rng = seeded(11);
        let n = 100_000;
        let sum: f64 = (0..n)
            .map(|_| sample_elasticity(&mut rng, -0.25, 0.1).unwrap())
            .sum();
        assert!((sum / n as f64 + 0.25).abs() < 0.01);
    }

    #[test]
    fn elasticity_clamp_boundary() {
        assert_eq!(clamp_elasticity(0.3), -0.01);
        assert_eq!(clamp_elasticity(-9.0), -5.0);
        assert_eq!(clamp_elasticity(-0.3), -0.3);
    }

    #[test]
    fn elasticity_rejects_non_negative_mean() {
        let mut rng = seeded(1);
        assert!(sample_elasticity(&mut rng, 0.0, 0.1).is_err());
        assert!(sample_elasticity(&mut rng, 0.2, 0.1).is_err());
    }

    #[test]
    fn zscore_hand_values() {
        let mut col = ndarray::arr1(&[10.0, 20.0, 30.0]);
        zscore_in_place(&mut col.view_mut());
        let expect = [-1.224_744_871_391_589, 0.0, 1.224_744_871_391_589];
        for (a, b) in col.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut flat = ndarray::arr1(&[5.0, 5.0, 5.0]);
        zscore_in_place(&mut flat.view_mut());
        assert!(flat.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn normalize_needs_two_households() {
        let c = generate_community(&tiny_spec(), 7).unwrap();
        assert!(matches!(
            normalize_features(&c),
            Err(IlbError::InsufficientPopulation { .. })
        ));
    }

    #[test]
    fn schedule_cases() {
        let mut rng = seeded(11);
        let days = emergency_schedule(30, 3, &mut rng).unwrap();
        assert_eq!(days.len(), 3);
        assert!(days.windows(2).all(|w| w[0] < w[1]));
        assert!(days.iter().all(|d| *d < 30));
        assert!(emergency_schedule(30, 0, &mut rng).unwrap().is_empty());
        assert_eq!(
            emergency_schedule(30, 30, &mut rng).unwrap(),
            (0..30).collect::<Vec<_>>()
        );
        assert!(emergency_schedule(30, 31, &mut rng).is_err());
        let again = emergency_schedule(30, 3, &mut seeded(11)).unwrap();
        assert_eq!(days, again);
    }

    #[test]
    fn planted_regimes_split_each_neighborhood() {
        let spec = CommunitySpec {
            counties: 2,
            households_per_neighborhood: 10,
            days: 2,
            planted: Some(PlantedRegimes::default()),
            ..Default::default()
        };
        let c = generate_community(&spec, 5).unwrap();
        for nb in &c.neighborhoods {
            let rigid = nb
                .members
                .iter()
                .filter(|m| c.households[c.index_of(m).unwrap()].elasticity > -0.2)
                .count();
            assert_eq!(rigid, 5);
        }
    }

    #[test]
    fn load_series_rejects_partial_days() {
        assert!(LoadSeries::new(default_series_start(), vec![1.0; 23]).is_err());
        assert!(LoadSeries::new(default_series_start(), vec![-1.0; 24]).is_err());
        assert!(LoadSeries::new(default_series_start(), vec![1.0; 24]).is_ok());
    }
}
