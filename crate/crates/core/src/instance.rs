//! Problem data: facilities, tasks, scenarios, and the first-stage assignment.
//!
//! Instances are plain values. They are built by [`generate`], parsed from
//! JSON with [`Instance::from_file`] / [`Instance::from_json_str`], or written
//! directly in tests. Times are integers, capacities and consumptions are
//! integers, probabilities and assignment costs are `f64`.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};
use thiserror::Error;

/// Tolerance on the sum of scenario probabilities.
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed instance: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed field `{field}`: {reason}")]
    Field { field: String, reason: String },
    #[error("invalid instance: {0}")]
    Invalid(String),
}

fn field_err(field: impl Into<String>, reason: impl Into<String>) -> InstanceError {
    InstanceError::Field {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub probability: f64,
    /// `processing[i][j]`: processing time of task `j` on facility `i`.
    pub processing: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub num_facilities: usize,
    pub num_tasks: usize,
    pub capacity: Vec<i64>,
    pub release: Vec<i64>,
    /// `None` is an open (infinite) deadline.
    pub deadline: Vec<Option<i64>>,
    pub due_date: Option<Vec<i64>>,
    /// `consumption[i][j]`
    pub consumption: Vec<Vec<i64>>,
    /// `assign_cost[i][j]`
    pub assign_cost: Option<Vec<Vec<f64>>>,
    pub scenarios: Vec<Scenario>,
}

impl Instance {
    pub fn num_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    pub fn processing(&self, scenario: usize, facility: usize, task: usize) -> i64 {
        self.scenarios[scenario].processing[facility][task]
    }

    /// Smallest processing time of `task` on `facility` over all scenarios.
    pub fn min_processing(&self, facility: usize, task: usize) -> i64 {
        self.scenarios
            .iter()
            .map(|s| s.processing[facility][task])
            .min()
            .unwrap_or(0)
    }

    /// Largest processing time of `task` over every facility and scenario.
    pub fn max_processing(&self, task: usize) -> i64 {
        self.scenarios
            .iter()
            .flat_map(|s| s.processing.iter().map(move |row| row[task]))
            .max()
            .unwrap_or(0)
    }

    /// Latest and earliest release time over all tasks.
    pub fn release_spread(&self) -> (i64, i64) {
        let hi = self.release.iter().copied().max().unwrap_or(0);
        let lo = self.release.iter().copied().min().unwrap_or(0);
        (hi, lo)
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        let (m, n) = (self.num_facilities, self.num_tasks);
        if m == 0 || n == 0 {
            return Err(InstanceError::Invalid(
                "at least one facility and one task are required".into(),
            ));
        }
        if self.scenarios.is_empty() {
            return Err(InstanceError::Invalid("no scenarios".into()));
        }
        check_len("capacity", self.capacity.len(), m)?;
        check_len("release", self.release.len(), n)?;
        check_len("deadline", self.deadline.len(), n)?;
        if let Some(d) = &self.due_date {
            check_len("due_date", d.len(), n)?;
            if d.iter().any(|&v| v < 0) {
                return Err(InstanceError::Invalid("negative due date".into()));
            }
        }
        check_matrix("consumption", &self.consumption, m, n)?;
        if let Some(cost) = &self.assign_cost {
            check_matrix("assign_cost", cost, m, n)?;
            if cost.iter().flatten().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(InstanceError::Invalid(
                    "assignment costs must be finite and nonnegative".into(),
                ));
            }
        }
        for (i, &k) in self.capacity.iter().enumerate() {
            if k < 1 {
                return Err(InstanceError::Invalid(format!(
                    "capacity of facility {i} must be positive"
                )));
            }
            for (j, &c) in self.consumption[i].iter().enumerate() {
                if c < 1 || c > k {
                    return Err(InstanceError::Invalid(format!(
                        "consumption[{i}][{j}] = {c} outside [1, {k}]"
                    )));
                }
            }
        }
        if self.release.iter().any(|&r| r < 0) {
            return Err(InstanceError::Invalid("negative release time".into()));
        }
        let mut total = 0.0;
        for (w, s) in self.scenarios.iter().enumerate() {
            if !(s.probability >= 0.0) || !s.probability.is_finite() {
                return Err(InstanceError::Invalid(format!(
                    "scenario {w} has invalid probability {}",
                    s.probability
                )));
            }
            total += s.probability;
            check_matrix(&format!("scenarios[{w}].processing"), &s.processing, m, n)?;
            if s.processing.iter().flatten().any(|&p| p < 1) {
                return Err(InstanceError::Invalid(format!(
                    "scenario {w} has a processing time below 1"
                )));
            }
        }
        if (total - 1.0).abs() > PROBABILITY_SUM_TOL {
            return Err(InstanceError::Invalid(format!(
                "scenario probabilities sum to {total}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn to_json_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("facilities".into(), json!(self.num_facilities));
        obj.insert("tasks".into(), json!(self.num_tasks));
        obj.insert("capacity".into(), json!(self.capacity));
        obj.insert("release".into(), json!(self.release));
        obj.insert("deadline".into(), json!(self.deadline));
        if let Some(d) = &self.due_date {
            obj.insert("due_date".into(), json!(d));
        }
        obj.insert("consumption".into(), json!(self.consumption));
        if let Some(c) = &self.assign_cost {
            let rows: Vec<Vec<String>> = c
                .iter()
                .map(|row| row.iter().map(|v| format_decimal(*v)).collect())
                .collect();
            obj.insert("assign_cost".into(), json!(rows));
        }
        let scenarios: Vec<Value> = self
            .scenarios
            .iter()
            .map(|s| {
                json!({
                    "probability": format_decimal(s.probability),
                    "processing": s.processing,
                })
            })
            .collect();
        obj.insert("scenarios".into(), Value::Array(scenarios));
        Value::Object(obj)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("instance serializes")
    }

    pub fn to_file(&self, path: impl AsRef<Path>) -> Result<(), InstanceError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|source| InstanceError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, InstanceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| InstanceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self, InstanceError> {
        let value: Value = serde_json::from_str(text)?;
        let obj = value
            .as_object()
            .ok_or_else(|| field_err("<root>", "expected a JSON object"))?;
        let num_facilities = get_usize(obj, "facilities")?;
        let num_tasks = get_usize(obj, "tasks")?;
        let capacity = get_int_vec(obj, "capacity")?;
        let release = get_int_vec(obj, "release")?;
        let deadline = match obj.get("deadline") {
            None | Some(Value::Null) => vec![None; num_tasks],
            Some(v) => v
                .as_array()
                .ok_or_else(|| field_err("deadline", "expected an array"))?
                .iter()
                .enumerate()
                .map(|(j, d)| match d {
                    Value::Null => Ok(None),
                    _ => d
                        .as_i64()
                        .map(Some)
                        .ok_or_else(|| field_err(format!("deadline[{j}]"), "expected integer or null")),
                })
                .collect::<Result<Vec<_>, _>>()?,
        };
        let due_date = match obj.get("due_date") {
            None | Some(Value::Null) => None,
            Some(_) => Some(get_int_vec(obj, "due_date")?),
        };
        let consumption = get_int_matrix(obj.get("consumption"), "consumption")?;
        let assign_cost = match obj.get("assign_cost") {
            None | Some(Value::Null) => None,
            Some(v) => Some(get_decimal_matrix(v, "assign_cost")?),
        };
        let scen_values = obj
            .get("scenarios")
            .ok_or_else(|| field_err("scenarios", "missing"))?
            .as_array()
            .ok_or_else(|| field_err("scenarios", "expected an array"))?;
        let mut scenarios = Vec::with_capacity(scen_values.len());
        for (w, sv) in scen_values.iter().enumerate() {
            let name = format!("scenarios[{w}]");
            let so = sv
                .as_object()
                .ok_or_else(|| field_err(&name, "expected an object"))?;
            let probability = parse_decimal(
                so.get("probability")
                    .ok_or_else(|| field_err(format!("{name}.probability"), "missing"))?,
                &format!("{name}.probability"),
            )?;
            let processing =
                get_int_matrix(so.get("processing"), &format!("{name}.processing"))?;
            scenarios.push(Scenario {
                probability,
                processing,
            });
        }
        let inst = Instance {
            num_facilities,
            num_tasks,
            capacity,
            release,
            deadline,
            due_date,
            consumption,
            assign_cost,
            scenarios,
        };
        inst.validate()?;
        Ok(inst)
    }
}

fn check_len(field: &str, got: usize, want: usize) -> Result<(), InstanceError> {
    if got != want {
        return Err(field_err(field, format!("length {got}, expected {want}")));
    }
    Ok(())
}

fn check_matrix<T>(field: &str, m: &[Vec<T>], rows: usize, cols: usize) -> Result<(), InstanceError> {
    check_len(field, m.len(), rows)?;
    for (i, row) in m.iter().enumerate() {
        check_len(&format!("{field}[{i}]"), row.len(), cols)?;
    }
    Ok(())
}

/// Shortest decimal text that parses back to the same `f64`.
fn format_decimal(v: f64) -> String {
    format!("{v}")
}

fn parse_decimal(v: &Value, field: &str) -> Result<f64, InstanceError> {
    match v {
        Value::String(s) => s
            .trim()
            .parse::<f64>()
            .map_err(|e| field_err(field, format!("not a decimal: {e}"))),
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| field_err(field, "not representable")),
        _ => Err(field_err(field, "expected a decimal string")),
    }
}

fn get_usize(obj: &Map<String, Value>, key: &str) -> Result<usize, InstanceError> {
    obj.get(key)
        .ok_or_else(|| field_err(key, "missing"))?
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| field_err(key, "expected a nonnegative integer"))
}

fn int_array(v: &Value, field: &str) -> Result<Vec<i64>, InstanceError> {
    v.as_array()
        .ok_or_else(|| field_err(field, "expected an array"))?
        .iter()
        .enumerate()
        .map(|(k, e)| {
            e.as_i64()
                .ok_or_else(|| field_err(format!("{field}[{k}]"), "expected an integer"))
        })
        .collect()
}

fn get_int_vec(obj: &Map<String, Value>, key: &str) -> Result<Vec<i64>, InstanceError> {
    int_array(obj.get(key).ok_or_else(|| field_err(key, "missing"))?, key)
}

fn get_int_matrix(v: Option<&Value>, field: &str) -> Result<Vec<Vec<i64>>, InstanceError> {
    v.ok_or_else(|| field_err(field, "missing"))?
        .as_array()
        .ok_or_else(|| field_err(field, "expected an array of arrays"))?
        .iter()
        .enumerate()
        .map(|(i, row)| int_array(row, &format!("{field}[{i}]")))
        .collect()
}

fn get_decimal_matrix(v: &Value, field: &str) -> Result<Vec<Vec<f64>>, InstanceError> {
    v.as_array()
        .ok_or_else(|| field_err(field, "expected an array of arrays"))?
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.as_array()
                .ok_or_else(|| field_err(format!("{field}[{i}]"), "expected an array"))?
                .iter()
                .enumerate()
                .map(|(j, e)| parse_decimal(e, &format!("{field}[{i}][{j}]")))
                .collect()
        })
        .collect()
}

/// First-stage decision: the facility of every task.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    pub facility_of: Vec<usize>,
}

impl Assignment {
    pub fn new(facility_of: Vec<usize>) -> Self {
        Self { facility_of }
    }

    pub fn is_assigned(&self, facility: usize, task: usize) -> bool {
        self.facility_of[task] == facility
    }

    /// Tasks on `facility`, ascending.
    pub fn tasks_on(&self, facility: usize) -> Vec<usize> {
        self.facility_of
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == facility)
            .map(|(j, _)| j)
            .collect()
    }

    /// Binary matrix `x[i][j]`.
    pub fn to_matrix(&self, num_facilities: usize) -> Vec<Vec<f64>> {
        let mut x = vec![vec![0.0; self.facility_of.len()]; num_facilities];
        for (j, &i) in self.facility_of.iter().enumerate() {
            x[i][j] = 1.0;
        }
        x
    }

    /// Every assignment of `num_tasks` tasks to `num_facilities` facilities,
    /// in lexicographic order of `facility_of`.
    pub fn enumerate(num_facilities: usize, num_tasks: usize) -> impl Iterator<Item = Assignment> {
        let total = (num_facilities as u64).pow(num_tasks as u32);
        (0..total).map(move |mut code| {
            let mut f = vec![0usize; num_tasks];
            for slot in f.iter_mut().rev() {
                *slot = (code % num_facilities as u64) as usize;
                code /= num_facilities as u64;
            }
            Assignment::new(f)
        })
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.facility_of.iter().map(|i| i.to_string()).collect();
        write!(f, "[{}]", parts.join(" "))
    }
}

/// How scenario perturbations are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PerturbationMode {
    /// One draw per scenario and processing-time group.
    #[default]
    PerScenarioGroup,
    /// One draw per scenario, facility and task.
    PerScenarioEntry,
}

/// Extra data for the non-makespan objectives. Drawn from a second ChaCha8
/// stream of the same seed, so the shared fields are identical across
/// variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InstanceVariant {
    #[default]
    Makespan,
    /// Releases set to 0 and due dates `~ U[0, floor(sum_j min_i pbar_ij / m)]`.
    Tardiness,
    /// Costs `~ U{1..20}` and deadlines
    /// `r_j + max_{i,w} p^w_ij + U[0, floor(sum_j min_i pbar_ij / m)]`.
    Cost,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorConfig {
    pub num_facilities: usize,
    pub num_tasks: usize,
    pub num_scenarios: usize,
    pub seed: u64,
    pub perturbation: PerturbationMode,
    pub variant: InstanceVariant,
}

impl GeneratorConfig {
    pub fn new(num_facilities: usize, num_tasks: usize, num_scenarios: usize, seed: u64) -> Self {
        Self {
            num_facilities,
            num_tasks,
            num_scenarios,
            seed,
            perturbation: PerturbationMode::default(),
            variant: InstanceVariant::default(),
        }
    }
}

/// Generator capacity for every facility.
pub const GENERATED_CAPACITY: i64 = 10;
/// Mean processing times at or below this value belong to the first group.
pub const SHORT_TASK_THRESHOLD: i64 = 16;

/// Upper end of the release-time range, `floor(2.5 n (m+1) / m)`.
pub fn release_upper_bound(num_facilities: usize, num_tasks: usize) -> i64 {
    let (m, n) = (num_facilities as i64, num_tasks as i64);
    (5 * n * (m + 1)) / (2 * m)
}

/// Upper end of the mean processing time range for 0-based `facility`,
/// `floor(25 - 10 i / max(m-1, 1))`.
pub fn mean_processing_upper_bound(num_facilities: usize, facility: usize) -> i64 {
    let d = (num_facilities as i64 - 1).max(1);
    let a = 10 * facility as i64;
    // floor(25 - a/d) = 25 - ceil(a/d)
    25 - (a + d - 1) / d
}

fn draw_perturbation(rng: &mut ChaCha8Rng, short_group: bool) -> f64 {
    let u: f64 = rng.gen();
    if short_group {
        if u < 0.9 {
            rng.gen_range(-0.1..=0.5)
        } else {
            rng.gen_range(2.0..=3.0)
        }
    } else if u < 0.99 {
        rng.gen_range(-0.1..=0.5)
    } else {
        rng.gen_range(1.0..=1.5)
    }
}

pub fn generate(num_facilities: usize, num_tasks: usize, num_scenarios: usize, seed: u64) -> Instance {
    generate_with(GeneratorConfig::new(num_facilities, num_tasks, num_scenarios, seed))
}

/// Random instance generator.
///
/// Uses ChaCha8 seeded from `seed`, so streams are identical on every
/// platform. Draw order: consumptions (facility-major), release times, mean
/// processing times (facility-major), then per scenario the perturbations.
pub fn generate_with(cfg: GeneratorConfig) -> Instance {
    let (m, n, s) = (cfg.num_facilities, cfg.num_tasks, cfg.num_scenarios);
    assert!(m >= 1 && n >= 1 && s >= 1, "generator needs m, n, S >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let capacity = vec![GENERATED_CAPACITY; m];
    let consumption: Vec<Vec<i64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.gen_range(1..=GENERATED_CAPACITY)).collect())
        .collect();
    let r_hi = release_upper_bound(m, n);
    let release: Vec<i64> = (0..n).map(|_| rng.gen_range(0..=r_hi)).collect();
    let mean: Vec<Vec<i64>> = (0..m)
        .map(|i| {
            let hi = mean_processing_upper_bound(m, i);
            (0..n).map(|_| rng.gen_range(2..=hi)).collect()
        })
        .collect();

    let prob = 1.0 / s as f64;
    let scenarios = (0..s)
        .map(|_| {
            let processing = match cfg.perturbation {
                PerturbationMode::PerScenarioGroup => {
                    let eps_short = draw_perturbation(&mut rng, true);
                    let eps_long = draw_perturbation(&mut rng, false);
                    mean.iter()
                        .map(|row| {
                            row.iter()
                                .map(|&pb| {
                                    let eps = if pb <= SHORT_TASK_THRESHOLD {
                                        eps_short
                                    } else {
                                        eps_long
                                    };
                                    perturb(pb, eps)
                                })
                                .collect()
                        })
                        .collect()
                }
                PerturbationMode::PerScenarioEntry => mean
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|&pb| {
                                let eps = draw_perturbation(&mut rng, pb <= SHORT_TASK_THRESHOLD);
                                perturb(pb, eps)
                            })
                            .collect()
                    })
                    .collect(),
            };
            Scenario {
                probability: prob,
                processing,
            }
        })
        .collect();

    let mut inst = Instance {
        num_facilities: m,
        num_tasks: n,
        capacity,
        release,
        deadline: vec![None; n],
        due_date: None,
        consumption,
        assign_cost: None,
        scenarios,
    };
    if cfg.variant != InstanceVariant::Makespan {
        let mut extra = ChaCha8Rng::seed_from_u64(cfg.seed);
        extra.set_stream(1);
        let spread = (0..n).map(|j| (0..m).map(|i| mean[i][j]).min().unwrap_or(0)).sum::<i64>() / m as i64;
        match cfg.variant {
            InstanceVariant::Tardiness => {
                inst.release = vec![0; n];
                inst.due_date = Some((0..n).map(|_| extra.gen_range(0..=spread)).collect());
            }
            InstanceVariant::Cost => {
                let costs = (0..m)
                    .map(|_| (0..n).map(|_| extra.gen_range(1..=20) as f64).collect())
                    .collect();
                inst.assign_cost = Some(costs);
                inst.deadline = (0..n)
                    .map(|j| {
                        let longest = (0..s)
                            .flat_map(|w| (0..m).map(move |i| (w, i)))
                            .map(|(w, i)| inst.scenarios[w].processing[i][j])
                            .max()
                            .unwrap_or(0);
                        Some(inst.release[j] + longest + extra.gen_range(0..=spread))
                    })
                    .collect();
            }
            InstanceVariant::Makespan => {}
        }
    }
    inst
}

fn perturb(mean: i64, eps: f64) -> i64 {
    ((mean as f64) * (1.0 + eps)).ceil().max(1.0) as i64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_formulas() {
        assert_eq!(release_upper_bound(2, 10), 37);
        assert_eq!(mean_processing_upper_bound(2, 0), 25);
        assert_eq!(mean_processing_upper_bound(2, 1), 15);
        assert_eq!(mean_processing_upper_bound(1, 0), 25);
        assert_eq!(mean_processing_upper_bound(4, 1), 21);
    }

    #[test]
    fn degenerate_single_task() {
        let inst = generate(1, 1, 1, 7);
        inst.validate().unwrap();
        assert_eq!(inst.capacity, vec![10]);
        assert!(inst.processing(0, 0, 0) >= 2);
        assert_eq!(inst.scenarios[0].probability, 1.0);
    }

    #[test]
    fn deterministic_generation() {
        let a = generate(2, 4, 2, 42);
        let b = generate(2, 4, 2, 42);
        assert_eq!(a, b);
        assert_eq!(a.to_json_string(), b.to_json_string());
        assert_ne!(a, generate(2, 4, 2, 43));
    }

    #[test]
    fn probability_sum_is_checked() {
        let mut inst = generate(2, 3, 2, 1);
        inst.scenarios[0].probability = 0.3;
        inst.scenarios[1].probability = 0.5;
        assert!(matches!(inst.validate(), Err(InstanceError::Invalid(_))));
        let text = inst.to_json_string();
        assert!(Instance::from_json_str(&text).is_err());
    }

    #[test]
    fn parse_names_offending_field() {
        let text = r#"{"facilities":1,"tasks":1,"capacity":[10],"release":["x"],
            "deadline":[null],"consumption":[[1]],
            "scenarios":[{"probability":"1","processing":[[3]]}]}"#;
        let err = Instance::from_json_str(text).unwrap_err().to_string();
        assert!(err.contains("release[0]"), "{err}");
        let text = r#"{"facilities":1,"tasks":1,"release":[0],"deadline":[null],
            "consumption":[[1]],"scenarios":[]}"#;
        let err = Instance::from_json_str(text).unwrap_err().to_string();
        assert!(err.contains("capacity"), "{err}");
    }

    #[test]
    fn enumerate_assignments() {
        let all: Vec<_> = Assignment::enumerate(2, 3).collect();
        assert_eq!(all.len(), 8);
        assert_eq!(all[0].facility_of, vec![0, 0, 0]);
        assert_eq!(all[5].facility_of, vec![1, 0, 1]);
        assert_eq!(all[5].tasks_on(1), vec![0, 2]);
    }
}
