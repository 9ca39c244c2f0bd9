//! The scenario corpus and the runner.
//!
//! A scenario is a host program over a fresh [`Runtime`], plus the outcome
//! it is expected to reach in each torture × defensive cell. Buggy
//! programs make their hazardous copies explicit (read a slot into a bare
//! local, call something that allocates, use the local) so that whether a
//! bug fires depends only on the mode.

use std::collections::BTreeMap;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rootsim_core::{Error, RootSlot, Runtime};
use sha2::{Digest, Sha256};

use crate::oracle::{self, Tree};
use crate::report::{ModeConfig, Outcome, ScenarioReport};

mod callbacks;
mod pairs;
mod regions;

pub use callbacks::QSORT_ITEMS;
pub use regions::FOLD_ITEMS;

/// Why a scenario program stopped early.
#[derive(Debug)]
pub enum Stop {
    Diagnostic { error: Error, site: String },
    Failure(String),
}

/// Attaches a call site to a runtime error.
pub trait At<T> {
    fn at(self, site: &str) -> Result<T, Stop>;
}

impl<T> At<T> for Result<T, Error> {
    fn at(self, site: &str) -> Result<T, Stop> {
        self.map_err(|error| Stop::Diagnostic { error, site: site.to_string() })
    }
}

pub fn ensure(cond: bool, message: impl FnOnce() -> String) -> Result<(), Stop> {
    if cond {
        Ok(())
    } else {
        Err(Stop::Failure(message()))
    }
}

/// Everything a program can touch.
pub struct Session {
    pub rt: Runtime,
    pub mode: ModeConfig,
    pub metrics: BTreeMap<String, i64>,
}

impl Session {
    /// Independent deterministic stream for one use of randomness.
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        rng(self.mode.seed, stream)
    }

    pub fn record(&mut self, key: &str, value: i64) {
        self.metrics.insert(key.to_string(), value);
    }

    pub fn record_max(&mut self, key: &str, value: i64) {
        let e = self.metrics.entry(key.to_string()).or_insert(value);
        *e = (*e).max(value);
    }
}

pub(crate) fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Hash of the active semispace up to the cursor, the cursor itself and
/// the collection count. Readable while the runtime lock is released.
pub fn heap_state_digest(rt: &Runtime) -> String {
    let heap = rt.heap();
    let mut h = Sha256::new();
    h.update((heap.active_space() as u64).to_le_bytes());
    h.update((heap.alloc_cursor() as u64).to_le_bytes());
    h.update(rt.collections().to_le_bytes());
    for w in &heap.space_words(heap.active_space())[..heap.alloc_cursor()] {
        h.update(w.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Copies a root into another root. No allocation happens in between, so
/// this is safe in every mode.
pub fn assign(rt: &mut Runtime, dst: RootSlot, src: RootSlot) -> Result<(), Error> {
    let v = rt.root_get(src)?;
    rt.root_set(dst, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expected {
    /// Clean, no leaked roots, and the digest equals the oracle's when the
    /// scenario has one.
    Clean,
    /// Stops with this error kind.
    Diagnostic(&'static str),
    /// A latent bug: either `Clean` or this diagnostic, depending on
    /// whether a collection happens to run at the wrong moment.
    Latent(&'static str),
}

impl fmt::Display for Expected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expected::Clean => write!(f, "Clean"),
            Expected::Diagnostic(k) => write!(f, "{k}"),
            Expected::Latent(k) => write!(f, "Clean|{k}"),
        }
    }
}

pub type Program = fn(&mut Session) -> Result<Vec<u8>, Stop>;

pub struct Scenario {
    pub name: &'static str,
    pub description: &'static str,
    pub program: Program,
    /// Expected result graph for Clean runs.
    pub oracle: Option<fn(&ModeConfig) -> Vec<Tree>>,
    /// Expected outcome per (torture, defensive).
    pub expect: fn(bool, bool) -> Expected,
    /// Deliberately incorrect binding code.
    pub buggy: bool,
}

impl Scenario {
    pub fn expected(&self, mode: &ModeConfig) -> Expected {
        (self.expect)(mode.torture, mode.defensive)
    }

    /// The four cells of the expectation matrix.
    pub fn matrix(&self) -> [((bool, bool), Expected); 4] {
        [(false, false), (false, true), (true, false), (true, true)].map(|(t, d)| ((t, d), (self.expect)(t, d)))
    }

    pub fn oracle_digest(&self, mode: &ModeConfig) -> Option<String> {
        self.oracle.map(|o| oracle::digest_hex(&oracle::encode(&o(mode))))
    }

    pub fn meets(&self, report: &ScenarioReport) -> bool {
        let clean_ok = || {
            report.outcome == Outcome::Clean
                && report.root_count_delta == 0
                && report.result_digest.is_some()
                && self.oracle_digest(&report.mode).is_none_or(|d| report.result_digest.as_ref() == Some(&d))
        };
        let diag_is = |kind: &str| matches!(&report.outcome, Outcome::Diagnostic { error, .. } if error == kind);
        match self.expected(&report.mode) {
            Expected::Clean => clean_ok(),
            Expected::Diagnostic(kind) => diag_is(kind),
            Expected::Latent(kind) => clean_ok() || diag_is(kind),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown scenario `{0}`")]
pub struct UnknownScenario(pub String);

/// A report together with what the program measured along the way.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub metrics: BTreeMap<String, i64>,
    pub expected: Expected,
    pub met: bool,
}

pub fn scenarios() -> Vec<Scenario> {
    let mut all = pairs::scenarios();
    all.extend(regions::scenarios());
    all.extend(callbacks::scenarios());
    all
}

pub fn find(name: &str) -> Option<Scenario> {
    scenarios().into_iter().find(|s| s.name == name)
}

pub fn list_scenarios() -> Vec<(&'static str, &'static str)> {
    scenarios().iter().map(|s| (s.name, s.description)).collect()
}

pub fn run_scenario(name: &str, mode: ModeConfig) -> Result<ScenarioReport, UnknownScenario> {
    run_scenario_traced(name, mode).map(|r| r.report)
}

pub fn run_scenario_traced(name: &str, mode: ModeConfig) -> Result<ScenarioRun, UnknownScenario> {
    let scenario = find(name).ok_or_else(|| UnknownScenario(name.to_string()))?;
    Ok(execute(&scenario, mode))
}

pub fn execute(scenario: &Scenario, mode: ModeConfig) -> ScenarioRun {
    let report = |outcome, digest, delta, collections| ScenarioReport {
        name: scenario.name.to_string(),
        mode,
        outcome,
        result_digest: digest,
        root_count_delta: delta,
        collections,
    };
    let rt = match Runtime::new(mode.semispace_words, mode.torture, mode.defensive) {
        Ok(rt) => rt,
        Err(error) => {
            let outcome = Outcome::Diagnostic { error: error.kind().to_string(), site: "runtime setup".into() };
            let report = report(outcome, None, 0, 0);
            let met = scenario.meets(&report);
            return ScenarioRun { report, metrics: BTreeMap::new(), expected: scenario.expected(&mode), met };
        }
    };
    let mut session = Session { rt, mode, metrics: BTreeMap::new() };
    let roots_before = session.rt.root_count() as i64;
    let result = catch_unwind(AssertUnwindSafe(|| (scenario.program)(&mut session)));
    let (outcome, digest) = match result {
        Ok(Ok(bytes)) => (Outcome::Clean, Some(oracle::digest_hex(&bytes))),
        Ok(Err(Stop::Diagnostic { error, site })) => {
            (Outcome::Diagnostic { error: error.kind().to_string(), site }, None)
        }
        Ok(Err(Stop::Failure(message))) => (Outcome::Failure { message }, None),
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            (Outcome::Failure { message: format!("panicked: {message}") }, None)
        }
    };
    let delta = session.rt.root_count() as i64 - roots_before;
    let report = report(outcome, digest, delta, session.rt.collections());
    let met = scenario.meets(&report);
    ScenarioRun { report, metrics: session.metrics, expected: scenario.expected(&mode), met }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_stable() {
        let names: Vec<_> = list_scenarios().into_iter().map(|(n, _)| n).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        assert_eq!(names, list_scenarios().into_iter().map(|(n, _)| n).collect::<Vec<_>>());
        for required in [
            "pair_legacy",
            "pair_mlroot",
            "triplet_buggy_legacy",
            "triplet_fixed_legacy",
            "triplet_mlroot",
            "triplet_aliased",
            "unregistered_root",
            "qsort_callback",
            "fold_array_subregions",
            "lock_release",
            "callback_exception",
            "region_missing",
            "context_switch",
        ] {
            assert!(names.contains(&required), "{required}");
        }
    }

    #[test]
    fn unknown_name() {
        assert_eq!(
            run_scenario("nope", ModeConfig::default()).unwrap_err(),
            UnknownScenario("nope".into())
        );
    }

    /// Turning on a checking mode never turns an expected diagnostic back
    /// into a clean run.
    #[test]
    fn detection_is_monotone() {
        let strict = |e: Expected| matches!(e, Expected::Diagnostic(_));
        for s in scenarios() {
            for t in [false, true] {
                for d in [false, true] {
                    if strict((s.expect)(t, d)) {
                        assert!(strict((s.expect)(true, d)), "{} torture", s.name);
                        assert!(strict((s.expect)(t, true)), "{} defensive", s.name);
                    }
                }
            }
        }
    }

    #[test]
    fn only_buggy_scenarios_have_latent_cells() {
        for s in scenarios() {
            let latent = s.matrix().iter().any(|(_, e)| matches!(e, Expected::Latent(_)));
            assert!(!latent || s.buggy, "{}", s.name);
        }
    }

    #[test]
    fn every_cell_is_met() {
        for s in scenarios() {
            for ((torture, defensive), expected) in s.matrix() {
                let mode = ModeConfig { torture, defensive, ..ModeConfig::default() };
                let run = execute(&s, mode);
                assert!(run.met, "{} {:?}: expected {expected}, got {:?}", s.name, (torture, defensive), run.report);
            }
        }
    }
}
