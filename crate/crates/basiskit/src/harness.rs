//! Experiment driver: runs a configured method, records metrics per round and
//! reports the analytic communication cost.

use std::fmt;
use std::time::Instant;

use basiskit_core::algo::{
    build, Common, Direction, Executor, InvariantCheck, MessageSpec, Method, RoundCost, Trigger,
};
use basiskit_core::compress::BitModel;
use basiskit_core::problem::{Problem, Reference};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{DataError, Result};
use crate::output::RunRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Converged,
    Diverged,
    Budget,
}

#[derive(Debug)]
pub struct Experiment {
    pub config: RunConfig,
    pub reference: Reference,
    pub records: Vec<RunRecord>,
    pub status: Status,
    /// Why a diverged run stopped.
    pub diagnostic: Option<String>,
}

impl Experiment {
    pub fn last(&self) -> &RunRecord {
        self.records.last().expect("round 0 is always recorded")
    }

    /// Bits per node spent when the gap first reached `gap`.
    pub fn bits_to_reach(&self, gap: f64) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.fgap <= gap)
            .map(|r| r.bits(self.config.count_download))
    }

    pub fn rounds_to_reach(&self, gap: f64) -> Option<u64> {
        self.records.iter().find(|r| r.fgap <= gap).map(|r| r.round)
    }
}

/// A run in progress; [`run`] drives one to completion.
pub struct Session {
    pub config: RunConfig,
    pub problem: Problem,
    pub reference: Reference,
    pub method: Box<dyn Method>,
    records: Vec<RunRecord>,
    status: Status,
    diagnostic: Option<String>,
    started: Instant,
}

impl Session {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let problem = config.problem()?;
        Self::with_problem(config, problem)
    }

    pub fn with_problem(config: RunConfig, problem: Problem) -> Result<Self> {
        let d = problem.d();
        let x0 = config.x0.clone().unwrap_or_else(|| vec![0.0; d]);
        if x0.len() != d {
            return Err(DataError::Config(format!("x0 has {} entries, d = {d}", x0.len())).into());
        }
        let reference = problem.newton_reference(&x0, config.reference_iters)?;
        let common = Common {
            seed: config.seed,
            bits: BitModel {
                float_bits: config.float_bits,
            },
        };
        let method = build(&config.method, &problem, &x0, common)?;
        let n = problem.n() as f64;
        let first = RunRecord {
            round: 0,
            fgap: problem.global_value(&x0)? - reference.f_star,
            dist: distance(&x0, &reference.x_star),
            up_bits: method.setup_bits() as f64 / n,
            down_bits: 0.0,
            wall_ms: 0.0,
        };
        Ok(Session {
            config,
            problem,
            reference,
            method,
            records: vec![first],
            status: Status::Running,
            diagnostic: None,
            started: Instant::now(),
        })
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn status(&self) -> Status {
        self.status
    }

    fn stop_reason(&self) -> Option<Status> {
        let last = self.records.last().expect("round 0");
        if last.fgap <= self.config.target_gap {
            Some(Status::Converged)
        } else if last.round >= self.config.max_rounds || last.bits(self.config.count_download) >= self.config.max_bits_per_node {
            Some(Status::Budget)
        } else {
            None
        }
    }

    /// Runs one round unless the run has stopped. Returns the round's cost.
    pub fn step(&mut self, exec: &dyn Executor) -> Result<Option<RoundCost>> {
        if self.status != Status::Running {
            return Ok(None);
        }
        if let Some(s) = self.stop_reason() {
            self.status = s;
            return Ok(None);
        }
        let cost = match self.method.step(&self.problem, exec) {
            Ok(c) => c,
            Err(e @ basiskit_core::Error::Diverged { .. }) => {
                self.status = Status::Diverged;
                self.diagnostic = Some(e.to_string());
                return Ok(None);
            }
            Err(e) => return Err(e.into()),
        };
        let prev = *self.records.last().expect("round 0");
        let x = self.method.iterate();
        let f = self.problem.global_value(x)?;
        if !f.is_finite() {
            self.status = Status::Diverged;
            self.diagnostic = Some(format!("non-finite objective at round {}", prev.round + 1));
            return Ok(None);
        }
        let n = self.problem.n() as f64;
        self.records.push(RunRecord {
            round: prev.round + 1,
            fgap: f - self.reference.f_star,
            dist: distance(x, &self.reference.x_star),
            up_bits: prev.up_bits + cost.up().total() as f64 / n,
            down_bits: prev.down_bits + cost.down().total() as f64 / n,
            wall_ms: if self.config.wall_clock {
                self.started.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            },
        });
        Ok(Some(cost))
    }

    pub fn finish(mut self) -> Experiment {
        if self.status == Status::Running {
            self.status = self.stop_reason().unwrap_or(Status::Budget);
        }
        Experiment {
            config: self.config,
            reference: self.reference,
            records: self.records,
            status: self.status,
            diagnostic: self.diagnostic,
        }
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn run(config: RunConfig, exec: &dyn Executor) -> Result<Experiment> {
    let mut s = Session::new(config)?;
    while s.step(exec)?.is_some() {}
    Ok(s.finish())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostLine {
    pub label: &'static str,
    pub direction: &'static str,
    pub trigger: &'static str,
    /// Mean over clients of one message.
    pub floats_per_node: f64,
    pub bits_per_node: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostReport {
    pub method: String,
    pub n: usize,
    pub d: usize,
    pub setup_floats_per_node: f64,
    pub lines: Vec<CostLine>,
}

impl CostReport {
    /// Float count per node of messages whose trigger is `trigger`.
    pub fn floats_per_round(&self, direction: Direction, trigger: Trigger) -> f64 {
        self.lines
            .iter()
            .filter(|l| l.direction == dir_name(direction) && l.trigger == trigger_name(trigger))
            .map(|l| l.floats_per_node)
            .sum()
    }
}

fn dir_name(d: Direction) -> &'static str {
    match d {
        Direction::Up => "up",
        Direction::Down => "down",
    }
}

fn trigger_name(t: Trigger) -> &'static str {
    match t {
        Trigger::Always => "every round",
        Trigger::Participant => "when participating",
        Trigger::GradientRound => "on gradient rounds",
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "method {} (n = {}, d = {})", self.method, self.n, self.d)?;
        writeln!(f, "setup: {} floats per node", self.setup_floats_per_node)?;
        writeln!(f, "{:<10} {:<5} {:<20} {:>14} {:>14}", "message", "dir", "sent", "floats/node", "bits/node")?;
        for l in &self.lines {
            writeln!(
                f,
                "{:<10} {:<5} {:<20} {:>14} {:>14}",
                l.label, l.direction, l.trigger, l.floats_per_node, l.bits_per_node
            )?;
        }
        Ok(())
    }
}

pub fn cost_report_for(method: &dyn Method, problem: &Problem, float_bits: u64) -> CostReport {
    let lines = method
        .messages()
        .iter()
        .map(|m| {
            let k = m.floats.len().max(1) as f64;
            CostLine {
                label: m.label,
                direction: dir_name(m.dir),
                trigger: trigger_name(m.trigger),
                floats_per_node: m.floats.iter().sum::<u64>() as f64 / k,
                bits_per_node: m.bits.iter().map(|b| b.total()).sum::<u64>() as f64 / k,
            }
        })
        .collect();
    CostReport {
        method: method.name(),
        n: problem.n(),
        d: problem.d(),
        setup_floats_per_node: method.setup_bits() as f64 / float_bits as f64 / problem.n() as f64,
        lines,
    }
}

pub fn cost_report(config: &RunConfig) -> Result<CostReport> {
    let s = Session::new(config.clone())?;
    Ok(cost_report_for(s.method.as_ref(), &s.problem, config.float_bits))
}

/// Compares a round's counters with the analytic message sizes: every tally
/// must equal `count` times the per-client size, and messages sent every round
/// must be counted once per client.
pub fn check_accounting(specs: &[MessageSpec], cost: &RoundCost) -> Vec<InvariantCheck> {
    let mut out = Vec::new();
    for t in &cost.messages {
        let name = format!("{} {} bits", t.label, dir_name(t.dir));
        let Some(spec) = specs.iter().find(|s| s.label == t.label && s.dir == t.dir) else {
            out.push(InvariantCheck::at_most(format!("{name}: undeclared message"), 1.0, 0.0));
            continue;
        };
        let sizes: Vec<u64> = spec.bits.iter().map(|b| b.total()).collect();
        let uniform = sizes.windows(2).all(|w| w[0] == w[1]);
        if uniform {
            let expected = t.count * sizes.first().copied().unwrap_or(0);
            out.push(InvariantCheck::at_most(name, t.bits.total().abs_diff(expected) as f64, 0.0));
        } else {
            let lo = t.count * sizes.iter().min().copied().unwrap_or(0);
            let hi = t.count * sizes.iter().max().copied().unwrap_or(0);
            let v = t.bits.total();
            out.push(InvariantCheck::at_most(name, if (lo..=hi).contains(&v) { 0.0 } else { 1.0 }, 0.0));
        }
        if spec.trigger == Trigger::Always {
            out.push(InvariantCheck::at_most(
                format!("{} {} sent by every client", t.label, dir_name(t.dir)),
                t.count.abs_diff(cost.clients as u64) as f64,
                0.0,
            ));
        }
    }
    for spec in specs.iter().filter(|s| s.trigger == Trigger::Always) {
        if cost.tally(spec.label, spec.dir).is_none() && spec.bits.iter().any(|b| b.total() > 0) {
            out.push(InvariantCheck::at_most(format!("{} missing from round", spec.label), 1.0, 0.0));
        }
    }
    out
}
