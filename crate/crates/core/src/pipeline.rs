//! Per-step emulation: classify links, compute link budgets, drop lost
//! messages, degrade the positions carried by the delivered ones, and time
//! the whole thing.

use std::borrow::Borrow;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{assess_link, distance_3d, BlockerGeometry, ChannelError, LinkBudget, ShadowingState};
use crate::config::{ConfigError, EmulatorConfig};
use crate::geometry::{Blocker, Classifier, CullingRanges, LinkCondition};
use crate::gnss::{apply_error, GnssError, GnssErrorState};
use crate::rng::{STREAM_GNSS, STREAM_GNSS_EGO};
use crate::scenario::{scenario_bounds, Building, GeoOrigin, GeoPoint, ScenarioError, ScenarioStep};

/// Path-loss models are evaluated no closer than this, meters.
pub const MIN_LINK_DISTANCE: f64 = 1.0;

/// Slack added to the scenario diagonal, meters.
pub const DIAGONAL_MARGIN: f64 = 1.0;

/// Number of highest-traffic steps averaged in the sweep report.
pub const TOP_TRAFFIC_STEPS: usize = 50;

pub const METRICS_HEADER: &str =
    "step_t,wall_delay,total_in_range,los,nlosb,nlosv,delivered,t_cull,t_classify,t_channel,t_gnss";

pub const SWEEP_HEADER: &str =
    "rb,rv,mean_delay_top50,max_delay,mean_delay_all,nlosb_missed,total_reference_nlosb,delivered_diff";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("step t={t}: {source}")]
    Channel {
        t: f64,
        #[source]
        source: ChannelError,
    },
    #[error("step t={t}: {source}")]
    Gnss {
        t: f64,
        #[source]
        source: GnssError,
    },
    #[error("could not start worker pool: {0}")]
    Workers(String),
    #[error("output: {0}")]
    Output(#[from] io::Error),
    #[error("{0}")]
    InvalidInput(String),
}

/// A message the ego receives: the sender's kinematics with a
/// GNSS-degraded position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceivedMessage {
    pub step_t: f64,
    pub sender_id: String,
    pub reported_position: GeoPoint,
    pub reported_speed: f64,
    pub reported_heading: f64,
    pub condition: LinkCondition,
    pub rx_power: f64,
}

/// The ego's own exact and degraded fix for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoFix {
    pub step_t: f64,
    pub exact: GeoPoint,
    pub reported: GeoPoint,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConditionCounts {
    pub total_in_range: usize,
    pub los: usize,
    pub nlosb: usize,
    pub nlosv: usize,
    pub delivered: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub cull: Duration,
    pub classify: Duration,
    pub channel: Duration,
    pub gnss: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step_t: f64,
    /// Monotonic wall-clock time of the whole step; authoritative.
    pub wall_delay: Duration,
    pub counts: ConditionCounts,
    pub phases: PhaseTimings,
    pub over_budget: bool,
}

impl StepMetrics {
    /// Cull + classification + channel time, seconds.
    pub fn link_compute_time(&self) -> f64 {
        (self.phases.cull + self.phases.classify + self.phases.channel).as_secs_f64()
    }

    pub fn write_csv_row<W: Write>(&self, mut out: W) -> io::Result<()> {
        let c = &self.counts;
        let p = &self.phases;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.step_t,
            self.wall_delay.as_secs_f64(),
            c.total_in_range,
            c.los,
            c.nlosb,
            c.nlosv,
            c.delivered,
            p.cull.as_secs_f64(),
            p.classify.as_secs_f64(),
            p.channel.as_secs_f64(),
            p.gnss.as_secs_f64()
        )
    }
}

/// Outcome of one link in one step, keyed by the target's index in
/// `ScenarioStep::others`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkOutcome {
    pub target: usize,
    pub condition: LinkCondition,
    pub budget: LinkBudget,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub messages: Vec<ReceivedMessage>,
    pub ego_fix: EgoFix,
    pub links: Vec<LinkOutcome>,
    pub metrics: StepMetrics,
}

/// Stateful emulator: shadowing and GNSS processes persist across steps.
pub struct Emulator<'a> {
    config: EmulatorConfig,
    classifier: Classifier<'a>,
    shadowing: ShadowingState,
    gnss: GnssErrorState,
    ego_gnss: GnssErrorState,
    origin: GeoOrigin,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Emulator<'a> {
    pub fn new(buildings: &'a [Building], config: EmulatorConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let pool = if config.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.workers)
                    .build()
                    .map_err(|e| PipelineError::Workers(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Emulator {
            classifier: Classifier::new(buildings, config.cell_size),
            shadowing: ShadowingState::new(config.seed, &config.radio),
            gnss: GnssErrorState::new(config.seed, STREAM_GNSS, config.gnss.clone()),
            ego_gnss: GnssErrorState::new(config.seed, STREAM_GNSS_EGO, config.ego_gnss().clone()),
            origin: config.scenario.origin(),
            pool,
            config,
        })
    }

    pub fn config(&self) -> &EmulatorConfig {
        &self.config
    }

    pub fn step(&mut self, step: &ScenarioStep) -> Result<StepOutput, PipelineError> {
        let t = step.timestamp;
        let cfg = &self.config;
        let start = Instant::now();

        let culled = self.classifier.cull(step, &cfg.ranges);
        let t_cull = start.elapsed();

        let mark = Instant::now();
        let classes = self.classifier.classify_culled(step, &culled, cfg.nlosv_threshold, self.pool.as_ref());
        let t_classify = mark.elapsed();

        let mark = Instant::now();
        self.shadowing.evict_stale(t);
        let ego = &step.ego;
        let ego_height = cfg.scenario.antenna_height(ego);
        let mut links = Vec::with_capacity(classes.links.len());
        let mut counts = ConditionCounts { total_in_range: classes.links.len(), ..Default::default() };
        for link in &classes.links {
            let target = &step.others[link.target];
            let target_height = cfg.scenario.antenna_height(target);
            let blocker = match link.blocker {
                Some(Blocker::Vehicle { index, d1, d2 }) => Some(BlockerGeometry {
                    obstacle_height: step.others[index].height,
                    ego_antenna_height: ego_height,
                    target_antenna_height: target_height,
                    d1,
                    d2,
                }),
                _ => None,
            };
            let d3d = distance_3d(link.distance_2d, ego_height, target_height).max(MIN_LINK_DISTANCE);
            let shadow = self.shadowing.update(&target.id, ego.position, target.position, t);
            let budget = assess_link(link.condition, d3d, blocker.as_ref(), &cfg.radio, shadow)
                .map_err(|source| PipelineError::Channel { t, source })?;
            match link.condition {
                LinkCondition::Los => counts.los += 1,
                LinkCondition::NlosBuilding => counts.nlosb += 1,
                LinkCondition::NlosVehicle => counts.nlosv += 1,
            }
            counts.delivered += usize::from(budget.delivered);
            links.push(LinkOutcome { target: link.target, condition: link.condition, budget });
        }
        let t_channel = mark.elapsed();

        let mark = Instant::now();
        let ego_exact = self.origin.to_geodetic(ego.position);
        let off = self.ego_gnss.update_error(&ego.id, t).map_err(|source| PipelineError::Gnss { t, source })?;
        let ego_fix =
            EgoFix { step_t: t, exact: ego_exact, reported: apply_error(&self.origin, ego_exact, off.mu, off.theta) };
        let mut messages = Vec::with_capacity(counts.delivered);
        for outcome in links.iter().filter(|l| l.budget.delivered) {
            let sender = &step.others[outcome.target];
            let off = self.gnss.update_error(&sender.id, t).map_err(|source| PipelineError::Gnss { t, source })?;
            let exact = self.origin.to_geodetic(sender.position);
            messages.push(ReceivedMessage {
                step_t: t,
                sender_id: sender.id.clone(),
                reported_position: apply_error(&self.origin, exact, off.mu, off.theta),
                reported_speed: sender.speed,
                reported_heading: sender.heading,
                condition: outcome.condition,
                rx_power: outcome.budget.rx_power,
            });
        }
        let t_gnss = mark.elapsed();

        let wall_delay = start.elapsed();
        let metrics = StepMetrics {
            step_t: t,
            wall_delay,
            counts,
            phases: PhaseTimings { cull: t_cull, classify: t_classify, channel: t_channel, gnss: t_gnss },
            over_budget: wall_delay.as_secs_f64() > cfg.budget(),
        };
        Ok(StepOutput { messages, ego_fix, links, metrics })
    }
}

/// Receives step results as they are produced.
pub trait StepSink {
    fn accept(&mut self, step: &ScenarioStep, output: StepOutput) -> Result<(), PipelineError>;
}

/// Writes `messages.jsonl`, `metrics.csv` and `ego_fix.jsonl` style streams.
pub struct WriterSink<M, C, E> {
    pub messages: M,
    pub metrics: C,
    pub ego_fixes: Option<E>,
    pub over_budget_steps: usize,
    pub steps: usize,
}

impl<M: Write, C: Write, E: Write> WriterSink<M, C, E> {
    pub fn new(messages: M, mut metrics: C, ego_fixes: Option<E>) -> io::Result<Self> {
        writeln!(metrics, "{METRICS_HEADER}")?;
        Ok(WriterSink { messages, metrics, ego_fixes, over_budget_steps: 0, steps: 0 })
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.messages.flush()?;
        self.metrics.flush()?;
        if let Some(e) = self.ego_fixes.as_mut() {
            e.flush()?;
        }
        Ok(())
    }
}

impl<M: Write, C: Write, E: Write> StepSink for WriterSink<M, C, E> {
    fn accept(&mut self, _step: &ScenarioStep, output: StepOutput) -> Result<(), PipelineError> {
        for m in &output.messages {
            write_message(&mut self.messages, m)?;
        }
        output.metrics.write_csv_row(&mut self.metrics)?;
        if let Some(e) = self.ego_fixes.as_mut() {
            serde_json::to_writer(&mut *e, &output.ego_fix).map_err(io::Error::from)?;
            e.write_all(b"\n")?;
        }
        self.steps += 1;
        self.over_budget_steps += usize::from(output.metrics.over_budget);
        Ok(())
    }
}

pub fn write_message<W: Write>(mut out: W, message: &ReceivedMessage) -> io::Result<()> {
    serde_json::to_writer(&mut out, message).map_err(io::Error::from)?;
    out.write_all(b"\n")
}

/// In-memory collection of a run.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub messages: Vec<ReceivedMessage>,
    pub ego_fixes: Vec<EgoFix>,
    pub metrics: Vec<StepMetrics>,
    pub links: Vec<Vec<LinkOutcome>>,
}

impl StepSink for RunOutput {
    fn accept(&mut self, _step: &ScenarioStep, output: StepOutput) -> Result<(), PipelineError> {
        self.messages.extend(output.messages);
        self.ego_fixes.push(output.ego_fix);
        self.metrics.push(output.metrics);
        self.links.push(output.links);
        Ok(())
    }
}

/// Run the emulator over a stream of steps, one step in flight at a time.
pub fn run<I, S, K>(
    steps: I,
    buildings: &[Building],
    config: &EmulatorConfig,
    sink: &mut K,
) -> Result<(), PipelineError>
where
    I: IntoIterator<Item = Result<S, ScenarioError>>,
    S: Borrow<ScenarioStep>,
    K: StepSink + ?Sized,
{
    let mut emulator = Emulator::new(buildings, config.clone())?;
    let mut previous: Option<f64> = None;
    for step in steps {
        let step = step?;
        let step = step.borrow();
        if let Some(p) = previous {
            if !(step.timestamp > p) {
                return Err(PipelineError::InvalidInput(format!("step t={} does not follow t={p}", step.timestamp)));
            }
        }
        previous = Some(step.timestamp);
        let out = emulator.step(step)?;
        sink.accept(step, out)?;
    }
    Ok(())
}

/// Run over in-memory steps and collect everything.
pub fn run_collect(
    steps: &[ScenarioStep],
    buildings: &[Building],
    config: &EmulatorConfig,
) -> Result<RunOutput, PipelineError> {
    let mut out = RunOutput::default();
    run(steps.iter().map(Ok), buildings, config, &mut out)?;
    Ok(out)
}

/// Conditions and deliveries of the unculled run, computed once per
/// (trace, buildings) pair and shared by every sweep point.
#[derive(Debug, Clone)]
pub struct ReferenceRun {
    pub links: Vec<Vec<LinkOutcome>>,
    pub total_nlosb: usize,
    pub total_delivered: usize,
}

impl ReferenceRun {
    pub fn compute(
        steps: &[ScenarioStep],
        buildings: &[Building],
        base: &EmulatorConfig,
    ) -> Result<Self, PipelineError> {
        let config = EmulatorConfig { ranges: CullingRanges::unlimited(), ..base.clone() };
        let out = run_collect(steps, buildings, &config)?;
        Ok(Self::from_output(&out))
    }

    pub fn from_output(out: &RunOutput) -> Self {
        let total_nlosb = out.metrics.iter().map(|m| m.counts.nlosb).sum();
        let total_delivered = out.metrics.iter().map(|m| m.counts.delivered).sum();
        ReferenceRun { links: out.links.clone(), total_nlosb, total_delivered }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rb: f64,
    pub rv: f64,
    /// Mean wall delay over the [`TOP_TRAFFIC_STEPS`] steps with most vehicles.
    pub mean_delay_top50: f64,
    pub max_delay: f64,
    pub mean_delay_all: f64,
    /// Links the run classified whose reference condition is NLOSb but the
    /// run's is not.
    pub nlosb_missed: usize,
    pub total_reference_nlosb: usize,
    /// Delivered messages of this run minus those of the reference.
    pub delivered_diff: i64,
    /// Classified links whose condition differs from the reference.
    pub misclassified: usize,
    /// Mean cull + classification + channel time per step, seconds.
    pub mean_link_compute: f64,
}

impl SweepRow {
    pub fn write_csv_row<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_range(self.rb),
            fmt_range(self.rv),
            self.mean_delay_top50,
            self.max_delay,
            self.mean_delay_all,
            self.nlosb_missed,
            self.total_reference_nlosb,
            self.delivered_diff
        )
    }

    pub fn nlosb_missed_fraction(&self) -> f64 {
        if self.total_reference_nlosb == 0 {
            0.0
        } else {
            self.nlosb_missed as f64 / self.total_reference_nlosb as f64
        }
    }
}

fn fmt_range(r: f64) -> String {
    if r.is_infinite() {
        "inf".into()
    } else {
        r.to_string()
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{SWEEP_HEADER}")?;
        for row in &self.rows {
            row.write_csv_row(&mut out)?;
        }
        out.flush()
    }

    pub fn row(&self, rb: f64, rv: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.rb == rb && r.rv == rv)
    }
}

/// Range that keeps every object of the scenario: the bounding-box diagonal
/// plus [`DIAGONAL_MARGIN`], since culling keeps only objects strictly closer
/// than the range. Infinite for an empty scenario.
pub fn scenario_diagonal(buildings: &[Building], steps: &[ScenarioStep]) -> f64 {
    scenario_bounds(buildings, steps).map_or(f64::INFINITY, |b| b.diagonal() + DIAGONAL_MARGIN)
}

/// Indices of the `n` steps with the most vehicles (ties: earlier first).
pub fn top_traffic_steps(steps: &[ScenarioStep], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..steps.len()).collect();
    order.sort_by(|&a, &b| steps[b].others.len().cmp(&steps[a].others.len()).then(a.cmp(&b)));
    order.truncate(n);
    order
}

/// Evaluate one `(r_b, r_v)` pair against a precomputed reference.
pub fn sweep_point(
    steps: &[ScenarioStep],
    buildings: &[Building],
    base: &EmulatorConfig,
    reference: &ReferenceRun,
    rb: f64,
    rv: f64,
) -> Result<SweepRow, PipelineError> {
    let config = EmulatorConfig { ranges: CullingRanges::new(rb, rv), ..base.clone() };
    let out = run_collect(steps, buildings, &config)?;
    let delays: Vec<f64> = out.metrics.iter().map(|m| m.wall_delay.as_secs_f64()).collect();
    let top = top_traffic_steps(steps, TOP_TRAFFIC_STEPS);
    let mean = |xs: &mut dyn Iterator<Item = f64>, n: usize| if n == 0 { 0.0 } else { xs.sum::<f64>() / n as f64 };

    let mut nlosb_missed = 0;
    let mut misclassified = 0;
    for (run_links, ref_links) in out.links.iter().zip(&reference.links) {
        for link in run_links {
            // reference classifies every target, sorted by id like the run
            let Some(r) = ref_links.iter().find(|r| r.target == link.target) else {
                continue;
            };
            misclassified += usize::from(r.condition != link.condition);
            nlosb_missed += usize::from(
                r.condition == LinkCondition::NlosBuilding && link.condition != LinkCondition::NlosBuilding,
            );
        }
    }
    let delivered: usize = out.metrics.iter().map(|m| m.counts.delivered).sum();
    Ok(SweepRow {
        rb,
        rv,
        mean_delay_top50: mean(&mut top.iter().map(|&i| delays[i]), top.len()),
        max_delay: delays.iter().copied().fold(0.0, f64::max),
        mean_delay_all: mean(&mut delays.iter().copied(), delays.len()),
        nlosb_missed,
        total_reference_nlosb: reference.total_nlosb,
        delivered_diff: delivered as i64 - reference.total_delivered as i64,
        misclassified,
        mean_link_compute: mean(&mut out.metrics.iter().map(StepMetrics::link_compute_time), out.metrics.len()),
    })
}

/// Run every `(r_b, r_v)` combination and compare each against the unculled
/// reference run.
pub fn sweep(
    steps: &[ScenarioStep],
    buildings: &[Building],
    base: &EmulatorConfig,
    rb_values: &[f64],
    rv_values: &[f64],
) -> Result<SweepReport, PipelineError> {
    if rb_values.is_empty() || rv_values.is_empty() {
        return Err(PipelineError::InvalidInput("sweep needs at least one r_b and one r_v".into()));
    }
    let reference = ReferenceRun::compute(steps, buildings, base)?;
    let mut rows = Vec::with_capacity(rb_values.len() * rv_values.len());
    for &rv in rv_values {
        for &rb in rb_values {
            log::info!("sweep point r_b={} r_v={}", fmt_range(rb), fmt_range(rv));
            rows.push(sweep_point(steps, buildings, base, &reference, rb, rv)?);
        }
    }
    Ok(SweepReport { rows })
}
