//! Stage chains over streamed rows, run either sequentially or with one
//! worker thread per stage joined by bounded blocking queues.

use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::GrayImage;

/// Default queue depth between stages, in rows.
pub const QUEUE_ROWS: usize = 2;

/// One image row, possibly carrying several aligned channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    pub y: usize,
    pub channels: Vec<Vec<i32>>,
}

impl Row {
    pub fn new(y: usize, channels: Vec<Vec<i32>>) -> Self {
        Self { y, channels }
    }

    /// Samples in the row (length of the first channel).
    pub fn samples(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }
}

/// A pipeline stage. Rows arrive in order; outputs are handed to `emit`
/// as soon as they are available. `finish` is called once at end of stream.
pub trait Stage: Send {
    fn name(&self) -> &str;
    fn push(&mut self, row: Row, emit: &mut dyn FnMut(Row)) -> Result<()>;
    fn finish(&mut self, emit: &mut dyn FnMut(Row)) -> Result<()>;
}

pub type StageList = Vec<Box<dyn Stage>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecMode {
    Sequential,
    Pipelined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    /// Input samples consumed before the first output sample appeared.
    pub latency_samples: u64,
    /// Output samples per input sample (one input sample per tick).
    pub throughput: f64,
    /// Time spent inside the stage's own `push` / `finish` calls.
    pub busy_seconds: f64,
    pub input_samples: u64,
    pub output_samples: u64,
}

#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub rows: Vec<Row>,
    pub reports: Vec<StageReport>,
    pub wall_seconds: f64,
    pub mode: ExecMode,
}

#[derive(Default)]
struct Meter {
    input: u64,
    output: u64,
    first_output_at: Option<u64>,
    busy: Duration,
}

impl Meter {
    fn record_outputs(&mut self, rows: &[Row]) {
        for r in rows {
            if self.first_output_at.is_none() {
                self.first_output_at = Some(self.input);
            }
            self.output += r.samples() as u64;
        }
    }

    fn report(&self, name: &str) -> StageReport {
        StageReport {
            stage: name.to_owned(),
            latency_samples: self.first_output_at.unwrap_or(self.input),
            throughput: if self.input == 0 {
                0.0
            } else {
                self.output as f64 / self.input as f64
            },
            busy_seconds: self.busy.as_secs_f64(),
            input_samples: self.input,
            output_samples: self.output,
        }
    }
}

fn call(stage: &mut dyn Stage, meter: &mut Meter, row: Option<Row>) -> Result<Vec<Row>> {
    let mut out = Vec::new();
    let t0 = Instant::now();
    let res = match row {
        Some(r) => {
            meter.input += r.samples() as u64;
            stage.push(r, &mut |o| out.push(o))
        }
        None => stage.finish(&mut |o| out.push(o)),
    };
    meter.busy += t0.elapsed();
    let name = stage.name().to_owned();
    res.map_err(|e| e.in_stage(name))?;
    meter.record_outputs(&out);
    Ok(out)
}

fn feed(stages: &mut [Box<dyn Stage>], meters: &mut [Meter], row: Row, sink: &mut Vec<Row>) -> Result<()> {
    let Some((first, rest)) = stages.split_first_mut() else {
        sink.push(row);
        return Ok(());
    };
    let (m, rest_m) = meters.split_first_mut().expect("one meter per stage");
    for out in call(first.as_mut(), m, Some(row))? {
        feed(rest, rest_m, out, sink)?;
    }
    Ok(())
}

fn run_sequential(mut stages: StageList, input: Vec<Row>) -> Result<(Vec<Row>, Vec<StageReport>)> {
    let mut meters: Vec<Meter> = stages.iter().map(|_| Meter::default()).collect();
    let mut sink = Vec::new();
    for row in input {
        feed(&mut stages, &mut meters, row, &mut sink)?;
    }
    for i in 0..stages.len() {
        let (head, rest) = stages.split_at_mut(i + 1);
        let (mh, mrest) = meters.split_at_mut(i + 1);
        for out in call(head[i].as_mut(), &mut mh[i], None)? {
            feed(rest, mrest, out, &mut sink)?;
        }
    }
    let reports = stages.iter().zip(&meters).map(|(s, m)| m.report(s.name())).collect();
    Ok((sink, reports))
}

fn worker(mut stage: Box<dyn Stage>, rx: Receiver<Row>, tx: SyncSender<Row>) -> (Result<()>, StageReport) {
    let mut meter = Meter::default();
    let mut downstream_gone = false;
    let forward = |rows: Vec<Row>, gone: &mut bool| {
        for r in rows {
            if tx.send(r).is_err() {
                *gone = true;
                return;
            }
        }
    };
    let mut result = Ok(());
    for row in rx.iter() {
        match call(stage.as_mut(), &mut meter, Some(row)) {
            Ok(out) => forward(out, &mut downstream_gone),
            Err(e) => {
                result = Err(e);
                break;
            }
        }
        if downstream_gone {
            break;
        }
    }
    if result.is_ok() && !downstream_gone {
        match call(stage.as_mut(), &mut meter, None) {
            Ok(out) => forward(out, &mut downstream_gone),
            Err(e) => result = Err(e),
        }
    }
    // dropping rx / tx here propagates shutdown both ways
    (result, meter.report(stage.name()))
}

fn run_pipelined(stages: StageList, input: Vec<Row>, queue_rows: usize) -> Result<(Vec<Row>, Vec<StageReport>)> {
    let cap = queue_rows.max(1);
    let (feed_tx, mut prev_rx) = sync_channel::<Row>(cap);
    thread::scope(|scope| {
        let mut handles = Vec::new();
        for stage in stages {
            let (tx, rx) = sync_channel::<Row>(cap);
            let upstream = std::mem::replace(&mut prev_rx, rx);
            handles.push(scope.spawn(move || worker(stage, upstream, tx)));
        }
        let feeder = scope.spawn(move || {
            for row in input {
                if feed_tx.send(row).is_err() {
                    break;
                }
            }
        });
        let rows: Vec<Row> = prev_rx.iter().collect();
        feeder.join().map_err(|_| Error::Pipeline("input feeder panicked".into()))?;
        let mut reports = Vec::new();
        let mut first_err = None;
        for h in handles {
            let (res, report) = h.join().map_err(|_| Error::Pipeline("stage worker panicked".into()))?;
            if let Err(e) = res {
                first_err.get_or_insert(e);
            }
            reports.push(report);
        }
        match first_err {
            Some(e) => Err(e),
            None => Ok((rows, reports)),
        }
    })
}

/// Runs `stages` over `input`. Both modes produce the same rows; only the
/// schedule differs.
pub fn run_pipeline(stages: StageList, input: Vec<Row>, mode: ExecMode, queue_rows: usize) -> Result<PipelineRun> {
    let t0 = Instant::now();
    let (rows, reports) = match mode {
        ExecMode::Sequential => run_sequential(stages, input)?,
        ExecMode::Pipelined => run_pipelined(stages, input, queue_rows)?,
    };
    Ok(PipelineRun {
        rows,
        reports,
        wall_seconds: t0.elapsed().as_secs_f64(),
        mode,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineComparison {
    pub sequential_seconds: f64,
    pub pipelined_seconds: f64,
    pub speedup: f64,
    pub bit_identical: bool,
    pub hardware_threads: usize,
    pub sequential: Vec<StageReport>,
    pub pipelined: Vec<StageReport>,
}

/// Runs a freshly built chain in both modes and compares the outputs.
pub fn compare_modes(make: impl Fn() -> StageList, input: &[Row], queue_rows: usize) -> Result<PipelineComparison> {
    let seq = run_pipeline(make(), input.to_vec(), ExecMode::Sequential, queue_rows)?;
    let pip = run_pipeline(make(), input.to_vec(), ExecMode::Pipelined, queue_rows)?;
    Ok(PipelineComparison {
        sequential_seconds: seq.wall_seconds,
        pipelined_seconds: pip.wall_seconds,
        speedup: seq.wall_seconds / pip.wall_seconds.max(1e-12),
        bit_identical: seq.rows == pip.rows,
        hardware_threads: thread::available_parallelism().map_or(1, |n| n.get()),
        sequential: seq.reports,
        pipelined: pip.reports,
    })
}

pub fn image_rows(img: &GrayImage) -> Vec<Row> {
    img.rows()
        .enumerate()
        .map(|(y, r)| Row::new(y, vec![r.iter().map(|&p| i32::from(p)).collect()]))
        .collect()
}

/// Reassembles channel `ch` of a row stream into an image, clamping to 8 bits.
pub fn rows_to_image(rows: &[Row], ch: usize) -> Result<GrayImage> {
    let w = rows.first().map_or(0, |r| r.channels[ch].len());
    let pixels = rows
        .iter()
        .flat_map(|r| r.channels[ch].iter().map(|&v| v.clamp(0, 255) as u8))
        .collect();
    GrayImage::new(w, rows.len(), pixels)
}

/// Per-pixel stage with a tunable, deterministic amount of arithmetic;
/// used to measure scheduling rather than any particular algorithm.
#[derive(Clone, Debug)]
pub struct EqualCostStage {
    pub name: String,
    pub rounds: u32,
    pub salt: u32,
}

impl EqualCostStage {
    pub fn new(index: usize, rounds: u32) -> Self {
        Self {
            name: format!("equal-cost-{index}"),
            rounds,
            salt: 0x9E37_79B9u32.wrapping_mul(index as u32 + 1),
        }
    }

    #[inline]
    fn mix(&self, v: i32) -> i32 {
        let mut h = v as u32 ^ self.salt;
        for _ in 0..self.rounds {
            h ^= h >> 15;
            h = h.wrapping_mul(0x2C1B_3C6D);
            h ^= h >> 12;
            h = h.wrapping_mul(0x297A_2D39);
        }
        (h & 0xFF) as i32
    }
}

impl Stage for EqualCostStage {
    fn name(&self) -> &str {
        &self.name
    }

    fn push(&mut self, mut row: Row, emit: &mut dyn FnMut(Row)) -> Result<()> {
        for v in row.channels[0].iter_mut() {
            *v = self.mix(*v);
        }
        emit(row);
        Ok(())
    }

    fn finish(&mut self, _emit: &mut dyn FnMut(Row)) -> Result<()> {
        Ok(())
    }
}

pub fn equal_cost_chain(stages: usize, rounds: u32) -> StageList {
    (0..stages)
        .map(|i| Box::new(EqualCostStage::new(i, rounds)) as Box<dyn Stage>)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Delay {
        held: Option<Row>,
    }

    impl Stage for Delay {
        fn name(&self) -> &str {
            "delay"
        }

        fn push(&mut self, row: Row, emit: &mut dyn FnMut(Row)) -> Result<()> {
            if let Some(prev) = self.held.replace(row) {
                emit(prev);
            }
            Ok(())
        }

        fn finish(&mut self, emit: &mut dyn FnMut(Row)) -> Result<()> {
            if let Some(prev) = self.held.take() {
                emit(prev);
            }
            Ok(())
        }
    }

    struct FailAt(usize);

    impl Stage for FailAt {
        fn name(&self) -> &str {
            "fail"
        }

        fn push(&mut self, row: Row, emit: &mut dyn FnMut(Row)) -> Result<()> {
            if row.y == self.0 {
                return Err(Error::Pipeline("boom".into()));
            }
            emit(row);
            Ok(())
        }

        fn finish(&mut self, _emit: &mut dyn FnMut(Row)) -> Result<()> {
            Ok(())
        }
    }

    fn input(h: usize, w: usize) -> Vec<Row> {
        (0..h)
            .map(|y| Row::new(y, vec![(0..w).map(|x| ((x * 7 + y * 13) % 256) as i32).collect()]))
            .collect()
    }

    #[test]
    fn single_stage_modes_agree() {
        let make = || equal_cost_chain(1, 3);
        let c = compare_modes(make, &input(16, 9), QUEUE_ROWS).unwrap();
        assert!(c.bit_identical);
        assert_eq!(c.sequential[0].latency_samples, 9);
    }

    #[test]
    fn delay_latency_is_reported() {
        let make = || -> StageList { vec![Box::new(Delay { held: None }), Box::new(Delay { held: None })] };
        let c = compare_modes(make, &input(5, 4), 1).unwrap();
        assert!(c.bit_identical);
        assert_eq!(c.sequential[0].latency_samples, 8);
        assert_eq!(c.pipelined[1].latency_samples, 8);
        assert_eq!(c.sequential[1].output_samples, 20);
    }

    #[test]
    fn stage_errors_surface_with_stage_name() {
        for mode in [ExecMode::Sequential, ExecMode::Pipelined] {
            let stages: StageList = vec![Box::new(Delay { held: None }), Box::new(FailAt(2))];
            let err = run_pipeline(stages, input(40, 3), mode, 1).unwrap_err();
            assert!(matches!(err, Error::Stage { ref stage, .. } if stage == "fail"), "{err:?}");
        }
    }
}
