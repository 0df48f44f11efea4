//! Design-time comparison of variant energy curves.
//!
//! Every function here is pure over an immutable repository. Series are
//! treated as piecewise-linear over their grid, matching the repository's
//! interpolation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{NodeId, ReconfigurationAction, VariabilityModel};
use crate::pwl::lerp;
use crate::repository::{CompositionChain, ProfileRepository, RepositoryError};
use crate::rules::{Condition, EcaRule, Predicate, RuleSet};

/// Relative width within which two energies count as similar.
pub const SIMILARITY_BAND: f64 = 0.10;

/// Relative tolerance for treating two interpolated energies as tied.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("`{label}`: {source}")]
    Energy {
        label: String,
        #[source]
        source: RepositoryError,
    },
    #[error("`{label}` names unknown model node `{node}`")]
    UnknownNode { label: String, node: NodeId },
    #[error("series `{label}` does not share the comparison grid")]
    MismatchedGrids { label: String },
    #[error("a grid needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("grid must be finite and strictly increasing")]
    UnsortedGrid,
    #[error("nothing to compare")]
    NoSeries,
    #[error("invalid grid `{0}`: expected lo:hi:steps or a comma-separated list")]
    GridSyntax(String),
}

/// Something to evaluate: a variant reached through a composition chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub label: String,
    /// Variant bound by rules derived from this candidate.
    pub variant: NodeId,
    pub chain: CompositionChain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub param: f64,
    pub energy_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSeries {
    pub label: String,
    pub variant: NodeId,
    pub points: Vec<SeriesPoint>,
}

impl ComparisonSeries {
    pub fn params(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.param).collect()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.energy_j).collect()
    }

    /// Interpolated energy on segment `i` (between points `i` and `i + 1`).
    fn on_segment(&self, i: usize, x: f64) -> f64 {
        let (a, b) = (self.points[i], self.points[i + 1]);
        if x == a.param {
            a.energy_j
        } else if x == b.param {
            b.energy_j
        } else {
            lerp(a.param, a.energy_j, b.param, b.energy_j, x)
        }
    }
}

/// `count` points evenly spaced over `[lo, hi]` when `steps = count - 1`.
pub fn linear_grid(lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>, AnalysisError> {
    if steps == 0 {
        return Err(AnalysisError::TooFewPoints(1));
    }
    if lo >= hi || !lo.is_finite() || !hi.is_finite() {
        return Err(AnalysisError::UnsortedGrid);
    }
    let mut grid: Vec<f64> = (0..steps).map(|i| lo + (hi - lo) * (i as f64 / steps as f64)).collect();
    grid.push(hi);
    check_grid(&grid)?;
    Ok(grid)
}

/// Parses `lo:hi:steps` or `a,b,c,...`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, AnalysisError> {
    let syntax = || AnalysisError::GridSyntax(text.to_string());
    let text = text.trim();
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').map(str::trim).collect();
        let [lo, hi, steps] = parts.as_slice() else {
            return Err(syntax());
        };
        let lo: f64 = lo.parse().map_err(|_| syntax())?;
        let hi: f64 = hi.parse().map_err(|_| syntax())?;
        let steps: usize = steps.parse().map_err(|_| syntax())?;
        linear_grid(lo, hi, steps)
    } else {
        let grid = text
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| syntax())?;
        check_grid(&grid)?;
        Ok(grid)
    }
}

fn check_grid(grid: &[f64]) -> Result<(), AnalysisError> {
    if grid.len() < 2 {
        return Err(AnalysisError::TooFewPoints(grid.len()));
    }
    if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AnalysisError::UnsortedGrid);
    }
    Ok(())
}

/// One series per candidate, in input order.
pub fn compare(
    repo: &ProfileRepository,
    model: &VariabilityModel,
    candidates: &[Candidate],
    grid: &[f64],
) -> Result<Vec<ComparisonSeries>, AnalysisError> {
    check_grid(grid)?;
    candidates
        .iter()
        .map(|c| {
            let unknown = std::iter::once(c.variant.as_str())
                .chain(c.chain.stages.iter().flat_map(|s| [s.concern.as_str(), s.variant.as_str()]))
                .find(|id| !model.contains(id));
            if let Some(node) = unknown {
                return Err(AnalysisError::UnknownNode {
                    label: c.label.clone(),
                    node: node.to_string(),
                });
            }
            let points = grid
                .iter()
                .map(|&param| {
                    let composed = repo.compose_energy(&c.chain, param).map_err(|source| AnalysisError::Energy {
                        label: c.label.clone(),
                        source,
                    })?;
                    Ok(SeriesPoint {
                        param,
                        energy_j: composed.total_j,
                    })
                })
                .collect::<Result<Vec<_>, AnalysisError>>()?;
            Ok(ComparisonSeries {
                label: c.label.clone(),
                variant: c.variant.clone(),
                points,
            })
        })
        .collect()
}

fn shared_grid(series: &[ComparisonSeries]) -> Result<Vec<f64>, AnalysisError> {
    let first = series.first().ok_or(AnalysisError::NoSeries)?;
    let grid = first.params();
    check_grid(&grid)?;
    for s in series {
        if s.points.len() != grid.len() || s.points.iter().zip(&grid).any(|(p, &x)| p.param != x) {
            return Err(AnalysisError::MismatchedGrids { label: s.label.clone() });
        }
    }
    Ok(grid)
}

/// A parameter value where the energy ordering of two series flips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverPoint {
    pub param: f64,
    /// Variant greener for smaller parameters.
    pub below: NodeId,
    /// Variant greener for larger parameters.
    pub above: NodeId,
    pub below_label: String,
    pub above_label: String,
}

/// Every strict sign change of `a - b`. Where the curves coincide over a run
/// of grid points and then flip, the crossover is the first point of the run.
pub fn find_crossovers(a: &ComparisonSeries, b: &ComparisonSeries) -> Result<Vec<CrossoverPoint>, AnalysisError> {
    let grid = shared_grid(std::slice::from_ref(a))?;
    shared_grid(&[a.clone(), b.clone()]).map_err(|_| AnalysisError::MismatchedGrids { label: b.label.clone() })?;
    let d: Vec<f64> = a.points.iter().zip(&b.points).map(|(p, q)| p.energy_j - q.energy_j).collect();

    let mut out = Vec::new();
    let mut last: Option<(usize, f64)> = None;
    let mut zero_start: Option<usize> = None;
    for (i, &di) in d.iter().enumerate() {
        if di == 0.0 {
            zero_start.get_or_insert(i);
            continue;
        }
        if let Some((j, dj)) = last {
            if (dj < 0.0) != (di < 0.0) {
                let param = match zero_start {
                    Some(z) => grid[z],
                    None => {
                        let t = dj / (dj - di);
                        (grid[j] + t * (grid[i] - grid[j])).clamp(grid[j], grid[i])
                    }
                };
                let (lo, hi) = if dj < 0.0 { (a, b) } else { (b, a) };
                out.push(CrossoverPoint {
                    param,
                    below: lo.variant.clone(),
                    above: hi.variant.clone(),
                    below_label: lo.label.clone(),
                    above_label: hi.label.clone(),
                });
            }
        }
        last = Some((i, di));
        zero_start = None;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionInterval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
    pub winner: NodeId,
    pub label: String,
    /// Index of the winning series in the input.
    pub series: usize,
}

impl PartitionInterval {
    pub fn contains(&self, x: f64) -> bool {
        let above_lo = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below_hi = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above_lo && below_hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// The domain split into maximal intervals labelled with the greenest series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenPartition {
    pub domain: (f64, f64),
    pub intervals: Vec<PartitionInterval>,
}

impl GreenPartition {
    pub fn winner_at(&self, x: f64) -> Option<&PartitionInterval> {
        self.intervals.iter().find(|iv| iv.contains(x))
    }

    /// Thresholds between consecutive intervals.
    pub fn boundaries(&self) -> Vec<f64> {
        self.intervals.windows(2).map(|w| w[0].hi).collect()
    }
}

/// Lowest-index series with the minimum energy at `x` on segment `seg`.
fn argmin(series: &[ComparisonSeries], seg: usize, x: f64, tolerant: bool) -> usize {
    let values: Vec<f64> = series.iter().map(|s| s.on_segment(seg, x)).collect();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = if tolerant { TIE_EPS * min.abs() } else { 0.0 };
    values.iter().position(|&v| v <= min + slack).expect("non-empty")
}

/// Pointwise argmin over the shared grid; ties go to the lowest input index.
pub fn partition_greenest(series: &[ComparisonSeries]) -> Result<GreenPartition, AnalysisError> {
    let grid = shared_grid(series)?;

    // (x, segment) for every breakpoint: grid points and pairwise
    // intersections strictly inside a segment.
    let mut points: Vec<(f64, usize, bool)> = Vec::new();
    for seg in 0..grid.len() - 1 {
        let (x0, x1) = (grid[seg], grid[seg + 1]);
        points.push((x0, seg, false));
        let mut inner = Vec::new();
        for j in 0..series.len() {
            for k in j + 1..series.len() {
                let d0 = series[j].points[seg].energy_j - series[k].points[seg].energy_j;
                let d1 = series[j].points[seg + 1].energy_j - series[k].points[seg + 1].energy_j;
                if (d0 < 0.0 && d1 > 0.0) || (d0 > 0.0 && d1 < 0.0) {
                    let x = x0 + (d0 / (d0 - d1)) * (x1 - x0);
                    if x > x0 && x < x1 {
                        inner.push(x);
                    }
                }
            }
        }
        inner.sort_by(f64::total_cmp);
        inner.dedup();
        points.extend(inner.into_iter().map(|x| (x, seg, true)));
    }
    points.push((grid[grid.len() - 1], grid.len() - 2, false));

    // Alternate point and gap pieces, then merge equal winners.
    struct Piece {
        lo: f64,
        hi: f64,
        point: bool,
        winner: usize,
    }
    let mut pieces = Vec::with_capacity(points.len() * 2);
    for (n, &(x, seg, crossing)) in points.iter().enumerate() {
        pieces.push(Piece {
            lo: x,
            hi: x,
            point: true,
            winner: argmin(series, seg, x, crossing),
        });
        if let Some(&(next, _, _)) = points.get(n + 1) {
            let mid = x + (next - x) / 2.0;
            pieces.push(Piece {
                lo: x,
                hi: next,
                point: false,
                winner: argmin(series, seg, mid, false),
            });
        }
    }

    let mut intervals: Vec<PartitionInterval> = Vec::new();
    for p in pieces {
        match intervals.last_mut() {
            Some(last) if last.series == p.winner => {
                last.hi = p.hi;
                last.hi_closed = p.point;
            }
            _ => {
                let (lo_closed, hi_closed) = (p.point, p.point);
                intervals.push(PartitionInterval {
                    lo: p.lo,
                    hi: p.hi,
                    lo_closed,
                    hi_closed,
                    winner: series[p.winner].variant.clone(),
                    label: series[p.winner].label.clone(),
                    series: p.winner,
                });
            }
        }
    }
    Ok(GreenPartition {
        domain: (grid[0], grid[grid.len() - 1]),
        intervals,
    })
}

/// Relabels intervals to the dominant winner wherever its energy stays within
/// `band` of the local winner, then merges neighbours.
///
/// The dominant winner covers the largest total width; ties go to the lowest
/// series index. The band test is exact because `dominant - (1 + band) *
/// winner` is linear between breakpoints.
pub fn simplify_within_band(
    partition: &GreenPartition,
    series: &[ComparisonSeries],
    band: f64,
) -> Result<GreenPartition, AnalysisError> {
    let grid = shared_grid(series)?;
    let mut widths: BTreeMap<usize, f64> = BTreeMap::new();
    for iv in &partition.intervals {
        *widths.entry(iv.series).or_default() += iv.width();
    }
    let Some(dominant) = widths
        .iter()
        .fold(None::<(usize, f64)>, |best, (&s, &w)| match best {
            Some((_, bw)) if bw >= w => best,
            _ => Some((s, w)),
        })
        .map(|(s, _)| s)
    else {
        return Ok(partition.clone());
    };
    let dom = &series[dominant];

    let within = |iv: &PartitionInterval| {
        let local = &series[iv.series];
        let mut xs = vec![iv.lo, iv.hi];
        xs.extend(grid.iter().copied().filter(|&x| x > iv.lo && x < iv.hi));
        xs.into_iter().all(|x| {
            let seg = segment_of(&grid, x);
            dom.on_segment(seg, x) <= (1.0 + band) * local.on_segment(seg, x)
        })
    };

    let mut intervals: Vec<PartitionInterval> = Vec::new();
    for iv in &partition.intervals {
        let mut iv = iv.clone();
        if iv.series != dominant && within(&iv) {
            iv.series = dominant;
            iv.winner = dom.variant.clone();
            iv.label = dom.label.clone();
        }
        match intervals.last_mut() {
            Some(last) if last.series == iv.series => {
                last.hi = iv.hi;
                last.hi_closed = iv.hi_closed;
            }
            _ => intervals.push(iv),
        }
    }
    Ok(GreenPartition {
        domain: partition.domain,
        intervals,
    })
}

fn segment_of(grid: &[f64], x: f64) -> usize {
    grid.partition_point(|&g| g <= x).clamp(1, grid.len() - 1) - 1
}

/// Fixed parts of the rules derived from one partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleTemplate {
    pub id_prefix: String,
    /// Monitored parameter the conditions test.
    pub event: String,
    #[serde(default)]
    pub guard: BTreeMap<String, String>,
    #[serde(default)]
    pub priority_base: i64,
}

/// One rule per interval, binding its winner.
///
/// The first rule is bounded above only and the last below only, so the
/// conditions cover every value. A positive `hysteresis` pulls each interior
/// threshold `t` apart to `t - h` and `t + h`; inside that dead band no rule
/// fires and the current binding is kept.
pub fn derive_rules(partition: &GreenPartition, template: &RuleTemplate, hysteresis: f64) -> RuleSet {
    let n = partition.intervals.len();
    let h = hysteresis.max(0.0);
    let rules = partition
        .intervals
        .iter()
        .enumerate()
        .map(|(i, iv)| {
            let mut preds = Vec::new();
            if i > 0 {
                let t = iv.lo + h;
                preds.push(if iv.lo_closed && h == 0.0 {
                    Predicate::Ge { threshold: t }
                } else {
                    Predicate::Gt { threshold: t }
                });
            }
            if i + 1 < n {
                let t = iv.hi - h;
                preds.push(if iv.hi_closed || h > 0.0 {
                    Predicate::Le { threshold: t }
                } else {
                    Predicate::Lt { threshold: t }
                });
            }
            let condition = match preds.len() {
                0 => Condition::always(),
                1 => Condition::Single(preds[0]),
                _ => Condition::All { all: preds },
            };
            EcaRule {
                id: format!("{}-{}", template.id_prefix, i + 1),
                priority: template.priority_base + i as i64,
                event: template.event.clone(),
                guard: template.guard.clone(),
                condition,
                action: ReconfigurationAction::bind(iv.winner.clone()),
            }
        })
        .collect();
    RuleSet::new(rules).expect("derived rule ids are unique and thresholds finite")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsRow {
    pub param: f64,
    pub baseline_j: f64,
    pub alternative_j: f64,
    /// `(baseline - alternative) / baseline`; `None` where the baseline is not positive.
    pub saving_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsReport {
    pub baseline: String,
    pub alternative: String,
    pub rows: Vec<SavingsRow>,
}

impl SavingsReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("param,baseline_j,alternative_j,saving_fraction\n");
        for r in &self.rows {
            let frac = r.saving_fraction.map(|f| format!("{f:.3}")).unwrap_or_else(|| "undefined".into());
            let _ = writeln!(out, "{},{},{},{}", r.param, r.baseline_j, r.alternative_j, frac);
        }
        out
    }
}

impl std::fmt::Display for SavingsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "savings of {} over {}", self.alternative, self.baseline)?;
        for r in &self.rows {
            match r.saving_fraction {
                Some(s) => writeln!(f, "  {:>8} MB  {:>6.1}%", r.param, s * 100.0)?,
                None => writeln!(f, "  {:>8} MB  undefined", r.param)?,
            }
        }
        Ok(())
    }
}

pub fn savings(
    repo: &ProfileRepository,
    baseline: &Candidate,
    alternative: &Candidate,
    params: &[f64],
) -> Result<SavingsReport, AnalysisError> {
    let energy = |c: &Candidate, x: f64| {
        repo.compose_energy(&c.chain, x)
            .map(|e| e.total_j)
            .map_err(|source| AnalysisError::Energy {
                label: c.label.clone(),
                source,
            })
    };
    let rows = params
        .iter()
        .map(|&param| {
            let baseline_j = energy(baseline, param)?;
            let alternative_j = energy(alternative, param)?;
            let saving_fraction = (baseline_j > 0.0).then(|| (baseline_j - alternative_j) / baseline_j);
            Ok(SavingsRow {
                param,
                baseline_j,
                alternative_j,
                saving_fraction,
            })
        })
        .collect::<Result<_, AnalysisError>>()?;
    Ok(SavingsReport {
        baseline: baseline.label.clone(),
        alternative: alternative.label.clone(),
        rows,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `param,<label1>,<label2>,...` with one row per grid point.
pub fn series_csv(series: &[ComparisonSeries]) -> String {
    let mut out = String::from("param");
    for s in series {
        out.push(',');
        out.push_str(&csv_field(&s.label));
    }
    out.push('\n');
    if let Some(first) = series.first() {
        for (i, p) in first.points.iter().enumerate() {
            let _ = write!(out, "{}", p.param);
            for s in series {
                let _ = write!(out, ",{}", s.points[i].energy_j);
            }
            out.push('\n');
        }
    }
    out
}
