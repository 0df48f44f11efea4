//! Construction and verification of the bundled Media Store energy dataset.
//!
//! Absolute joule values for the codec experiment are not available, so the
//! dataset is built from a small set of free parameters (a linear LAME
//! baseline, codec output ratios, and a convex upload-cost curve) and the
//! remaining knots are solved so the published savings ratios hold exactly.
//! [`verify`] re-checks every ordering and ratio by direct evaluation of the
//! emitted document; it shares no code with the `ecoloop-core` interpolation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const COMPRESSION: &str = "Compression";
pub const COMMUNICATION: &str = "Communication";
pub const LAME: &str = "Compression.LAME";
pub const VORBIS: &str = "Compression.Vorbis";
pub const SPEEX: &str = "Compression.Speex";
pub const OUTPUT_SIZE: &str = "output_size";

/// Knot values are rounded to this many decimals before being written.
const DECIMALS: i32 = 6;
/// Relative tolerance for the equalities the fitter solves exactly (slack is
/// only the decimal rounding above).
const SOLVED_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub param: f64,
    pub energy_j: f64,
    #[serde(default)]
    pub outputs: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub concern: String,
    pub variant: String,
    pub parameter: Parameter,
    pub samples: Vec<Sample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub profiles: Vec<Profile>,
}

impl Dataset {
    pub fn profile(&self, variant: &str) -> Option<&Profile> {
        self.profiles.iter().find(|p| p.variant == variant)
    }
}

/// Free parameters of the construction. Everything not listed here is solved.
#[derive(Debug, Clone)]
pub struct FitParameters {
    pub grid: Vec<f64>,
    /// LAME energy is `lame_fixed_j + lame_per_mb_j * size`.
    pub lame_fixed_j: f64,
    pub lame_per_mb_j: f64,
    /// Vorbis / LAME local energy ratio per grid knot; `None` marks the
    /// anchors solved from the savings targets.
    pub vorbis_ratio: Vec<Option<f64>>,
    /// Speex / LAME local energy ratio per grid knot; `None` marks anchors
    /// solved from the remote savings targets.
    pub speex_ratio: Vec<Option<f64>>,
    pub output_ratio_lame: f64,
    pub output_ratio_vorbis: f64,
    pub output_ratio_speex: f64,
    /// Upload cost of an empty payload.
    pub comm_fixed_j: f64,
    /// Upload cost slope over the small-payload segment.
    pub comm_small_slope_j_per_mb: f64,
    /// Upload cost of the LAME output at the first and last anchor sizes.
    pub comm_lame_mid_j: f64,
    pub comm_lame_top_j: f64,
    /// Upper end of the payload axis and its cost.
    pub comm_max_payload_mb: f64,
    pub comm_max_j: f64,
    pub targets: SavingsTargets,
}

/// Savings fractions the dataset must reproduce, at two anchor sizes.
#[derive(Debug, Clone, Copy)]
pub struct SavingsTargets {
    pub mid_size: f64,
    pub top_size: f64,
    /// Local LAME -> Vorbis.
    pub local_mid: f64,
    pub local_top: f64,
    /// Remote LAME -> Speex.
    pub remote_lame_mid: f64,
    pub remote_lame_top: f64,
    /// Remote Vorbis -> Speex.
    pub remote_vorbis_mid: f64,
    pub remote_vorbis_top: f64,
    /// Size at which local LAME and Vorbis energies coincide.
    pub local_crossover: f64,
}

impl Default for SavingsTargets {
    fn default() -> Self {
        Self {
            mid_size: 128.0,
            top_size: 512.0,
            local_mid: 0.48,
            local_top: 0.65,
            remote_lame_mid: 0.52,
            remote_lame_top: 0.81,
            remote_vorbis_mid: 0.43,
            remote_vorbis_top: 0.54,
            local_crossover: 64.0,
        }
    }
}

impl Default for FitParameters {
    fn default() -> Self {
        Self {
            grid: vec![4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 384.0, 512.0],
            lame_fixed_j: 1.5,
            lame_per_mb_j: 0.375,
            vorbis_ratio: vec![
                Some(1.06),
                Some(1.05),
                Some(1.04),
                Some(1.02),
                Some(1.0),
                None,
                Some(0.42),
                Some(0.38),
                None,
            ],
            speex_ratio: vec![
                Some(1.08),
                Some(1.07),
                Some(1.06),
                Some(1.06),
                Some(1.20),
                None,
                Some(1.45),
                Some(1.50),
                None,
            ],
            output_ratio_lame: 0.09,
            output_ratio_vorbis: 0.08,
            output_ratio_speex: 0.02,
            comm_fixed_j: 98.0,
            comm_small_slope_j_per_mb: 0.78125,
            comm_lame_mid_j: 300.0,
            comm_lame_top_j: 2800.0,
            comm_max_payload_mb: 64.0,
            comm_max_j: 9000.0,
            targets: SavingsTargets::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitError {
    GridMismatch(&'static str),
    /// The Speex output at the top anchor must land on an existing upload knot.
    AnchorMisaligned { expected: f64, found: f64 },
    Infeasible(String),
}

impl std::fmt::Display for FitError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitError::GridMismatch(what) => write!(f, "ratio table `{what}` does not match the grid"),
            FitError::AnchorMisaligned { expected, found } => write!(
                f,
                "speex top-anchor payload {found} does not coincide with vorbis mid-anchor payload {expected}"
            ),
            FitError::Infeasible(msg) => write!(f, "infeasible parameters: {msg}"),
        }
    }
}

impl std::error::Error for FitError {}

fn round(x: f64) -> f64 {
    let scale = 10f64.powi(DECIMALS);
    (x * scale).round() / scale
}

fn grid_index(grid: &[f64], x: f64) -> Option<usize> {
    grid.iter().position(|&g| g == x)
}

/// Solves the dataset from `params`.
pub fn fit(params: &FitParameters) -> Result<Dataset, FitError> {
    let grid = &params.grid;
    if params.vorbis_ratio.len() != grid.len() {
        return Err(FitError::GridMismatch("vorbis_ratio"));
    }
    if params.speex_ratio.len() != grid.len() {
        return Err(FitError::GridMismatch("speex_ratio"));
    }
    let t = params.targets;
    let mid = grid_index(grid, t.mid_size).ok_or(FitError::GridMismatch("mid anchor"))?;
    let top = grid_index(grid, t.top_size).ok_or(FitError::GridMismatch("top anchor"))?;

    let lame: Vec<f64> = grid
        .iter()
        .map(|s| round(params.lame_fixed_j + params.lame_per_mb_j * s))
        .collect();

    // Local Vorbis: savings anchors fix the ratio at mid and top.
    let mut vorbis = Vec::with_capacity(grid.len());
    for (i, ratio) in params.vorbis_ratio.iter().enumerate() {
        let ratio = match (*ratio, i) {
            (_, i) if i == mid => 1.0 - t.local_mid,
            (_, i) if i == top => 1.0 - t.local_top,
            (Some(r), _) => r,
            (None, _) => return Err(FitError::Infeasible(format!("vorbis ratio missing at {}", grid[i]))),
        };
        vorbis.push(round(lame[i] * ratio));
    }

    let out = |ratio: f64, s: f64| round(ratio * s);
    let (rl, rv, rs) = (
        params.output_ratio_lame,
        params.output_ratio_vorbis,
        params.output_ratio_speex,
    );
    let (sm, st) = (t.mid_size, t.top_size);
    if out(rs, st) != out(rv, sm) {
        return Err(FitError::AnchorMisaligned {
            expected: out(rv, sm),
            found: out(rs, st),
        });
    }

    // Upload-cost knots. Known: fixed cost, small-payload slope, LAME anchors.
    let c0 = params.comm_fixed_j;
    let p_small = out(rs, sm);
    let c_small = round(c0 + params.comm_small_slope_j_per_mb * p_small);
    let c_lame_mid = params.comm_lame_mid_j;
    let c_lame_top = params.comm_lame_top_j;

    // Remote totals at the mid anchor, with T_x = E_x + C(out_x):
    //   T_speex = (1 - remote_lame_mid)   * T_lame
    //   T_speex = (1 - remote_vorbis_mid) * T_vorbis
    let total_lame_mid = lame[mid] + c_lame_mid;
    let total_speex_mid = (1.0 - t.remote_lame_mid) * total_lame_mid;
    let total_vorbis_mid = total_speex_mid / (1.0 - t.remote_vorbis_mid);
    let c_vorbis_mid = round(total_vorbis_mid - vorbis[mid]);
    let speex_mid = round(total_speex_mid - c_small);

    let total_lame_top = lame[top] + c_lame_top;
    let total_speex_top = (1.0 - t.remote_lame_top) * total_lame_top;
    let total_vorbis_top = total_speex_top / (1.0 - t.remote_vorbis_top);
    let c_vorbis_top = round(total_vorbis_top - vorbis[top]);
    // Speex top payload coincides with the Vorbis mid payload knot.
    let speex_top = round(total_speex_top - c_vorbis_mid);

    let mut speex = Vec::with_capacity(grid.len());
    for (i, ratio) in params.speex_ratio.iter().enumerate() {
        let e = match (*ratio, i) {
            (_, i) if i == mid => speex_mid,
            (_, i) if i == top => speex_top,
            (Some(r), _) => round(lame[i] * r),
            (None, _) => return Err(FitError::Infeasible(format!("speex ratio missing at {}", grid[i]))),
        };
        speex.push(e);
    }

    let mut comm_knots = vec![
        (0.0, c0),
        (p_small, c_small),
        (out(rv, sm), c_vorbis_mid),
        (out(rl, sm), c_lame_mid),
        (out(rv, st), c_vorbis_top),
        (out(rl, st), c_lame_top),
        (params.comm_max_payload_mb, params.comm_max_j),
    ];
    comm_knots.sort_by(|a, b| a.0.total_cmp(&b.0));

    let codec = |variant: &str, energies: &[f64], ratio: f64, source: &str| Profile {
        concern: COMPRESSION.to_string(),
        variant: variant.to_string(),
        parameter: Parameter {
            name: "file_size".into(),
            unit: "MB".into(),
        },
        samples: grid
            .iter()
            .zip(energies)
            .map(|(&s, &e)| Sample {
                param: s,
                energy_j: e,
                outputs: BTreeMap::from([(OUTPUT_SIZE.to_string(), out(ratio, s))]),
            })
            .collect(),
        source: Some(source.to_string()),
    };

    let dataset = Dataset {
        profiles: vec![
            codec(
                LAME,
                &lame,
                rl,
                "fit-dataset: linear baseline, MP3 128 kbit/s operating point",
            ),
            codec(
                VORBIS,
                &vorbis,
                rv,
                "fit-dataset: ratio table over LAME, local savings anchors solved",
            ),
            codec(
                SPEEX,
                &speex,
                rs,
                "fit-dataset: ratio table over LAME, remote savings anchors solved",
            ),
            Profile {
                concern: COMMUNICATION.to_string(),
                variant: COMMUNICATION.to_string(),
                parameter: Parameter {
                    name: "payload_size".into(),
                    unit: "MB".into(),
                },
                samples: comm_knots
                    .into_iter()
                    .map(|(p, e)| Sample {
                        param: p,
                        energy_j: e,
                        outputs: BTreeMap::new(),
                    })
                    .collect(),
                source: Some("fit-dataset: convex upload cost, knots at codec output anchors".into()),
            },
        ],
    };
    Ok(dataset)
}

/// Piecewise-linear evaluation over a profile's knots, `None` outside range.
fn eval(samples: &[Sample], x: f64, pick: impl Fn(&Sample) -> f64) -> Option<f64> {
    let first = samples.first()?;
    let last = samples.last()?;
    if x < first.param || x > last.param {
        return None;
    }
    for w in samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if x == a.param {
            return Some(pick(a));
        }
        if x == b.param {
            return Some(pick(b));
        }
        if x > a.param && x < b.param {
            let t = (x - a.param) / (b.param - a.param);
            return Some(pick(a) + (pick(b) - pick(a)) * t);
        }
    }
    if samples.len() == 1 && x == first.param {
        return Some(pick(first));
    }
    None
}

pub fn energy(profile: &Profile, x: f64) -> Option<f64> {
    eval(&profile.samples, x, |s| s.energy_j)
}

pub fn output(profile: &Profile, x: f64) -> Option<f64> {
    eval(&profile.samples, x, |s| {
        s.outputs.get(OUTPUT_SIZE).copied().unwrap_or(f64::NAN)
    })
}

/// Local energy plus upload of the compressed output.
pub fn remote_total(dataset: &Dataset, codec: &str, x: f64) -> Option<f64> {
    let p = dataset.profile(codec)?;
    let comm = dataset.profile(COMMUNICATION)?;
    Some(energy(p, x)? + energy(comm, output(p, x)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verification {
    pub checks: Vec<Check>,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

fn close(actual: f64, expected: f64) -> bool {
    (actual - expected).abs() <= SOLVED_TOLERANCE * expected.abs().max(1.0)
}

/// Checks every qualitative ordering and quantitative ratio the dataset is
/// built to satisfy.
pub fn verify(dataset: &Dataset, targets: &SavingsTargets) -> Verification {
    let mut v = Verification { checks: Vec::new() };
    let (Some(lame), Some(vorbis), Some(speex), Some(comm)) = (
        dataset.profile(LAME),
        dataset.profile(VORBIS),
        dataset.profile(SPEEX),
        dataset.profile(COMMUNICATION),
    ) else {
        v.push("profiles present", false, "expected LAME, Vorbis, Speex and Communication".into());
        return v;
    };
    v.push(
        "profile count",
        dataset.profiles.len() == 4,
        format!("{} profiles", dataset.profiles.len()),
    );

    let grid: Vec<f64> = lame.samples.iter().map(|s| s.param).collect();
    let same_grid = [vorbis, speex]
        .iter()
        .all(|p| p.samples.iter().map(|s| s.param).eq(grid.iter().copied()));
    v.push(
        "codec grid",
        same_grid && grid.len() == 9 && grid.first() == Some(&4.0) && grid.last() == Some(&512.0),
        format!("{grid:?}"),
    );

    for p in &dataset.profiles {
        let sorted = p.samples.windows(2).all(|w| w[0].param < w[1].param);
        let nonneg = p
            .samples
            .iter()
            .all(|s| s.energy_j >= 0.0 && s.outputs.values().all(|&o| o >= 0.0));
        v.push(
            &format!("{} well-formed", p.variant),
            sorted && nonneg && p.samples.len() >= 2,
            format!("{} samples", p.samples.len()),
        );
    }

    let e = |p: &Profile, x: f64| energy(p, x).unwrap_or(f64::NAN);
    let total = |codec: &str, x: f64| remote_total(dataset, codec, x).unwrap_or(f64::NAN);
    let saving = |base: f64, alt: f64| (base - alt) / base;

    for (size, target) in [(targets.mid_size, targets.local_mid), (targets.top_size, targets.local_top)] {
        let s = saving(e(lame, size), e(vorbis, size));
        v.push(
            &format!("local LAME->Vorbis saving at {size}"),
            close(s, target),
            format!("{s:.6} vs {target}"),
        );
    }
    for (size, t_lame, t_vorbis) in [
        (targets.mid_size, targets.remote_lame_mid, targets.remote_vorbis_mid),
        (targets.top_size, targets.remote_lame_top, targets.remote_vorbis_top),
    ] {
        let sl = saving(total(LAME, size), total(SPEEX, size));
        let sv = saving(total(VORBIS, size), total(SPEEX, size));
        v.push(
            &format!("remote LAME->Speex saving at {size}"),
            close(sl, t_lame),
            format!("{sl:.6} vs {t_lame}"),
        );
        v.push(
            &format!("remote Vorbis->Speex saving at {size}"),
            close(sv, t_vorbis),
            format!("{sv:.6} vs {t_vorbis}"),
        );
    }

    let cross = targets.local_crossover;
    let below_ok = grid.iter().filter(|&&s| s < cross).all(|&s| e(lame, s) < e(vorbis, s));
    let at_ok = e(lame, cross) == e(vorbis, cross);
    let above_ok = grid.iter().filter(|&&s| s > cross).all(|&s| e(vorbis, s) < e(lame, s));
    v.push(
        "local LAME/Vorbis crossover",
        below_ok && at_ok && above_ok,
        format!("LAME < Vorbis below {cross}: {below_ok}, equal at {cross}: {at_ok}, Vorbis < LAME above: {above_ok}"),
    );

    let speex_most = grid
        .iter()
        .all(|&s| e(speex, s) >= e(lame, s) && e(speex, s) >= e(vorbis, s));
    v.push("Speex consumes the most locally", speex_most, "all grid knots".into());

    let lame_monotone = lame.samples.windows(2).all(|w| w[0].energy_j < w[1].energy_j);
    v.push("LAME baseline monotone", lame_monotone, String::new());

    let out_order = grid.iter().all(|&s| {
        let (l, vo, sp) = (
            output(lame, s).unwrap_or(f64::NAN),
            output(vorbis, s).unwrap_or(f64::NAN),
            output(speex, s).unwrap_or(f64::NAN),
        );
        sp < vo && vo < l
    });
    v.push("output size Speex < Vorbis < LAME", out_order, String::new());

    let slopes: Vec<f64> = comm
        .samples
        .windows(2)
        .map(|w| (w[1].energy_j - w[0].energy_j) / (w[1].param - w[0].param))
        .collect();
    let convex = slopes.windows(2).all(|w| w[0] <= w[1]);
    let increasing = slopes.iter().all(|&s| s >= 0.0);
    v.push(
        "communication convex and nondecreasing",
        convex && increasing,
        format!("slopes {slopes:?}"),
    );

    let payload_max = grid
        .iter()
        .filter_map(|&s| output(lame, s))
        .fold(0.0f64, f64::max);
    let covered = comm.samples.first().map(|s| s.param) == Some(0.0)
        && comm.samples.last().map(|s| s.param).unwrap_or(0.0) >= payload_max;
    v.push("communication covers codec outputs", covered, format!("max payload {payload_max}"));

    let at4 = [total(LAME, 4.0), total(VORBIS, 4.0), total(SPEEX, 4.0)];
    let lo = at4.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = at4.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.push(
        "remote totals similar at 4 MB",
        (hi - lo) / lo <= 0.10,
        format!("{at4:?}"),
    );

    let speex_remote_min = grid
        .iter()
        .filter(|&&s| s >= 8.0)
        .all(|&s| total(SPEEX, s) < total(LAME, s) && total(SPEEX, s) < total(VORBIS, s));
    v.push("Speex greenest remote from 8 MB", speex_remote_min, String::new());

    let monotone_savings = {
        let s: Vec<f64> = grid
            .iter()
            .filter(|&&x| x >= targets.mid_size)
            .map(|&x| saving(e(lame, x), e(vorbis, x)))
            .collect();
        s.windows(2).all(|w| w[0] <= w[1])
    };
    v.push("local savings nondecreasing from mid anchor", monotone_savings, String::new());

    v
}
