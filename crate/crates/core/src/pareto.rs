//! Robust rate region sampling.
//!
//! Each transmitter solves its candidate program on a uniform λ grid; joint
//! rate tuples come from combining one candidate per transmitter, and the
//! boundary is extracted by non-dominated filtering. Because worst-case rates
//! are increasing in the intended amplitude and decreasing in every
//! interference amplitude, a candidate that is weakly worse in all of its own
//! amplitudes than another candidate of the same transmitter can never
//! contribute a boundary point; [`boundary_region`] drops such candidates
//! before forming the product.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ordered_float::OrderedFloat;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BeamformerSet, Scenario};
use crate::numerics::CVector;
use crate::robust_design::{interference_caps, solve_pareto_candidate, ConeStatus};
use crate::worst_case::{rate_from_gains, transmitter_amplitudes};

/// Uniform grid `{0, 1/n, …, 1}` for each `λ_kℓ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaGrid {
    divisions: usize,
}

impl LambdaGrid {
    /// `step` must divide one (up to round-off), e.g. 0.5, 0.05 or 0.001.
    pub fn new(step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0 && step <= 1.0) {
            return Err(Error::param(format!("grid step must lie in (0, 1], got {step}")));
        }
        let divisions = (1.0 / step).round();
        if ((divisions * step) - 1.0).abs() > 1e-9 {
            return Err(Error::param(format!("grid step {step} does not divide 1")));
        }
        Ok(Self {
            divisions: divisions as usize,
        })
    }

    pub fn step(&self) -> f64 {
        1.0 / self.divisions as f64
    }

    pub fn len(&self) -> usize {
        self.divisions + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, i: usize) -> f64 {
        i as f64 / self.divisions as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i)).collect()
    }

    /// All `λ_k ∈ grid^{dims}` in lexicographic order, first coordinate slowest.
    pub fn vectors(&self, dims: usize) -> Vec<Vec<f64>> {
        let total = self.len().pow(dims as u32);
        (0..total)
            .map(|mut idx| {
                let mut v = vec![0.0; dims];
                for slot in v.iter_mut().rev() {
                    *slot = self.value(idx % self.len());
                    idx /= self.len();
                }
                v
            })
            .collect()
    }
}

/// One solved grid point of one transmitter.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// `λ_kℓ` for `ℓ ≠ k` in receiver order.
    pub lambda: Vec<f64>,
    pub w: CVector,
    /// Worst-case amplitudes at every receiver (own receiver: intended).
    pub amplitudes: Vec<f64>,
    pub iterations: u32,
}

/// A grid point whose cone program did not return an optimal solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFailure {
    pub transmitter: usize,
    pub lambda: Vec<f64>,
    pub status: ConeStatus,
}

/// Outcome of one grid solve, kept for logging.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRecord {
    pub transmitter: usize,
    pub lambda: Vec<f64>,
    pub status: ConeStatus,
    pub iterations: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTable {
    /// Optimal candidates per transmitter, in grid order.
    pub per_transmitter: Vec<Vec<Candidate>>,
    pub gamma: Vec<Vec<f64>>,
    pub records: Vec<GridRecord>,
    pub failures: Vec<GridFailure>,
}

/// Solves every transmitter's candidate program over the grid. Solves run in
/// parallel; results keep grid order. Failed grid points are recorded and
/// skipped; a transmitter with no successful solve gets the zero beamformer.
pub fn sweep_candidates(s: &Scenario, grid: &LambdaGrid) -> Result<CandidateTable> {
    let gamma = interference_caps(s)?;
    let k_links = s.num_links();
    let lambdas = grid.vectors(k_links - 1);
    let jobs: Vec<(usize, &Vec<f64>)> = (0..k_links).flat_map(|k| lambdas.iter().map(move |l| (k, l))).collect();
    let solved: Vec<_> = jobs
        .par_iter()
        .map(|&(k, lam)| solve_pareto_candidate(s, k, lam, &gamma).map(|sol| (k, lam, sol)))
        .collect::<Result<Vec<_>>>()?;

    let mut per_transmitter: Vec<Vec<Candidate>> = vec![Vec::new(); k_links];
    let mut records = Vec::with_capacity(solved.len());
    let mut failures = Vec::new();
    for (k, lam, sol) in solved {
        records.push(GridRecord {
            transmitter: k,
            lambda: lam.clone(),
            status: sol.status,
            iterations: sol.iterations,
        });
        if sol.status != ConeStatus::Optimal {
            failures.push(GridFailure {
                transmitter: k,
                lambda: lam.clone(),
                status: sol.status,
            });
            continue;
        }
        let amplitudes = transmitter_amplitudes(s, k, &sol.w)?;
        per_transmitter[k].push(Candidate {
            lambda: lam.clone(),
            w: sol.w,
            amplitudes,
            iterations: sol.iterations,
        });
    }
    for (k, cands) in per_transmitter.iter_mut().enumerate() {
        if cands.is_empty() {
            let w = CVector::zeros(s.link(k).antennas);
            cands.push(Candidate {
                lambda: vec![0.0; k_links - 1],
                amplitudes: transmitter_amplitudes(s, k, &w)?,
                w,
                iterations: 0,
            });
        }
    }
    Ok(CandidateTable {
        per_transmitter,
        gamma,
        records,
        failures,
    })
}

/// Worst-case rates of the tuple choosing candidate `choice[k]` for every
/// transmitter `k`; identical to [`crate::worst_case::worst_case_rates`] on
/// the corresponding beamformers.
pub fn tuple_rates(per_transmitter: &[Vec<Candidate>], choice: &[usize], noise_power: f64) -> Vec<f64> {
    let amps: Vec<&[f64]> = choice
        .iter()
        .enumerate()
        .map(|(k, &i)| per_transmitter[k][i].amplitudes.as_slice())
        .collect();
    rates_from_amplitudes(&amps, noise_power)
}

fn rates_from_amplitudes(amps: &[&[f64]], noise_power: f64) -> Vec<f64> {
    let k_links = amps.len();
    (0..k_links)
        .map(|l| {
            let interference: f64 = (0..k_links).filter(|&k| k != l).map(|k| amps[k][l].powi(2)).sum();
            rate_from_gains(amps[l][l].powi(2), interference, noise_power)
        })
        .collect()
}

/// A joint rate tuple and the candidate indices that produce it.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePoint {
    pub rates: Vec<f64>,
    /// Index into [`RegionSample::candidates`] per transmitter.
    pub choice: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSample {
    pub points: Vec<RatePoint>,
    pub candidates: Vec<Vec<Candidate>>,
    pub scenario_digest: String,
    pub grid_step: f64,
    pub records: Vec<GridRecord>,
    pub failures: Vec<GridFailure>,
}

impl RegionSample {
    /// `λ` matrix (K×K, zero diagonal) that produced `p`.
    pub fn lambda_matrix(&self, p: &RatePoint) -> Vec<Vec<f64>> {
        let k_links = p.choice.len();
        p.choice
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let mut row = vec![0.0; k_links];
                let mut it = self.candidates[k][i].lambda.iter();
                for (l, v) in row.iter_mut().enumerate() {
                    if l != k {
                        *v = *it.next().expect("K-1 lambdas");
                    }
                }
                row
            })
            .collect()
    }

    pub fn beamformers(&self, p: &RatePoint) -> BeamformerSet {
        BeamformerSet::new(
            p.choice
                .iter()
                .enumerate()
                .map(|(k, &i)| self.candidates[k][i].w.clone())
                .collect(),
        )
    }

    /// The non-dominated subset of this sample.
    pub fn filtered(&self) -> RegionSample {
        RegionSample {
            points: pareto_filter(self.points.clone()),
            ..self.clone()
        }
    }
}

/// Largest product [`sweep_region`] materialises.
pub const MAX_PRODUCT_POINTS: usize = 20_000_000;

/// Every tuple of the candidate product, unfiltered, in lexicographic
/// candidate order.
pub fn sweep_region(s: &Scenario, grid_step: f64) -> Result<RegionSample> {
    let grid = LambdaGrid::new(grid_step)?;
    let table = sweep_candidates(s, &grid)?;
    let sizes: Vec<usize> = table.per_transmitter.iter().map(Vec::len).collect();
    let total = sizes.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
    match total {
        Some(t) if t <= MAX_PRODUCT_POINTS => {}
        _ => {
            return Err(Error::param(
                "candidate product too large to materialise; use the filtered boundary instead",
            ))
        }
    }
    let points = product_indices(&sizes)
        .map(|choice| RatePoint {
            rates: tuple_rates(&table.per_transmitter, &choice, s.noise_power()),
            choice,
        })
        .collect();
    Ok(RegionSample {
        points,
        candidates: table.per_transmitter,
        scenario_digest: s.digest(),
        grid_step: grid.step(),
        records: table.records,
        failures: table.failures,
    })
}

fn product_indices(sizes: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = sizes.iter().product();
    (0..total).map(move |mut idx| {
        let mut c = vec![0; sizes.len()];
        for (slot, &n) in c.iter_mut().zip(sizes).rev() {
            *slot = idx % n;
            idx /= n;
        }
        c
    })
}

/// Drops candidates weakly dominated in gain space (larger intended
/// amplitude, smaller interference amplitudes), keeping grid order.
pub fn prefilter_candidates(k: usize, cands: &[Candidate]) -> Vec<usize> {
    let Some(first) = cands.first() else {
        return Vec::new();
    };
    let dim = first.amplitudes.len();
    let flat: Vec<f64> = cands
        .iter()
        .flat_map(|c| c.amplitudes.iter().enumerate().map(move |(l, &a)| if l == k { a } else { -a }))
        .collect();
    let mut keep = maxima_flat(&flat, dim);
    keep.sort_unstable();
    keep
}

/// Pareto boundary of the grid sample: per-transmitter prefilter, product
/// enumeration (blocked and parallel over the first transmitter's
/// candidates) and non-dominated filtering.
pub fn boundary_region(s: &Scenario, grid_step: f64) -> Result<RegionSample> {
    let grid = LambdaGrid::new(grid_step)?;
    let table = sweep_candidates(s, &grid)?;
    let kept: Vec<Vec<usize>> = table
        .per_transmitter
        .iter()
        .enumerate()
        .map(|(k, c)| prefilter_candidates(k, c))
        .collect();
    let noise = s.noise_power();
    let per = &table.per_transmitter;
    let points = filtered_product(&kept, |choice| tuple_rates(per, choice, noise))
        .into_iter()
        .map(|(choice, rates)| RatePoint { rates, choice })
        .collect();

    Ok(RegionSample {
        points,
        candidates: table.per_transmitter,
        scenario_digest: s.digest(),
        grid_step: grid.step(),
        records: table.records,
        failures: table.failures,
    })
}

/// Non-dominated values of `eval` over the product of the index lists in
/// `kept` (one list per transmitter). Enumeration is blocked and parallel
/// over the first list; results follow [`maxima_flat`] order, ties resolved
/// in product order. Returned choices are entries of `kept`.
pub fn filtered_product<F>(kept: &[Vec<usize>], eval: F) -> Vec<(Vec<usize>, Vec<f64>)>
where
    F: Fn(&[usize]) -> Vec<f64> + Sync,
{
    let Some(first) = kept.first() else {
        return Vec::new();
    };
    let rest_sizes: Vec<usize> = kept[1..].iter().map(Vec::len).collect();
    let block = |i0: usize| -> Vec<(Vec<usize>, Vec<f64>)> {
        let items: Vec<(Vec<usize>, Vec<f64>)> = product_indices(&rest_sizes)
            .map(|rest| {
                let mut choice = Vec::with_capacity(kept.len());
                choice.push(first[i0]);
                choice.extend(rest.iter().enumerate().map(|(j, &i)| kept[j + 1][i]));
                let v = eval(&choice);
                (choice, v)
            })
            .collect();
        filter_items(items)
    };
    let blocks: Vec<_> = (0..first.len()).into_par_iter().map(block).collect();
    filter_items(blocks.into_iter().flatten().collect())
}

fn filter_items(items: Vec<(Vec<usize>, Vec<f64>)>) -> Vec<(Vec<usize>, Vec<f64>)> {
    let Some(first) = items.first() else {
        return items;
    };
    let dim = first.1.len();
    let flat: Vec<f64> = items.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    let keep = maxima_flat(&flat, dim);
    let mut slots: Vec<Option<_>> = items.into_iter().map(Some).collect();
    keep.into_iter().map(|i| slots[i].take().expect("unique index")).collect()
}

/// Maximal elements under componentwise `≥` (at least one strict), sorted
/// lexicographically by rate descending. Among identical tuples the first in
/// input order is kept.
pub fn pareto_filter(points: Vec<RatePoint>) -> Vec<RatePoint> {
    let Some(first) = points.first() else {
        return points;
    };
    let dim = first.rates.len();
    let flat: Vec<f64> = points.iter().flat_map(|p| p.rates.iter().copied()).collect();
    let keep = maxima_flat(&flat, dim);
    let mut slots: Vec<Option<RatePoint>> = points.into_iter().map(Some).collect();
    keep.into_iter().map(|i| slots[i].take().expect("unique index")).collect()
}

fn lex_desc(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match y.total_cmp(x) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Indices of the non-dominated rows of a row-major `n × dim` array, in
/// lexicographically descending row order; ties keep the lowest index.
/// Values must be finite.
pub fn maxima_flat(values: &[f64], dim: usize) -> Vec<usize> {
    if dim == 0 || values.is_empty() {
        return Vec::new();
    }
    let row = |i: usize| &values[i * dim..(i + 1) * dim];
    let mut order: Vec<usize> = (0..values.len() / dim).collect();
    order.sort_by(|&a, &b| lex_desc(row(a), row(b)));

    // A point can only be weakly dominated by points sorted before it.
    let mut kept = Vec::new();
    match dim {
        1 => kept.extend(order.first().copied()),
        2 => {
            let mut best_y = f64::NEG_INFINITY;
            for i in order {
                let y = row(i)[1];
                if y > best_y {
                    best_y = y;
                    kept.push(i);
                }
            }
        }
        3 => {
            // Staircase of kept (y, z) projections: z strictly decreasing in y.
            let mut stairs: BTreeMap<OrderedFloat<f64>, f64> = BTreeMap::new();
            for i in order {
                let (y, z) = (row(i)[1], row(i)[2]);
                let key = OrderedFloat(y);
                if let Some((_, &z2)) = stairs.range(key..).next() {
                    if z2 >= z {
                        continue;
                    }
                }
                let covered: Vec<_> = stairs
                    .range(..=key)
                    .rev()
                    .take_while(|(_, &z2)| z2 <= z)
                    .map(|(k, _)| *k)
                    .collect();
                for k in covered {
                    stairs.remove(&k);
                }
                stairs.insert(key, z);
                kept.push(i);
            }
        }
        _ => {
            for i in order {
                let p = row(i);
                let dominated = kept
                    .iter()
                    .any(|&j| row(j).iter().zip(p).all(|(q, x)| q >= x));
                if !dominated {
                    kept.push(i);
                }
            }
        }
    }
    kept
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

/// CSV header: `R1,…,RK` then `lambda_k_l` for every ordered pair `k ≠ ℓ`
/// (1-based).
pub fn csv_header(k_links: usize) -> String {
    let mut cols: Vec<String> = (1..=k_links).map(|k| format!("R{k}")).collect();
    for k in 1..=k_links {
        for l in (1..=k_links).filter(|&l| l != k) {
            cols.push(format!("lambda_{k}_{l}"));
        }
    }
    cols.join(",")
}

/// Twelve significant digits.
pub fn format_value(x: f64) -> String {
    format!("{x:.11e}")
}

#[derive(Serialize)]
struct RegionFile<'a> {
    scenario_digest: &'a str,
    grid_step: f64,
    #[serde(rename = "K")]
    k: usize,
    points: Vec<PointFile>,
    failures: &'a [GridFailure],
}

#[derive(Serialize)]
struct PointFile {
    rates: Vec<f64>,
    lambda: Vec<Vec<f64>>,
}

/// Writes the sample's points in their stored order.
pub fn export_region(r: &RegionSample, path: impl AsRef<Path>, format: ExportFormat) -> Result<()> {
    let k_links = r.candidates.len();
    let mut out = Vec::new();
    match format {
        ExportFormat::Csv => {
            writeln!(out, "{}", csv_header(k_links))?;
            for p in &r.points {
                let lambda = r.lambda_matrix(p);
                let mut cells: Vec<String> = p.rates.iter().map(|&v| format_value(v)).collect();
                for (k, row) in lambda.iter().enumerate() {
                    cells.extend(row.iter().enumerate().filter(|&(l, _)| l != k).map(|(_, &v)| format_value(v)));
                }
                writeln!(out, "{}", cells.join(","))?;
            }
        }
        ExportFormat::Json => {
            let file = RegionFile {
                scenario_digest: &r.scenario_digest,
                grid_step: r.grid_step,
                k: k_links,
                points: r
                    .points
                    .iter()
                    .map(|p| PointFile {
                        rates: p.rates.clone(),
                        lambda: r.lambda_matrix(p),
                    })
                    .collect(),
                failures: &r.failures,
            };
            serde_json::to_writer_pretty(&mut out, &file).map_err(|e| Error::Solver(e.to_string()))?;
            out.push(b'\n');
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads the rate columns back from an exported CSV file.
pub fn read_region_rates(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse {
        field: "header".into(),
        message: "empty file".into(),
    })?;
    let k_links = header.split(',').filter(|c| c.starts_with('R')).count();
    lines
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .take(k_links)
                .map(|c| {
                    c.parse::<f64>().map_err(|e| Error::Parse {
                        field: format!("row {}", i + 1),
                        message: e.to_string(),
                    })
                })
                .collect()
        })
        .collect()
}
