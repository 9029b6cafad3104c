//! Loss metrics, current diagnostics and file export.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulation::{Discretization, FormulationVariant};
use crate::geometry::Region;
use crate::scalar::{mu0, Real};
use crate::solver::SolutionTrace;
use crate::spaces::{half_loop, loop_circulation};
use crate::vtk::VtkWriter;

/// Losses over time, with the run metadata needed to compare series.
#[derive(Clone, Debug, PartialEq)]
pub struct LossSeries<T> {
    pub times: Vec<T>,
    pub p: Vec<T>,
    pub frequency: T,
    pub amplitude: T,
    pub variant: Option<FormulationVariant>,
    pub n_dofs: usize,
    pub n_turns: usize,
}

impl<T: Real> LossSeries<T> {
    pub fn from_trace(trace: &SolutionTrace<T>, disc: &Discretization<T>) -> Self {
        LossSeries {
            times: trace.times.clone(),
            p: trace.losses.clone(),
            frequency: disc.excitation.frequency,
            amplitude: disc.excitation.amplitude,
            variant: trace.variant,
            n_dofs: trace.n_dofs,
            n_turns: disc.n_turns(),
        }
    }

    pub fn period(&self) -> T {
        T::one() / self.frequency
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.p.len() {
            return Err(Error::Data("times and losses differ in length".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Data("times are not strictly increasing".into()));
        }
        Ok(())
    }
}

/// Full-coil instantaneous losses of a converged state [W].
pub fn instantaneous_losses<T: Real>(disc: &Discretization<T>, u: &[T]) -> T {
    disc.instantaneous_losses(u)
}

/// Linear interpolation of a sampled series at `t` (clamped to its range).
pub fn interpolate<T: Real>(times: &[T], values: &[T], t: T) -> T {
    match times.iter().position(|&x| x >= t) {
        None => *values.last().unwrap_or(&T::zero()),
        Some(0) => values[0],
        Some(k) => {
            let (t0, t1) = (times[k - 1], times[k]);
            let w = (t - t0) / (t1 - t0);
            values[k - 1] + w * (values[k] - values[k - 1])
        }
    }
}

/// Trapezoidal integral of a sampled series over `[a, b]`, with linear
/// interpolation at the window ends.
pub fn integrate_window<T: Real>(times: &[T], values: &[T], a: T, b: T) -> T {
    let mut pts: Vec<(T, T)> = vec![(a, interpolate(times, values, a))];
    for (&t, &v) in times.iter().zip(values) {
        if t > a && t < b {
            pts.push((t, v));
        }
    }
    pts.push((b, interpolate(times, values, b)));
    pts.windows(2).map(|w| T::lit(0.5) * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
}

/// Mean losses `(2/T) ∫ p dt` over the last half period of the series.
pub fn mean_losses<T: Real>(series: &LossSeries<T>) -> Result<T> {
    series.validate()?;
    let half = T::lit(0.5) * series.period();
    let (Some(&first), Some(&last)) = (series.times.first(), series.times.last()) else {
        return Err(Error::Data("empty loss series".into()));
    };
    let eps = T::lit(1e-9) * series.period();
    if last - first < half - eps {
        return Err(Error::Data(format!(
            "series spans {} s, a half period of {} s is needed",
            last - first,
            half
        )));
    }
    Ok(integrate_window(&series.times, &series.p, last - half, last) / half)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport<T> {
    pub r_squared: T,
    pub one_minus_r2: T,
    pub rel_err_p: T,
    pub mean_p: T,
    pub mean_p_ref: T,
    pub interpolation: String,
}

/// Coefficient of determination of `p` against `p_ref` over the last full
/// period of the reference, with `p` interpolated linearly onto the
/// reference grid.
pub fn r_squared<T: Real>(p: &LossSeries<T>, p_ref: &LossSeries<T>) -> Result<ComparisonReport<T>> {
    p.validate()?;
    p_ref.validate()?;
    let period = p_ref.period();
    let (Some(&ref_end), Some(&p_end), Some(&p_start), Some(&ref_start)) =
        (p_ref.times.last(), p.times.last(), p.times.first(), p_ref.times.first())
    else {
        return Err(Error::Data("empty loss series".into()));
    };
    let end = ref_end.min(p_end);
    let start = end - period;
    let eps = T::lit(1e-9) * period;
    if start < p_start - eps || start < ref_start - eps {
        return Err(Error::Data("series do not overlap over a full period".into()));
    }
    let mut grid: Vec<T> = vec![start];
    grid.extend(p_ref.times.iter().copied().filter(|&t| t > start && t < end));
    grid.push(end);
    let pr: Vec<T> = grid.iter().map(|&t| interpolate(&p_ref.times, &p_ref.p, t)).collect();
    let pp: Vec<T> = grid.iter().map(|&t| interpolate(&p.times, &p.p, t)).collect();
    let mean_ref = integrate_window(&grid, &pr, start, end) / period;
    let num: Vec<T> = pp.iter().zip(&pr).map(|(&a, &b)| (a - b) * (a - b)).collect();
    let den: Vec<T> = pr.iter().map(|&b| (b - mean_ref) * (b - mean_ref)).collect();
    let num = integrate_window(&grid, &num, start, end);
    let den = integrate_window(&grid, &den, start, end);
    let peak = pr.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let tiny = T::lit(1e-12) * peak;
    if !(den > tiny * tiny * period) {
        return Err(Error::Data("reference losses are constant over the period".into()));
    }
    let r2 = T::one() - num / den;
    let mean_p = mean_losses(p)?;
    let mean_p_ref = mean_losses(p_ref)?;
    Ok(ComparisonReport {
        r_squared: r2,
        one_minus_r2: num / den,
        rel_err_p: rel_err_mean(mean_p, mean_p_ref)?,
        mean_p,
        mean_p_ref,
        interpolation: "linear onto reference grid".into(),
    })
}

/// Relative error of mean losses.
pub fn rel_err_mean<T: Real>(p: T, p_ref: T) -> Result<T> {
    if !(p_ref > T::zero()) {
        return Err(Error::Data(format!("reference mean losses must be positive, got {p_ref}")));
    }
    Ok((p - p_ref).abs() / p_ref)
}

/// Full-coil current through radial slice `alpha_slice` of the coil grid.
pub fn slice_current<T: Real>(disc: &Discretization<T>, u: &[T], alpha_slice: usize) -> Result<T> {
    let mesh = &disc.mesh;
    if alpha_slice >= mesh.n_alpha() {
        return Err(Error::Argument(format!("slice {alpha_slice} out of range 0..{}", mesh.n_alpha())));
    }
    let two = T::lit(2.0);
    let mut i = T::zero();
    for beta in 0..mesh.n_beta() {
        let q = mesh.coil_quad(alpha_slice, beta);
        let ev = disc.layout.quad_edge_values(u, q);
        i += two * crate::spaces::quad_current_density(mesh, &ev, q) * mesh.quad_area(q);
    }
    Ok(i)
}

/// Per-turn current of each conductor: turns of the detailed model, or
/// radial slices of the foil model scaled to one turn's share.
pub fn slice_currents<T: Real>(disc: &Discretization<T>, u: &[T]) -> Vec<T> {
    let mesh = &disc.mesh;
    let slices: Vec<T> = (0..mesh.n_alpha()).map(|a| slice_current(disc, u, a).unwrap_or(T::zero())).collect();
    match disc.variant() {
        FormulationVariant::RefHPhi => slices
            .chunks(mesh.cols_per_conductor)
            .map(|c| c.iter().copied().sum())
            .collect(),
        _ => {
            // a slice of width L/n carries N/n turns in the foil model
            let scale = T::from_usize_lossy(mesh.n_alpha()) / T::from_usize_lossy(disc.n_turns());
            slices.into_iter().map(|s| s * scale).collect()
        }
    }
}

/// Full-coil circulation of h around the coil cross-section.
pub fn coil_circulation<T: Real>(disc: &Discretization<T>, u: &[T]) -> T {
    let mesh = &disc.mesh;
    let path = half_loop(mesh, mesh.coil_cols.start, mesh.coil_cols.end, mesh.coil_rows.end);
    let ev = disc.layout.edge_values(u);
    loop_circulation(&ev, &path)
}

/// Largest `|j| / jc_eng` over the coil.
pub fn max_current_ratio<T: Real>(disc: &Discretization<T>, u: &[T]) -> T {
    let j = disc.current_density(u);
    disc.mesh
        .coil_quads()
        .map(|q| j[q].abs() / disc.quad_jc(u, q))
        .fold(T::zero(), T::max)
}

/// Writes the time series as CSV with a header row.
pub fn write_trace_csv<T: Real>(path: &Path, trace: &SolutionTrace<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["t", "p", "current", "newton_iters", "dt", "circulation"])?;
    for k in 0..trace.len() {
        w.write_record([
            format!("{:e}", trace.times[k].as_f64()),
            format!("{:e}", trace.losses[k].as_f64()),
            format!("{:e}", trace.currents[k].as_f64()),
            trace.newton_iters[k].to_string(),
            format!("{:e}", trace.dts[k].as_f64()),
            format!("{:e}", trace.circulation[k].as_f64()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    t: f64,
    p: f64,
}

/// Reads `(t, p)` columns from a trace CSV.
pub fn read_trace_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let file = File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let mut times = Vec::new();
    let mut p = Vec::new();
    for row in r.deserialize() {
        let row: TraceRow = row?;
        times.push(row.t);
        p.push(row.p);
    }
    Ok((times, p))
}

/// Writes the slice currents per output time (one column per conductor).
pub fn write_slice_csv<T: Real>(path: &Path, trace: &SolutionTrace<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let n = trace.slice_currents.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|k| format!("i{k}")));
    w.write_record(&header)?;
    for (t, row) in trace.times.iter().zip(&trace.slice_currents) {
        let mut rec = vec![format!("{:e}", t.as_f64())];
        rec.extend(row.iter().map(|v| format!("{:e}", v.as_f64())));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Legacy VTK snapshot with `|j| / jc_eng` and `|b|` as cell data.
pub fn write_vtk_snapshot<T: Real>(path: &Path, disc: &Discretization<T>, u: &[T], title: &str) -> Result<()> {
    let mesh = &disc.mesh;
    let j = disc.current_density(u);
    let mut j_norm = Vec::with_capacity(mesh.quads.len());
    let mut b_norm = Vec::with_capacity(mesh.quads.len());
    for q in 0..mesh.quads.len() {
        let ratio = if mesh.regions[q] == Region::Air { T::zero() } else { j[q].abs() / disc.quad_jc(u, q) };
        j_norm.push(ratio.as_f64());
        let ev = disc.layout.quad_edge_values(u, q);
        let (r0, r1, z0, z1) = mesh.quad_bounds(q);
        let h = T::lit(0.5);
        let hr = h * (ev[0] + ev[2]) / (r1 - r0);
        let hz = h * (ev[1] + ev[3]) / (z1 - z0);
        b_norm.push((mu0::<T>() * (hr * hr + hz * hz).sqrt()).as_f64());
    }
    let points: Vec<[f64; 3]> = mesh.nodes.iter().map(|p| [p[0].as_f64(), p[1].as_f64(), 0.0]).collect();
    let mut w = VtkWriter::new(create(path)?);
    w.header(title)?;
    w.quads(&points, &mesh.quads)?;
    w.cell_scalars(mesh.quads.len(), &[("j_norm", &j_norm), ("b_norm", &b_norm)])?;
    w.finish()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Counts the header columns of a CSV file (used by tests and tools).
pub fn csv_header(path: &Path) -> Result<Vec<String>> {
    let mut line = String::new();
    BufReader::new(File::open(path)?).read_line(&mut line)?;
    Ok(line.trim_end().split(',').map(str::to_string).collect())
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}
