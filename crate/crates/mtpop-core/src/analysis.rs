//! Tuning-curve extraction and shape classification for trained models.
//!
//! Unidirectional curves probe every grid direction with a single stimulus;
//! bidirectional curves sweep the midline of a fixed-separation direction
//! pair around the circle. Each cell's bidirectional curve is classified into
//! one of four shapes relative to its unidirectional curve: symmetric
//! single-peaked, single-peaked biased clockwise or counterclockwise, or
//! double-peaked. All probes use unit component intensity.

use std::io::Write;

use crate::circ;
use crate::density::DensityVector;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::stimulus::Stimulus;

/// What a tuning curve was measured against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurveKind {
    Unidirectional,
    Bidirectional { separation_deg: f64 },
}

/// Response of one cell as a function of probe direction (single stimuli) or
/// midline direction (bidirectional stimuli).
#[derive(Debug, Clone, PartialEq)]
pub struct TuningCurve {
    pub cell_index: usize,
    pub kind: CurveKind,
    /// Probe abscissa in degrees; covers the circle at the grid resolution
    /// (bidirectional abscissas may sit between grid points).
    pub abscissa_deg: Vec<f64>,
    pub responses: Vec<f64>,
}

/// The four response shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    SymmetricSinglePeak,
    ClockwiseBias,
    CounterclockwiseBias,
    DoublePeaked,
}

impl ShapeKind {
    pub fn label(&self) -> &'static str {
        match self {
            ShapeKind::SymmetricSinglePeak => "symmetric",
            ShapeKind::ClockwiseBias => "clockwise",
            ShapeKind::CounterclockwiseBias => "counterclockwise",
            ShapeKind::DoublePeaked => "double",
        }
    }
}

/// Classification of one cell at one separation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeClass {
    pub kind: ShapeKind,
    /// Signed circular offset of the bidirectional peak from the
    /// unidirectional peak; positive offsets count as the clockwise side.
    pub peak_offset_deg: f64,
    /// Prominence of the second-largest local maximum, as a fraction of the
    /// curve maximum (0 when there is no second local maximum).
    pub secondary_prominence: f64,
}

/// Classifier thresholds with an absolute activity floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyThresholds {
    /// A second peak counts when its prominence reaches this fraction of the
    /// curve maximum.
    pub prominence_frac: f64,
    /// Peak offsets within this tolerance are symmetric.
    pub bias_tol_deg: f64,
    /// Curves whose maximum falls below this response are unclassifiable.
    pub activity_floor: f64,
}

impl Default for ClassifyThresholds {
    fn default() -> Self {
        Self { prominence_frac: 0.2, bias_tol_deg: 7.5, activity_floor: 0.0 }
    }
}

/// Classifier configuration with the activity floor given as a fraction of
/// the population's maximum response (resolved by [`population_summary`]),
/// plus the probe intensities (normally matched to the training stimuli).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    pub prominence_frac: f64,
    pub bias_tol_deg: f64,
    pub activity_floor_frac: f64,
    /// Intensity of the single-stimulus probes.
    pub probe_intensity: f64,
    /// Per-component intensity of the bidirectional probes.
    pub bidir_probe_intensity: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            prominence_frac: 0.2,
            bias_tol_deg: 7.5,
            activity_floor_frac: 0.01,
            probe_intensity: 1.0,
            bidir_probe_intensity: 1.0,
        }
    }
}

/// Normalized response of cell `k` to a unit single stimulus at every grid
/// direction.
pub fn unidirectional_curve(model: &Model, k: usize) -> Result<TuningCurve> {
    unidirectional_curve_at(model, k, 1.0)
}

/// [`unidirectional_curve`] with an explicit probe intensity.
pub fn unidirectional_curve_at(model: &Model, k: usize, intensity: f64) -> Result<TuningCurve> {
    check_cell(model, k)?;
    let n = model.grid.n_dirs();
    let mut responses = Vec::with_capacity(n);
    for index in 1..=n {
        let s = Stimulus::single(&model.grid, index, intensity)?;
        responses.push(model.response(&s)?[k]);
    }
    Ok(TuningCurve {
        cell_index: k,
        kind: CurveKind::Unidirectional,
        abscissa_deg: model.grid.directions_deg().to_vec(),
        responses,
    })
}

/// Normalized response of cell `k` to unit bidirectional stimuli of fixed
/// separation, with the midline swept around the circle.
pub fn bidirectional_curve(model: &Model, k: usize, separation_deg: f64) -> Result<TuningCurve> {
    bidirectional_curve_at(model, k, separation_deg, 1.0)
}

/// [`bidirectional_curve`] with an explicit per-component probe intensity.
pub fn bidirectional_curve_at(
    model: &Model,
    k: usize,
    separation_deg: f64,
    intensity: f64,
) -> Result<TuningCurve> {
    check_cell(model, k)?;
    let steps = model.grid.separation_steps(separation_deg).ok_or(Error::Separation {
        separation_deg,
        n_dirs: model.grid.n_dirs(),
    })?;
    let n = model.grid.n_dirs();
    let mut abscissa = Vec::with_capacity(n);
    let mut responses = Vec::with_capacity(n);
    for base in 1..=n {
        let other = (base - 1 + steps) % n + 1;
        let s = Stimulus::bidirectional(&model.grid, base, other, intensity)?;
        abscissa.push(s.midline_deg(&model.grid).unwrap());
        responses.push(model.response(&s)?[k]);
    }
    Ok(TuningCurve {
        cell_index: k,
        kind: CurveKind::Bidirectional { separation_deg },
        abscissa_deg: abscissa,
        responses,
    })
}

fn check_cell(model: &Model, k: usize) -> Result<()> {
    if k >= model.mt.k_cells() {
        return Err(Error::CellIndex { index: k, k_cells: model.mt.k_cells() });
    }
    Ok(())
}

impl TuningCurve {
    pub fn peak_index(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.responses.iter().enumerate() {
            if v > self.responses[best] {
                best = i;
            }
        }
        best
    }

    pub fn peak_value(&self) -> f64 {
        self.responses[self.peak_index()]
    }

    pub fn peak_abscissa_deg(&self) -> f64 {
        self.abscissa_deg[self.peak_index()]
    }

    /// Width at half maximum in degrees: the total arc over which the
    /// response stays at or above half of the curve maximum, with the
    /// boundary crossings found by linear interpolation between the uniformly
    /// spaced samples on the circle. For a single-peaked curve this is the
    /// usual full width at half maximum; for a multi-lobed curve every lobe
    /// contributes. Resolution-limited by the grid spacing.
    pub fn half_width_deg(&self) -> f64 {
        let n = self.responses.len();
        let spacing = 360.0 / n as f64;
        let level = 0.5 * self.peak_value();
        let mut total = 0.0;
        for i in 0..n {
            let v0 = self.responses[i];
            let v1 = self.responses[(i + 1) % n];
            let above0 = v0 >= level;
            let above1 = v1 >= level;
            total += match (above0, above1) {
                (true, true) => spacing,
                (true, false) => spacing * (v0 - level) / (v0 - v1),
                (false, true) => spacing * (v1 - level) / (v1 - v0),
                (false, false) => 0.0,
            };
        }
        total.min(360.0)
    }

    /// Indices of circular local maxima (plateaus count once, at their first
    /// sample).
    fn local_maxima(&self) -> Vec<usize> {
        let n = self.responses.len();
        if n < 3 {
            return vec![self.peak_index()];
        }
        (0..n)
            .filter(|&i| {
                let prev = self.responses[(i + n - 1) % n];
                let next = self.responses[(i + 1) % n];
                self.responses[i] > prev && self.responses[i] >= next
            })
            .collect()
    }

    /// Topographic prominence of a local maximum on the circular curve: the
    /// drop to the higher of the two path minima toward strictly higher
    /// ground (for the global maximum, the drop to the curve minimum).
    fn prominence(&self, peak: usize) -> f64 {
        let n = self.responses.len();
        let v = self.responses[peak];
        let mut saddles = Vec::new();
        for dir in [1isize, -1isize] {
            let mut low = f64::INFINITY;
            for step in 1..n {
                let idx = (peak as isize + dir * step as isize).rem_euclid(n as isize) as usize;
                if self.responses[idx] > v {
                    saddles.push(low);
                    break;
                }
                low = low.min(self.responses[idx]);
            }
        }
        match saddles.len() {
            0 => v - self.responses.iter().cloned().fold(f64::INFINITY, f64::min),
            _ => v - saddles.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Classify one cell from its unidirectional and bidirectional curves.
///
/// Returns `None` for unclassifiable cells: curves whose maximum response
/// stays below the activity floor, or with no circular local maximum at all
/// (constant curves).
pub fn classify_shape(
    uni: &TuningCurve,
    bi: &TuningCurve,
    thresholds: &ClassifyThresholds,
) -> Option<ShapeClass> {
    assert_eq!(uni.cell_index, bi.cell_index, "curves must describe the same cell");
    assert_eq!(uni.responses.len(), bi.responses.len(), "curves must share the grid");
    let bi_max = bi.peak_value();
    if bi_max < thresholds.activity_floor || uni.peak_value() < thresholds.activity_floor {
        return None;
    }
    let maxima = bi.local_maxima();
    if maxima.is_empty() {
        return None;
    }
    let mut prominences: Vec<(usize, f64)> =
        maxima.iter().map(|&i| (i, bi.prominence(i))).collect();
    // tallest peak first, prominence as tie-break
    prominences.sort_by(|a, b| {
        bi.responses[b.0]
            .partial_cmp(&bi.responses[a.0])
            .unwrap()
            .then(b.1.partial_cmp(&a.1).unwrap())
    });
    let qualifying = prominences
        .iter()
        .filter(|(_, p)| *p >= thresholds.prominence_frac * bi_max)
        .count();
    let secondary_prominence =
        if prominences.len() > 1 { prominences[1].1 / bi_max } else { 0.0 };

    let peak_offset_deg =
        circ::signed_diff_deg(bi.abscissa_deg[prominences[0].0], uni.peak_abscissa_deg());
    let kind = if qualifying >= 2 {
        ShapeKind::DoublePeaked
    } else if peak_offset_deg.abs() <= thresholds.bias_tol_deg {
        ShapeKind::SymmetricSinglePeak
    } else if peak_offset_deg > 0.0 {
        ShapeKind::ClockwiseBias
    } else {
        ShapeKind::CounterclockwiseBias
    };
    Some(ShapeClass { kind, peak_offset_deg, secondary_prominence })
}

/// Everything measured about one cell.
#[derive(Debug, Clone)]
pub struct CellReport {
    pub cell_index: usize,
    /// Population density of the cell's type, when a density was supplied.
    pub rho: Option<f64>,
    /// Classification at the reference separation; `None` when excluded or
    /// unclassifiable.
    pub class: Option<ShapeClass>,
    /// Cells with exactly zero density are excluded from the fractions.
    pub excluded_zero_density: bool,
    pub uni_peak_rate: f64,
    pub bi_peak_rate: f64,
    pub uni_half_width_deg: f64,
    pub bi_half_width_deg: f64,
    /// `(separation_deg, signed peak offset)` for every requested separation.
    pub offsets_by_separation: Vec<(f64, f64)>,
    /// For cells biased at the reference separation: whether no other
    /// separation shows a strictly opposite bias sign.
    pub bias_consistent: Option<bool>,
}

/// Population-level classification summary.
#[derive(Debug, Clone)]
pub struct PopulationSummary {
    pub reference_separation_deg: f64,
    pub separations_deg: Vec<f64>,
    pub thresholds: ClassifyThresholds,
    pub cells: Vec<CellReport>,
    /// All probed curves (unidirectional first, then bidirectional per
    /// separation in order), for export.
    pub curves: Vec<TuningCurve>,
}

impl PopulationSummary {
    pub fn counts(&self) -> [usize; 4] {
        let mut counts = [0usize; 4];
        for c in &self.cells {
            if let Some(class) = &c.class {
                counts[class_slot(class.kind)] += 1;
            }
        }
        counts
    }

    pub fn classified_total(&self) -> usize {
        self.counts().iter().sum()
    }

    /// Fractions over classified cells, ordered (symmetric, clockwise,
    /// counterclockwise, double). Sums to 1 when any cell classified.
    pub fn fractions(&self) -> [f64; 4] {
        let counts = self.counts();
        let total = self.classified_total().max(1) as f64;
        [
            counts[0] as f64 / total,
            counts[1] as f64 / total,
            counts[2] as f64 / total,
            counts[3] as f64 / total,
        ]
    }

    pub fn distinct_classes(&self) -> usize {
        self.counts().iter().filter(|&&c| c > 0).count()
    }

    /// Fraction of classified cells whose bidirectional peak rate does not
    /// exceed their unidirectional peak rate.
    pub fn lower_peak_fraction(&self) -> f64 {
        let classified: Vec<&CellReport> =
            self.cells.iter().filter(|c| c.class.is_some()).collect();
        if classified.is_empty() {
            return 0.0;
        }
        classified.iter().filter(|c| c.bi_peak_rate <= c.uni_peak_rate).count() as f64
            / classified.len() as f64
    }

    /// Mean half-widths (unidirectional, bidirectional) over classified cells.
    pub fn mean_half_widths_deg(&self) -> (f64, f64) {
        let classified: Vec<&CellReport> =
            self.cells.iter().filter(|c| c.class.is_some()).collect();
        if classified.is_empty() {
            return (0.0, 0.0);
        }
        let n = classified.len() as f64;
        (
            classified.iter().map(|c| c.uni_half_width_deg).sum::<f64>() / n,
            classified.iter().map(|c| c.bi_half_width_deg).sum::<f64>() / n,
        )
    }

    /// `(consistent, biased_total)` among cells biased at the reference
    /// separation.
    pub fn bias_consistency(&self) -> (usize, usize) {
        let mut consistent = 0;
        let mut total = 0;
        for c in &self.cells {
            if let Some(flag) = c.bias_consistent {
                total += 1;
                if flag {
                    consistent += 1;
                }
            }
        }
        (consistent, total)
    }

    pub fn write_summary_csv<W: Write>(
        &self,
        mut w: W,
        header_comment: Option<&str>,
    ) -> std::io::Result<()> {
        if let Some(comment) = header_comment {
            writeln!(w, "# {comment}")?;
        }
        writeln!(
            w,
            "cell,rho,class,peak_offset_deg,secondary_prominence,uni_peak_rate,bi_peak_rate,\
             uni_half_width_deg,bi_half_width_deg,bias_consistent"
        )?;
        for c in &self.cells {
            let rho = c.rho.map(|r| r.to_string()).unwrap_or_default();
            let (class, offset, prom) = match &c.class {
                Some(cl) => (
                    cl.kind.label().to_string(),
                    cl.peak_offset_deg.to_string(),
                    cl.secondary_prominence.to_string(),
                ),
                None if c.excluded_zero_density => ("excluded".to_string(), String::new(), String::new()),
                None => ("unclassifiable".to_string(), String::new(), String::new()),
            };
            let consistent = match c.bias_consistent {
                Some(true) => "1",
                Some(false) => "0",
                None => "",
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                c.cell_index,
                rho,
                class,
                offset,
                prom,
                c.uni_peak_rate,
                c.bi_peak_rate,
                c.uni_half_width_deg,
                c.bi_half_width_deg,
                consistent
            )?;
        }
        Ok(())
    }

    /// Human-readable table of the class fractions and population measures.
    pub fn render_table(&self) -> String {
        let counts = self.counts();
        let fractions = self.fractions();
        let (uni_w, bi_w) = self.mean_half_widths_deg();
        let (consistent, biased) = self.bias_consistency();
        let mut out = String::new();
        out.push_str(&format!(
            "classified {} of {} cells at separation {} deg\n",
            self.classified_total(),
            self.cells.len(),
            self.reference_separation_deg
        ));
        let labels = ["symmetric", "clockwise", "counterclockwise", "double"];
        for i in 0..4 {
            out.push_str(&format!(
                "  {:<18} {:>3}  ({:.1}%)\n",
                labels[i],
                counts[i],
                100.0 * fractions[i]
            ));
        }
        out.push_str(&format!(
            "  lower bidirectional peak: {:.1}% of classified cells\n",
            100.0 * self.lower_peak_fraction()
        ));
        out.push_str(&format!(
            "  mean half-width: {uni_w:.1} deg (uni) vs {bi_w:.1} deg (bidir)\n"
        ));
        if biased > 0 {
            out.push_str(&format!(
                "  side bias kept across separations: {consistent}/{biased} biased cells\n"
            ));
        }
        out
    }
}

fn class_slot(kind: ShapeKind) -> usize {
    match kind {
        ShapeKind::SymmetricSinglePeak => 0,
        ShapeKind::ClockwiseBias => 1,
        ShapeKind::CounterclockwiseBias => 2,
        ShapeKind::DoublePeaked => 3,
    }
}

/// Classify every cell at the first separation in `separations_deg` (the
/// reference), measure peak rates and half-widths, and record bias-sign
/// consistency across all requested separations.
///
/// Cells whose density is exactly zero carry no neurons and are excluded
/// from the fractions when a `density` is supplied.
pub fn population_summary(
    model: &Model,
    density: Option<&DensityVector>,
    separations_deg: &[f64],
    options: &ClassifyOptions,
) -> Result<PopulationSummary> {
    if separations_deg.is_empty() {
        return Err(Error::Parameter("need at least one separation".into()));
    }
    if let Some(d) = density {
        if d.len() != model.mt.k_cells() {
            return Err(Error::Dimension { expected: model.mt.k_cells(), actual: d.len() });
        }
    }
    let k_cells = model.mt.k_cells();
    let reference = separations_deg[0];

    let uni: Vec<TuningCurve> = (0..k_cells)
        .map(|k| unidirectional_curve_at(model, k, options.probe_intensity))
        .collect::<Result<_>>()?;
    let mut bi_by_sep: Vec<Vec<TuningCurve>> = Vec::with_capacity(separations_deg.len());
    for &sep in separations_deg {
        bi_by_sep.push(
            (0..k_cells)
                .map(|k| bidirectional_curve_at(model, k, sep, options.bidir_probe_intensity))
                .collect::<Result<_>>()?,
        );
    }

    let population_max = uni
        .iter()
        .chain(bi_by_sep.iter().flatten())
        .flat_map(|c| c.responses.iter())
        .cloned()
        .fold(0.0f64, f64::max);
    let thresholds = ClassifyThresholds {
        prominence_frac: options.prominence_frac,
        bias_tol_deg: options.bias_tol_deg,
        activity_floor: options.activity_floor_frac * population_max,
    };

    let mut cells = Vec::with_capacity(k_cells);
    for k in 0..k_cells {
        let rho = density.map(|d| d.rho()[k]);
        let excluded_zero_density = rho == Some(0.0);
        let bi_ref = &bi_by_sep[0][k];
        let class = if excluded_zero_density {
            None
        } else {
            classify_shape(&uni[k], bi_ref, &thresholds)
        };
        let offsets_by_separation: Vec<(f64, f64)> = separations_deg
            .iter()
            .enumerate()
            .map(|(s, &sep)| {
                let bi = &bi_by_sep[s][k];
                (sep, circ::signed_diff_deg(bi.peak_abscissa_deg(), uni[k].peak_abscissa_deg()))
            })
            .collect();
        let bias_consistent = match &class {
            Some(cl)
                if matches!(
                    cl.kind,
                    ShapeKind::ClockwiseBias | ShapeKind::CounterclockwiseBias
                ) =>
            {
                // consistent = no other separation shows the opposite sign
                // (zero offsets are neutral)
                let ref_sign = cl.peak_offset_deg.signum();
                Some(
                    offsets_by_separation
                        .iter()
                        .skip(1)
                        .all(|(_, offset)| *offset * ref_sign >= 0.0),
                )
            }
            _ => None,
        };
        cells.push(CellReport {
            cell_index: k,
            rho,
            class,
            excluded_zero_density,
            uni_peak_rate: uni[k].peak_value(),
            bi_peak_rate: bi_ref.peak_value(),
            uni_half_width_deg: uni[k].half_width_deg(),
            bi_half_width_deg: bi_ref.half_width_deg(),
            offsets_by_separation,
            bias_consistent,
        });
    }

    let mut curves = uni;
    for group in bi_by_sep {
        curves.extend(group);
    }
    Ok(PopulationSummary {
        reference_separation_deg: reference,
        separations_deg: separations_deg.to_vec(),
        thresholds,
        cells,
        curves,
    })
}

/// Curves as CSV rows `cell,kind,separation_deg,abscissa_deg,response`.
pub fn write_curves_csv<W: Write>(
    curves: &[TuningCurve],
    mut w: W,
    header_comment: Option<&str>,
) -> std::io::Result<()> {
    if let Some(comment) = header_comment {
        writeln!(w, "# {comment}")?;
    }
    writeln!(w, "cell,kind,separation_deg,abscissa_deg,response")?;
    for c in curves {
        let (kind, sep) = match c.kind {
            CurveKind::Unidirectional => ("uni", String::new()),
            CurveKind::Bidirectional { separation_deg } => ("bidir", separation_deg.to_string()),
        };
        for (a, r) in c.abscissa_deg.iter().zip(&c.responses) {
            writeln!(w, "{},{},{},{},{}", c.cell_index, kind, sep, a, r)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mt::MTParams;
    use crate::stimulus::DirectionGrid;
    use crate::v1::{von_mises_response, V1Params};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn curve(responses: Vec<f64>, cell: usize) -> TuningCurve {
        let n = responses.len();
        TuningCurve {
            cell_index: cell,
            kind: CurveKind::Unidirectional,
            abscissa_deg: (1..=n).map(|i| 360.0 * i as f64 / n as f64).collect(),
            responses,
        }
    }

    /// von Mises bump of height `h` centered at `c` over a 24-point circle.
    fn bump(center_deg: f64, height: f64, width: f64) -> Vec<f64> {
        (1..=24)
            .map(|i| height * von_mises_response(15.0 * i as f64, center_deg, width))
            .collect()
    }

    fn thresholds() -> ClassifyThresholds {
        ClassifyThresholds { prominence_frac: 0.2, bias_tol_deg: 7.5, activity_floor: 0.01 }
    }

    #[test]
    fn two_equal_bumps_classify_as_double_peaked() {
        let uni = curve(bump(90.0, 1.0, 1.0), 0);
        let two: Vec<f64> = bump(60.0, 1.0, 0.3)
            .iter()
            .zip(bump(120.0, 1.0, 0.3))
            .map(|(a, b)| a + b)
            .collect();
        let mut bi = curve(two, 0);
        bi.kind = CurveKind::Bidirectional { separation_deg: 60.0 };
        let class = classify_shape(&uni, &bi, &thresholds()).unwrap();
        assert_eq!(class.kind, ShapeKind::DoublePeaked);
        assert!(class.secondary_prominence >= 0.2);
    }

    #[test]
    fn centered_single_bump_is_symmetric() {
        let uni = curve(bump(90.0, 1.0, 1.0), 0);
        let mut bi = curve(bump(90.0, 0.8, 1.2), 0);
        bi.kind = CurveKind::Bidirectional { separation_deg: 60.0 };
        let class = classify_shape(&uni, &bi, &thresholds()).unwrap();
        assert_eq!(class.kind, ShapeKind::SymmetricSinglePeak);
        assert_eq!(class.peak_offset_deg, 0.0);
    }

    #[test]
    fn shifted_bumps_pick_the_matching_bias_side() {
        let uni = curve(bump(90.0, 1.0, 1.0), 0);

        let mut bi = curve(bump(105.0, 0.9, 1.0), 0);
        bi.kind = CurveKind::Bidirectional { separation_deg: 60.0 };
        let class = classify_shape(&uni, &bi, &thresholds()).unwrap();
        assert_eq!(class.kind, ShapeKind::ClockwiseBias);
        assert_eq!(class.peak_offset_deg, 15.0);

        let mut bi = curve(bump(75.0, 0.9, 1.0), 0);
        bi.kind = CurveKind::Bidirectional { separation_deg: 60.0 };
        let class = classify_shape(&uni, &bi, &thresholds()).unwrap();
        assert_eq!(class.kind, ShapeKind::CounterclockwiseBias);
        assert_eq!(class.peak_offset_deg, -15.0);
    }

    #[test]
    fn flat_and_constant_curves_are_unclassifiable() {
        let uni = curve(bump(90.0, 1.0, 1.0), 0);
        let mut low = curve(bump(90.0, 0.005, 1.0), 0);
        low.kind = CurveKind::Bidirectional { separation_deg: 60.0 };
        assert!(classify_shape(&uni, &low, &thresholds()).is_none());

        let mut constant = curve(vec![0.3; 24], 0);
        constant.kind = CurveKind::Bidirectional { separation_deg: 60.0 };
        assert!(classify_shape(&uni, &constant, &thresholds()).is_none());
    }

    #[test]
    fn small_ripples_do_not_count_as_peaks() {
        // a 10% ripple on the flank is below the 20% prominence cut
        let mut values = bump(90.0, 1.0, 1.0);
        values[14] += 0.08; // flank sample
        let uni = curve(bump(90.0, 1.0, 1.0), 0);
        let mut bi = curve(values, 0);
        bi.kind = CurveKind::Bidirectional { separation_deg: 60.0 };
        let class = classify_shape(&uni, &bi, &thresholds()).unwrap();
        assert_ne!(class.kind, ShapeKind::DoublePeaked);
    }

    #[test]
    fn half_width_interpolates_between_samples() {
        let mut values = vec![0.0; 24];
        values[0] = 1.0;
        values[1] = 0.75;
        values[2] = 0.25;
        values[23] = 0.75;
        values[22] = 0.25;
        let c = curve(values, 0);
        // level 0.5 crossed halfway between samples 1 and 2 on both flanks
        assert_relative_eq!(c.half_width_deg(), 45.0, epsilon = 1e-12);

        let wide = curve(vec![1.0, 0.9, 0.8, 0.9], 0);
        assert_eq!(wide.half_width_deg(), 360.0);
    }

    #[test]
    fn half_width_counts_every_lobe() {
        // two rectangular lobes: 3 samples at 1.0 and 2 samples at 0.8, the
        // rest zero; both lobes clear the half-max level
        let mut values = vec![0.0; 24];
        for i in [0, 1, 2] {
            values[i] = 1.0;
        }
        for i in [12, 13] {
            values[i] = 0.8;
        }
        let c = curve(values, 0);
        // first lobe: 2 full segments plus a half-level edge of 7.5 on each
        // side = 45; second lobe: 1 full segment plus (0.3/0.8)*15 per edge
        // = 26.25
        assert_relative_eq!(c.half_width_deg(), 71.25, epsilon = 1e-12);
    }

    /// Direction grid, V1, and a hand-built MT layer with even (symmetric)
    /// weight profiles centered every 30 degrees.
    fn symmetric_model() -> Model {
        let grid = DirectionGrid::new(24).unwrap();
        let v1 = V1Params::default();
        // excitatory bump with an inhibitory baseline; without the baseline
        // the pooled V1 drive saturates every sigmoid and the curves go flat
        let weights = DMatrix::from_fn(12, 24, |k, m| {
            let center = 30.0 * (k + 1) as f64;
            let dir = 15.0 * (m + 1) as f64;
            3.0 * (von_mises_response(dir, center, 0.7) - 0.25)
        });
        let thresholds = DVector::from_element(12, 2.0);
        let mt = MTParams::new(1.0, 0.1, weights, thresholds).unwrap();
        Model::new(grid, v1, mt).unwrap()
    }

    #[test]
    fn bidirectional_probe_layout() {
        let model = symmetric_model();
        let c = bidirectional_curve(&model, 0, 60.0).unwrap();
        assert_eq!(c.abscissa_deg.len(), 24);
        // separation 60 on the 15-degree grid: midlines sit on grid points
        assert_eq!(c.abscissa_deg[0], 45.0);
        assert!(matches!(c.kind, CurveKind::Bidirectional { separation_deg } if separation_deg == 60.0));

        assert!(matches!(
            bidirectional_curve(&model, 0, 0.0),
            Err(Error::Separation { .. })
        ));
        assert!(matches!(
            bidirectional_curve(&model, 0, 17.0),
            Err(Error::Separation { .. })
        ));
        assert!(matches!(
            unidirectional_curve(&model, 12),
            Err(Error::CellIndex { index: 12, k_cells: 12 })
        ));
    }

    #[test]
    fn symmetric_model_classifies_fully_symmetric() {
        let model = symmetric_model();
        let summary =
            population_summary(&model, None, &[60.0], &ClassifyOptions::default()).unwrap();
        assert_eq!(summary.counts(), [12, 0, 0, 0]);
        assert_eq!(summary.fractions(), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(summary.distinct_classes(), 1);

        // each cell's unidirectional curve peaks at its weight center
        for k in 0..12 {
            let uni = unidirectional_curve(&model, k).unwrap();
            assert_eq!(uni.peak_abscissa_deg(), 30.0 * (k + 1) as f64);
        }
    }

    #[test]
    fn symmetric_model_curves_are_mirror_symmetric() {
        let model = symmetric_model();
        let c = bidirectional_curve(&model, 3, 60.0).unwrap();
        // cell 3 prefers 120 deg; responses at 120 +/- d must agree
        let peak = c
            .abscissa_deg
            .iter()
            .position(|&a| a == 120.0)
            .expect("120 deg is a probe midline");
        let n = 24;
        for d in 1..12 {
            let plus = c.responses[(peak + d) % n];
            let minus = c.responses[(peak + n - d) % n];
            assert_relative_eq!(plus, minus, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_density_cells_are_excluded_from_fractions() {
        let model = symmetric_model();
        let mut rho = vec![1.0 / 11.0; 12];
        rho[5] = 0.0;
        let rho_sum: f64 = rho.iter().sum();
        let rho: Vec<f64> = rho.iter().map(|r| r / rho_sum).collect();
        let density = DensityVector::from_vec(rho).unwrap();
        let summary =
            population_summary(&model, Some(&density), &[60.0], &ClassifyOptions::default())
                .unwrap();
        assert_eq!(summary.classified_total(), 11);
        assert!(summary.cells[5].excluded_zero_density);
        assert!(summary.cells[5].class.is_none());
    }

    /// Rotating every direction label by a whole number of grid steps must
    /// not change any classification (stimuli and preferred directions
    /// rotate together when M equals the grid size).
    #[test]
    fn classification_is_rotation_invariant() {
        let base = asymmetric_model();
        let shift = 5usize;
        let rotated = {
            let weights = DMatrix::from_fn(12, 24, |k, m| {
                base.mt.weights()[(k, (m + 24 - shift) % 24)]
            });
            let mt = MTParams::new(1.0, 0.1, weights, base.mt.thresholds().clone()).unwrap();
            Model::new(base.grid.clone(), base.v1.clone(), mt).unwrap()
        };
        let opts = ClassifyOptions::default();
        let a = population_summary(&base, None, &[60.0, 30.0, 90.0], &opts).unwrap();
        let b = population_summary(&rotated, None, &[60.0, 30.0, 90.0], &opts).unwrap();
        for (ca, cb) in a.cells.iter().zip(&b.cells) {
            assert_eq!(ca.class.map(|c| c.kind), cb.class.map(|c| c.kind));
            assert_eq!(ca.bias_consistent, cb.bias_consistent);
        }
    }

    /// Mirroring every direction label swaps the two bias classes and keeps
    /// the other classes.
    #[test]
    fn mirroring_swaps_the_bias_classes() {
        let base = asymmetric_model();
        let mirrored = {
            // V1 cell with preference c maps to the cell preferring -c
            let mirror = |m: usize| if m == 23 { 23 } else { 22 - m };
            let weights =
                DMatrix::from_fn(12, 24, |k, m| base.mt.weights()[(k, mirror(m))]);
            let mt = MTParams::new(1.0, 0.1, weights, base.mt.thresholds().clone()).unwrap();
            Model::new(base.grid.clone(), base.v1.clone(), mt).unwrap()
        };
        let opts = ClassifyOptions::default();
        let a = population_summary(&base, None, &[60.0], &opts).unwrap();
        let b = population_summary(&mirrored, None, &[60.0], &opts).unwrap();
        for (ca, cb) in a.cells.iter().zip(&b.cells) {
            let expected = ca.class.map(|c| match c.kind {
                ShapeKind::ClockwiseBias => ShapeKind::CounterclockwiseBias,
                ShapeKind::CounterclockwiseBias => ShapeKind::ClockwiseBias,
                other => other,
            });
            assert_eq!(cb.class.map(|c| c.kind), expected, "cell {}", ca.cell_index);
        }
        let fa = a.fractions();
        let fb = b.fractions();
        assert_eq!(fa[0], fb[0]);
        assert_eq!(fa[1], fb[2]);
        assert_eq!(fa[2], fb[1]);
        assert_eq!(fa[3], fb[3]);
    }

    /// Hand-built model with a one-sided lobe added to each even profile so
    /// several cells show a genuine side bias.
    fn asymmetric_model() -> Model {
        let grid = DirectionGrid::new(24).unwrap();
        let v1 = V1Params::default();
        let weights = DMatrix::from_fn(12, 24, |k, m| {
            let center = 30.0 * (k + 1) as f64;
            let dir = 15.0 * (m + 1) as f64;
            let even = 3.0 * (von_mises_response(dir, center, 0.7) - 0.25);
            let lobe = 1.2 * von_mises_response(dir, center + 45.0, 0.5);
            even + lobe
        });
        let thresholds = DVector::from_element(12, 2.0);
        let mt = MTParams::new(1.0, 0.1, weights, thresholds).unwrap();
        Model::new(grid, v1, mt).unwrap()
    }

    #[test]
    fn one_sided_lobes_bias_consistently_across_separations() {
        let model = asymmetric_model();
        let summary = population_summary(
            &model,
            None,
            &[60.0, 30.0, 90.0],
            &ClassifyOptions::default(),
        )
        .unwrap();
        let (consistent, biased) = summary.bias_consistency();
        assert_eq!(biased, 12, "fixture should bias every cell: {:?}", summary.counts());
        assert_eq!(consistent, biased, "one-sided fixture must keep its side");
    }

    #[test]
    fn curves_csv_format() {
        let mut c = curve(vec![0.5; 3], 2);
        c.abscissa_deg = vec![120.0, 240.0, 360.0];
        let mut bi = c.clone();
        bi.kind = CurveKind::Bidirectional { separation_deg: 120.0 };
        let mut out = Vec::new();
        write_curves_csv(&[c, bi], &mut out, Some("seed=1")).unwrap();
        let text = String::from_utf8(out).unwrap();
        let expected = "# seed=1\n\
                        cell,kind,separation_deg,abscissa_deg,response\n\
                        2,uni,,120,0.5\n2,uni,,240,0.5\n2,uni,,360,0.5\n\
                        2,bidir,120,120,0.5\n2,bidir,120,240,0.5\n2,bidir,120,360,0.5\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn summary_csv_and_table_render() {
        let model = symmetric_model();
        let summary =
            population_summary(&model, None, &[60.0], &ClassifyOptions::default()).unwrap();
        let mut out = Vec::new();
        summary.write_summary_csv(&mut out, Some("seed=1")).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("cell,rho,class,peak_offset_deg"));
        assert!(text.contains("symmetric"));
        let table = summary.render_table();
        assert!(table.contains("classified 12 of 12 cells"));
        assert!(table.contains("symmetric"));
    }
}
