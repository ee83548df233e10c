//! Discrete direction grid, single- and two-direction stimuli, and the seeded
//! random training set.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circ;
use crate::error::{Error, Result};

/// Uniform grid of motion directions.
///
/// Directions follow the convention `theta_i = spacing * i` for
/// `i = 1..=n_dirs`, i.e. they cover (0, 360] ending exactly at 360. Public
/// direction indices are 1-based throughout to match that convention.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionGrid {
    n_dirs: usize,
    spacing_deg: f64,
    directions_deg: Vec<f64>,
}

impl DirectionGrid {
    /// Build a grid of `n_dirs` uniformly spaced directions.
    ///
    /// Rejects counts that do not divide 360 into whole degrees.
    pub fn new(n_dirs: usize) -> Result<Self> {
        if n_dirs < 2 || 360 % n_dirs != 0 {
            return Err(Error::GridSize(n_dirs));
        }
        let spacing_deg = (360 / n_dirs) as f64;
        let directions_deg = (1..=n_dirs).map(|i| spacing_deg * i as f64).collect();
        Ok(Self { n_dirs, spacing_deg, directions_deg })
    }

    pub fn n_dirs(&self) -> usize {
        self.n_dirs
    }

    pub fn spacing_deg(&self) -> f64 {
        self.spacing_deg
    }

    pub fn directions_deg(&self) -> &[f64] {
        &self.directions_deg
    }

    /// Direction of the 1-based grid index `i`.
    pub fn direction_deg(&self, index: usize) -> Result<f64> {
        self.check_index(index)?;
        Ok(self.directions_deg[index - 1])
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index == 0 || index > self.n_dirs {
            return Err(Error::DirIndex { index, n_dirs: self.n_dirs });
        }
        Ok(())
    }

    /// Largest index offset between the two components of a bidirectional
    /// stimulus; offsets run 1..=max and give separations `spacing * offset`.
    pub fn max_separation_steps(&self) -> usize {
        self.n_dirs / 2
    }

    /// Number of grid steps for a separation in degrees, if the separation is
    /// representable on this grid (a whole positive multiple of the spacing,
    /// at most 180 degrees).
    pub fn separation_steps(&self, separation_deg: f64) -> Option<usize> {
        let steps = separation_deg / self.spacing_deg;
        let rounded = steps.round();
        if (steps - rounded).abs() > 1e-9 {
            return None;
        }
        let rounded = rounded as i64;
        if rounded < 1 || rounded as usize > self.max_separation_steps() {
            return None;
        }
        Some(rounded as usize)
    }

    /// All separations representable on this grid, in degrees.
    pub fn representable_separations_deg(&self) -> Vec<f64> {
        (1..=self.max_separation_steps())
            .map(|s| self.spacing_deg * s as f64)
            .collect()
    }
}

/// A motion stimulus: an intensity for every grid direction, with exactly one
/// or two nonzero components.
#[derive(Debug, Clone, PartialEq)]
pub struct Stimulus {
    intensities: Vec<f64>,
    /// 0-based positions of the nonzero entries, sorted, length 1 or 2.
    nonzero: Vec<usize>,
}

impl Stimulus {
    /// Stimulus with a single moving component at 1-based grid index
    /// `dir_index`.
    pub fn single(grid: &DirectionGrid, dir_index: usize, intensity: f64) -> Result<Self> {
        grid.check_index(dir_index)?;
        if !(intensity > 0.0) {
            return Err(Error::Intensity(intensity));
        }
        let mut intensities = vec![0.0; grid.n_dirs()];
        intensities[dir_index - 1] = intensity;
        Ok(Self { intensities, nonzero: vec![dir_index - 1] })
    }

    /// Stimulus with two moving components at distinct 1-based grid indices,
    /// each with the same `intensity`.
    pub fn bidirectional(
        grid: &DirectionGrid,
        index_a: usize,
        index_b: usize,
        intensity: f64,
    ) -> Result<Self> {
        grid.check_index(index_a)?;
        grid.check_index(index_b)?;
        if index_a == index_b {
            return Err(Error::CoincidentComponents(index_a));
        }
        if !(intensity > 0.0) {
            return Err(Error::Intensity(intensity));
        }
        let mut intensities = vec![0.0; grid.n_dirs()];
        intensities[index_a - 1] = intensity;
        intensities[index_b - 1] = intensity;
        let mut nonzero = vec![index_a - 1, index_b - 1];
        nonzero.sort_unstable();
        Ok(Self { intensities, nonzero })
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    /// 1-based grid indices of the nonzero components, ascending.
    pub fn component_indices(&self) -> Vec<usize> {
        self.nonzero.iter().map(|&p| p + 1).collect()
    }

    /// 0-based positions of the nonzero entries, ascending.
    pub(crate) fn nonzero_positions(&self) -> &[usize] {
        &self.nonzero
    }

    pub fn is_bidirectional(&self) -> bool {
        self.nonzero.len() == 2
    }

    pub fn component_dirs_deg(&self, grid: &DirectionGrid) -> Vec<f64> {
        self.nonzero.iter().map(|&p| grid.directions_deg()[p]).collect()
    }

    /// Angular separation of a bidirectional stimulus (circular distance
    /// between its two directions); `None` for single stimuli.
    pub fn separation_deg(&self, grid: &DirectionGrid) -> Option<f64> {
        if !self.is_bidirectional() {
            return None;
        }
        let dirs = self.component_dirs_deg(grid);
        Some(circ::distance_deg(dirs[0], dirs[1]))
    }

    /// Midline (circular mean) of a bidirectional stimulus; may fall between
    /// grid points. `None` for single stimuli.
    pub fn midline_deg(&self, grid: &DirectionGrid) -> Option<f64> {
        if !self.is_bidirectional() {
            return None;
        }
        let dirs = self.component_dirs_deg(grid);
        Some(circ::midpoint_deg(dirs[0], dirs[1]))
    }

    /// Check the type invariants against a grid.
    pub fn validate(&self, grid: &DirectionGrid) -> Result<()> {
        if self.intensities.len() != grid.n_dirs() {
            return Err(Error::Dimension { expected: grid.n_dirs(), actual: self.intensities.len() });
        }
        if self.intensities.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Intensity(f64::NAN));
        }
        let nonzero: Vec<usize> = self
            .intensities
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect();
        if nonzero != self.nonzero || !(1..=2).contains(&nonzero.len()) {
            return Err(Error::Parameter(format!(
                "stimulus must have 1 or 2 nonzero components, found {}",
                nonzero.len()
            )));
        }
        Ok(())
    }
}

/// An ordered, reproducible collection of stimuli.
#[derive(Debug, Clone, PartialEq)]
pub struct StimulusBatch {
    pub stimuli: Vec<Stimulus>,
    pub seed: u64,
    pub n_single: usize,
    pub n_bidir: usize,
}

impl StimulusBatch {
    pub fn len(&self) -> usize {
        self.stimuli.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stimuli.is_empty()
    }

    /// Write the batch as CSV, one row per stimulus. `header_comment`, when
    /// given, is emitted first as a `#`-prefixed provenance line.
    pub fn write_csv<W: Write>(
        &self,
        grid: &DirectionGrid,
        mut w: W,
        header_comment: Option<&str>,
    ) -> std::io::Result<()> {
        if let Some(comment) = header_comment {
            writeln!(w, "# {comment}")?;
        }
        writeln!(w, "index,kind,dir_a_deg,dir_b_deg,intensity,separation_deg,midline_deg")?;
        for (i, s) in self.stimuli.iter().enumerate() {
            let dirs = s.component_dirs_deg(grid);
            let intensity = s.intensities[s.nonzero[0]];
            if s.is_bidirectional() {
                writeln!(
                    w,
                    "{},bidir,{},{},{},{},{}",
                    i,
                    dirs[0],
                    dirs[1],
                    intensity,
                    s.separation_deg(grid).unwrap(),
                    s.midline_deg(grid).unwrap()
                )?;
            } else {
                writeln!(w, "{},single,{},,{},,", i, dirs[0], intensity)?;
            }
        }
        Ok(())
    }
}

/// Sample the randomized training set: `n_single` single-direction stimuli
/// with directions uniform over the grid, then `n_bidir` two-direction
/// stimuli with a uniform base index and a separation drawn uniformly from
/// the representable set. Component intensity is 1.
///
/// Deterministic for a fixed `(grid, counts, seed)`.
pub fn sample_training_set(
    grid: &DirectionGrid,
    n_single: usize,
    n_bidir: usize,
    seed: u64,
) -> StimulusBatch {
    sample_training_set_scaled(grid, n_single, n_bidir, seed, 1.0)
}

/// [`sample_training_set`] with an explicit per-component intensity.
pub fn sample_training_set_scaled(
    grid: &DirectionGrid,
    n_single: usize,
    n_bidir: usize,
    seed: u64,
    intensity: f64,
) -> StimulusBatch {
    sample_training_set_mixed(grid, n_single, n_bidir, seed, intensity, intensity)
}

/// [`sample_training_set`] with separate intensities for single stimuli and
/// for each component of the bidirectional ones (two overlapping motion
/// fields may share the stimulus energy of a single one).
pub fn sample_training_set_mixed(
    grid: &DirectionGrid,
    n_single: usize,
    n_bidir: usize,
    seed: u64,
    single_intensity: f64,
    bidir_intensity: f64,
) -> StimulusBatch {
    assert!(single_intensity > 0.0 && bidir_intensity > 0.0, "intensities must be > 0");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_dirs();
    let max_steps = grid.max_separation_steps();
    let mut stimuli = Vec::with_capacity(n_single + n_bidir);
    for _ in 0..n_single {
        let index = rng.random_range(1..=n);
        stimuli.push(Stimulus::single(grid, index, single_intensity).expect("index in range"));
    }
    for _ in 0..n_bidir {
        let base = rng.random_range(1..=n);
        let steps = rng.random_range(1..=max_steps);
        let other = (base - 1 + steps) % n + 1;
        stimuli.push(
            Stimulus::bidirectional(grid, base, other, bidir_intensity).expect("indices valid"),
        );
    }
    StimulusBatch { stimuli, seed, n_single, n_bidir }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_24_has_15_degree_spacing() {
        let g = DirectionGrid::new(24).unwrap();
        assert_eq!(g.spacing_deg(), 15.0);
        assert_eq!(g.directions_deg()[0], 15.0);
        assert_eq!(*g.directions_deg().last().unwrap(), 360.0);
        assert_eq!(g.n_dirs() as f64 * g.spacing_deg(), 360.0);
    }

    #[test]
    fn grid_12_has_30_degree_spacing() {
        let g = DirectionGrid::new(12).unwrap();
        assert_eq!(g.spacing_deg(), 30.0);
    }

    #[test]
    fn grid_rejects_non_divisors() {
        assert!(matches!(DirectionGrid::new(7), Err(Error::GridSize(7))));
        assert!(matches!(DirectionGrid::new(1), Err(Error::GridSize(1))));
        assert!(matches!(DirectionGrid::new(0), Err(Error::GridSize(0))));
        assert!(DirectionGrid::new(360).is_ok());
    }

    #[test]
    fn single_stimulus_places_one_component() {
        let g = DirectionGrid::new(24).unwrap();
        let s = Stimulus::single(&g, 3, 1.0).unwrap();
        assert_eq!(s.intensities()[2], 1.0);
        assert_eq!(s.intensities().iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(s.component_indices(), vec![3]);

        let g12 = DirectionGrid::new(12).unwrap();
        let s = Stimulus::single(&g12, 12, 0.5).unwrap();
        assert_eq!(s.intensities()[11], 0.5);
    }

    #[test]
    fn single_stimulus_rejects_bad_inputs() {
        let g = DirectionGrid::new(24).unwrap();
        assert!(matches!(
            Stimulus::single(&g, 25, 1.0),
            Err(Error::DirIndex { index: 25, n_dirs: 24 })
        ));
        assert!(Stimulus::single(&g, 0, 1.0).is_err());
        assert!(matches!(Stimulus::single(&g, 3, 0.0), Err(Error::Intensity(_))));
    }

    #[test]
    fn bidirectional_separation_and_midline() {
        let g = DirectionGrid::new(24).unwrap();
        let s = Stimulus::bidirectional(&g, 1, 5, 1.0).unwrap();
        assert_eq!(s.separation_deg(&g), Some(60.0));
        assert_eq!(s.midline_deg(&g), Some(45.0));
        assert_eq!(s.intensities().iter().filter(|&&v| v != 0.0).count(), 2);

        // antipodal pair: maximal separation
        let s = Stimulus::bidirectional(&g, 1, 13, 1.0).unwrap();
        assert_eq!(s.separation_deg(&g), Some(180.0));
    }

    #[test]
    fn bidirectional_rejects_coincident_and_out_of_range() {
        let g = DirectionGrid::new(24).unwrap();
        assert!(matches!(
            Stimulus::bidirectional(&g, 1, 1, 1.0),
            Err(Error::CoincidentComponents(1))
        ));
        assert!(Stimulus::bidirectional(&g, 1, 25, 1.0).is_err());
    }

    #[test]
    fn separation_steps_representability() {
        let g = DirectionGrid::new(24).unwrap();
        assert_eq!(g.separation_steps(60.0), Some(4));
        assert_eq!(g.separation_steps(180.0), Some(12));
        assert_eq!(g.separation_steps(17.0), None);
        assert_eq!(g.separation_steps(0.0), None);
        assert_eq!(g.separation_steps(195.0), None);

        let g12 = DirectionGrid::new(12).unwrap();
        assert_eq!(g12.separation_steps(15.0), None);
        assert_eq!(g12.separation_steps(30.0), Some(1));
    }

    #[test]
    fn training_set_counts_and_determinism() {
        let g = DirectionGrid::new(24).unwrap();
        let a = sample_training_set(&g, 500, 120, 42);
        assert_eq!(a.len(), 620);
        assert_eq!(a.n_single, 500);
        assert_eq!(a.n_bidir, 120);

        let b = sample_training_set(&g, 500, 120, 42);
        assert_eq!(a, b, "same (grid, counts, seed) must reproduce bit-identical batches");

        let c = sample_training_set(&g, 500, 120, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn empty_training_set() {
        let g = DirectionGrid::new(24).unwrap();
        let b = sample_training_set(&g, 0, 0, 7);
        assert!(b.is_empty());
    }

    #[test]
    fn full_scale_counts() {
        let g = DirectionGrid::new(24).unwrap();
        let b = sample_training_set(&g, 180_000, 36_000, 1);
        assert_eq!(b.len(), 216_000);
    }

    /// Chi-square statistic against a uniform distribution over `bins`.
    fn chi_square_uniform(counts: &[usize], total: usize) -> f64 {
        let expected = total as f64 / counts.len() as f64;
        counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum()
    }

    #[test]
    fn separation_histogram_is_uniform() {
        let g = DirectionGrid::new(24).unwrap();
        let b = sample_training_set(&g, 10_000, 2_000, 99);
        let mut counts = vec![0usize; 12];
        for s in b.stimuli.iter().filter(|s| s.is_bidirectional()) {
            let steps = g.separation_steps(s.separation_deg(&g).unwrap()).unwrap();
            counts[steps - 1] += 1;
        }
        assert_eq!(counts.iter().sum::<usize>(), 2_000);
        // chi-square, 11 dof, p = 0.001 critical value
        let chi2 = chi_square_uniform(&counts, 2_000);
        assert!(chi2 < 31.264, "chi-square {chi2} too large: {counts:?}");
        // every separation within 5 percentage points of the uniform share
        for &c in &counts {
            let frac = c as f64 / 2_000.0;
            assert!((frac - 1.0 / 12.0).abs() <= 0.05, "separation fraction {frac} off uniform");
        }
    }

    #[test]
    fn single_direction_marginal_is_uniform() {
        let g = DirectionGrid::new(24).unwrap();
        let b = sample_training_set(&g, 10_000, 0, 7);
        let mut counts = vec![0usize; 24];
        for s in &b.stimuli {
            counts[s.nonzero_positions()[0]] += 1;
        }
        // chi-square, 23 dof, p = 0.001 critical value
        let chi2 = chi_square_uniform(&counts, 10_000);
        assert!(chi2 < 49.728, "chi-square {chi2} too large: {counts:?}");
    }

    #[test]
    fn csv_export_format() {
        let g = DirectionGrid::new(24).unwrap();
        let batch = StimulusBatch {
            stimuli: vec![
                Stimulus::single(&g, 3, 1.0).unwrap(),
                Stimulus::bidirectional(&g, 1, 5, 1.0).unwrap(),
            ],
            seed: 5,
            n_single: 1,
            n_bidir: 1,
        };
        let mut out = Vec::new();
        batch.write_csv(&g, &mut out, Some("seed=5 config_hash=deadbeef")).unwrap();
        let text = String::from_utf8(out).unwrap();
        let expected = "# seed=5 config_hash=deadbeef\n\
                        index,kind,dir_a_deg,dir_b_deg,intensity,separation_deg,midline_deg\n\
                        0,single,45,,1,,\n\
                        1,bidir,15,75,1,60,45\n";
        assert_eq!(text, expected);
    }

    proptest! {
        #[test]
        fn sampled_batches_satisfy_invariants(
            n_dirs in prop::sample::select(vec![2usize, 4, 8, 12, 24, 36]),
            n_single in 0usize..60,
            n_bidir in 0usize..60,
            seed in any::<u64>(),
        ) {
            let g = DirectionGrid::new(n_dirs).unwrap();
            let b = sample_training_set(&g, n_single, n_bidir, seed);
            prop_assert_eq!(b.len(), n_single + n_bidir);
            for (i, s) in b.stimuli.iter().enumerate() {
                prop_assert!(s.validate(&g).is_ok());
                prop_assert_eq!(s.is_bidirectional(), i >= n_single);
            }
        }
    }
}
