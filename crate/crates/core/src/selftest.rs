//! Built-in oracle and invariant checks at desk scale.
//!
//! Every check uses fixed seeds, so the rendered report is identical from run
//! to run. Detail strings carry values rounded to a few digits for the same
//! reason.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::SplitMix64;
use serde::Serialize;

use crate::conditioning::{
    apply_metadata_dropout, emit_pairs, pair_fixed, pair_random, write_pairs, ConditioningExample, DatasetIndex,
    Family, FamilyAliases, FixedPitchTable, IndexedInstrument, PairingConfig, Scheme,
};
use crate::linalg::{
    color_to_target, cosine_gram, sym_eigen, trace_sqrt_product_with_sqrt, LinalgError,
};
use crate::metrics::{build_ground_stats, clap_score, fad, tc, ClapMode, FadOptions, TcReference};
use crate::oracle::{
    brute_force_template_match, chi_square_quantile, chi_square_uniform, dense_ground_average, frechet_1d,
    trace_sqrt_product_nonsymmetric,
};
use crate::refsynth::{estimate_pitch_velocity, synth_reference, translate_templates, PromptEmbedding, SynthMethod, SynthOptions};
use crate::store::{
    synth_population, Coverage, EmbeddingSet, GridIndex, InstrumentMeta, MeanGrid, SampleKey, SynthPreset, SynthSpec,
    GRID_SIZE, PITCH_COUNT, PITCH_MIN, VELOCITIES,
};
use crate::Result;

/// Kernels under test. Swapping one for a broken version must make the
/// selftest fail.
#[derive(Clone, Copy)]
pub struct SelftestKernels {
    pub psd_sqrt: fn(&DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError>,
}

impl Default for SelftestKernels {
    fn default() -> Self {
        SelftestKernels {
            psd_sqrt: crate::linalg::psd_sqrt,
        }
    }
}

impl SelftestKernels {
    fn trace_sqrt_product(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
        let s = (self.psd_sqrt)(a)?;
        Ok(trace_sqrt_product_with_sqrt(&s, b)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&serde_json::json!({
            "passed": self.passed(),
            "checks": self.checks,
        }))
        .expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{}  {:width$}  {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            ));
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        out.push_str(&format!("{} checks, {} failed\n", self.checks.len(), failed));
        out
    }
}

pub fn run_selftest() -> SelftestReport {
    run_selftest_with(&SelftestKernels::default())
}

pub fn run_selftest_with(kernels: &SelftestKernels) -> SelftestReport {
    let checks: Vec<(&str, fn(&SelftestKernels) -> Result<(bool, String)>)> = vec![
        ("eigen_rank_one", eigen_rank_one),
        ("psd_sqrt_closed_forms", psd_sqrt_closed_forms),
        ("psd_sqrt_of_square", psd_sqrt_of_square),
        ("trace_sqrt_closed_form", trace_sqrt_closed_form),
        ("trace_sqrt_vs_nonsymmetric", trace_sqrt_vs_nonsymmetric),
        ("trace_sqrt_invariants", trace_sqrt_invariants),
        ("coloration_gram_match", coloration_gram_match),
        ("coloration_rank_error", coloration_rank_error),
        ("synthetic_iid_concentration", synthetic_iid_concentration),
        ("fad_closed_form", fad_closed_form),
        ("fad_identity", fad_identity),
        ("fad_rotation_invariance", fad_rotation_invariance),
        ("tc_calibration", tc_calibration),
        ("tc_bounds", tc_bounds),
        ("ground_masking_vs_dense", ground_masking_vs_dense),
        ("clap_duality", clap_duality),
        ("template_matching", template_matching),
        ("reference_synthesis", reference_synthesis),
        ("conditioning_fixed_table", conditioning_fixed_table),
        ("conditioning_fallback", conditioning_fallback),
        ("conditioning_uniformity", conditioning_uniformity),
        ("conditioning_dropout_rate", conditioning_dropout_rate),
        ("conditioning_reproducible", conditioning_reproducible),
    ];
    let checks = checks
        .into_iter()
        .map(|(name, f)| {
            let (passed, detail) = match f(kernels) {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            Check {
                name: name.to_string(),
                passed,
                detail,
            }
        })
        .collect();
    SelftestReport { checks }
}

fn gaussian(rng: &mut SplitMix64, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Wishart draw with 2n degrees of freedom, full rank with high probability.
fn random_psd(rng: &mut SplitMix64, n: usize) -> DMatrix<f64> {
    let x = gaussian(rng, n, 2 * n);
    &x * x.transpose() / (2 * n) as f64
}

fn unit_columns(mut z: DMatrix<f64>) -> DMatrix<f64> {
    for mut c in z.column_iter_mut() {
        let n = c.norm();
        c.unscale_mut(n);
    }
    z
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
fn random_rotation(rng: &mut SplitMix64, n: usize) -> DMatrix<f64> {
    gaussian(rng, n, n).qr().q()
}

fn single_instrument(dz: usize, columns: &DMatrix<f64>) -> EmbeddingSet {
    let samples = columns
        .column_iter()
        .enumerate()
        .map(|(i, c)| (GridIndex::new(i).expect("small index"), c.iter().copied().collect()))
        .collect();
    EmbeddingSet::from_instruments(dz, 1, vec![(InstrumentMeta::new("k"), samples)]).expect("valid set")
}

fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn eigen_rank_one(_: &SelftestKernels) -> Result<(bool, String)> {
    let d = sym_eigen(&DMatrix::from_element(4, 4, 1.0))?;
    let expected = [4.0, 0.0, 0.0, 0.0];
    let err = d
        .eigenvalues
        .iter()
        .zip(expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok((err < 1e-12, format!("max eigenvalue error {err:.1e}")))
}

fn psd_sqrt_closed_forms(k: &SelftestKernels) -> Result<(bool, String)> {
    let ones = DMatrix::from_element(4, 4, 1.0);
    let e1 = ((k.psd_sqrt)(&ones)? - &ones / 2.0).amax();
    let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
    let e2 = ((k.psd_sqrt)(&diag)? - DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]))).amax();
    let eye = DMatrix::<f64>::identity(5, 5);
    let e3 = ((k.psd_sqrt)(&eye)? - &eye).amax();
    let err = e1.max(e2).max(e3);
    Ok((err < 1e-12, format!("max entry error {err:.1e}")))
}

fn psd_sqrt_of_square(k: &SelftestKernels) -> Result<(bool, String)> {
    let mut rng = SplitMix64::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let s = random_psd(&mut rng, 8);
        let root = (k.psd_sqrt)(&(&s * &s))?;
        worst = worst.max((root - &s).amax());
    }
    Ok((worst <= 1e-7, format!("max |sqrt(S²) − S| {worst:.1e} over 20 draws")))
}

fn trace_sqrt_closed_form(k: &SelftestKernels) -> Result<(bool, String)> {
    let j = DMatrix::from_element(4, 4, 0.25);
    let i = DMatrix::<f64>::identity(4, 4) * 0.25;
    let v = k.trace_sqrt_product(&j, &i)?;
    let eye = DMatrix::<f64>::identity(6, 6) / 6.0;
    let w = k.trace_sqrt_product(&eye, &eye)?;
    let ok = (v - 0.5).abs() < 1e-12 && (w - 1.0).abs() < 1e-12;
    Ok((ok, format!("J/4 with I/4: {v:.9}; I/n with itself: {w:.9}")))
}

fn trace_sqrt_vs_nonsymmetric(k: &SelftestKernels) -> Result<(bool, String)> {
    let mut rng = SplitMix64::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let a = random_psd(&mut rng, 8);
        let b = random_psd(&mut rng, 8);
        let ours = k.trace_sqrt_product(&a, &b)?;
        let oracle = trace_sqrt_product_nonsymmetric(&a, &b);
        worst = worst.max((ours - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE));
    }
    Ok((worst <= 1e-6, format!("max relative difference {worst:.1e} over 100 pairs")))
}

fn trace_sqrt_invariants(k: &SelftestKernels) -> Result<(bool, String)> {
    let mut rng = SplitMix64::seed_from_u64(303);
    let (mut sym, mut diag, mut bound): (f64, f64, f64) = (0.0, 0.0, f64::NEG_INFINITY);
    for _ in 0..50 {
        let a = random_psd(&mut rng, 8);
        let b = random_psd(&mut rng, 8);
        let ab = k.trace_sqrt_product(&a, &b)?;
        let ba = k.trace_sqrt_product(&b, &a)?;
        sym = sym.max((ab - ba).abs() / ab.max(f64::MIN_POSITIVE));
        diag = diag.max((k.trace_sqrt_product(&a, &a)? - a.trace()).abs() / a.trace());
        bound = bound.max(ab - (a.trace() * b.trace()).sqrt());
    }
    let ok = sym <= 1e-9 && diag <= 1e-9 && bound <= 1e-8;
    Ok((
        ok,
        format!("asymmetry {sym:.1e}, |tsp(A,A) − TrA|/TrA {diag:.1e}, bound slack {:.1e}", -bound),
    ))
}

fn coloration_gram_match(_: &SelftestKernels) -> Result<(bool, String)> {
    let mut rng = SplitMix64::seed_from_u64(404);
    let z = unit_columns(gaussian(&mut rng, 64, 16));
    let target = cosine_gram(&unit_columns(gaussian(&mut rng, 64, 16)))?;
    let out = color_to_target(&z, &target)?;
    let err = rel_frobenius(&out.tr_mul(&out), &target);
    let norm_dev = out.column_iter().map(|c| (c.norm() - 1.0).abs()).fold(0.0, f64::max);
    Ok((
        err <= 1e-5 && norm_dev <= 1e-6,
        format!("relative Gram error {err:.1e}, max norm deviation {norm_dev:.1e}"),
    ))
}

fn coloration_rank_error(_: &SelftestKernels) -> Result<(bool, String)> {
    // Three columns in a 2-D span against a rank-3 target.
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z = DMatrix::from_column_slice(4, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, s, s, 0.0, 0.0]);
    let target = DMatrix::<f64>::identity(3, 3);
    match color_to_target(&z, &target) {
        Err(LinalgError::RankDeficient { gram_rank: 2, target_rank: 3 }) => {
            Ok((true, "rank 2 against rank 3 rejected".into()))
        }
        other => Ok((false, format!("unexpected outcome {other:?}"))),
    }
}

fn synthetic_iid_concentration(_: &SelftestKernels) -> Result<(bool, String)> {
    let set = synth_population(
        &SynthSpec {
            preset: SynthPreset::IidGaussianNormalized,
            dz: 512,
            instruments: 1,
            coverage: Coverage::Full,
        },
        505,
    )?;
    let g = set.data().tr_mul(set.data());
    let n = g.nrows();
    let off: f64 = (g.sum() - g.trace()) / (n * (n - 1)) as f64;
    Ok((off.abs() < 0.01, format!("mean pairwise cosine {off:.2e}")))
}

fn scalar_set(values: &[f64]) -> EmbeddingSet {
    single_instrument(1, &DMatrix::from_row_slice(1, values.len(), values))
}

fn fad_closed_form(_: &SelftestKernels) -> Result<(bool, String)> {
    let cases = [
        (vec![-1.0, 1.0], vec![1.0, 3.0], 4.0),
        (vec![-1.0, 1.0], vec![-2.0, 2.0], 1.0),
    ];
    let mut worst: f64 = 0.0;
    for (x, y, expected) in &cases {
        let v = fad(&scalar_set(x), &scalar_set(y), FadOptions::default())?.value;
        worst = worst.max((v - expected).abs()).max((frechet_1d(x, y) - expected).abs());
    }
    Ok((worst <= 1e-12, format!("max error {worst:.1e} against 4.0 and 1.0")))
}

fn fad_identity(_: &SelftestKernels) -> Result<(bool, String)> {
    let mut rng = SplitMix64::seed_from_u64(606);
    let (mut zero, mut literal): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let set = single_instrument(16, &gaussian(&mut rng, 16, 64));
        zero = zero.max(fad(&set, &set, FadOptions::default())?.value.abs());
        let r = fad(&set, &set, FadOptions { paper_literal: true, ddof: 0 })?;
        let trace = r.config["trace_reference"].as_f64().unwrap_or(f64::NAN);
        literal = literal.max((r.value - 3.0 * trace).abs());
    }
    Ok((
        zero <= 1e-9 && literal <= 1e-9,
        format!("max |fad(Z,Z)| {zero:.1e}; literal form off 3·Tr(A) by {literal:.1e}"),
    ))
}

fn fad_rotation_invariance(_: &SelftestKernels) -> Result<(bool, String)> {
    let mut rng = SplitMix64::seed_from_u64(707);
    let a = gaussian(&mut rng, 32, 80);
    let b = gaussian(&mut rng, 32, 80).add_scalar(0.3);
    let q = random_rotation(&mut rng, 32);
    let before = fad(&single_instrument(32, &a), &single_instrument(32, &b), FadOptions::default())?.value;
    let after = fad(
        &single_instrument(32, &(&q * &a)),
        &single_instrument(32, &(&q * &b)),
        FadOptions::default(),
    )?
    .value;
    let diff = (before - after).abs();
    Ok((diff <= 1e-8, format!("FAD {before:.6} changes by {diff:.1e} under rotation")))
}

fn tc_calibration(_: &SelftestKernels) -> Result<(bool, String)> {
    let ones = DMatrix::from_fn(4, 4, |i, _| (i == 0) as u8 as f64);
    let eye = DMatrix::<f64>::identity(4, 4);
    let half = tc(TcReference::Paired(&single_instrument(4, &ones)), &single_instrument(4, &eye))?.value;
    let set = synth_population(
        &SynthSpec {
            preset: SynthPreset::ClusteredPerInstrument { spread: 1.0 },
            dz: 32,
            instruments: 2,
            coverage: Coverage::Full,
        },
        808,
    )?;
    let one = tc(TcReference::Paired(&set), &set)?.value;
    let ok = (half - 0.5).abs() <= 1e-9 && (one - 1.0).abs() <= 1e-8;
    Ok((ok, format!("all-ones vs identity {half:.9}; full-grid self {one:.9}")))
}

fn tc_bounds(_: &SelftestKernels) -> Result<(bool, String)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for seed in 0..50u64 {
        let spec = |preset, s| {
            synth_population(
                &SynthSpec {
                    preset,
                    dz: 12,
                    instruments: 2,
                    coverage: Coverage::Count { cells: 24 },
                },
                s,
            )
        };
        let reference = spec(SynthPreset::ClusteredPerInstrument { spread: 0.5 + (seed % 5) as f64 }, 7)?;
        let test = spec(SynthPreset::IidGaussianNormalized, 1000 + seed)?;
        let test = remap_like(&test, &reference)?;
        let v = tc(TcReference::Paired(&reference), &test)?;
        for s in v.per_instrument.iter().flat_map(|m| m.values()).chain([&v.value]) {
            lo = lo.min(*s);
            hi = hi.max(*s);
        }
    }
    Ok((lo >= 0.0 && hi <= 1.0 + 1e-8, format!("scores within [{lo:.4}, {hi:.4}] over 50 pairs")))
}

/// Relabels `test` onto `reference`'s instruments and cells, in order.
fn remap_like(test: &EmbeddingSet, reference: &EmbeddingSet) -> Result<EmbeddingSet> {
    let mut instruments = Vec::new();
    let mut s = 0;
    for (i, meta) in reference.instruments().iter().enumerate() {
        let samples = reference
            .instrument_keys(i)
            .iter()
            .map(|k| {
                let v: Vec<f64> = test.vector(s, 0).iter().copied().collect();
                s += 1;
                (k.cell(), v)
            })
            .collect();
        instruments.push((meta.clone(), samples));
    }
    Ok(EmbeddingSet::from_instruments(test.dz(), 1, instruments)?)
}

fn ground_masking_vs_dense(_: &SelftestKernels) -> Result<(bool, String)> {
    let set = synth_population(
        &SynthSpec {
            preset: SynthPreset::ClusteredPerInstrument { spread: 1.0 },
            dz: 32,
            instruments: 5,
            coverage: Coverage::Full,
        },
        909,
    )?;
    let stats = build_ground_stats(&set)?;
    let dense = dense_ground_average(&set).ok_or_else(|| crate::Error::Invalid("dense oracle needs full grids".into()))?;
    let err = (&stats.cosine.values - dense).amax();
    Ok((err <= 1e-12, format!("max entry difference {err:.1e}")))
}

fn clap_duality(_: &SelftestKernels) -> Result<(bool, String)> {
    let e1 = vec![1.0, 0.0];
    let e2 = vec![0.0, 1.0];
    let make = |a: Vec<Vec<f64>>, b: Vec<Vec<f64>>| {
        let inst = |id: &str, cols: Vec<Vec<f64>>| {
            (
                InstrumentMeta::new(id),
                cols.into_iter()
                    .enumerate()
                    .map(|(i, c)| (GridIndex::new(i).expect("small index"), c))
                    .collect::<Vec<_>>(),
            )
        };
        EmbeddingSet::from_instruments(2, 1, vec![inst("a", a), inst("b", b)])
    };
    let reference = make(vec![e1.clone(), e1.clone()], vec![e1.clone()])?;
    let test = make(vec![e1.clone(), e1.clone()], vec![e2.clone()])?;
    let s = clap_score(&reference, &test, ClapMode::PerSample)?.value;
    let i = clap_score(&reference, &test, ClapMode::PerInstrument)?.value;

    let mut rng = SplitMix64::seed_from_u64(1111);
    let r2 = synth_population(
        &SynthSpec {
            preset: SynthPreset::IidGaussianNormalized,
            dz: 8,
            instruments: 4,
            coverage: Coverage::Count { cells: 10 },
        },
        12,
    )?;
    let t2 = remap_like(
        &synth_population(
            &SynthSpec {
                preset: SynthPreset::IidGaussianNormalized,
                dz: 8,
                instruments: 4,
                coverage: Coverage::Count { cells: 10 },
            },
            rand::RngCore::next_u64(&mut rng),
        )?,
        &r2,
    )?;
    let gap = (clap_score(&r2, &t2, ClapMode::PerSample)?.value - clap_score(&r2, &t2, ClapMode::PerInstrument)?.value).abs();
    let ok = (s - 2.0 / 3.0).abs() <= 1e-15 && i == 0.5 && gap <= 1e-12;
    Ok((ok, format!("per-sample {s:.9}, per-instrument {i:.9}, equal-N gap {gap:.1e}")))
}

fn basis_templates(dz: usize) -> MeanGrid {
    let mut m = MeanGrid::empty(dz);
    for i in 0..GRID_SIZE {
        m.vectors[(i, i)] = 1.0;
        m.available[i] = true;
        m.count[i] = 1;
    }
    m
}

fn template_matching(_: &SelftestKernels) -> Result<(bool, String)> {
    let templates = basis_templates(512);
    let mut v = DVector::zeros(512);
    v[0] = std::f64::consts::FRAC_1_SQRT_2;
    v[1] = std::f64::consts::FRAC_1_SQRT_2;
    let tie = estimate_pitch_velocity(&PromptEmbedding::new(v.clone(), "tie")?, &templates)?.0;
    let oracle = brute_force_template_match(&v, &templates);
    let mut e5 = DVector::zeros(512);
    e5[5] = 1.0;
    let five = estimate_pitch_velocity(&PromptEmbedding::new(e5, "e5")?, &templates)?.0;
    let ok = tie.value() == 0 && oracle == Some(tie) && (five.pitch(), five.velocity()) == (22, 25);
    Ok((ok, format!("tie resolves to cell {}; e5 maps to pitch {} velocity {}", tie.value(), five.pitch(), five.velocity())))
}

fn reference_synthesis(_: &SelftestKernels) -> Result<(bool, String)> {
    let dz = 64;
    let cells: Vec<GridIndex> = (0..40).map(GridIndex::new).collect::<std::result::Result<_, _>>()?;
    let reference = synth_population(
        &SynthSpec {
            preset: SynthPreset::ClusteredPerInstrument { spread: 1.0 },
            dz,
            instruments: 6,
            coverage: Coverage::Cells { cells: cells.clone() },
        },
        1212,
    )?;
    let stats = build_ground_stats(&reference)?;
    let mut rng = SplitMix64::seed_from_u64(1313);
    let prompt = PromptEmbedding::new(
        {
            let v: DVector<f64> = DVector::from_fn(dz, |_, _| StandardNormal.sample(&mut rng));
            let n = v.norm();
            v / n
        },
        "prompt",
    )?;

    let naive = synth_reference(&prompt, &stats.means, &stats.cosine, Some(&cells), SynthOptions::new(SynthMethod::Naive))?;
    let naive_ok = naive.gram.iter().all(|&x| x == 1.0);

    let (matched, template) = estimate_pitch_velocity(&prompt, &stats.means)?;
    let translated = translate_templates(&prompt, &stats.means, &[matched], &template, false);
    let align = (translated.column(0) - prompt.vector()).amax();

    let colored = synth_reference(&prompt, &stats.means, &stats.cosine, Some(&cells), SynthOptions::new(SynthMethod::Coloration))?;
    let target = stats.cosine.restrict(&cells);
    let err = rel_frobenius(&colored.columns.tr_mul(&colored.columns), &target);
    let norm_dev = colored.columns.column_iter().map(|c| (c.norm() - 1.0).abs()).fold(0.0, f64::max);
    let ok = naive_ok && align <= 1e-12 && err <= 1e-5 && norm_dev <= 1e-6;
    Ok((
        ok,
        format!(
            "naive all-ones {naive_ok}; matched column offset {align:.1e}; coloration Gram error {err:.1e} on {} cells, norm deviation {norm_dev:.1e}",
            cells.len()
        ),
    ))
}

fn full_grid_index(family: &str) -> DatasetIndex {
    let mut index = DatasetIndex::new();
    index.insert(
        "k",
        IndexedInstrument {
            family: Some(family.into()),
            source: Some("acoustic".into()),
            cells: GridIndex::all().collect(),
        },
    );
    index
}

fn conditioning_fixed_table(_: &SelftestKernels) -> Result<(bool, String)> {
    let table = FixedPitchTable::default();
    let aliases = FamilyAliases::default();
    let expected = [
        (Family::Bass, 36),
        (Family::Brass, 48),
        (Family::String, 48),
        (Family::SynthLead, 48),
        (Family::Guitar, 60),
        (Family::Keyboard, 60),
        (Family::Organ, 60),
        (Family::Reed, 60),
        (Family::Vocal, 60),
        (Family::Flute, 72),
        (Family::Mallet, 72),
    ];
    let mut bad = Vec::new();
    for (family, pitch) in expected {
        let index = full_grid_index(family.name());
        let target = SampleKey::new("k", 21, 25)?;
        let e = pair_fixed(&target, &index, &table, &aliases, None)?;
        if (e.condition.pitch, e.condition.velocity) != (pitch, 100) {
            bad.push(family.name());
        }
    }
    Ok((bad.is_empty(), format!("11 families checked, mismatches: {bad:?}")))
}

fn conditioning_fallback(_: &SelftestKernels) -> Result<(bool, String)> {
    let table = FixedPitchTable::default();
    let aliases = FamilyAliases::default();
    let mut index = DatasetIndex::new();
    let cells: BTreeSet<GridIndex> = (60..=71)
        .flat_map(|p| VELOCITIES.iter().map(move |&v| GridIndex::from_pitch_velocity(p, v)))
        .collect::<std::result::Result<_, _>>()?;
    index.insert(
        "f",
        IndexedInstrument {
            family: Some("flute".into()),
            source: None,
            cells,
        },
    );
    // Only velocities 75 and 127 at pitches 34 and 38: a bass resolves to 34 (tie, lower) at 75 (tie, lower).
    let sparse: BTreeSet<GridIndex> = [(34, 75), (34, 127), (38, 75), (38, 127)]
        .iter()
        .map(|&(p, v)| GridIndex::from_pitch_velocity(p, v))
        .collect::<std::result::Result<_, _>>()?;
    index.insert(
        "b",
        IndexedInstrument {
            family: Some("bass".into()),
            source: None,
            cells: sparse,
        },
    );
    let flute = pair_fixed(&SampleKey::new("f", 64, 50)?, &index, &table, &aliases, None)?.condition;
    let bass = pair_fixed(&SampleKey::new("b", 38, 127)?, &index, &table, &aliases, None)?.condition;
    let ok = (flute.pitch, flute.velocity) == (71, 100) && (bass.pitch, bass.velocity) == (34, 75);
    Ok((
        ok,
        format!(
            "flute on 60-71 -> ({}, {}); bass on {{34, 38}} x {{75, 127}} -> ({}, {})",
            flute.pitch, flute.velocity, bass.pitch, bass.velocity
        ),
    ))
}

fn conditioning_uniformity(_: &SelftestKernels) -> Result<(bool, String)> {
    let index = full_grid_index("guitar");
    let target = SampleKey::new("k", 60, 75)?;
    let mut rng = SplitMix64::seed_from_u64(1414);
    let draws = 100_000u64;
    let mut cells = vec![0u64; GRID_SIZE];
    let mut pitches = vec![0u64; PITCH_COUNT];
    for _ in 0..draws {
        let c = pair_random(&target, &index, &mut rng)?.condition;
        cells[c.cell().value()] += 1;
        pitches[(c.pitch - PITCH_MIN) as usize] += 1;
    }
    let stat = chi_square_uniform(&cells);
    let limit = chi_square_quantile((GRID_SIZE - 1) as f64, 0.999);
    let p = 1.0 / PITCH_COUNT as f64;
    let mean = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    let worst_z = pitches.iter().map(|&c| (c as f64 - mean).abs() / sigma).fold(0.0, f64::max);
    // 88 simultaneous 3σ checks: a fixed seed makes the outcome deterministic.
    let ok = stat < limit && worst_z <= 3.0;
    Ok((ok, format!("chi-square {stat:.1} < {limit:.1}; worst pitch deviation {worst_z:.2}σ")))
}

fn conditioning_dropout_rate(_: &SelftestKernels) -> Result<(bool, String)> {
    let mut rng = SplitMix64::seed_from_u64(1515);
    let key = SampleKey::new("k", 60, 75)?;
    let n = 100_000;
    let (mut fam, mut src) = (0usize, 0usize);
    for _ in 0..n {
        let e = apply_metadata_dropout(
            ConditioningExample {
                target: key.clone(),
                condition: key.clone(),
                family_kept: true,
                source_kept: true,
            },
            &mut rng,
            0.3,
        )?;
        fam += (!e.family_kept) as usize;
        src += (!e.source_kept) as usize;
    }
    let (rf, rs) = (fam as f64 / n as f64, src as f64 / n as f64);
    let ok = (rf - 0.3).abs() <= 0.01 && (rs - 0.3).abs() <= 0.01;
    Ok((ok, format!("family drop rate {rf:.4}, source drop rate {rs:.4}")))
}

fn conditioning_reproducible(_: &SelftestKernels) -> Result<(bool, String)> {
    let set = synth_population(
        &SynthSpec {
            preset: SynthPreset::IidGaussianNormalized,
            dz: 4,
            instruments: 5,
            coverage: Coverage::Count { cells: 30 },
        },
        1616,
    )?;
    let index = DatasetIndex::from_set(&set);
    let mut identical = true;
    let mut lines = 0;
    for scheme in [Scheme::Baseline, Scheme::Random, Scheme::Fixed] {
        let render = || -> Result<Vec<u8>> {
            let pairs = emit_pairs(&index, &PairingConfig::new(scheme, 99))?;
            let mut buf = Vec::new();
            write_pairs(&mut buf, &pairs, scheme, 99).map_err(|e| crate::Error::Invalid(e.to_string()))?;
            Ok(buf)
        };
        let a = render()?;
        identical &= a == render()?;
        lines += a.iter().filter(|&&b| b == b'\n').count();
    }
    Ok((identical, format!("{lines} records over three schemes, repeated output identical: {identical}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let report = run_selftest();
        assert!(report.passed(), "{}", report.to_table());
    }

    fn broken_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
        Ok(crate::linalg::psd_sqrt(a)? * 1.001)
    }

    #[test]
    fn corrupted_sqrt_is_caught() {
        let report = run_selftest_with(&SelftestKernels { psd_sqrt: broken_sqrt });
        assert!(!report.passed());
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        assert!(failed.contains(&"psd_sqrt_closed_forms"), "{failed:?}");
    }
}
