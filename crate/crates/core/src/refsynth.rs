//! Reference ensembles synthesized from a single text-prompt embedding.
//!
//! A text prompt yields one embedding, while a generated instrument yields one
//! per cell. Three ways of expanding the prompt into a per-cell reference:
//!
//! * naive: the prompt replicated on every cell;
//! * translation: the ground mean-embedding grid shifted so the cell whose
//!   template best matches the prompt lands exactly on the prompt, then
//!   renormalized per column;
//! * coloration: the translated ensemble recolored so its Gram matrix equals
//!   the ground cosine grid on the same cells.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{color_to_target, repair_correlation, sym_eigen};
use crate::metrics::clap_score_views;
use crate::report::MetricReport;
use crate::store::{load_population, CosineGrid, EmbeddingSet, GridIndex, MeanGrid, NORM_TOLERANCE};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PromptEmbedding {
    vector: DVector<f64>,
    label: String,
}

impl PromptEmbedding {
    pub fn new(vector: DVector<f64>, label: impl Into<String>) -> Result<Self> {
        let norm = vector.norm();
        if !((norm - 1.0).abs() <= NORM_TOLERANCE) {
            return Err(Error::Invalid(format!("prompt embedding has norm {norm}, expected 1")));
        }
        Ok(PromptEmbedding {
            vector,
            label: label.into(),
        })
    }

    /// Reads a single-record population file; the instrument id is the label
    /// and the record's key is ignored.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let set = load_population(manifest_path, true)?;
        if set.len() != 1 || set.frames_per_sample() != 1 {
            return Err(Error::Invalid(format!(
                "prompt file {} must hold exactly one single-frame record, found {}",
                manifest_path.display(),
                set.len()
            )));
        }
        let label = set.instruments()[0].id.clone();
        PromptEmbedding::new(set.vector(0, 0).into_owned(), label)
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.vector
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthMethod {
    Naive,
    Translation,
    Coloration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub method: SynthMethod,
    /// Shift by `μ̂ − z_t` instead of `z_t − μ̂`; the former moves the matched
    /// cell away from the prompt.
    pub paper_literal: bool,
}

impl SynthOptions {
    pub fn new(method: SynthMethod) -> Self {
        SynthOptions {
            method,
            paper_literal: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesizedReference {
    /// `dz × N`, one unit column per entry of `cells`.
    pub columns: DMatrix<f64>,
    pub cells: Vec<GridIndex>,
    pub method: SynthMethod,
    pub matched_cell: GridIndex,
    /// Cosine matrix of `columns`.
    pub gram: DMatrix<f64>,
    /// Clipped eigenvalue mass when the coloration target had to be projected
    /// back to a correlation matrix.
    pub target_repair: Option<f64>,
}

/// Template matching: the available cell whose mean embedding has the highest
/// cosine with the prompt. Ties go to the lowest cell index.
pub fn estimate_pitch_velocity(prompt: &PromptEmbedding, templates: &MeanGrid) -> Result<(GridIndex, DVector<f64>)> {
    if templates.dz() != prompt.vector.len() {
        return Err(Error::Invalid(format!(
            "prompt dimension {} does not match templates {}",
            prompt.vector.len(),
            templates.dz()
        )));
    }
    let prompt_norm = prompt.vector.norm();
    let mut best: Option<(GridIndex, f64)> = None;
    for cell in templates.available_cells() {
        let t = templates.vectors.column(cell.value());
        let cos = prompt.vector.dot(&t) / (prompt_norm * t.norm());
        if best.is_none_or(|(_, b)| cos > b) {
            best = Some((cell, cos));
        }
    }
    let (cell, _) = best.ok_or_else(|| Error::Invalid("no available templates".into()))?;
    Ok((cell, templates.vectors.column(cell.value()).into_owned()))
}

/// Columns `M[:, cells] + (z_t − μ̂)` before renormalization (or `+ (μ̂ − z_t)`
/// when `paper_literal`).
pub fn translate_templates(
    prompt: &PromptEmbedding,
    templates: &MeanGrid,
    cells: &[GridIndex],
    matched_template: &DVector<f64>,
    paper_literal: bool,
) -> DMatrix<f64> {
    let offset = if paper_literal {
        matched_template - &prompt.vector
    } else {
        &prompt.vector - matched_template
    };
    let mut out = DMatrix::zeros(templates.dz(), cells.len());
    for (j, cell) in cells.iter().enumerate() {
        let mut col = out.column_mut(j);
        col.copy_from(&templates.vectors.column(cell.value()));
        col += &offset;
    }
    out
}

/// `cos(z_i, z_j)` for every column pair. Each entry is an explicit dot
/// product divided by `sqrt(|z_i|²·|z_j|²)`, so bit-identical columns give
/// exactly 1.
fn cosine_matrix(z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = z.ncols();
    let sq: Vec<f64> = z.column_iter().map(|c| c.dot(&c)).collect();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = z.column(i).dot(&z.column(j)) / (sq[i] * sq[j]).sqrt();
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Builds a reference ensemble on `cells` (all available template cells when `None`).
pub fn synth_reference(
    prompt: &PromptEmbedding,
    templates: &MeanGrid,
    ground: &CosineGrid,
    cells: Option<&[GridIndex]>,
    options: SynthOptions,
) -> Result<SynthesizedReference> {
    let (matched_cell, matched_template) = estimate_pitch_velocity(prompt, templates)?;
    let cells: Vec<GridIndex> = match cells {
        Some(c) => c.to_vec(),
        None => templates.available_cells().collect(),
    };
    if cells.is_empty() {
        return Err(Error::Invalid("no cells to synthesize".into()));
    }
    if cells.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("cells must be strictly increasing".into()));
    }

    let mut target_repair = None;
    let columns = match options.method {
        SynthMethod::Naive => {
            let mut z = DMatrix::zeros(prompt.vector.len(), cells.len());
            for mut col in z.column_iter_mut() {
                col.copy_from(&prompt.vector);
            }
            z
        }
        SynthMethod::Translation | SynthMethod::Coloration => {
            if let Some(c) = cells.iter().find(|c| !templates.available[c.value()]) {
                return Err(Error::Invalid(format!("no template for cell {c}")));
            }
            let mut z = translate_templates(prompt, templates, &cells, &matched_template, options.paper_literal);
            for (j, mut col) in z.column_iter_mut().enumerate() {
                let norm = col.norm();
                if norm == 0.0 {
                    return Err(Error::Invalid(format!(
                        "translated column at cell {} has zero norm",
                        cells[j]
                    )));
                }
                col.unscale_mut(norm);
            }
            if options.method == SynthMethod::Coloration {
                if let Some(c) = cells.iter().find(|&&c| !ground.present(c)) {
                    return Err(Error::Invalid(format!("cell {c} absent from ground statistics")));
                }
                let mut target = ground.restrict(&cells);
                if let Some((fixed, clipped)) = repair_correlation(&sym_eigen(&target)?) {
                    target = fixed;
                    target_repair = Some(clipped);
                }
                z = color_to_target(&z, &target)?;
            }
            z
        }
    };

    let gram = cosine_matrix(&columns);
    Ok(SynthesizedReference {
        columns,
        cells,
        method: options.method,
        matched_cell,
        gram,
        target_repair,
    })
}

/// Per-instrument average CLAP score of one generated instrument against a
/// reference synthesized from `prompt` on the instrument's own cells.
pub fn t2i_score(
    prompt: &PromptEmbedding,
    generated: &EmbeddingSet,
    templates: &MeanGrid,
    ground: &CosineGrid,
    options: SynthOptions,
) -> Result<MetricReport> {
    if generated.dz() != prompt.vector.len() {
        return Err(Error::Invalid(format!(
            "generated dimension {} does not match prompt {}",
            generated.dz(),
            prompt.vector.len()
        )));
    }
    let views = generated.instrument_views()?;
    if views.len() != 1 {
        return Err(Error::Invalid(format!(
            "expected exactly one generated instrument, found {}",
            views.len()
        )));
    }
    let view = &views[0];
    if let Some(c) = view.present.iter().find(|c| !templates.available[c.value()]) {
        return Err(Error::Invalid(format!(
            "generated cell {c} has no template in the ground statistics"
        )));
    }
    let reference = synth_reference(prompt, templates, ground, Some(&view.present), options)?;
    let value = clap_score_views(&reference.columns, &view.columns);

    let mut report = MetricReport::new("t2i_clap_score_star", value);
    report.set("method", options.method);
    report.set("paper_literal", options.paper_literal);
    report.set("prompt", prompt.label());
    report.set("instrument", &view.instrument_id);
    report.set("cells", view.len());
    report.set(
        "matched_cell",
        serde_json::json!({
            "index": reference.matched_cell.value(),
            "pitch": reference.matched_cell.pitch(),
            "velocity": reference.matched_cell.velocity(),
        }),
    );
    if let Some(clipped) = reference.target_repair {
        report.set("target_repair_clipped_mass", clipped);
        report.warn("ground grid restriction was indefinite; projected to the nearest correlation matrix");
    }
    Ok(report.with_per_instrument([(view.instrument_id.clone(), value)].into_iter().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::GRID_SIZE;

    fn basis_templates(dz: usize) -> MeanGrid {
        let mut m = MeanGrid::empty(dz);
        for i in 0..GRID_SIZE {
            m.vectors[(i, i)] = 1.0;
            m.available[i] = true;
            m.count[i] = 1;
        }
        m
    }

    fn prompt(v: Vec<f64>) -> PromptEmbedding {
        PromptEmbedding::new(DVector::from_vec(v), "p").unwrap()
    }

    #[test]
    fn template_match_examples() {
        let templates = basis_templates(512);
        let mut v = vec![0.0; 512];
        v[17] = 1.0;
        assert_eq!(estimate_pitch_velocity(&prompt(v), &templates).unwrap().0.value(), 17);

        let mut v = vec![0.0; 512];
        v[0] = std::f64::consts::FRAC_1_SQRT_2;
        v[1] = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(estimate_pitch_velocity(&prompt(v), &templates).unwrap().0.value(), 0);

        let mut v = vec![0.0; 512];
        v[5] = 1.0;
        let cell = estimate_pitch_velocity(&prompt(v), &templates).unwrap().0;
        assert_eq!((cell.pitch(), cell.velocity()), (22, 25));

        let empty = MeanGrid::empty(512);
        let mut v = vec![0.0; 512];
        v[0] = 1.0;
        assert!(estimate_pitch_velocity(&prompt(v), &empty).is_err());
    }

    #[test]
    fn prompt_must_be_unit_norm() {
        assert!(PromptEmbedding::new(DVector::from_vec(vec![2.0, 0.0]), "x").is_err());
    }

    #[test]
    fn naive_gram_is_all_ones() {
        let templates = basis_templates(512);
        let mut v = vec![0.3; 512];
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        let cells: Vec<GridIndex> = (0..4).map(|i| GridIndex::new(i).unwrap()).collect();
        let r = synth_reference(
            &prompt(v),
            &templates,
            &CosineGrid::empty(),
            Some(&cells),
            SynthOptions::new(SynthMethod::Naive),
        )
        .unwrap();
        assert_eq!(r.gram, DMatrix::from_element(4, 4, 1.0));
    }

    #[test]
    fn translation_with_prompt_on_template_is_identity() {
        let templates = basis_templates(512);
        let mut v = vec![0.0; 512];
        v[9] = 1.0;
        let r = synth_reference(
            &prompt(v),
            &templates,
            &CosineGrid::empty(),
            None,
            SynthOptions::new(SynthMethod::Translation),
        )
        .unwrap();
        assert_eq!(r.columns.ncols(), GRID_SIZE);
        assert_eq!(r.columns, templates.vectors);
    }
}
