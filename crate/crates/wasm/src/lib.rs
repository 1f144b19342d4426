//! Browser bindings for the demo page. Every export takes plain values or a
//! JSON string and returns a JSON string; errors are thrown as strings.

use jupad::atoms::{build_dictionary_grid_preset, discretize, AtomSpec, Dictionary, FamilyParam, Grid, GridPreset};
use jupad::io::model_file::{model_from_str, model_to_string, Provenance, SavedModel};
use jupad::synth::{d_metric, generate_ground_truth, FamilyRecipe, SynthSpec};
use jupad::{fit, Dataset, FitConfig, JointModel};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeRequest {
    pub low: f64,
    pub high: f64,
    pub spacing: f64,
    pub family: FamilyParam,
    #[serde(default)]
    pub uniforms: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionaryRequest {
    /// Either an explicit atom list or a lattice.
    #[serde(default)]
    pub atoms: Option<Vec<AtomSpec>>,
    #[serde(default)]
    pub lattice: Option<LatticeRequest>,
    pub bins: usize,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    200
}

#[derive(Debug, Serialize)]
pub struct Curve {
    pub label: String,
    pub pdf: Vec<f64>,
    /// Interval masses on the grid after renormalization.
    pub masses: Vec<f64>,
    pub coverage: f64,
}

#[derive(Debug, Serialize)]
pub struct DictionaryView {
    pub x: Vec<f64>,
    pub edges: Vec<f64>,
    pub curves: Vec<Curve>,
}

/// Atom densities and their discretization on an equal-width grid spanning
/// the dictionary's bulk.
pub fn dictionary_view(request: &DictionaryRequest) -> Result<DictionaryView, String> {
    let dict = match (&request.atoms, &request.lattice) {
        (Some(atoms), None) => Dictionary::from_atoms(atoms.clone(), 0.999),
        (None, Some(l)) => build_dictionary_grid_preset(&GridPreset {
            low: l.low,
            high: l.high,
            spacing: l.spacing,
            families: vec![l.family],
            uniforms: l.uniforms,
        }),
        _ => return Err("give exactly one of `atoms` or `lattice`".into()),
    }
    .map_err(|e| e.to_string())?;
    if dict.len() > 500 || request.points > 5000 || request.points < 2 {
        return Err("request too large".into());
    }
    let (lo, hi) = dict.support_hull(0.999);
    let grid = Grid::uniform(lo, hi, request.bins).map_err(|e| e.to_string())?;
    let disc = discretize(&dict, &grid, 0.0).map_err(|e| e.to_string())?;
    let x: Vec<f64> = (0..request.points)
        .map(|i| lo + (hi - lo) * i as f64 / (request.points - 1) as f64)
        .collect();
    let values: Vec<Vec<f64>> = x.iter().map(|&v| dict.evaluate(v)).collect();
    let curves = dict
        .atoms()
        .iter()
        .enumerate()
        .map(|(l, atom)| Curve {
            label: atom.to_string(),
            pdf: values.iter().map(|v| v[l]).collect(),
            masses: disc.matrix().column(l).iter().copied().collect(),
            coverage: disc.coverage()[l],
        })
        .collect();
    Ok(DictionaryView {
        x,
        edges: grid.edges().to_vec(),
        curves,
    })
}

#[derive(Debug, Serialize)]
pub struct Heatmap {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Row-major, `y` along rows.
    pub values: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct FitView {
    pub d_metric: f64,
    pub final_objective: f64,
    pub trace: Vec<f64>,
    pub truth: Heatmap,
    pub fitted: Heatmap,
    /// Model file of the fitted model, for sampling.
    pub model: String,
}

/// Density of the marginal of dimensions 0 and 1 on a lattice.
fn marginal01(model: &JointModel, x: &[f64], y: &[f64]) -> Vec<f64> {
    let f0 = &model.factors()[0];
    let f1 = &model.factors()[1];
    let cx: Vec<_> = x.iter().map(|&v| f0.component_values(v)).collect();
    let cy: Vec<_> = y.iter().map(|&v| f1.component_values(v)).collect();
    let mut out = Vec::with_capacity(x.len() * y.len());
    for b in &cy {
        for a in &cx {
            out.push(model.mixture().iter().zip(a.iter().zip(b.iter())).map(|(l, (p, q))| l * p * q).sum());
        }
    }
    out
}

fn lattice(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64).collect()
}

/// Draws a three-dimensional Gaussian-mixture truth, samples it, fits with
/// the true atoms and compares the two (x0, x1) marginals.
pub fn fit_view(seed: u64, samples: usize, rank: usize, bins: usize) -> Result<FitView, String> {
    if !(100..=200_000).contains(&samples) || !(1..=6).contains(&rank) || !(4..=48).contains(&bins) {
        return Err("samples must be in [100, 200000], rank in [1, 6], bins in [4, 48]".into());
    }
    let mut spec = SynthSpec::new(vec![FamilyRecipe::GaussianMix; 3], rank, seed);
    spec.atoms_per_component = 3;
    let truth = generate_ground_truth(&spec).map_err(|e| e.to_string())?;
    let data = truth.sample(samples, seed ^ 0x5eed).map_err(|e| e.to_string())?;
    let dataset = Dataset::continuous(data).map_err(|e| e.to_string())?;
    let dictionaries: Vec<Dictionary> = truth.factors().iter().map(|f| f.dictionary().clone()).collect();
    let mut config = FitConfig::with_rank(rank);
    config.bins = bins;
    config.seed = seed;
    let outcome = fit(&dataset, &dictionaries, &config).map_err(|e| e.to_string())?;
    let test = truth.sample(500, seed ^ 0x7e57).map_err(|e| e.to_string())?;
    let d = d_metric(&outcome.model, &truth, &test).map_err(|e| e.to_string())?;

    let col = |n: usize| {
        let c = dataset.data().column(n);
        (c.min(), c.max())
    };
    let ((x0, x1), (y0, y1)) = (col(0), col(1));
    let x = lattice(x0, x1, 60);
    let y = lattice(y0, y1, 60);
    let saved = SavedModel {
        columns: dataset.columns().to_vec(),
        label: None,
        provenance: Provenance::new(Some(seed), None),
        model: outcome.model,
    };
    Ok(FitView {
        d_metric: d.value,
        final_objective: outcome.report.final_objective,
        trace: outcome.trace.iter().map(|t| t.objective).collect(),
        truth: Heatmap {
            values: marginal01(&truth, &x, &y),
            x: x.clone(),
            y: y.clone(),
        },
        fitted: Heatmap {
            values: marginal01(&saved.model, &x, &y),
            x,
            y,
        },
        model: model_to_string(&saved).map_err(|e| e.to_string())?,
    })
}

#[derive(Debug, Serialize)]
pub struct SampleView {
    pub columns: Vec<String>,
    pub points: Vec<Vec<f64>>,
}

pub fn sample_view(model_json: &str, count: usize, seed: u64) -> Result<SampleView, String> {
    if count == 0 || count > 100_000 {
        return Err("count must be in [1, 100000]".into());
    }
    let saved = model_from_str(model_json).map_err(|e| e.to_string())?;
    let m = saved.model.sample(count, seed).map_err(|e| e.to_string())?;
    Ok(SampleView {
        columns: saved.columns.iter().map(|c| c.name.clone()).collect(),
        points: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

/// JSON `DictionaryRequest` in, JSON `DictionaryView` out.
#[wasm_bindgen(js_name = exploreDictionary)]
pub fn explore_dictionary(request: &str) -> Result<String, JsValue> {
    let req: DictionaryRequest = serde_json::from_str(request).map_err(|e| JsValue::from_str(&e.to_string()))?;
    to_js(dictionary_view(&req))
}

#[wasm_bindgen(js_name = fitDemo)]
pub fn fit_demo(seed: u32, samples: u32, rank: u32, bins: u32) -> Result<String, JsValue> {
    to_js(fit_view(seed as u64, samples as usize, rank as usize, bins as usize))
}

#[wasm_bindgen(js_name = sampleModel)]
pub fn sample_model(model_json: &str, count: u32, seed: u32) -> Result<String, JsValue> {
    to_js(sample_view(model_json, count as usize, seed as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_view_has_one_curve_per_atom() {
        let req: DictionaryRequest = serde_json::from_str(
            r#"{"lattice": {"low": 0, "high": 4, "spacing": 1,
                "family": {"family": "laplacian", "scale": 0.5}, "uniforms": 1},
               "bins": 12, "points": 50}"#,
        )
        .unwrap();
        let view = dictionary_view(&req).unwrap();
        assert_eq!(view.curves.len(), 6);
        assert_eq!(view.edges.len(), 13);
        for c in &view.curves {
            assert_eq!(c.pdf.len(), 50);
            assert!((c.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_then_sample() {
        let view = fit_view(3, 5000, 2, 12).unwrap();
        assert!(view.d_metric.is_finite());
        assert_eq!(view.truth.values.len(), 3600);
        let samples = sample_view(&view.model, 10, 1).unwrap();
        assert_eq!(samples.points.len(), 10);
        assert_eq!(samples.points[0].len(), 3);
    }

    #[test]
    fn bad_requests_rejected() {
        assert!(fit_view(0, 10, 2, 12).is_err());
        assert!(sample_view("{}", 5, 0).is_err());
        let req: DictionaryRequest = serde_json::from_str(r#"{"bins": 8}"#).unwrap();
        assert!(dictionary_view(&req).is_err());
    }
}
