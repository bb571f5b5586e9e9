use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use attseg::aligner::AttentionMatrix;
use attseg::baselines::{dpseg_segment, proportional_segment, DpsegConfig, DpsegModel};
use attseg::corpus::{gold_lines, parse_parallel, attach_gold, ParallelUtterance, Segmentation, Segmentations};
use attseg::metrics::{boundary_prf as prf, evaluate as eval_report};
use attseg::pipeline::{run_pipeline as run, PipelineConfig};
use attseg::segmenter::{alignment_to_segmentation, hard_align as argmax_align, smooth_matrix as smooth};
use attseg::synth::{synth_corpus as synth, SynthConfig};
use attseg::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Numerical(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<AttentionMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("ragged attention matrix"));
    }
    AttentionMatrix::new("m", r, c, rows.concat(), false).map_err(py_err)
}

fn placeholder_corpus(ul: &[String]) -> PyResult<attseg::corpus::ParallelCorpus> {
    parse_parallel(ul, &vec!["-".to_string(); ul.len()]).map_err(py_err)
}

fn segmentations(lines: &[String], corpus: &attseg::corpus::ParallelCorpus) -> PyResult<Segmentations> {
    attach_gold(corpus.clone(), lines, None).and_then(|c| c.gold()).map_err(py_err)
}

/// Synthetic corpus as (ul_lines, wrl_lines, gold_lines).
#[pyfunction]
#[pyo3(signature = (sentences=500, lexicon_size=20, seed=1, substitution=0.0))]
fn synth_corpus(sentences: usize, lexicon_size: usize, seed: u64, substitution: f64) -> PyResult<(Vec<String>, Vec<String>, Vec<String>)> {
    let cfg = SynthConfig {
        sentences,
        lexicon_size,
        seed,
        substitution,
        ..Default::default()
    };
    let c = synth(&cfg).map_err(py_err)?;
    Ok((c.ul_lines(), c.wrl_lines(), gold_lines(&c).map_err(py_err)?))
}

#[pyfunction]
fn smooth_matrix(rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let m = smooth(&matrix(rows)?);
    Ok((0..m.rows()).map(|t| m.row(t).to_vec()).collect())
}

#[pyfunction]
fn hard_align(rows: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
    Ok(argmax_align(&matrix(rows)?))
}

#[pyfunction]
fn alignment_boundaries(alignment: Vec<usize>) -> Vec<usize> {
    alignment_to_segmentation(&alignment).boundaries().to_vec()
}

#[pyfunction]
fn proportional_boundaries(ul_symbols: Vec<String>, wrl_words: Vec<String>) -> PyResult<Vec<usize>> {
    let u = ParallelUtterance::new("u", ul_symbols, wrl_words).map_err(py_err)?;
    Ok(proportional_segment(&u).boundaries().to_vec())
}

/// Micro-averaged boundary (P, R, F) over `(length, boundaries)` pairs.
#[pyfunction]
fn boundary_prf(hyp: Vec<(usize, Vec<usize>)>, gold: Vec<(usize, Vec<usize>)>) -> PyResult<(f64, f64, f64)> {
    if hyp.len() != gold.len() {
        return Err(PyValueError::new_err("hyp and gold differ in utterance count"));
    }
    let to_map = |v: Vec<(usize, Vec<usize>)>| -> PyResult<Segmentations> {
        v.into_iter()
            .enumerate()
            .map(|(i, (n, b))| Ok((format!("{i:08}"), Segmentation::new(n, b).map_err(py_err)?)))
            .collect()
    };
    let p = prf(&to_map(hyp)?, &to_map(gold)?).map_err(py_err)?;
    Ok((p.precision, p.recall, p.f_score))
}

/// Evaluation report for segmented lines (gold format) as a dict.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, ul: Vec<String>, hyp: Vec<String>, gold: Vec<String>) -> PyResult<Bound<'py, PyDict>> {
    let corpus = placeholder_corpus(&ul)?;
    let g = segmentations(&gold, &corpus)?;
    let h = segmentations(&hyp, &corpus)?;
    let r = eval_report(&h, &g, &corpus.symbols_map()).map_err(py_err)?;
    let d = PyDict::new(py);
    for (level, p) in [("boundary", r.boundary), ("token", r.token), ("type", r.types)] {
        d.set_item(format!("{level}_precision"), p.precision)?;
        d.set_item(format!("{level}_recall"), p.recall)?;
        d.set_item(format!("{level}_f"), p.f_score)?;
    }
    d.set_item("boundary_precision_undefined", r.boundary_precision_undefined)?;
    d.set_item("type_retrieval", r.type_retrieval)?;
    d.set_item("hypothesis_types", r.hypothesis_types)?;
    d.set_item("gold_types", r.gold_types)?;
    Ok(d)
}

/// Boundaries per UL line from the monolingual sampler.
#[pyfunction]
#[pyo3(signature = (ul, iterations=1000, seed=1, bigram=true))]
fn dpseg(ul: Vec<String>, iterations: usize, seed: u64, bigram: bool) -> PyResult<Vec<Vec<usize>>> {
    let corpus = placeholder_corpus(&ul)?;
    let cfg = DpsegConfig {
        iterations,
        seed,
        model: if bigram { DpsegModel::Bigram } else { DpsegModel::Unigram },
        ..Default::default()
    };
    let segs = dpseg_segment(&corpus, &cfg).map_err(py_err)?;
    Ok(corpus.utterances.iter().map(|u| segs[&u.id].boundaries().to_vec()).collect())
}

/// Runs a pipeline config file; returns boundary F per system.
#[pyfunction]
#[pyo3(signature = (config, overrides=Vec::new()))]
fn run_pipeline(py: Python<'_>, config: String, overrides: Vec<(String, String)>) -> PyResult<Vec<(String, f64)>> {
    let cfg = PipelineConfig::load(config, &overrides).map_err(py_err)?;
    let summary = py.detach(|| run(&cfg, |_| {})).map_err(py_err)?;
    Ok(summary.reports.iter().map(|(k, r)| (k.clone(), r.boundary.f_score)).collect())
}

#[pymodule]
fn attseg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(synth_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(smooth_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(hard_align, m)?)?;
    m.add_function(wrap_pyfunction!(alignment_boundaries, m)?)?;
    m.add_function(wrap_pyfunction!(proportional_boundaries, m)?)?;
    m.add_function(wrap_pyfunction!(boundary_prf, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(dpseg, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
