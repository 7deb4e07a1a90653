//! Pretrained word vectors: loading, cosine similarity, PCA-based
//! dimensionality halving and model embedding-matrix construction.
//!
//! The compression pipeline follows the established recipe for halving
//! embedding dimensions: post-process (subtract the mean, remove projections
//! onto the dominant principal components), project onto the top principal
//! directions, then post-process again in the reduced space. Both
//! post-processing stages remove `ceil(dim / 100)` components by default.
//!
//! The projection step itself diagonalizes the second-moment matrix about
//! the origin (mean subtraction belongs to the post-processing stage), so
//! with post-processing disabled the step is a pure rotation: it preserves
//! pairwise distances at full rank and cosine similarities on data confined
//! to a subspace the projection covers.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::eigen::sym_eig;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{matmul_raw, Tensor};
use crate::vocab::{Vocabulary, PAD_ID};

/// A vocabulary-aligned table of word vectors (`n_words x dim` floats).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    words: Vec<String>,
    /// Row-major `n_words x dim`.
    matrix: Vec<f64>,
    dim: usize,
    /// Unparseable lines skipped while loading (duplicates included).
    pub skipped_lines: usize,
}

impl EmbeddingTable {
    pub fn new(words: Vec<String>, matrix: Vec<f64>, dim: usize) -> Result<Self> {
        if words.len() * dim != matrix.len() {
            return Err(Error::dimension(format!(
                "embedding table size mismatch: {} words x {} dims != {} floats",
                words.len(),
                dim,
                matrix.len()
            )));
        }
        Ok(EmbeddingTable { words, matrix, dim, skipped_lines: 0 })
    }

    pub fn n_words(&self) -> usize {
        self.words.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    /// Total stored float count, `n_words * dim`.
    pub fn stored_floats(&self) -> usize {
        self.matrix.len()
    }

    pub fn vector_of(&self, word: &str) -> Option<&[f64]> {
        self.words.iter().position(|w| w == word).map(|i| self.row(i))
    }
}

/// Parses the textual `.vec` format: a header line `N D`, then one line
/// `token f1 .. fD` per word. Duplicate tokens keep their first occurrence;
/// empty or float-unparseable lines are skipped and counted. A line with the
/// wrong number of fields for the declared dimension is a format error.
pub fn load_vec(path: &Path) -> Result<EmbeddingTable> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Encoding {
        path: path.to_path_buf(),
        offset: e.utf8_error().valid_up_to(),
    })?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::format(format!("{path:?} is empty; expected an \"N D\" header")))?;
    let mut parts = header.split_whitespace();
    let declared: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format(format!("invalid .vec header {header:?} in {path:?}")))?;
    let dim: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format(format!("invalid .vec header {header:?} in {path:?}")))?;
    if parts.next().is_some() || dim == 0 {
        return Err(Error::format(format!("invalid .vec header {header:?} in {path:?}")));
    }

    let mut words = Vec::new();
    let mut seen: HashMap<String, ()> = HashMap::new();
    let mut matrix = Vec::new();
    let mut skipped = 0usize;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            skipped += 1;
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != dim + 1 {
            return Err(Error::format_at(
                format!(
                    "expected 1 token + {dim} floats but found {} fields in {path:?}",
                    fields.len()
                ),
                idx + 1,
            ));
        }
        let mut values = Vec::with_capacity(dim);
        let mut ok = true;
        for f in &fields[1..] {
            match f.parse::<f64>() {
                Ok(v) => values.push(v),
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            skipped += 1;
            continue;
        }
        let token = fields[0].to_string();
        if seen.insert(token.clone(), ()).is_some() {
            skipped += 1;
            continue;
        }
        words.push(token);
        matrix.extend_from_slice(&values);
    }
    if words.len() != declared && skipped == 0 {
        return Err(Error::format(format!(
            "{path:?} declares {declared} words but contains {}",
            words.len()
        )));
    }
    let mut table = EmbeddingTable::new(words, matrix, dim)?;
    table.skipped_lines = skipped;
    Ok(table)
}

/// Writes the textual `.vec` format with 6-significant-digit floats.
pub fn save_vec(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{} {}", table.n_words(), table.dim())?;
    for (i, word) in table.words().iter().enumerate() {
        write!(out, "{word}")?;
        for v in table.row(i) {
            write!(out, " {v:.5e}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Cosine of the angle between two equal-length vectors.
pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dimension(format!(
            "cosine similarity needs equal dimensions, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::numeric(
            "cosine similarity is undefined for a zero vector".to_string(),
        ));
    }
    Ok(dot / (nx * ny))
}

/// Options for [`compress_with`].
#[derive(Debug, Clone, Copy)]
pub struct CompressOptions {
    /// Run the mean-subtraction + dominant-component-removal stage before
    /// and after the projection.
    pub postprocess: bool,
    /// Components removed per post-processing stage; `None` means
    /// `ceil(dim / 100)` of the stage's current dimension.
    pub components: Option<usize>,
}

impl Default for CompressOptions {
    fn default() -> Self {
        CompressOptions { postprocess: true, components: None }
    }
}

/// Full compression pipeline with default options (post-processing on).
pub fn compress(table: &EmbeddingTable, target_dim: usize) -> Result<EmbeddingTable> {
    compress_with(table, target_dim, CompressOptions::default())
}

pub fn compress_with(
    table: &EmbeddingTable,
    target_dim: usize,
    opts: CompressOptions,
) -> Result<EmbeddingTable> {
    if target_dim < 1 || target_dim > table.dim() {
        return Err(Error::contract(format!(
            "target dimension {target_dim} out of range for a {}-dim table",
            table.dim()
        )));
    }
    let n = table.n_words();
    let mut data = table.matrix.clone();

    if opts.postprocess {
        let k = opts.components.unwrap_or_else(|| table.dim().div_ceil(100));
        postprocess(&mut data, n, table.dim(), k)?;
    }

    // Projection onto the top principal directions of the second moment.
    let basis = principal_basis(&data, n, table.dim())?;
    let projected = project_columns(&data, n, table.dim(), &basis, target_dim);
    let mut data = projected;

    if opts.postprocess {
        let k = opts.components.unwrap_or_else(|| target_dim.div_ceil(100));
        postprocess(&mut data, n, target_dim, k)?;
    }

    EmbeddingTable::new(table.words.clone(), data, target_dim)
}

/// Column-orthonormal eigenbasis of `X^T X / n`, eigenvalues descending.
fn principal_basis(data: &[f64], n: usize, dim: usize) -> Result<Tensor> {
    let mut moment = vec![0.0; dim * dim];
    for row in 0..n {
        let r = &data[row * dim..(row + 1) * dim];
        for i in 0..dim {
            let ri = r[i];
            if ri == 0.0 {
                continue;
            }
            for j in i..dim {
                moment[i * dim + j] += ri * r[j];
            }
        }
    }
    let scale = 1.0 / n.max(1) as f64;
    for i in 0..dim {
        for j in i..dim {
            let v = moment[i * dim + j] * scale;
            moment[i * dim + j] = v;
            moment[j * dim + i] = v;
        }
    }
    Ok(sym_eig(&Tensor::from_vec(vec![dim, dim], moment)?)?.vectors)
}

/// `X * V[:, ..k]` for a column-orthonormal basis `V`.
fn project_columns(data: &[f64], n: usize, dim: usize, basis: &Tensor, k: usize) -> Vec<f64> {
    // Narrow the basis to its first k columns, then one matmul.
    let mut narrowed = vec![0.0; dim * k];
    for i in 0..dim {
        for j in 0..k {
            narrowed[i * k + j] = basis.at(i, j);
        }
    }
    matmul_raw(data, &narrowed, n, dim, k)
}

/// Mean subtraction followed by removal of the projections onto the top `k`
/// principal components (computed after centering). `k = 0` only centers.
fn postprocess(data: &mut [f64], n: usize, dim: usize, k: usize) -> Result<()> {
    let mut mean = vec![0.0; dim];
    for row in 0..n {
        for (m, &v) in mean.iter_mut().zip(&data[row * dim..(row + 1) * dim]) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n.max(1) as f64;
    }
    for row in 0..n {
        for (v, &m) in data[row * dim..(row + 1) * dim].iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let k = k.min(dim);
    if k == 0 {
        return Ok(());
    }
    let basis = principal_basis(data, n, dim)?;
    // X -= (X v_j) v_j^T for each dominant direction j.
    for row in 0..n {
        let r = &mut data[row * dim..(row + 1) * dim];
        for j in 0..k {
            let mut proj = 0.0;
            for i in 0..dim {
                proj += r[i] * basis.at(i, j);
            }
            for i in 0..dim {
                r[i] -= proj * basis.at(i, j);
            }
        }
    }
    Ok(())
}

/// Builds the model's `|V| x dim` embedding matrix: rows for vocabulary
/// tokens found in the table are copied verbatim, missing tokens (specials
/// and routing tokens included) are drawn uniform(-0.1, 0.1) from the seed,
/// and the `<pad>` row is all zeros.
pub fn build_matrix(
    vocab: &Vocabulary,
    table: &EmbeddingTable,
    dim: usize,
    seed: u64,
) -> Result<Tensor> {
    if dim != table.dim() {
        return Err(Error::contract(format!(
            "requested dimension {dim} does not match the {}-dim table",
            table.dim()
        )));
    }
    let index: HashMap<&str, usize> =
        table.words().iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let mut rng = SeededRng::new(seed);
    let mut data = vec![0.0; vocab.len() * dim];
    for id in 0..vocab.len() {
        if id == PAD_ID {
            continue;
        }
        let row = &mut data[id * dim..(id + 1) * dim];
        match index.get(vocab.token(id)) {
            Some(&i) => row.copy_from_slice(table.row(i)),
            None => {
                for v in row.iter_mut() {
                    *v = rng.uniform(-0.1, 0.1);
                }
            }
        }
    }
    Tensor::from_vec(vec![vocab.len(), dim], data)
}
