//! Positional encodings: classic sinusoidal PE and the structural variant
//! that projects spectral ontology-node embeddings into the model dimension.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::Vocabulary;
use crate::neural;
use crate::ontology::{embedding_for_token, NodeEmbeddingTable};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PeMode {
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(rename = "sin")]
    Sinusoidal,
    #[serde(rename = "spe")]
    Structural,
}

impl PeMode {
    pub fn parse(s: &str) -> Result<PeMode> {
        match s {
            "none" => Ok(PeMode::None),
            "sin" => Ok(PeMode::Sinusoidal),
            "spe" => Ok(PeMode::Structural),
            other => Err(Error::Param(format!(
                "unknown pe mode '{other}' (expected none|sin|spe)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PeMode::None => "none",
            PeMode::Sinusoidal => "sin",
            PeMode::Structural => "spe",
        }
    }
}

/// Positional-encoding selection. `spe_k` is the spectral input dimension
/// and only matters in structural mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeConfig {
    pub mode: PeMode,
    pub spe_k: usize,
}

impl Default for PeConfig {
    fn default() -> Self {
        PeConfig {
            mode: PeMode::None,
            spe_k: 32,
        }
    }
}

/// Fixed sine/cosine table: `PE[pos, 2i] = sin(pos / 10000^{2i/d})`,
/// `PE[pos, 2i+1] = cos(pos / 10000^{2i/d})`. Requires even `d`.
pub fn sinusoidal_pe<T: Scalar>(n: usize, d: usize) -> Result<Tensor<T>> {
    if !d.is_multiple_of(2) {
        return Err(Error::Param(format!("sinusoidal PE needs even d, got {d}")));
    }
    let mut out = Tensor::zeros(&[n, d]);
    for pos in 0..n {
        let row = out.row_mut(pos);
        for i in 0..d / 2 {
            let rate = 1.0 / 10000f64.powf(2.0 * i as f64 / d as f64);
            let angle = pos as f64 * rate;
            row[2 * i] = T::from_f64(angle.sin());
            row[2 * i + 1] = T::from_f64(angle.cos());
        }
    }
    Ok(out)
}

/// Resolve a vocabulary into the per-token spectral input matrix [V×k]:
/// activity tokens take their ontology node's vector, everything else zero.
///
/// Rows are rescaled by one global constant so the mean non-zero row norm
/// becomes one. Eigenvector components shrink as 1/√n with graph size,
/// which would leave the structural signal an order of magnitude below the
/// token embeddings; the constant is absorbable into Θ and keeps the signal
/// usable from the first optimizer step.
pub fn resolve_spe_inputs<T: Scalar>(table: &NodeEmbeddingTable, vocab: &Vocabulary) -> Tensor<T> {
    let v = vocab.size();
    let k = table.k;
    let mut rows: Vec<Vec<f64>> = (0..v)
        .map(|id| embedding_for_token(table, vocab, id))
        .collect();

    let norms: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
        .filter(|&n| n > 0.0)
        .collect();
    if !norms.is_empty() {
        let mean_norm = norms.iter().sum::<f64>() / norms.len() as f64;
        let scale = 1.0 / mean_norm;
        for row in &mut rows {
            row.iter_mut().for_each(|x| *x *= scale);
        }
    }

    let mut out = Tensor::zeros(&[v, k]);
    for (id, row) in rows.iter().enumerate() {
        for (slot, value) in out.row_mut(id).iter_mut().zip(row) {
            *slot = T::from_f64(*value);
        }
    }
    out
}

/// Structural PE rows: `spe_inputs[ids[i]] · theta_w + theta_b`. Depends on
/// token identity only, never on sequence position. Returns the gathered
/// [n×k] rows as backward cache (only Θ is trainable; the table is frozen).
pub fn structural_pe<T: Scalar>(
    ids: &[usize],
    spe_inputs: &Tensor<T>,
    theta_w: &Tensor<T>,
    theta_b: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let gathered = neural::embedding_lookup(spe_inputs, ids)?;
    let out = neural::linear(&gathered, theta_w, theta_b)?;
    Ok((out, gathered))
}

/// Gradients of `structural_pe` for Θ. The spectral inputs are frozen, so no
/// gradient flows back into the table.
pub fn structural_pe_backward<T: Scalar>(
    gathered: &Tensor<T>,
    theta_w: &Tensor<T>,
    upstream: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let (_, dw, db) = neural::linear_backward(gathered, theta_w, upstream);
    (dw, db)
}

/// Borrowed structural-PE pieces for `apply_pe`.
pub struct StructuralContext<'a, T> {
    pub spe_inputs: &'a Tensor<T>,
    pub theta_w: &'a Tensor<T>,
    pub theta_b: &'a Tensor<T>,
}

/// Add the selected encoding to the embedded sequence.
pub fn apply_pe<T: Scalar>(
    x: &Tensor<T>,
    mode: PeMode,
    ids: &[usize],
    structural: Option<StructuralContext<'_, T>>,
) -> Result<Tensor<T>> {
    let (n, d) = (x.rows(), x.cols());
    match mode {
        PeMode::None => Ok(x.clone()),
        PeMode::Sinusoidal => {
            let pe = sinusoidal_pe::<T>(n, d)?;
            let mut out = x.clone();
            out.add_assign(&pe);
            Ok(out)
        }
        PeMode::Structural => {
            let ctx = structural.ok_or_else(|| {
                Error::Param("structural PE requires an ontology embedding table".into())
            })?;
            let (pe, _) = structural_pe(ids, ctx.spe_inputs, ctx.theta_w, ctx.theta_b)?;
            if pe.shape() != x.shape() {
                return Err(Error::Shape(format!(
                    "SPE rows {:?} vs embeddings {:?}",
                    pe.shape(),
                    x.shape()
                )));
            }
            let mut out = x.clone();
            out.add_assign(&pe);
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::{Trace, PAD};
    use crate::ontology::{
        build_laplacian, node_embeddings, NodeKind, OntologyGraph, OntologyNode,
    };
    use rand::Rng;

    #[test]
    fn sinusoidal_position_zero() {
        let pe = sinusoidal_pe::<f64>(3, 6).unwrap();
        for i in 0..3 {
            let expected = if i % 2 == 0 { 0.0 } else { 1.0 };
            assert_eq!(pe.at(0, 2 * (i / 2) + i % 2), expected);
        }
        assert_eq!(pe.row(0), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn sinusoidal_scalar_value() {
        let pe = sinusoidal_pe::<f64>(2, 4).unwrap();
        assert!((pe.at(1, 0) - 0.8414709848).abs() < 1e-9);
    }

    #[test]
    fn sinusoidal_range_and_determinism() {
        let a = sinusoidal_pe::<f64>(40, 16).unwrap();
        let b = sinusoidal_pe::<f64>(40, 16).unwrap();
        assert_eq!(a.values(), b.values());
        assert!(a.values().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn sinusoidal_rejects_odd_d() {
        assert!(matches!(sinusoidal_pe::<f64>(4, 5), Err(Error::Param(_))));
    }

    fn spe_fixture() -> (Tensor<f64>, Vocabulary) {
        let graph = OntologyGraph::new(
            vec![
                OntologyNode {
                    name: "t".into(),
                    kind: NodeKind::Type,
                },
                OntologyNode {
                    name: "a".into(),
                    kind: NodeKind::Activity,
                },
                OntologyNode {
                    name: "b".into(),
                    kind: NodeKind::Activity,
                },
            ],
            vec![("a".into(), "t".into()), ("b".into(), "t".into())],
        )
        .unwrap();
        let table = node_embeddings(&build_laplacian(&graph).unwrap(), &graph, 2).unwrap();
        let vocab = Vocabulary::build(&[Trace {
            case_id: "c".into(),
            activities: vec!["a".into(), "b".into()],
        }]);
        (resolve_spe_inputs(&table, &vocab), vocab)
    }

    #[test]
    fn structural_pad_rows_equal_bias() {
        let (inputs, _) = spe_fixture();
        let theta_w = Tensor::from_vec(&[2, 3], vec![0.5, -1.0, 2.0, 0.1, 0.2, 0.3]);
        let theta_b = Tensor::from_vec(&[3], vec![7.0, 8.0, 9.0]);
        let (out, _) = structural_pe(&[PAD, PAD, PAD], &inputs, &theta_w, &theta_b).unwrap();
        for i in 0..3 {
            assert_eq!(out.row(i), &[7.0, 8.0, 9.0]);
        }
    }

    #[test]
    fn structural_is_position_independent() {
        let (inputs, vocab) = spe_fixture();
        let a = vocab.id("a").unwrap();
        let b = vocab.id("b").unwrap();
        let theta_w = Tensor::from_vec(&[2, 2], vec![1.0, 0.5, -0.3, 0.9]);
        let theta_b = Tensor::from_vec(&[2], vec![0.1, -0.2]);
        let ids = [a, b, a, PAD, b, a];
        let (out, _) = structural_pe(&ids, &inputs, &theta_w, &theta_b).unwrap();
        assert_eq!(out.row(0), out.row(2));
        assert_eq!(out.row(0), out.row(5));
        assert_eq!(out.row(1), out.row(4));
    }

    #[test]
    fn structural_zero_theta_w_collapses_to_bias() {
        let (inputs, vocab) = spe_fixture();
        let theta_w = Tensor::<f64>::zeros(&[2, 2]);
        let theta_b = Tensor::from_vec(&[2], vec![4.0, -4.0]);
        let ids = [vocab.id("a").unwrap(), vocab.id("b").unwrap()];
        let (out, _) = structural_pe(&ids, &inputs, &theta_w, &theta_b).unwrap();
        for i in 0..2 {
            assert_eq!(out.row(i), &[4.0, -4.0]);
        }
    }

    #[test]
    fn structural_permutation_equivariance() {
        let (inputs, vocab) = spe_fixture();
        let a = vocab.id("a").unwrap();
        let b = vocab.id("b").unwrap();
        let theta_w = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let theta_b = Tensor::from_vec(&[2], vec![0.0, 0.5]);
        let ids = [a, b, b, a];
        let permuted = [b, a, a, b];
        let (out, _) = structural_pe(&ids, &inputs, &theta_w, &theta_b).unwrap();
        let (out_p, _) = structural_pe(&permuted, &inputs, &theta_w, &theta_b).unwrap();
        assert_eq!(out.row(0), out_p.row(1));
        assert_eq!(out.row(1), out_p.row(0));
        assert_eq!(out.row(2), out_p.row(3));
    }

    #[test]
    fn apply_pe_modes() {
        let mut rng = crate::rng::seeded(4);
        let x = Tensor::from_vec(&[3, 4], (0..12).map(|_| rng.random::<f64>()).collect());

        // none: identity
        let out = apply_pe(&x, PeMode::None, &[1, 1, 1], None).unwrap();
        assert_eq!(out.values(), x.values());

        // sinusoidal on zero input reproduces the PE matrix
        let zero = Tensor::<f64>::zeros(&[3, 4]);
        let out = apply_pe(&zero, PeMode::Sinusoidal, &[1, 1, 1], None).unwrap();
        assert_eq!(out.values(), sinusoidal_pe::<f64>(3, 4).unwrap().values());

        // additivity is exact: output == x + encoding, elementwise
        let out = apply_pe(&x, PeMode::Sinusoidal, &[1, 1, 1], None).unwrap();
        let pe = sinusoidal_pe::<f64>(3, 4).unwrap();
        for (i, v) in out.values().iter().enumerate() {
            assert_eq!(*v, x.values()[i] + pe.values()[i]);
        }

        // structural without a table is a configuration error
        assert!(matches!(
            apply_pe(&x, PeMode::Structural, &[1, 1, 1], None),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn apply_pe_structural_zero_table() {
        let (_, vocab) = spe_fixture();
        let zero_inputs = Tensor::zeros(&[vocab.size(), 2]);
        let theta_w = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let theta_b = Tensor::from_vec(&[2], vec![0.25, -0.5]);
        let x = Tensor::from_vec(&[2, 2], vec![1.0, 1.0, 2.0, 2.0]);
        let out = apply_pe(
            &x,
            PeMode::Structural,
            &[3, 4],
            Some(StructuralContext {
                spe_inputs: &zero_inputs,
                theta_w: &theta_w,
                theta_b: &theta_b,
            }),
        )
        .unwrap();
        assert_eq!(out.row(0), &[1.25, 0.5]);
        assert_eq!(out.row(1), &[2.25, 1.5]);
    }

    #[test]
    fn theta_receives_gradient() {
        let (inputs, vocab) = spe_fixture();
        let theta_w = Tensor::from_vec(&[2, 2], vec![0.1, 0.2, 0.3, 0.4]);
        let theta_b = Tensor::from_vec(&[2], vec![0.0, 0.0]);
        let ids = [vocab.id("a").unwrap(), PAD];
        let (_, gathered) = structural_pe(&ids, &inputs, &theta_w, &theta_b).unwrap();
        let upstream = Tensor::from_vec(&[2, 2], vec![1.0, 1.0, 1.0, 1.0]);
        let (dw, db) = structural_pe_backward(&gathered, &theta_w, &upstream);
        assert!(dw.values().iter().any(|&g| g != 0.0));
        assert!(db.values().iter().all(|&g| g == 2.0));
    }
}
