//! Function-preserving transfer of a trained model onto a new architecture.
//!
//! Widening replicates existing hidden units and divides their outgoing
//! weights among the copies; deepening inserts identity layers. Both leave
//! the network function unchanged for rectifier models whose inputs are
//! non-negative. Shrinking and depth reduction are lossy and exist so that any
//! target architecture can be reached from the incumbent.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{glorot_fill, Activation, DnnModel};

fn check_hidden(m: &DnnModel, layer: usize) -> Result<usize> {
    m.hidden_widths()
        .get(layer)
        .copied()
        .ok_or_else(|| Error::InvalidArgument(format!("hidden layer {layer} out of range (model has {})", m.hidden_widths().len())))
}

/// Widens hidden layer `layer` to `new_width` and also returns, for every new
/// unit, the index of the original unit it copies.
pub fn widen_with_mapping<R: Rng + ?Sized>(
    m: &DnnModel,
    layer: usize,
    new_width: usize,
    noise: f64,
    rng: &mut R,
) -> Result<(DnnModel, Vec<usize>)> {
    let old = check_hidden(m, layer)?;
    if new_width < old {
        return Err(Error::InvalidArgument(format!(
            "cannot widen layer {layer} from {old} to {new_width}; use shrink"
        )));
    }
    let mut mapping: Vec<usize> = (0..old).collect();
    mapping.extend((old..new_width).map(|_| rng.random_range(0..old)));
    let mut group = vec![0usize; old];
    for &u in &mapping {
        group[u] += 1;
    }

    let w_in = &m.weights[layer];
    let mut new_in = w_in.select(Axis(1), &mapping);
    if noise > 0.0 {
        for j in old..new_width {
            new_in.column_mut(j).mapv_inplace(|v| v + rng.random_range(-noise..=noise));
        }
    }
    let new_bias: Array1<f64> = mapping.iter().map(|&u| m.biases[layer][u]).collect();
    let mut new_out = m.weights[layer + 1].select(Axis(0), &mapping);
    for (j, mut row) in new_out.outer_iter_mut().enumerate() {
        row /= group[mapping[j]] as f64;
    }

    let mut out = m.clone();
    out.weights[layer] = new_in;
    out.biases[layer] = new_bias;
    out.weights[layer + 1] = new_out;
    out.widths[layer + 1] = new_width;
    Ok((out, mapping))
}

/// Widens hidden layer `layer` (0 = first hidden layer) to `new_width` units.
pub fn widen<R: Rng + ?Sized>(m: &DnnModel, layer: usize, new_width: usize, noise: f64, rng: &mut R) -> Result<DnnModel> {
    Ok(widen_with_mapping(m, layer, new_width, noise, rng)?.0)
}

/// Inserts an identity hidden layer before weight layer `position`
/// (`0..=hidden depth`); its width equals the width feeding that position.
///
/// Exact only for rectifier models on non-negative inputs. Sigmoid models
/// are refused unless `allow_approximate` is set.
pub fn deepen(m: &DnnModel, position: usize, allow_approximate: bool) -> Result<DnnModel> {
    let depth = m.hidden_widths().len();
    if position > depth {
        return Err(Error::InvalidArgument(format!(
            "deepen position {position} out of range 0..={depth}"
        )));
    }
    if m.activation == Activation::Sigmoid && !allow_approximate {
        return Err(Error::InvalidArgument(
            "identity insertion is not function-preserving for sigmoid layers; allow approximation explicitly".into(),
        ));
    }
    let w = m.widths[position];
    let mut out = m.clone();
    out.weights.insert(position, Array2::eye(w));
    out.biases.insert(position, Array1::zeros(w));
    out.widths.insert(position + 1, w);
    Ok(out)
}

/// Keeps the `new_width` units of hidden layer `layer` with the largest
/// outgoing-weight L2 norm, in their original order. Equal norms keep the
/// lower index.
pub fn shrink(m: &DnnModel, layer: usize, new_width: usize) -> Result<DnnModel> {
    let old = check_hidden(m, layer)?;
    if new_width == 0 || new_width > old {
        return Err(Error::InvalidArgument(format!(
            "cannot shrink layer {layer} from {old} to {new_width}"
        )));
    }
    let norms: Vec<f64> = m.weights[layer + 1]
        .outer_iter()
        .map(|row| row.dot(&row).sqrt())
        .collect();
    let mut order: Vec<usize> = (0..old).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let mut keep = order[..new_width].to_vec();
    keep.sort_unstable();

    let mut out = m.clone();
    out.weights[layer] = m.weights[layer].select(Axis(1), &keep);
    out.biases[layer] = keep.iter().map(|&u| m.biases[layer][u]).collect();
    out.weights[layer + 1] = m.weights[layer + 1].select(Axis(0), &keep);
    out.widths[layer + 1] = new_width;
    Ok(out)
}

/// Maps `source` onto the hidden stack `target`.
///
/// Depth is aligned first: extra identity layers go at the end of the hidden
/// stack, or, for a shallower target, the first `target.len()` hidden layers
/// are kept under a freshly initialized output layer. Each hidden layer is
/// then widened or shrunk to its target width.
pub fn transform_to<R: Rng + ?Sized>(
    source: &DnnModel,
    target: &[usize],
    n_features: usize,
    n_classes: usize,
    noise: f64,
    rng: &mut R,
) -> Result<DnnModel> {
    if source.n_features() != n_features || source.n_classes() != n_classes {
        return Err(Error::Shape(format!(
            "source model is {}→{}, target needs {}→{}",
            source.n_features(),
            source.n_classes(),
            n_features,
            n_classes
        )));
    }
    if target.contains(&0) {
        return Err(Error::InvalidArgument("target layer widths must be positive".into()));
    }
    let mut m = source.clone();
    let depth = m.hidden_widths().len();
    if target.len() > depth {
        for _ in depth..target.len() {
            let end = m.hidden_widths().len();
            m = deepen(&m, end, true)?;
        }
    } else if target.len() < depth {
        let k = target.len();
        m.weights.truncate(k);
        m.biases.truncate(k);
        m.widths.truncate(k + 1);
        let mut head = Array2::zeros((m.widths[k], n_classes));
        glorot_fill(&mut head, 1.0, rng);
        m.weights.push(head);
        m.biases.push(Array1::zeros(n_classes));
        m.widths.push(n_classes);
    }
    for (layer, &want) in target.iter().enumerate() {
        let have = m.hidden_widths()[layer];
        if want > have {
            m = widen(&m, layer, want, noise, rng)?;
        } else if want < have {
            m = shrink(&m, layer, want)?;
        }
    }
    Ok(m)
}
