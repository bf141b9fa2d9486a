//! Central finite-difference checks of the analytic loss gradients on
//! concrete inputs.

use crosstask::geometry::Category;
use crosstask::losses::{
    attention_mse, ce_loss, modulate, modulate_backward, select_triplet, triplet_hinge, Field, KeyStore,
};
use crosstask::mask::SemanticMask;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
/// Triplets this close to the hinge are skipped.
pub const HINGE_MARGIN: f64 = 1e-4;

/// `|a - b| / max(|a|, |b|)` over whole gradient vectors; 0 when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-300 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn coordinates(len: usize, max: usize, seed: u64) -> Vec<usize> {
    if len <= max {
        return (0..len).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, len, max).into_vec();
    idx.sort_unstable();
    idx
}

fn central<F: FnMut(&Field) -> f64>(field: &Field, coords: &[usize], mut f: F) -> Vec<f64> {
    let mut work = field.clone();
    coords
        .iter()
        .map(|&i| {
            let orig = work.data()[i];
            work.data_mut()[i] = orig + STEP;
            let up = f(&work);
            work.data_mut()[i] = orig - STEP;
            let down = f(&work);
            work.data_mut()[i] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub ce: f64,
    pub attention: f64,
    pub modulate_logits: f64,
    pub modulate_alpha: f64,
    /// `None` when no triplet was checkable.
    pub triplet: Option<f64>,
}

impl GradCheck {
    pub fn max(&self) -> f64 {
        [self.ce, self.attention, self.modulate_logits, self.modulate_alpha, self.triplet.unwrap_or(0.0)]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Check every loss gradient, sampling at most `max_coords` coordinates per
/// tensor.
#[allow(clippy::too_many_arguments)]
pub fn check_all(
    logits: &Field,
    alpha: &Field,
    coarse: &SemanticMask,
    box_mask: &SemanticMask,
    queries: &[(Vec<f64>, Category)],
    keys: &KeyStore,
    gamma: f64,
    max_coords: usize,
    seed: u64,
) -> Result<GradCheck, String> {
    let e = |x: crosstask::losses::LossError| x.to_string();
    let m = modulate(logits, alpha).map_err(e)?;

    let (_, grad_m) = ce_loss(&m, coarse).map_err(e)?;
    let c = coordinates(m.data().len(), max_coords, seed);
    let numeric = central(&m, &c, |f| ce_loss(f, coarse).expect("shape checked").0);
    let ce = relative_error(&c.iter().map(|&i| grad_m.data()[i]).collect::<Vec<_>>(), &numeric);

    let (_, grad_a) = attention_mse(alpha, box_mask).map_err(e)?;
    let c = coordinates(alpha.data().len(), max_coords, seed ^ 1);
    let numeric = central(alpha, &c, |f| attention_mse(f, box_mask).expect("shape checked").0);
    let attention = relative_error(&c.iter().map(|&i| grad_a.data()[i]).collect::<Vec<_>>(), &numeric);

    let (d_logits, d_alpha) = modulate_backward(logits, alpha, &grad_m).map_err(e)?;
    let through = |l: &Field, a: &Field| ce_loss(&modulate(l, a).expect("same shape"), coarse).expect("shape checked").0;
    let c = coordinates(logits.data().len(), max_coords, seed ^ 2);
    let numeric = central(logits, &c, |f| through(f, alpha));
    let modulate_logits = relative_error(&c.iter().map(|&i| d_logits.data()[i]).collect::<Vec<_>>(), &numeric);
    let numeric = central(alpha, &c, |f| through(logits, f));
    let modulate_alpha = relative_error(&c.iter().map(|&i| d_alpha.data()[i]).collect::<Vec<_>>(), &numeric);

    let mut triplet: Option<f64> = None;
    for (q, cat) in queries {
        let Some((p, n)) = select_triplet(keys, q, *cat) else {
            continue;
        };
        let (slack, grad) = triplet_hinge(q, &p, &n, gamma);
        let raw = gamma + dist(q, &p) - dist(q, &n);
        if raw.abs() < HINGE_MARGIN || slack == 0.0 && raw > -HINGE_MARGIN {
            continue;
        }
        let mut work = q.clone();
        let numeric: Vec<f64> = (0..q.len())
            .map(|i| {
                work[i] = q[i] + STEP;
                let up = triplet_hinge(&work, &p, &n, gamma).0;
                work[i] = q[i] - STEP;
                let down = triplet_hinge(&work, &p, &n, gamma).0;
                work[i] = q[i];
                (up - down) / (2.0 * STEP)
            })
            .collect();
        let err = relative_error(&grad, &numeric);
        triplet = Some(triplet.map_or(err, |t| t.max(err)));
    }
    Ok(GradCheck { ce, attention, modulate_logits, modulate_alpha, triplet })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
