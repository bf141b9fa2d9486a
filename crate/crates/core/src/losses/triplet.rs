//! Triplet object loss over per-box mean embeddings and the key memory it
//! draws positives and negatives from.

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, RwLock};

use super::{Field, LossError};
use crate::geometry::{BBox, Category};

pub const DEFAULT_MARGIN: f64 = 0.1;
pub const DEFAULT_KEY_CAPACITY: usize = 64;

const QUERY_NORM_TOL: f64 = 1e-6;
const KEY_NORM_TOL: f64 = 1e-9;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Unit-length mean of the embeddings of pixels inside `bbox` whose
/// prediction argmax is `category`. `None` when there are no such pixels or
/// their mean is the zero vector.
pub fn mean_box_embedding(
    z: &Field,
    logits: &Field,
    bbox: &BBox,
    category: Category,
) -> Result<Option<Vec<f64>>, LossError> {
    if (z.width(), z.height()) != (logits.width(), logits.height()) {
        return Err(LossError::Shape(format!(
            "embeddings {}x{} vs logits {}x{}",
            z.width(),
            z.height(),
            logits.width(),
            logits.height()
        )));
    }
    if z.channels() < 2 {
        return Err(LossError::Shape(format!("embedding dimension {} < 2", z.channels())));
    }
    let Some(span) = bbox.pixel_span(z.width(), z.height()) else {
        return Ok(None);
    };
    let mut sum = vec![0.0; z.channels()];
    let mut count = 0usize;
    for y in span.y0..span.y1 {
        for x in span.x0..span.x1 {
            if argmax(logits.at(x, y)) != category as usize {
                continue;
            }
            for (s, v) in sum.iter_mut().zip(z.at(x, y)) {
                *s += v;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Ok(None);
    }
    let n = norm(&sum);
    if n == 0.0 {
        return Ok(None);
    }
    Ok(Some(sum.into_iter().map(|v| v / n).collect()))
}

/// Per-class FIFO memory of unit-length embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyStore {
    capacity: usize,
    dim: Option<usize>,
    keys: BTreeMap<Category, VecDeque<Vec<f64>>>,
}

impl Default for KeyStore {
    fn default() -> Self {
        Self::new(DEFAULT_KEY_CAPACITY)
    }
}

impl KeyStore {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, dim: None, keys: BTreeMap::new() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    /// Keys of `category`, oldest first.
    pub fn keys(&self, category: Category) -> impl Iterator<Item = &[f64]> + '_ {
        self.keys.get(&category).into_iter().flatten().map(Vec::as_slice)
    }

    pub fn count(&self, category: Category) -> usize {
        self.keys.get(&category).map_or(0, VecDeque::len)
    }

    pub fn len(&self) -> usize {
        self.keys.values().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn categories(&self) -> impl Iterator<Item = Category> + '_ {
        self.keys.iter().filter(|(_, q)| !q.is_empty()).map(|(&c, _)| c)
    }

    fn check(&self, key: &[f64]) -> Result<(), LossError> {
        if key.len() < 2 || self.dim.is_some_and(|d| d != key.len()) {
            return Err(LossError::Shape(format!(
                "key of dimension {} (store dimension {:?})",
                key.len(),
                self.dim
            )));
        }
        if key.iter().any(|v| !v.is_finite()) {
            return Err(LossError::NonFinite("key"));
        }
        let n = norm(key);
        if (n - 1.0).abs() > KEY_NORM_TOL {
            return Err(LossError::NotUnit { norm: n });
        }
        Ok(())
    }

    /// Append one key, evicting the oldest of its class beyond capacity.
    pub fn insert(&mut self, key: Vec<f64>, category: Category) -> Result<(), LossError> {
        self.check(&key)?;
        if self.capacity == 0 {
            return Ok(());
        }
        self.dim = Some(key.len());
        let queue = self.keys.entry(category).or_default();
        queue.push_back(key);
        while queue.len() > self.capacity {
            queue.pop_front();
        }
        Ok(())
    }
}

/// Insert a batch of annotated embeddings. The whole batch is validated
/// before any key is stored.
pub fn keystore_update(store: &mut KeyStore, batch: &[(Vec<f64>, Category)]) -> Result<(), LossError> {
    let mut probe = store.dim;
    for (key, _) in batch {
        store.check(key)?;
        if probe.is_some_and(|d| d != key.len()) {
            return Err(LossError::Shape("mixed key dimensions in batch".into()));
        }
        probe = Some(key.len());
    }
    for (key, category) in batch {
        store.insert(key.clone(), *category)?;
    }
    Ok(())
}

/// Single-writer key memory shared across threads; readers take a copy.
#[derive(Debug, Clone, Default)]
pub struct SharedKeyStore {
    inner: Arc<RwLock<KeyStore>>,
}

impl SharedKeyStore {
    pub fn new(store: KeyStore) -> Self {
        Self { inner: Arc::new(RwLock::new(store)) }
    }

    pub fn snapshot(&self) -> KeyStore {
        self.inner.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn update(&self, batch: &[(Vec<f64>, Category)]) -> Result<(), LossError> {
        let mut guard = self.inner.write().unwrap_or_else(|e| e.into_inner());
        keystore_update(&mut guard, batch)
    }
}

/// `max(0, margin + d(q, p) - d(q, n))` and its gradient with respect to
/// `q`, holding `p` and `n` fixed. Zero gradient on the flat side of the
/// hinge, at the hinge point, and for a zero-length distance term.
pub fn triplet_hinge(query: &[f64], positive: &[f64], negative: &[f64], margin: f64) -> (f64, Vec<f64>) {
    let dp = distance(query, positive);
    let dn = distance(query, negative);
    let slack = margin + dp - dn;
    let mut grad = vec![0.0; query.len()];
    if slack <= 0.0 {
        return (0.0, grad);
    }
    for i in 0..query.len() {
        if dp > 0.0 {
            grad[i] += (query[i] - positive[i]) / dp;
        }
        if dn > 0.0 {
            grad[i] -= (query[i] - negative[i]) / dn;
        }
    }
    (slack, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletOutcome {
    pub loss: f64,
    /// One gradient per query; all zeros for queries without a triplet.
    pub gradients: Vec<Vec<f64>>,
    /// Queries that found both a positive and a negative key.
    pub active: usize,
}

/// Sum of triplet hinges over the queries. The positive is the re-normalized
/// mean of same-class keys; the negative is the nearest key of any other
/// class (ties: lower class, then older key).
pub fn triplet_object_loss(
    queries: &[(Vec<f64>, Category)],
    keys: &KeyStore,
    margin: f64,
) -> Result<TripletOutcome, LossError> {
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(LossError::Invalid(format!("margin must be positive, got {margin}")));
    }
    for (q, _) in queries {
        if q.iter().any(|v| !v.is_finite()) {
            return Err(LossError::NonFinite("query"));
        }
        let n = norm(q);
        if (n - 1.0).abs() > QUERY_NORM_TOL {
            return Err(LossError::NotUnit { norm: n });
        }
        if keys.dim.is_some_and(|d| d != q.len()) {
            return Err(LossError::Shape(format!(
                "query of dimension {} vs keys of dimension {:?}",
                q.len(),
                keys.dim
            )));
        }
    }

    let mut loss = 0.0;
    let mut active = 0;
    let mut gradients = Vec::with_capacity(queries.len());
    for (q, category) in queries {
        let Some((positive, negative)) = select_triplet(keys, q, *category) else {
            gradients.push(vec![0.0; q.len()]);
            continue;
        };
        let (l, g) = triplet_hinge(q, &positive, &negative, margin);
        loss += l;
        active += 1;
        gradients.push(g);
    }
    Ok(TripletOutcome { loss, gradients, active })
}

/// Positive and negative key for `query`, if the store holds both.
pub fn select_triplet(keys: &KeyStore, query: &[f64], category: Category) -> Option<(Vec<f64>, Vec<f64>)> {
    let positive = positive_key(keys, category)?;
    let negative = hardest_negative(keys, query, category)?;
    Some((positive, negative.to_vec()))
}

fn positive_key(keys: &KeyStore, category: Category) -> Option<Vec<f64>> {
    let dim = keys.dim?;
    let mut sum = vec![0.0; dim];
    let mut any = false;
    for k in keys.keys(category) {
        any = true;
        for (s, v) in sum.iter_mut().zip(k) {
            *s += v;
        }
    }
    let n = norm(&sum);
    (any && n > 0.0).then(|| sum.into_iter().map(|v| v / n).collect())
}

fn hardest_negative<'a>(keys: &'a KeyStore, query: &[f64], category: Category) -> Option<&'a [f64]> {
    let mut best: Option<(f64, &[f64])> = None;
    for (&c, queue) in &keys.keys {
        if c == category {
            continue;
        }
        for k in queue {
            let d = distance(query, k);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, k));
            }
        }
    }
    best.map(|(_, k)| k)
}
