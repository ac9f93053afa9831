use rand::Rng;
use rand_distr::{Binomial, Distribution};

/// Multinomial draw by sequential binomials.
pub fn multinomial<R: Rng>(rng: &mut R, total: u64, q: &[f64]) -> Vec<u64> {
    let mut left = total;
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(q.len());
    for (i, &p) in q.iter().enumerate() {
        let k = if i + 1 == q.len() { left } else { Binomial::new(left, (p / mass).clamp(0.0, 1.0)).unwrap().sample(rng) };
        out.push(k);
        left -= k;
        mass -= p;
    }
    out
}

/// Click law of independent pixels under Poisson input: pixel k fires with
/// probability 1 − exp(−μ d_k).
pub fn poisson_clicks(mu: f64, d: &[f64]) -> Vec<f64> {
    let mut q = vec![1.0];
    for &dk in d {
        let r = 1.0 - (-mu * dk).exp();
        let mut next = vec![0.0; q.len() + 1];
        for (n, &p) in q.iter().enumerate() {
            next[n] += p * (1.0 - r);
            next[n + 1] += p * r;
        }
        q = next;
    }
    q
}
