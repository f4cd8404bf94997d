//! Scrambled Halton sequence.

use rand::seq::SliceRandom;
use rand::Rng;

const PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Halton points with one random digit permutation per dimension.
#[derive(Debug, Clone)]
pub struct Halton {
    perms: Vec<Vec<u32>>,
    index: u64,
}

impl Halton {
    pub fn new<R: Rng + ?Sized>(dims: usize, rng: &mut R) -> Self {
        assert!(dims <= PRIMES.len(), "at most {} dimensions", PRIMES.len());
        let perms = PRIMES[..dims]
            .iter()
            .map(|&b| {
                let mut p: Vec<u32> = (0..b).collect();
                p.shuffle(rng);
                p
            })
            .collect();
        Halton { perms, index: 1 }
    }

    pub fn dims(&self) -> usize {
        self.perms.len()
    }

    /// Permuted radical inverse over enough digits to exhaust f64
    /// precision, so the permuted leading zeros of small indices count too.
    fn radical_inverse(perm: &[u32], mut i: u64) -> f64 {
        let b = perm.len() as u64;
        let inv = 1.0 / b as f64;
        let n_digits = (53.0 / (b as f64).log2()).ceil() as usize;
        let mut f = inv;
        let mut x = 0.0;
        for _ in 0..n_digits {
            x += perm[(i % b) as usize] as f64 * f;
            i /= b;
            f *= inv;
        }
        x.min(1.0 - f64::EPSILON)
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let i = self.index;
        self.index += 1;
        self.perms
            .iter()
            .map(|p| Self::radical_inverse(p, i))
            .collect()
    }

    pub fn take_points(&mut self, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.next_point()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn identity_permutation_is_plain_halton() {
        let mut h = Halton {
            perms: vec![vec![0, 1], vec![0, 1, 2]],
            index: 1,
        };
        let pts = h.take_points(4);
        let expected = [
            [0.5, 1.0 / 3.0],
            [0.25, 2.0 / 3.0],
            [0.75, 1.0 / 9.0],
            [0.125, 4.0 / 9.0],
        ];
        for (p, e) in pts.iter().zip(expected.iter()) {
            assert!(
                (p[0] - e[0]).abs() < 1e-12 && (p[1] - e[1]).abs() < 1e-12,
                "{p:?}"
            );
        }
    }

    #[test]
    fn points_fill_strata() {
        // The first b^k points of a scrambled radical inverse hit every
        // interval [j / b^k, (j+1) / b^k) exactly once.
        let mut h = Halton::new(3, &mut rng::seeded(9));
        let pts = h.take_points(25);
        let mut seen = [false; 25];
        for p in pts.iter().take(25) {
            let cell = (p[2] * 25.0) as usize;
            assert!(!seen[cell]);
            seen[cell] = true;
        }
        assert!(pts.iter().flatten().all(|x| (0.0..1.0).contains(x)));
    }
}
